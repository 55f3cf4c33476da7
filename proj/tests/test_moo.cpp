#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "lsrp/nsga2.hpp"

using namespace lsrp;

namespace {

// O(n^2) oracle: indices of the points no other point dominates.
std::vector<std::size_t> pareto_front_oracle(const std::vector<Objectives>& points) {
    auto dominated = [&](std::size_t i) {
        for (std::size_t j = 0; j < points.size(); ++j) {
            if (i == j) continue;
            bool no_worse = true, strictly = false;
            for (std::size_t k = 0; k < 3; ++k) {
                if (points[j][k] > points[i][k]) no_worse = false;
                if (points[j][k] < points[i][k]) strictly = true;
            }
            if (no_worse && strictly) return true;
        }
        return false;
    };
    std::vector<std::size_t> front;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (!dominated(i)) front.push_back(i);
    return front;
}

std::vector<Objectives> random_points(std::mt19937_64& rng, std::size_t n, double lo = 0.0,
                                      double hi = 10.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<Objectives> out(n);
    for (auto& p : out) p = {dist(rng), dist(rng), dist(rng)};
    return out;
}

} // namespace

TEST_CASE("non-dominated sort: total dominance") {
    auto fronts = non_dominated_sort({{1, 1, 1}, {2, 2, 2}});
    REQUIRE(fronts.size() == 2);
    REQUIRE(fronts[0] == std::vector<std::size_t>{0});
    REQUIRE(fronts[1] == std::vector<std::size_t>{1});
}

TEST_CASE("non-dominated sort: incomparable points share a front") {
    auto fronts = non_dominated_sort({{1, 2, 3}, {3, 2, 1}});
    REQUIRE(fronts.size() == 1);
    REQUIRE(fronts[0].size() == 2);
}

TEST_CASE("non-dominated sort front 0 equals the brute-force oracle") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        auto points = random_points(rng, 100, 0.0, 5.0);
        auto fronts = non_dominated_sort(points);
        auto front0 = fronts[0];
        std::sort(front0.begin(), front0.end());
        REQUIRE(front0 == pareto_front_oracle(points));
        // partition covers every index exactly once
        std::size_t total = 0;
        for (const auto& f : fronts) total += f.size();
        REQUIRE(total == points.size());
    }
}

TEST_CASE("crowding distance: two points are both boundaries") {
    auto d = crowding_distance({{0, 1, 0}, {1, 0, 0}});
    REQUIRE(std::isinf(d[0]));
    REQUIRE(std::isinf(d[1]));
}

TEST_CASE("crowding distance: evenly spaced collinear front") {
    // two varying objectives contribute 1 each to the middle point
    auto d = crowding_distance({{0, 2, 5}, {1, 1, 5}, {2, 0, 5}});
    REQUIRE(std::isinf(d[0]));
    REQUIRE(d[1] == Catch::Approx(2.0));
    REQUIRE(std::isinf(d[2]));
}

TEST_CASE("crowding distance: single varying objective") {
    auto d = crowding_distance({{0, 5, 5}, {1, 5, 5}, {2, 5, 5}});
    REQUIRE(d[1] == Catch::Approx(1.0));
}

TEST_CASE("crowding distance: duplicated values stay finite and non-negative") {
    auto d = crowding_distance({{1, 1, 1}, {1, 1, 1}, {2, 2, 2}, {1, 2, 1}});
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!std::isinf(d[i])) REQUIRE(d[i] >= 0.0);
        REQUIRE_FALSE(std::isnan(d[i]));
    }
}

TEST_CASE("knee point: single point front") {
    ParetoFront front;
    front.points.push_back({{3, 4, 5}, {1, 0, 0}});
    REQUIRE(knee_point(front).objectives == Objectives{3, 4, 5});
}

TEST_CASE("knee point: embedded 2D front picks the bend") {
    // hand check: line through (0,1) and (1,0); (0.2,0.2) sits 0.424 below it
    std::vector<Objectives> objs = {{0, 1, 0}, {1, 0, 0}, {0.2, 0.2, 0}};
    REQUIRE(knee_point_index(objs) == 2);
}

TEST_CASE("knee point: all-identical front returns a member") {
    std::vector<Objectives> objs = {{2, 2, 2}, {2, 2, 2}, {2, 2, 2}};
    REQUIRE(knee_point_index(objs) == 0);
}

TEST_CASE("knee point: true 3D front uses the hyperplane") {
    // extremes span x+y+z=1; the inner point lies on the origin side
    std::vector<Objectives> objs = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0.2, 0.2, 0.2}};
    REQUIRE(knee_point_index(objs) == 3);
}

TEST_CASE("knee point: empty front is an error") {
    REQUIRE_THROWS_AS(knee_point_index({}), Error);
}

TEST_CASE("knee point is invariant under positive affine rescaling") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> scale(0.1, 20.0), shift(-5.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        auto points = random_points(rng, 60);
        auto front_idx = non_dominated_sort(points)[0];
        std::vector<Objectives> front;
        for (auto i : front_idx) front.push_back(points[i]);
        const auto base = knee_point_index(front);
        for (std::size_t obj = 0; obj < 3; ++obj) {
            auto scaled = front;
            const double a = scale(rng), b = shift(rng);
            for (auto& p : scaled) p[obj] = a * p[obj] + b;
            REQUIRE(knee_point_index(scaled) == base);
        }
    }
}

TEST_CASE("nsga2 converges on the sphere landscape") {
    const auto evaluate = [](const WeightVector& w) {
        return ObjectivePoint{{w.w1 * w.w1, w.w2 * w.w2, w.w3 * w.w3}, w};
    };
    NsgaConfig cfg;
    cfg.population_size = 64;
    cfg.generations = 50;
    cfg.seed = 5;
    auto front = nsga2(evaluate, cfg);
    REQUIRE_FALSE(front.points.empty());

    // the best all-round member sits within 0.1 of the optimum in every objective
    double best_worst = std::numeric_limits<double>::infinity();
    for (const auto& p : front.points)
        best_worst = std::min(best_worst, *std::max_element(p.objectives.begin(),
                                                            p.objectives.end()));
    REQUIRE(best_worst <= 0.1);
}

TEST_CASE("nsga2 returned front is mutually non-dominated") {
    const auto evaluate = [](const WeightVector& w) {
        return ObjectivePoint{{w.w1 * w.w1, (w.w2 - 1) * (w.w2 - 1), w.w3}, w};
    };
    NsgaConfig cfg;
    cfg.population_size = 32;
    cfg.generations = 20;
    cfg.seed = 9;
    auto front = nsga2(evaluate, cfg);
    for (const auto& a : front.points)
        for (const auto& b : front.points)
            REQUIRE_FALSE(dominates(a.objectives, b.objectives));
}

TEST_CASE("nsga2 is deterministic for a fixed seed") {
    const auto evaluate = [](const WeightVector& w) {
        return ObjectivePoint{{w.w1 * w.w1, w.w2, w.w3 * 2.0}, w};
    };
    NsgaConfig cfg;
    cfg.population_size = 16;
    cfg.generations = 15;
    cfg.seed = 77;
    auto a = nsga2(evaluate, cfg);
    auto b = nsga2(evaluate, cfg);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        REQUIRE(a.points[i].objectives == b.points[i].objectives);
        REQUIRE(a.points[i].payload.w1 == b.points[i].payload.w1);
    }
}

TEST_CASE("nsga2 rejects bad configs and non-finite objectives") {
    NsgaConfig bad;
    bad.population_size = 3;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);

    NsgaConfig cfg;
    cfg.population_size = 8;
    cfg.generations = 2;
    const auto evaluate = [](const WeightVector& w) {
        return ObjectivePoint{{std::numeric_limits<double>::quiet_NaN(), w.w2, w.w3}, w};
    };
    REQUIRE_THROWS_AS(nsga2(evaluate, cfg), Error);
}

TEST_CASE("weight calibration: dominant candidate makes selection weight-free") {
    std::vector<CalibrationInstance> instances;
    for (int i = 0; i < 3; ++i) {
        CalibrationInstance inst;
        inst.id = "inst-" + std::to_string(i);
        inst.candidates = {
            {9.0, 0.9, 1.5, {}, {}}, // dominates on every axis
            {4.0, 0.2, 9.0, {}, {}},
            {5.0, 0.1, 12.0, {}, {}},
        };
        instances.push_back(inst);
    }
    NsgaConfig cfg;
    cfg.population_size = 16;
    cfg.generations = 10;
    cfg.seed = 1;
    auto result = calibrate_weights(instances, cfg);
    const double sum = result.weights.w1 + result.weights.w2 + result.weights.w3;
    REQUIRE(sum == Catch::Approx(1.0));
    REQUIRE(result.weights.w1 >= 0.0);
    REQUIRE(result.weights.w2 >= 0.0);
    REQUIRE(result.weights.w3 >= 0.0);
    // every weight selects the dominating candidate, so one objective point remains
    REQUIRE(result.front.points.size() == 1);
    REQUIRE(result.front.points[0].objectives[0] == Catch::Approx(-9.0));
}

TEST_CASE("weight calibration: opposing selections yield a real front") {
    // hand-built payoff: qa-heavy weights pick A/C, ppl-heavy weights pick B/D
    std::vector<CalibrationInstance> instances(2);
    instances[0].id = "i0";
    instances[0].candidates = {{9.0, 0.1, 20.0, {}, {}}, {2.0, 0.9, 1.5, {}, {}}};
    instances[1].id = "i1";
    instances[1].candidates = {{8.0, 0.2, 15.0, {}, {}}, {3.0, 0.8, 2.0, {}, {}}};

    REQUIRE(select_candidate(instances[0].candidates, {1, 0, 0}) == 0);
    REQUIRE(select_candidate(instances[0].candidates, {0, 0, 1}) == 1);
    REQUIRE(select_candidate(instances[1].candidates, {1, 0, 0}) == 0);
    REQUIRE(select_candidate(instances[1].candidates, {0, 0, 1}) == 1);

    NsgaConfig cfg;
    cfg.population_size = 32;
    cfg.generations = 40;
    cfg.seed = 13;
    auto result = calibrate_weights(instances, cfg);
    std::set<Objectives> distinct;
    for (const auto& p : result.front.points) distinct.insert(p.objectives);
    REQUIRE(distinct.size() >= 2);

    auto rerun = calibrate_weights(instances, cfg);
    REQUIRE(rerun.weights.w1 == result.weights.w1);
    REQUIRE(rerun.weights.w2 == result.weights.w2);
    REQUIRE(rerun.weights.w3 == result.weights.w3);
}

TEST_CASE("weight calibration rejects instances with one candidate") {
    std::vector<CalibrationInstance> instances(1);
    instances[0].id = "solo";
    instances[0].candidates = {{5.0, 0.5, 2.0, {}, {}}};
    NsgaConfig cfg;
    cfg.population_size = 8;
    cfg.generations = 2;
    REQUIRE_THROWS_AS(calibrate_weights(instances, cfg), Error);
}

TEST_CASE("selection equals brute-force argmax of composite q") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> qa(0.0, 10.0), ud(0.0, 1.0), ppl(1.0, 25.0),
        wd(0.0, 2.0);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<MetricVector> candidates(2 + trial % 6);
        for (auto& m : candidates) m = {qa(rng), ud(rng), ppl(rng), {}, {}};
        WeightVector w{wd(rng), wd(rng), wd(rng)};
        if (w.w1 == 0 && w.w2 == 0 && w.w3 == 0) w.w1 = 1;
        std::size_t expected = 0;
        double best = composite_q(candidates[0], w);
        for (std::size_t i = 1; i < candidates.size(); ++i) {
            const double q = composite_q(candidates[i], w);
            if (q > best) {
                best = q;
                expected = i;
            }
        }
        REQUIRE(select_candidate(candidates, w) == expected);
    }
}
