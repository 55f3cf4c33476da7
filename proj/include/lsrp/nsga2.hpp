#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "lsrp/errors.hpp"
#include "lsrp/metrics.hpp"

namespace lsrp {

using Objectives = std::array<double, 3>; // minimized

struct ObjectivePoint {
    Objectives objectives{};
    WeightVector payload{};
};

struct ParetoFront {
    std::vector<ObjectivePoint> points;
};

struct NsgaConfig {
    std::size_t population_size = 64;
    std::size_t generations = 100;
    double crossover_prob = 0.9;
    double mutation_prob = 1.0 / 3.0; // per gene
    double sbx_eta = 15.0;
    double mutation_eta = 20.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (population_size < 4 || population_size % 2 != 0)
            throw ConfigError("population size must be even and >= 4");
        if (generations == 0) throw ConfigError("generations must be >= 1");
    }
};

// a dominates b: no worse everywhere, strictly better somewhere.
inline bool dominates(const Objectives& a, const Objectives& b) {
    bool strictly = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) strictly = true;
    }
    return strictly;
}

// Fast non-dominated sort: returns index fronts, front 0 first.
inline std::vector<std::vector<std::size_t>>
non_dominated_sort(const std::vector<Objectives>& points) {
    const std::size_t n = points.size();
    std::vector<std::vector<std::size_t>> dominated_by(n);
    std::vector<std::size_t> domination_count(n, 0);
    std::vector<std::vector<std::size_t>> fronts;
    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            if (dominates(points[i], points[j])) dominated_by[i].push_back(j);
            else if (dominates(points[j], points[i])) ++domination_count[i];
        }
        if (domination_count[i] == 0) current.push_back(i);
    }
    while (!current.empty()) {
        fronts.push_back(current);
        std::vector<std::size_t> next;
        for (std::size_t i : current) {
            for (std::size_t j : dominated_by[i]) {
                if (--domination_count[j] == 0) next.push_back(j);
            }
        }
        std::sort(next.begin(), next.end());
        current = std::move(next);
    }
    return fronts;
}

// Crowding distance over one front. Boundary points per objective get +inf;
// interior points accumulate the normalized neighbour span per objective.
// Objectives with zero range contribute nothing.
inline std::vector<double> crowding_distance(const std::vector<Objectives>& front) {
    const std::size_t n = front.size();
    if (n == 0) throw Error("crowding distance requires a non-empty front");
    std::vector<double> dist(n, 0.0);
    const double inf = std::numeric_limits<double>::infinity();
    for (std::size_t obj = 0; obj < 3; ++obj) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (front[a][obj] != front[b][obj]) return front[a][obj] < front[b][obj];
            return a < b;
        });
        const double range = front[order.back()][obj] - front[order.front()][obj];
        dist[order.front()] = inf;
        dist[order.back()] = inf;
        if (range <= 0.0) continue;
        for (std::size_t k = 1; k + 1 < n; ++k) {
            if (std::isinf(dist[order[k]])) continue;
            dist[order[k]] += (front[order[k + 1]][obj] - front[order[k - 1]][obj]) / range;
        }
    }
    return dist;
}

// ---------------------------------------------------------------------------
// Knee-point selection: normalize each objective over the front, fit the
// hyperplane through the per-objective extreme points, and take the point
// furthest from it on the origin side. Fronts whose extremes do not span a
// plane fall back to the minimum normalized-sum point.

inline std::size_t knee_point_index(const std::vector<Objectives>& front) {
    if (front.empty()) throw Error("knee point requires a non-empty front");
    const std::size_t n = front.size();
    if (n == 1) return 0;

    std::vector<Objectives> norm(n);
    for (std::size_t obj = 0; obj < 3; ++obj) {
        double lo = front[0][obj], hi = front[0][obj];
        for (const auto& p : front) {
            lo = std::min(lo, p[obj]);
            hi = std::max(hi, p[obj]);
        }
        const double range = hi - lo;
        for (std::size_t i = 0; i < n; ++i)
            norm[i][obj] = range > 0.0 ? (front[i][obj] - lo) / range : 0.0;
    }

    // extreme point for an objective: the front member worst in it
    std::array<std::size_t, 3> extreme{};
    for (std::size_t obj = 0; obj < 3; ++obj) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (norm[i][obj] > norm[best][obj]) best = i;
        extreme[obj] = best;
    }

    const auto sub = [](const Objectives& a, const Objectives& b) {
        return Objectives{a[0] - b[0], a[1] - b[1], a[2] - b[2]};
    };
    const Objectives u = sub(norm[extreme[1]], norm[extreme[0]]);
    const Objectives v = sub(norm[extreme[2]], norm[extreme[0]]);
    Objectives normal{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
                      u[0] * v[1] - u[1] * v[0]};
    const double len =
        std::sqrt(normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]);

    const auto min_sum_fallback = [&] {
        std::size_t best = 0;
        double best_sum = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            const double s = norm[i][0] + norm[i][1] + norm[i][2];
            if (s < best_sum) {
                best_sum = s;
                best = i;
            }
        }
        return best;
    };
    if (len < 1e-12) return min_sum_fallback();

    for (auto& c : normal) c /= len;
    const Objectives& anchor = norm[extreme[0]];
    // signed distance, positive toward the origin
    double origin_side = -(normal[0] * anchor[0] + normal[1] * anchor[1] + normal[2] * anchor[2]);
    if (origin_side < 0.0)
        for (auto& c : normal) c = -c;
    std::size_t best = 0;
    double best_d = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const auto d0 = sub(norm[i], anchor);
        const double d = normal[0] * d0[0] + normal[1] * d0[1] + normal[2] * d0[2];
        if (d > best_d) {
            best_d = d;
            best = i;
        }
    }
    // no point strictly inside the extreme hyperplane: the distances of the
    // extremes themselves all tie at zero, so use the fallback rule instead
    if (best_d <= 1e-12) return min_sum_fallback();
    return best;
}

inline const ObjectivePoint& knee_point(const ParetoFront& front) {
    std::vector<Objectives> objs;
    objs.reserve(front.points.size());
    for (const auto& p : front.points) objs.push_back(p.objectives);
    return front.points[knee_point_index(objs)];
}

// ---------------------------------------------------------------------------
// NSGA-II over a 3-gene genome in [0,1]^3: SBX crossover, polynomial
// mutation, binary tournament on (rank, crowding), mu+lambda elitism.
// Deterministic for a fixed seed. The returned front is the non-dominated
// set of every point evaluated during the run (an elite archive), so no
// returned point is ever dominated by one seen earlier.

using EvaluateFn = std::function<ObjectivePoint(const WeightVector&)>;

namespace detail {

struct Individual {
    std::array<double, 3> genome{};
    Objectives objectives{};
    std::size_t rank = 0;
    double crowding = 0.0;
};

inline void check_finite(const Objectives& f) {
    for (double x : f)
        if (!std::isfinite(x)) throw Error("objective evaluation produced a non-finite value");
}

inline void archive_insert(std::vector<ObjectivePoint>& archive, const ObjectivePoint& cand) {
    for (const auto& a : archive) {
        if (dominates(a.objectives, cand.objectives) || a.objectives == cand.objectives)
            return;
    }
    std::erase_if(archive, [&](const ObjectivePoint& a) {
        return dominates(cand.objectives, a.objectives);
    });
    archive.push_back(cand);
}

} // namespace detail

inline ParetoFront nsga2(const EvaluateFn& evaluate, const NsgaConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t pop_size = cfg.population_size;

    std::vector<ObjectivePoint> archive;
    const auto eval_genome = [&](const std::array<double, 3>& genome) {
        WeightVector w{genome[0], genome[1], genome[2]};
        ObjectivePoint p = evaluate(w);
        detail::check_finite(p.objectives);
        detail::archive_insert(archive, p);
        return p.objectives;
    };

    std::vector<detail::Individual> pop(pop_size);
    for (auto& ind : pop) {
        for (auto& g : ind.genome) g = unit(rng);
        ind.objectives = eval_genome(ind.genome);
    }

    const auto rank_population = [](std::vector<detail::Individual>& inds) {
        std::vector<Objectives> objs(inds.size());
        for (std::size_t i = 0; i < inds.size(); ++i) objs[i] = inds[i].objectives;
        auto fronts = non_dominated_sort(objs);
        for (std::size_t r = 0; r < fronts.size(); ++r) {
            std::vector<Objectives> sub;
            sub.reserve(fronts[r].size());
            for (std::size_t i : fronts[r]) sub.push_back(objs[i]);
            auto dist = crowding_distance(sub);
            for (std::size_t k = 0; k < fronts[r].size(); ++k) {
                inds[fronts[r][k]].rank = r;
                inds[fronts[r][k]].crowding = dist[k];
            }
        }
        return fronts;
    };
    rank_population(pop);

    const auto tournament = [&](const std::vector<detail::Individual>& inds) -> std::size_t {
        std::uniform_int_distribution<std::size_t> pick(0, inds.size() - 1);
        std::size_t a = pick(rng), b = pick(rng);
        if (inds[a].rank != inds[b].rank) return inds[a].rank < inds[b].rank ? a : b;
        if (inds[a].crowding != inds[b].crowding) return inds[a].crowding > inds[b].crowding ? a : b;
        return a;
    };

    const auto clip = [](double x) { return std::clamp(x, 0.0, 1.0); };

    for (std::size_t gen = 0; gen < cfg.generations; ++gen) {
        std::vector<detail::Individual> offspring;
        offspring.reserve(pop_size);
        while (offspring.size() < pop_size) {
            const auto& p1 = pop[tournament(pop)];
            const auto& p2 = pop[tournament(pop)];
            std::array<double, 3> c1 = p1.genome, c2 = p2.genome;
            if (unit(rng) < cfg.crossover_prob) {
                for (std::size_t g = 0; g < 3; ++g) {
                    if (unit(rng) > 0.5) continue;
                    const double u = unit(rng);
                    const double beta = u <= 0.5
                                            ? std::pow(2.0 * u, 1.0 / (cfg.sbx_eta + 1.0))
                                            : std::pow(1.0 / (2.0 * (1.0 - u)),
                                                       1.0 / (cfg.sbx_eta + 1.0));
                    const double x1 = p1.genome[g], x2 = p2.genome[g];
                    c1[g] = clip(0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2));
                    c2[g] = clip(0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2));
                }
            }
            for (auto* child : {&c1, &c2}) {
                for (std::size_t g = 0; g < 3; ++g) {
                    if (unit(rng) >= cfg.mutation_prob) continue;
                    const double u = unit(rng);
                    const double delta =
                        u < 0.5 ? std::pow(2.0 * u, 1.0 / (cfg.mutation_eta + 1.0)) - 1.0
                                : 1.0 - std::pow(2.0 * (1.0 - u), 1.0 / (cfg.mutation_eta + 1.0));
                    (*child)[g] = clip((*child)[g] + delta);
                }
            }
            for (auto& genome : {c1, c2}) {
                if (offspring.size() >= pop_size) break;
                detail::Individual ind;
                ind.genome = genome;
                ind.objectives = eval_genome(genome);
                offspring.push_back(std::move(ind));
            }
        }

        std::vector<detail::Individual> combined = pop;
        combined.insert(combined.end(), offspring.begin(), offspring.end());
        auto fronts = rank_population(combined);

        std::vector<detail::Individual> next;
        next.reserve(pop_size);
        for (const auto& front : fronts) {
            if (next.size() + front.size() <= pop_size) {
                for (std::size_t i : front) next.push_back(combined[i]);
            } else {
                std::vector<std::size_t> order = front;
                std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    if (combined[a].crowding != combined[b].crowding)
                        return combined[a].crowding > combined[b].crowding;
                    return a < b;
                });
                for (std::size_t i : order) {
                    if (next.size() >= pop_size) break;
                    next.push_back(combined[i]);
                }
            }
            if (next.size() >= pop_size) break;
        }
        pop = std::move(next);
        rank_population(pop);
    }

    ParetoFront result;
    result.points = std::move(archive);
    std::sort(result.points.begin(), result.points.end(),
              [](const ObjectivePoint& a, const ObjectivePoint& b) {
                  return a.objectives < b.objectives;
              });
    return result;
}

// ---------------------------------------------------------------------------
// Weight calibration: score a weight vector by the responses it selects.

struct CalibrationInstance {
    std::string id;
    std::vector<MetricVector> candidates;
};

struct CalibrationResult {
    WeightVector weights; // renormalized to w1+w2+w3 = 1
    ParetoFront front;
    std::uint64_t seed = 0;
};

namespace detail {

// composite_q without the not-all-zero weight check; the search box includes
// the all-zero corner, which degenerates to selecting the first candidate.
inline double raw_q(const MetricVector& m, const WeightVector& w) {
    return w.w1 * m.qa_rel + w.w2 * m.udrr - w.w3 * m.ppl;
}

} // namespace detail

inline std::size_t select_candidate(const std::vector<MetricVector>& candidates,
                                    const WeightVector& w) {
    if (candidates.empty()) throw Error("no candidates to select from");
    std::size_t best = 0;
    double best_q = detail::raw_q(candidates[0], w);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double q = detail::raw_q(candidates[i], w);
        if (q > best_q) {
            best_q = q;
            best = i;
        }
    }
    return best;
}

inline ParetoFront calibration_front(const std::vector<CalibrationInstance>& instances,
                                     const NsgaConfig& cfg) {
    if (instances.empty()) throw Error("weight calibration requires at least one instance");
    for (const auto& inst : instances) {
        if (inst.candidates.size() < 2)
            throw Error("calibration instance " + inst.id + " has fewer than 2 candidates");
        for (const auto& m : inst.candidates) m.validate();
    }
    const auto evaluate = [&](const WeightVector& w) {
        Objectives acc{0.0, 0.0, 0.0};
        for (const auto& inst : instances) {
            const auto& m = inst.candidates[select_candidate(inst.candidates, w)];
            acc[0] += -m.qa_rel;
            acc[1] += -m.udrr;
            acc[2] += m.ppl;
        }
        const double n = static_cast<double>(instances.size());
        return ObjectivePoint{{acc[0] / n, acc[1] / n, acc[2] / n}, w};
    };
    return nsga2(evaluate, cfg);
}

inline CalibrationResult calibrate_weights(const std::vector<CalibrationInstance>& instances,
                                           const NsgaConfig& cfg) {
    CalibrationResult result;
    result.front = calibration_front(instances, cfg);
    result.seed = cfg.seed;
    const auto& knee = knee_point(result.front);
    const double sum = knee.payload.w1 + knee.payload.w2 + knee.payload.w3;
    if (sum > 0.0) {
        result.weights = {knee.payload.w1 / sum, knee.payload.w2 / sum, knee.payload.w3 / sum};
    } else {
        result.weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    }
    return result;
}

} // namespace lsrp
