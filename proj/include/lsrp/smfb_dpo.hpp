#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsrp/errors.hpp"
#include "lsrp/jsonl.hpp"
#include "lsrp/parallel.hpp"
#include "lsrp/pipeline.hpp"

namespace lsrp {

struct DpoConfig {
    double lambda = 0.1;
    double temp_a = 0.7;
    double temp_b = 1.0;

    void validate() const {
        if (lambda < 0.0) throw ConfigError("dpo lambda must be >= 0");
        if (temp_a == temp_b)
            throw ConfigError("pair temperatures must differ or both samples are identical");
    }
};

struct PreferencePair {
    std::string pair_id;
    std::string prompt_text; // rendered general leader prompt
    Guideline chosen;
    Guideline rejected;
    double chosen_q = 0.0;
    double rejected_q = 0.0;
    std::string task_ref;
};

// A generated pair, or the reason it produced no training signal.
struct PairOutcome {
    std::optional<PreferencePair> pair;
    std::string discard_reason;
    std::string task_ref;
};

// Two general-strategy guidelines at different temperatures, both executed
// and scored on device; the higher-Q one is preferred. Exact ties carry no
// signal and are discarded, as are pairs hit by backend failures.
inline PairOutcome generate_pair(const TaskSpec& task, const UserProfile& profile,
                                 const PipelineBackends& backends, const TemplatePack& templates,
                                 const WeightVector& weights, const DpoConfig& cfg,
                                 SamplingConfig base_sampling,
                                 const std::vector<std::string>& exemplars,
                                 const std::string& pair_id) {
    cfg.validate();
    weights.validate();
    PairOutcome outcome;
    outcome.task_ref = task.record_id;
    try {
        auto prompt =
            render_leader_prompt(templates, LeaderStrategy::General, task, exemplars,
                                 task.dataset_id);
        auto sample_at = [&](double temperature) {
            SamplingConfig s = base_sampling;
            s.temperature = temperature;
            Guideline g;
            g.text = backends.cloud->chat(
                ChatRequest::single_user(prompt.text, s, backends.cloud_model));
            g.strategy = LeaderStrategy::General;
            g.sampling_used = s;
            return g;
        };
        Guideline a = sample_at(cfg.temp_a);
        Guideline b = sample_at(cfg.temp_b);

        auto score = [&](const Guideline& g) {
            auto response =
                generate_device_response(backends, templates, g, profile, task, base_sampling);
            return composite_q(
                evaluate_response(backends, templates, task, profile, response.text), weights);
        };
        const double q_a = score(a);
        const double q_b = score(b);
        if (q_a == q_b) {
            outcome.discard_reason = "tie at Q=" + std::to_string(q_a);
            return outcome;
        }

        PreferencePair pair;
        pair.pair_id = pair_id;
        pair.prompt_text = prompt.text;
        pair.task_ref = task.record_id;
        if (q_a > q_b) {
            pair.chosen = std::move(a);
            pair.rejected = std::move(b);
            pair.chosen_q = q_a;
            pair.rejected_q = q_b;
        } else {
            pair.chosen = std::move(b);
            pair.rejected = std::move(a);
            pair.chosen_q = q_b;
            pair.rejected_q = q_a;
        }
        outcome.pair = std::move(pair);
    } catch (const std::exception& e) {
        outcome.discard_reason = std::string("backend failure: ") + e.what();
    }
    return outcome;
}

inline std::vector<PairOutcome> generate_pairs(const std::vector<std::pair<UserProfile, TaskSpec>>& records,
                                               const PipelineBackends& backends,
                                               const TemplatePack& templates,
                                               const WeightVector& weights, const DpoConfig& cfg,
                                               SamplingConfig base_sampling,
                                               const std::vector<std::string>& exemplars,
                                               std::size_t workers = 1) {
    std::vector<PairOutcome> out(records.size());
    parallel_for(records.size(), workers, [&](std::size_t i) {
        const auto& [profile, task] = records[i];
        out[i] = generate_pair(task, profile, backends, templates, weights, cfg, base_sampling,
                               exemplars, "pair-" + task.record_id);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Dataset export. One JSONL record per pair:
//   {pairId, prompt, chosen, rejected,
//    metadata: {chosenQ, rejectedQ, taskRef, temps: [chosenT, rejectedT]}}

inline void export_dataset(const std::vector<PreferencePair>& pairs,
                           const std::filesystem::path& path) {
    if (pairs.empty()) throw Error("refusing to export an empty preference dataset");
    std::vector<nlohmann::json> records;
    records.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (!(p.chosen_q > p.rejected_q))
            throw Error("pair " + p.pair_id + " is not strictly preferred");
        records.push_back(
            {{"pairId", p.pair_id},
             {"prompt", p.prompt_text},
             {"chosen", p.chosen.text},
             {"rejected", p.rejected.text},
             {"metadata",
              {{"chosenQ", p.chosen_q},
               {"rejectedQ", p.rejected_q},
               {"taskRef", p.task_ref},
               {"temps", {p.chosen.sampling_used.temperature,
                          p.rejected.sampling_used.temperature}}}}});
    }
    jsonl::write_file(path, records);
}

inline std::vector<PreferencePair> load_pairs(const std::filesystem::path& path) {
    std::vector<PreferencePair> out;
    for (const auto& rec : jsonl::read_file(path)) {
        PreferencePair p;
        p.pair_id = rec.value("pairId", std::string{});
        p.prompt_text = rec.at("prompt").get<std::string>();
        p.chosen.text = rec.at("chosen").get<std::string>();
        p.rejected.text = rec.at("rejected").get<std::string>();
        p.chosen.strategy = p.rejected.strategy = LeaderStrategy::General;
        const auto& meta = rec.at("metadata");
        p.chosen_q = meta.at("chosenQ").get<double>();
        p.rejected_q = meta.at("rejectedQ").get<double>();
        p.task_ref = meta.value("taskRef", std::string{});
        if (meta.contains("temps") && meta["temps"].size() == 2) {
            p.chosen.sampling_used.temperature = meta["temps"][0].get<double>();
            p.rejected.sampling_used.temperature = meta["temps"][1].get<double>();
        }
        out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Preference loss on supplied sequence logprobs:
//   L = sum over pairs of [ -logP(chosen) + lambda * logP(rejected) ]
// with sequence log-likelihood the sum of token logprobs.

struct PairLogprobs {
    std::string pair_id;
    std::vector<double> chosen;
    std::vector<double> rejected;
};

inline double paper_loss(const std::vector<PairLogprobs>& pairs, double lambda) {
    if (lambda < 0.0) throw Error("lambda must be >= 0");
    if (pairs.empty()) throw Error("loss requires at least one pair");
    double total = 0.0;
    for (const auto& p : pairs) {
        if (p.chosen.empty() || p.rejected.empty())
            throw Error("pair " + p.pair_id + " is missing logprobs");
        double chosen_ll = 0.0, rejected_ll = 0.0;
        for (double x : p.chosen) {
            if (!std::isfinite(x)) throw Error("non-finite logprob in pair " + p.pair_id);
            chosen_ll += x;
        }
        for (double x : p.rejected) {
            if (!std::isfinite(x)) throw Error("non-finite logprob in pair " + p.pair_id);
            rejected_ll += x;
        }
        total += -chosen_ll + lambda * rejected_ll;
    }
    return total;
}

} // namespace lsrp
