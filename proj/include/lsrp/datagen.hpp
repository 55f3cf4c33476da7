#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lsrp/errors.hpp"
#include "lsrp/model_gateway.hpp"
#include "lsrp/parallel.hpp"
#include "lsrp/strategy_catalog.hpp"

namespace lsrp {

struct ProfileRecord {
    std::string id;
    std::string profile_text;
};

struct SyntheticTaskRecord {
    std::string task;
    std::string details;
    std::string profile_ref;
};

struct DatagenStats {
    std::size_t generated = 0;
    std::size_t skipped = 0;
    std::vector<std::string> skip_log;
};

// First balanced JSON object in the reply; model output rarely arrives bare.
inline std::optional<nlohmann::json> extract_first_json_object(const std::string& reply) {
    const auto start = reply.find('{');
    if (start == std::string::npos) return std::nullopt;
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = start; i < reply.size(); ++i) {
        const char c = reply[i];
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}') {
            if (--depth == 0) {
                auto parsed =
                    nlohmann::json::parse(reply.substr(start, i - start + 1), nullptr, false);
                if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
                return parsed;
            }
        }
    }
    return std::nullopt;
}

namespace detail {

inline std::optional<SyntheticTaskRecord> parse_task_reply(const std::string& reply,
                                                           const std::string& profile_ref) {
    auto obj = extract_first_json_object(reply);
    if (!obj) return std::nullopt;
    if (!obj->contains("task") || !obj->contains("details")) return std::nullopt;
    if (!(*obj)["task"].is_string() || !(*obj)["details"].is_string()) return std::nullopt;
    SyntheticTaskRecord rec;
    rec.task = (*obj)["task"].get<std::string>();
    rec.details = (*obj)["details"].get<std::string>();
    rec.profile_ref = profile_ref;
    if (rec.task.empty() || rec.details.empty()) return std::nullopt;
    return rec;
}

} // namespace detail

// Renders the task-generation prompt per profile and parses the JSON reply.
// A malformed reply is re-asked once, then the profile is skipped with a log
// record; more than half the profiles skipping fails the run.
inline std::vector<SyntheticTaskRecord> generate_tasks(const std::vector<ProfileRecord>& profiles,
                                                       ChatBackend& backend,
                                                       const TemplatePack& templates,
                                                       const std::string& model_id = {},
                                                       SamplingConfig sampling = {},
                                                       DatagenStats* stats_out = nullptr,
                                                       std::size_t workers = 1) {
    if (profiles.empty()) throw Error("task generation requires at least one profile");
    std::vector<std::optional<SyntheticTaskRecord>> slots(profiles.size());
    std::vector<std::string> skip_by_index(profiles.size());

    parallel_for(profiles.size(), workers, [&](std::size_t i) {
        const auto& profile = profiles[i];
        try {
            auto prompt = render_task_generation_prompt(templates, profile.profile_text);
            auto request = ChatRequest::single_user(prompt.text, sampling, model_id);
            for (int attempt = 0; attempt < 2 && !slots[i]; ++attempt)
                slots[i] = detail::parse_task_reply(backend.chat(request), profile.id);
            if (!slots[i]) skip_by_index[i] = profile.id + ": unparseable reply after retry";
        } catch (const std::exception& e) {
            skip_by_index[i] = profile.id + ": " + e.what();
        }
    });

    DatagenStats stats;
    std::vector<SyntheticTaskRecord> out;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) {
            out.push_back(std::move(*slots[i]));
            ++stats.generated;
        } else {
            ++stats.skipped;
            stats.skip_log.push_back(skip_by_index[i]);
        }
    }
    if (stats_out) *stats_out = stats;
    if (2 * stats.skipped > profiles.size())
        throw Error("task generation skipped " + std::to_string(stats.skipped) + " of " +
                    std::to_string(profiles.size()) + " profiles");
    return out;
}

// Seeded shuffle, then split with floor(n*ratio) training records: on 1,199
// records at 0.8 that is the 959/240 shape.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_dataset(const std::vector<T>& records,
                                                        double ratio, std::uint64_t seed) {
    if (records.empty()) throw Error("cannot split an empty dataset");
    if (!(ratio > 0.0 && ratio < 1.0)) throw Error("split ratio must lie in (0,1)");
    std::vector<T> shuffled = records;
    std::mt19937_64 rng(seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto train_size = static_cast<std::size_t>(
        std::floor(static_cast<double>(records.size()) * ratio));
    std::vector<T> train(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(train_size));
    std::vector<T> test(shuffled.begin() + static_cast<std::ptrdiff_t>(train_size), shuffled.end());
    return {std::move(train), std::move(test)};
}

} // namespace lsrp
