#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsrp/errors.hpp"
#include "lsrp/jsonl.hpp"
#include "lsrp/parallel.hpp"
#include "lsrp/pipeline.hpp"

namespace lsrp {

struct RetrievalConfig {
    std::size_t k = 3;
    bool include_privacy = true; // encode the profile alongside the task (device-side retrieval)

    void validate() const {
        if (k < 1) throw ConfigError("retrieval k must be >= 1");
    }
};

// One synthetic user-task pair: its embedding and the strategy that won it.
struct IndexEntry {
    std::int64_t id = 0;
    EmbeddingVector embedding;
    LeaderStrategy best_strategy = LeaderStrategy::Directive;
    std::map<LeaderStrategy, double> per_strategy_q;
    std::string source_ref;
};

struct Neighbor {
    const IndexEntry* entry = nullptr;
    double distance = 0.0;
};

struct VoteResult {
    LeaderStrategy winner = LeaderStrategy::Directive;
    std::map<LeaderStrategy, std::size_t> tally;
    std::vector<std::int64_t> neighbor_ids;
};

// Ties resolve in the fixed strategy order (enum order).
inline LeaderStrategy argmax_strategy(const std::map<LeaderStrategy, double>& scores) {
    if (scores.empty()) throw Error("no strategy scores");
    std::optional<LeaderStrategy> best;
    for (LeaderStrategy s : kPathGoalStrategies) {
        auto it = scores.find(s);
        if (it == scores.end()) continue;
        if (!best || it->second > scores.at(*best)) best = s;
    }
    if (!best) throw Error("no path-goal strategy scores");
    return *best;
}

// Encode what retrieval compares: with privacy included, the concatenation of
// the private text and the task; otherwise the task alone. Privacy-included
// encoding only ever runs device-side.
inline EmbeddingVector encode_pair(const UserProfile& profile, const TaskSpec& task,
                                   const RetrievalConfig& cfg, Embedder& embedder) {
    if (task.task_text.empty()) throw Error("cannot encode an empty task");
    if (!cfg.include_privacy) return embedder.embed(task.task_text);
    return embedder.embed(profile.private_text() + "\n---\n" + task.task_text);
}

// ---------------------------------------------------------------------------
// Exact flat index over a few thousand entries; an approximate structure
// would buy nothing at this size and cost testability.
class StrategyIndex {
  public:
    StrategyIndex(std::size_t dim, std::string embedder_id, bool include_privacy)
        : dim_(dim), embedder_id_(std::move(embedder_id)), include_privacy_(include_privacy) {
        if (dim_ == 0) throw ConfigError("index dim must be positive");
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::string& embedder_id() const { return embedder_id_; }
    bool include_privacy() const { return include_privacy_; }
    const std::vector<IndexEntry>& entries() const { return entries_; }

    void add(IndexEntry entry) {
        if (entry.embedding.dim() != dim_)
            throw Error("entry dimension mismatch: got " + std::to_string(entry.embedding.dim()) +
                        ", index dim " + std::to_string(dim_));
        entries_.push_back(std::move(entry));
    }

    // Exact scan, ascending Euclidean distance, ties by entry id.
    std::vector<Neighbor> top_k(const EmbeddingVector& query, std::size_t k) const {
        if (k < 1) throw Error("top-k requires k >= 1");
        if (entries_.empty()) throw Error("index is empty");
        if (query.dim() != dim_) throw Error("query dimension mismatch");
        std::vector<Neighbor> all;
        all.reserve(entries_.size());
        for (const auto& e : entries_) all.push_back({&e, euclidean_distance(query, e.embedding)});
        std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
            if (a.distance != b.distance) return a.distance < b.distance;
            return a.entry->id < b.entry->id;
        });
        if (all.size() > k) all.resize(k);
        return all;
    }

    // --- persistence: manifest.json + entries.jsonl + embeddings.bin -------

    void save(const std::filesystem::path& dir) const {
        namespace fs = std::filesystem;
        static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);
        fs::path tmp = dir;
        tmp += ".tmp-" + std::to_string(std::random_device{}());
        fs::create_directories(tmp);

        std::vector<nlohmann::json> records;
        records.reserve(entries_.size());
        for (const auto& e : entries_) {
            nlohmann::json q = nlohmann::json::object();
            for (const auto& [s, v] : e.per_strategy_q) q[to_string(s)] = v;
            records.push_back({{"id", e.id},
                               {"sourceRef", e.source_ref},
                               {"bestStrategy", to_string(e.best_strategy)},
                               {"perStrategyQ", q}});
        }
        jsonl::write_file(tmp / "entries.jsonl", records);

        {
            std::ofstream bin(tmp / "embeddings.bin", std::ios::binary | std::ios::trunc);
            if (!bin) throw IoError("cannot write embeddings.bin");
            for (const auto& e : entries_) {
                for (float v : e.embedding.values) {
                    auto bits = std::bit_cast<std::uint32_t>(v);
                    unsigned char bytes[4] = {
                        static_cast<unsigned char>(bits & 0xff),
                        static_cast<unsigned char>((bits >> 8) & 0xff),
                        static_cast<unsigned char>((bits >> 16) & 0xff),
                        static_cast<unsigned char>((bits >> 24) & 0xff)};
                    bin.write(reinterpret_cast<const char*>(bytes), 4);
                }
            }
            if (!bin) throw IoError("write failed for embeddings.bin");
        }

        // manifest written last: a directory without one is not a readable index
        {
            nlohmann::json manifest{{"dim", dim_},
                                    {"count", entries_.size()},
                                    {"metric", "euclidean"},
                                    {"embedderId", embedder_id_},
                                    {"includePrivacy", include_privacy_}};
            std::ofstream out(tmp / "manifest.json", std::ios::trunc);
            if (!out) throw IoError("cannot write manifest.json");
            out << manifest.dump(2) << '\n';
            if (!out) throw IoError("write failed for manifest.json");
        }

        if (fs::exists(dir)) fs::remove_all(dir);
        fs::rename(tmp, dir);
    }

    static StrategyIndex load(const std::filesystem::path& dir) {
        namespace fs = std::filesystem;
        std::ifstream mf(dir / "manifest.json");
        if (!mf) throw IoError("no readable index at " + dir.string() + " (missing manifest.json)");
        nlohmann::json manifest = nlohmann::json::parse(mf, nullptr, false);
        if (manifest.is_discarded()) throw IoError("invalid manifest.json in " + dir.string());
        if (manifest.value("metric", std::string{}) != "euclidean")
            throw IoError("unsupported index metric in " + dir.string());

        StrategyIndex index(manifest.at("dim").get<std::size_t>(),
                            manifest.value("embedderId", std::string{}),
                            manifest.value("includePrivacy", true));
        const auto count = manifest.at("count").get<std::size_t>();

        std::ifstream bin(dir / "embeddings.bin", std::ios::binary);
        if (!bin) throw IoError("cannot open embeddings.bin in " + dir.string());
        auto read_row = [&](std::size_t dim) {
            EmbeddingVector v;
            v.values.resize(dim);
            for (auto& x : v.values) {
                unsigned char bytes[4];
                if (!bin.read(reinterpret_cast<char*>(bytes), 4))
                    throw IoError("embeddings.bin truncated in " + dir.string());
                std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) |
                                     (static_cast<std::uint32_t>(bytes[1]) << 8) |
                                     (static_cast<std::uint32_t>(bytes[2]) << 16) |
                                     (static_cast<std::uint32_t>(bytes[3]) << 24);
                x = std::bit_cast<float>(bits);
            }
            return v;
        };

        auto records = jsonl::read_file(dir / "entries.jsonl");
        if (records.size() != count)
            throw IoError("entry count mismatch in " + dir.string());
        for (const auto& rec : records) {
            IndexEntry e;
            e.id = rec.at("id").get<std::int64_t>();
            e.source_ref = rec.value("sourceRef", std::string{});
            e.best_strategy = strategy_from_string(rec.at("bestStrategy").get<std::string>());
            for (const auto& [name, value] : rec.at("perStrategyQ").items())
                e.per_strategy_q[strategy_from_string(name)] = value.get<double>();
            e.embedding = read_row(index.dim());
            index.add(std::move(e));
        }
        return index;
    }

  private:
    std::size_t dim_;
    std::string embedder_id_;
    bool include_privacy_;
    std::vector<IndexEntry> entries_;
};

// ---------------------------------------------------------------------------
// Voting: plurality over neighbour strategies; tie -> smallest summed
// distance among the tied strategies' supporters; still tied -> fixed
// strategy order. Order-free over the input.
inline VoteResult vote_strategy(const std::vector<Neighbor>& neighbors) {
    if (neighbors.empty()) throw Error("cannot vote over an empty neighbor list");
    VoteResult result;
    std::map<LeaderStrategy, double> distance_sum;
    for (const auto& n : neighbors) {
        ++result.tally[n.entry->best_strategy];
        distance_sum[n.entry->best_strategy] += n.distance;
        result.neighbor_ids.push_back(n.entry->id);
    }
    std::optional<LeaderStrategy> best;
    for (LeaderStrategy s : kPathGoalStrategies) {
        auto it = result.tally.find(s);
        if (it == result.tally.end()) continue;
        if (!best) {
            best = s;
            continue;
        }
        const std::size_t cur = it->second, top = result.tally.at(*best);
        if (cur > top || (cur == top && distance_sum[s] < distance_sum[*best])) best = s;
    }
    result.winner = *best;
    return result;
}

inline LeaderStrategy select_strategy(const UserProfile& profile, const TaskSpec& task,
                                      const RetrievalConfig& cfg, const StrategyIndex& index,
                                      Embedder& embedder) {
    cfg.validate();
    if (index.empty()) throw Error("strategy index is empty");
    if (embedder.dim() != index.dim())
        throw Error("embedder dim " + std::to_string(embedder.dim()) + " does not match index dim " +
                    std::to_string(index.dim()));
    const auto query = encode_pair(profile, task, cfg, embedder);
    return vote_strategy(index.top_k(query, cfg.k)).winner;
}

// ---------------------------------------------------------------------------
// Index building: for each synthetic pair, generate all four strategy
// guidelines, run the subordinate, score each response, and store the argmax.

struct IndexBuildOptions {
    RetrievalConfig retrieval;
    WeightVector weights;
    SamplingConfig sampling;           // guideline and response generation
    std::vector<std::string> exemplars;
    std::size_t workers = 1;
    double max_skip_fraction = 0.2;
};

struct IndexBuildStats {
    std::size_t built = 0;
    std::size_t skipped = 0;
    std::vector<std::string> skip_log;
};

inline StrategyIndex build_index(const std::vector<std::pair<UserProfile, TaskSpec>>& synthetic_set,
                                 const PipelineBackends& backends, const TemplatePack& templates,
                                 const IndexBuildOptions& options,
                                 IndexBuildStats* stats_out = nullptr) {
    backends.require(/*need_embedder=*/true);
    options.retrieval.validate();
    options.weights.validate();

    StrategyIndex index(backends.embedder->dim(), backends.embedder->id(),
                        options.retrieval.include_privacy);
    std::vector<std::optional<IndexEntry>> slots(synthetic_set.size());
    std::vector<std::string> skip_log_by_index(synthetic_set.size());
    std::mutex embed_mutex;

    parallel_for(synthetic_set.size(), options.workers, [&](std::size_t i) {
        const auto& [profile, task] = synthetic_set[i];
        try {
            IndexEntry entry;
            entry.source_ref = task.record_id;
            for (LeaderStrategy strategy : kPathGoalStrategies) {
                auto guideline = generate_guideline(backends, templates, strategy, task,
                                                    options.exemplars, options.sampling);
                auto response = generate_device_response(backends, templates, guideline, profile,
                                                         task, options.sampling);
                auto metrics = evaluate_response(backends, templates, task, profile, response.text);
                entry.per_strategy_q[strategy] = composite_q(metrics, options.weights);
            }
            entry.best_strategy = argmax_strategy(entry.per_strategy_q);
            {
                // embedder implementations are not required to be re-entrant
                std::lock_guard lock(embed_mutex);
                entry.embedding =
                    encode_pair(profile, task, options.retrieval, *backends.embedder);
            }
            slots[i] = std::move(entry);
        } catch (const std::exception& e) {
            skip_log_by_index[i] = task.record_id + ": " + e.what();
        }
    });

    IndexBuildStats stats;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) {
            slots[i]->id = static_cast<std::int64_t>(stats.built);
            index.add(std::move(*slots[i]));
            ++stats.built;
        } else {
            ++stats.skipped;
            stats.skip_log.push_back(skip_log_by_index[i]);
        }
    }
    if (stats_out) *stats_out = stats;
    if (!synthetic_set.empty()) {
        const double skip_fraction =
            static_cast<double>(stats.skipped) / static_cast<double>(synthetic_set.size());
        if (skip_fraction > options.max_skip_fraction)
            throw Error("index build skipped " + std::to_string(stats.skipped) + " of " +
                        std::to_string(synthetic_set.size()) + " pairs (over the " +
                        std::to_string(options.max_skip_fraction) + " tolerance)");
    }
    return index;
}

} // namespace lsrp
