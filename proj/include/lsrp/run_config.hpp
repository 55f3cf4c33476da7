#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lsrp/collab_protocol.hpp"
#include "lsrp/errors.hpp"
#include "lsrp/http_gateway.hpp"
#include "lsrp/metrics.hpp"
#include "lsrp/model_gateway.hpp"
#include "lsrp/nsga2.hpp"
#include "lsrp/pipeline.hpp"
#include "lsrp/smfb_dpo.hpp"
#include "lsrp/uurag_index.hpp"

namespace lsrp {

struct ChatBackendConfig {
    std::string kind = "mock"; // mock | http
    std::string endpoint;
    std::string model;
    std::string api_key_env;
    std::string script; // mock script JSONL
};

struct EmbedderConfig {
    std::string kind = "hashing"; // hashing | http
    std::size_t dim = 64;
    std::string endpoint;
    std::string model;
    std::string api_key_env;
};

struct LogprobSourceConfig {
    std::string kind = "uniform"; // uniform | bigram
    std::string corpus;           // bigram corpus file, one sequence per line
    std::size_t vocab = 64;       // uniform vocabulary size
};

// Every knob for a run, loaded from one TOML file with environment-variable
// overrides for backend endpoints, models and API keys.
struct RunConfig {
    std::uint64_t seed = 42;
    std::size_t workers = 1;
    std::string dataset_id = "cogen";
    bool deterministic = false;

    std::filesystem::path templates_dir = "templates";
    std::filesystem::path exemplars_path;

    ChatBackendConfig cloud;
    ChatBackendConfig device;
    ChatBackendConfig judge;
    EmbedderConfig embedder;
    LogprobSourceConfig logprobs;

    RetrievalConfig retrieval;
    std::string weights_mode = "fixed"; // fixed | calibrate
    WeightVector weights;
    std::filesystem::path weights_report; // calibrate mode: calibrate-weights output JSON

    SamplingConfig sampling;
    DpoConfig dpo;
    NsgaConfig nsga;

    static RunConfig load(const std::filesystem::path& path);
    void validate() const;
};

namespace config_detail {

class TomlValues {
  public:
    explicit TomlValues(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path))
            throw ConfigError("config file not found: " + path.string());
        CLI::ConfigTOML parser;
        try {
            for (const auto& item : parser.from_file(path.string())) {
                if (item.name == "++" || item.name == "--") continue; // section markers
                values_[item.fullname()] = item.inputs;
            }
        } catch (const CLI::Error& e) {
            throw ConfigError("cannot parse " + path.string() + ": " + e.what());
        }
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    void get(const std::string& key, std::string& out) {
        if (auto v = take(key)) out = v->empty() ? std::string{} : v->front();
    }
    void get(const std::string& key, std::filesystem::path& out) {
        if (auto v = take(key)) out = v->empty() ? std::string{} : v->front();
    }
    void get(const std::string& key, bool& out) {
        if (auto v = take(key)) {
            const std::string& s = v->front();
            if (s == "true" || s == "1") out = true;
            else if (s == "false" || s == "0") out = false;
            else throw ConfigError("config field " + key + " must be a boolean");
        }
    }
    template <typename Num>
    void get_number(const std::string& key, Num& out) {
        if (auto v = take(key)) {
            try {
                if constexpr (std::is_floating_point_v<Num>)
                    out = static_cast<Num>(std::stod(v->front()));
                else
                    out = static_cast<Num>(std::stoll(v->front()));
            } catch (const std::exception&) {
                throw ConfigError("config field " + key + " must be a number");
            }
        }
    }

    void finish(const std::filesystem::path& path) const {
        if (!values_.empty())
            throw ConfigError("unknown config field " + values_.begin()->first + " in " +
                              path.string());
    }

  private:
    std::optional<std::vector<std::string>> take(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        auto v = it->second;
        values_.erase(it);
        return v;
    }

    std::map<std::string, std::vector<std::string>> values_;
};

inline void env_override(std::string& field, const std::string& var) {
    if (const char* v = std::getenv(var.c_str()); v && *v) field = v;
}

inline void load_chat_section(TomlValues& toml, const std::string& prefix, ChatBackendConfig& cfg,
                              const std::string& env_prefix) {
    toml.get(prefix + ".kind", cfg.kind);
    toml.get(prefix + ".endpoint", cfg.endpoint);
    toml.get(prefix + ".model", cfg.model);
    toml.get(prefix + ".api_key_env", cfg.api_key_env);
    toml.get(prefix + ".script", cfg.script);
    env_override(cfg.endpoint, env_prefix + "_ENDPOINT");
    env_override(cfg.model, env_prefix + "_MODEL");
    if (cfg.api_key_env.empty()) cfg.api_key_env = env_prefix + "_API_KEY";
}

} // namespace config_detail

inline RunConfig RunConfig::load(const std::filesystem::path& path) {
    config_detail::TomlValues toml(path);
    RunConfig cfg;

    toml.get_number("seed", cfg.seed);
    toml.get_number("workers", cfg.workers);
    toml.get("dataset", cfg.dataset_id);
    toml.get("deterministic", cfg.deterministic);

    toml.get("paths.templates", cfg.templates_dir);
    toml.get("paths.exemplars", cfg.exemplars_path);

    config_detail::load_chat_section(toml, "backends.cloud", cfg.cloud, "LSRP_CLOUD");
    config_detail::load_chat_section(toml, "backends.device", cfg.device, "LSRP_DEVICE");
    config_detail::load_chat_section(toml, "backends.judge", cfg.judge, "LSRP_JUDGE");

    toml.get("embedder.kind", cfg.embedder.kind);
    toml.get_number("embedder.dim", cfg.embedder.dim);
    toml.get("embedder.endpoint", cfg.embedder.endpoint);
    toml.get("embedder.model", cfg.embedder.model);
    toml.get("embedder.api_key_env", cfg.embedder.api_key_env);
    config_detail::env_override(cfg.embedder.endpoint, "LSRP_EMBEDDER_ENDPOINT");
    config_detail::env_override(cfg.embedder.model, "LSRP_EMBEDDER_MODEL");
    if (cfg.embedder.api_key_env.empty()) cfg.embedder.api_key_env = "LSRP_EMBEDDER_API_KEY";

    toml.get("logprobs.kind", cfg.logprobs.kind);
    toml.get("logprobs.corpus", cfg.logprobs.corpus);
    toml.get_number("logprobs.vocab", cfg.logprobs.vocab);

    toml.get_number("retrieval.k", cfg.retrieval.k);
    toml.get("retrieval.include_privacy", cfg.retrieval.include_privacy);

    toml.get("weights.mode", cfg.weights_mode);
    toml.get_number("weights.w1", cfg.weights.w1);
    toml.get_number("weights.w2", cfg.weights.w2);
    toml.get_number("weights.w3", cfg.weights.w3);
    toml.get("weights.report", cfg.weights_report);

    toml.get_number("sampling.temperature", cfg.sampling.temperature);
    toml.get_number("sampling.top_p", cfg.sampling.top_p);
    toml.get_number("sampling.max_new_tokens", cfg.sampling.max_new_tokens);

    toml.get_number("dpo.lambda", cfg.dpo.lambda);
    toml.get_number("dpo.temp_a", cfg.dpo.temp_a);
    toml.get_number("dpo.temp_b", cfg.dpo.temp_b);

    toml.get_number("nsga.population", cfg.nsga.population_size);
    toml.get_number("nsga.generations", cfg.nsga.generations);
    toml.get_number("nsga.crossover", cfg.nsga.crossover_prob);
    toml.get_number("nsga.mutation", cfg.nsga.mutation_prob);
    cfg.nsga.seed = cfg.seed;

    toml.finish(path);
    cfg.validate();
    return cfg;
}

inline void RunConfig::validate() const {
    auto require_file = [](const std::filesystem::path& p, const std::string& field) {
        if (p.empty()) throw ConfigError("config field " + field + " is required");
        if (!std::filesystem::exists(p))
            throw ConfigError("config field " + field + " references a missing path: " +
                              p.string());
    };
    if (retrieval.k < 1) throw ConfigError("config field retrieval.k must be >= 1");
    if (workers < 1) throw ConfigError("config field workers must be >= 1");
    require_file(templates_dir / "manifest.json", "paths.templates");
    if (!exemplars_path.empty()) require_file(exemplars_path, "paths.exemplars");

    auto check_chat = [&](const ChatBackendConfig& c, const std::string& field) {
        if (c.kind != "mock" && c.kind != "http")
            throw ConfigError("config field " + field + ".kind must be mock or http");
        if (c.kind == "http" && c.endpoint.empty())
            throw ConfigError("config field " + field + ".endpoint is required for http backends");
        if (c.kind == "mock" && !c.script.empty()) require_file(c.script, field + ".script");
    };
    check_chat(cloud, "backends.cloud");
    check_chat(device, "backends.device");
    check_chat(judge, "backends.judge");

    if (embedder.kind != "hashing" && embedder.kind != "http")
        throw ConfigError("config field embedder.kind must be hashing or http");
    if (embedder.dim < 1) throw ConfigError("config field embedder.dim must be >= 1");
    if (embedder.kind == "http" && embedder.endpoint.empty())
        throw ConfigError("config field embedder.endpoint is required for http embedders");

    if (logprobs.kind != "uniform" && logprobs.kind != "bigram")
        throw ConfigError("config field logprobs.kind must be uniform or bigram");
    if (logprobs.kind == "bigram") require_file(logprobs.corpus, "logprobs.corpus");
    if (logprobs.kind == "uniform" && logprobs.vocab < 1)
        throw ConfigError("config field logprobs.vocab must be >= 1");

    if (weights_mode == "fixed") {
        try {
            weights.validate();
        } catch (const Error& e) {
            throw ConfigError(std::string("config field weights: ") + e.what());
        }
    } else if (weights_mode == "calibrate") {
        require_file(weights_report, "weights.report");
    } else {
        throw ConfigError("config field weights.mode must be fixed or calibrate");
    }

    try {
        dpo.validate();
        nsga.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("config field: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Backend construction. The set owns its backends; pipeline() hands out the
// borrowed view the library operations take.

struct BackendSet {
    std::unique_ptr<ChatBackend> cloud;
    std::unique_ptr<ChatBackend> device;
    std::unique_ptr<ChatBackend> judge;
    std::unique_ptr<Embedder> embedder;
    std::unique_ptr<LogprobBackend> logprob_backend;
    std::unique_ptr<LogprobSource> logprobs;
    std::string cloud_model, device_model, judge_model;

    PipelineBackends pipeline() const {
        PipelineBackends p;
        p.cloud = cloud.get();
        p.device = device.get();
        p.judge = judge.get();
        p.logprobs = logprobs.get();
        p.embedder = embedder.get();
        p.cloud_model = cloud_model;
        p.device_model = device_model;
        p.judge_model = judge_model;
        return p;
    }
};

namespace config_detail {

inline std::unique_ptr<ChatBackend> make_chat(const ChatBackendConfig& cfg, std::uint64_t seed) {
    if (cfg.kind == "http") {
        HttpEndpoint ep;
        ep.base_url = cfg.endpoint;
        ep.api_key_env = cfg.api_key_env;
        return std::make_unique<HttpChatBackend>(ep, cfg.model);
    }
    auto mock = std::make_unique<MockChatBackend>(seed);
    if (!cfg.script.empty()) mock->load_scripts(cfg.script);
    return mock;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

} // namespace config_detail

inline BackendSet make_backends(const RunConfig& cfg) {
    BackendSet set;
    set.cloud = config_detail::make_chat(cfg.cloud, cfg.seed);
    set.device = config_detail::make_chat(cfg.device, cfg.seed + 1);
    set.judge = config_detail::make_chat(cfg.judge, cfg.seed + 2);
    set.cloud_model = cfg.cloud.model;
    set.device_model = cfg.device.model;
    set.judge_model = cfg.judge.model;

    if (cfg.embedder.kind == "http") {
        HttpEndpoint ep;
        ep.base_url = cfg.embedder.endpoint;
        ep.api_key_env = cfg.embedder.api_key_env;
        set.embedder = std::make_unique<HttpEmbedder>(ep, cfg.embedder.model, cfg.embedder.dim);
    } else {
        set.embedder = std::make_unique<HashingEmbedder>(cfg.embedder.dim, cfg.seed);
    }

    if (cfg.logprobs.kind == "bigram") {
        set.logprobs = std::make_unique<BigramLogprobSource>(
            config_detail::read_lines(cfg.logprobs.corpus));
    } else {
        set.logprob_backend = std::make_unique<MockLogprobBackend>(cfg.logprobs.vocab);
        set.logprobs = std::make_unique<BackendLogprobSource>(*set.logprob_backend,
                                                              cfg.device.model);
    }
    return set;
}

// Exemplar file: JSONL of {text} records; the first two feed the leader
// prompt slots. Fixed rather than per-task for determinism.
inline std::vector<std::string> load_exemplars(const std::filesystem::path& path,
                                               std::size_t count = 2) {
    if (path.empty()) return {};
    std::vector<std::string> out;
    for (const auto& rec : jsonl::read_file(path)) {
        if (out.size() >= count) break;
        out.push_back(rec.at("text").get<std::string>());
    }
    return out;
}

// Weight resolution: fixed weights straight from config, or the knee-point
// weights recorded by a previous calibrate-weights run.
inline WeightVector resolve_weights(const RunConfig& cfg) {
    if (cfg.weights_mode == "fixed") return cfg.weights;
    std::ifstream in(cfg.weights_report);
    if (!in) throw ConfigError("cannot open weights report " + cfg.weights_report.string());
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded())
        throw ConfigError("invalid JSON in weights report " + cfg.weights_report.string());
    WeightVector w{j.at("w1").get<double>(), j.at("w2").get<double>(), j.at("w3").get<double>()};
    w.validate();
    return w;
}

inline SessionOptions session_options(const RunConfig& cfg, const WeightVector& weights,
                                      const std::vector<std::string>& exemplars) {
    SessionOptions opt;
    opt.retrieval = cfg.retrieval;
    opt.weights = weights;
    opt.sampling = cfg.sampling;
    opt.exemplars = exemplars;
    opt.dataset_id = cfg.dataset_id;
    opt.record_timings = !cfg.deterministic;
    return opt;
}

} // namespace lsrp
