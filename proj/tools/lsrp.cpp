// lsrp: one entry point for the cloud-device collaboration pipelines —
// dataset synthesis, index building and queries, batch runs, metric
// evaluation, weight calibration, and preference-pair export.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lsrp/collab_protocol.hpp"
#include "lsrp/datagen.hpp"
#include "lsrp/nsga2.hpp"
#include "lsrp/run_config.hpp"
#include "lsrp/smfb_dpo.hpp"
#include "lsrp/uurag_index.hpp"

namespace {

using nlohmann::json;

struct CommonArgs {
    std::string config_path;
    bool deterministic = false;
};

lsrp::RunConfig load_config(const CommonArgs& args) {
    auto cfg = lsrp::RunConfig::load(args.config_path);
    if (args.deterministic) cfg.deterministic = true;
    return cfg;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw lsrp::IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&now));
    return buf;
}

lsrp::WeightVector parse_weight_triple(const std::string& csv) {
    std::istringstream in(csv);
    lsrp::WeightVector w;
    char c1 = 0, c2 = 0;
    if (!(in >> w.w1 >> c1 >> w.w2 >> c2 >> w.w3) || c1 != ',' || c2 != ',')
        throw lsrp::ConfigError("--weights expects w1,w2,w3");
    w.validate();
    return w;
}

// ---------------------------------------------------------------------------

int cmd_datagen(const CommonArgs& common, const std::string& profiles_path,
                const std::string& out_path, int repeat, double split_ratio) {
    auto cfg = load_config(common);
    auto backends = lsrp::make_backends(cfg);
    auto templates = lsrp::TemplatePack::load(cfg.templates_dir);

    std::vector<lsrp::ProfileRecord> profiles;
    for (const auto& rec : lsrp::jsonl::read_file(profiles_path)) {
        lsrp::ProfileRecord p;
        p.id = rec.value("id", std::to_string(profiles.size()));
        p.profile_text = rec.value("profileText", rec.value("profile", std::string{}));
        if (p.profile_text.empty())
            throw lsrp::IoError("profile record " + p.id + " has no profileText");
        profiles.push_back(std::move(p));
    }

    std::vector<lsrp::ProfileRecord> expanded;
    for (int r = 0; r < repeat; ++r)
        for (const auto& p : profiles)
            expanded.push_back({p.id + "-t" + std::to_string(r), p.profile_text});

    lsrp::DatagenStats stats;
    auto tasks = lsrp::generate_tasks(expanded, *backends.cloud, templates, cfg.cloud.model,
                                      cfg.sampling, &stats, cfg.workers);

    std::map<std::string, std::string> profile_text_by_ref;
    for (const auto& p : expanded) profile_text_by_ref[p.id] = p.profile_text;

    std::vector<json> records;
    for (const auto& t : tasks) {
        records.push_back({{"recordId", t.profile_ref},
                           {"taskText", t.task},
                           {"detailsText", t.details},
                           {"profileText", profile_text_by_ref[t.profile_ref]},
                           {"datasetId", cfg.dataset_id}});
    }

    if (split_ratio > 0.0) {
        auto [train, test] = lsrp::split_dataset(records, split_ratio, cfg.seed);
        for (auto& r : train) r["tag"] = "synthetic user-task";
        for (auto& r : test) r["tag"] = "real user-task";
        std::filesystem::path base(out_path);
        auto stem = base.parent_path() / base.stem();
        lsrp::jsonl::write_file(stem.string() + ".train.jsonl", train);
        lsrp::jsonl::write_file(stem.string() + ".test.jsonl", test);
        std::cout << "wrote " << train.size() << " train / " << test.size() << " test records ("
                  << stats.skipped << " skipped)\n";
    } else {
        lsrp::jsonl::write_file(out_path, records);
        std::cout << "wrote " << records.size() << " records (" << stats.skipped
                  << " skipped)\n";
    }
    for (const auto& line : stats.skip_log) std::cerr << "skip: " << line << '\n';
    return 0;
}

int cmd_index_build(const CommonArgs& common, const std::string& dataset_path,
                    const std::string& out_dir, std::optional<std::size_t> k_override,
                    const std::string& weights_csv) {
    auto cfg = load_config(common);
    auto backends = lsrp::make_backends(cfg);
    auto templates = lsrp::TemplatePack::load(cfg.templates_dir);
    auto records = lsrp::load_dataset(dataset_path, cfg.dataset_id);

    lsrp::IndexBuildOptions options;
    options.retrieval = cfg.retrieval;
    if (k_override) options.retrieval.k = *k_override;
    options.weights = weights_csv.empty() ? lsrp::resolve_weights(cfg)
                                          : parse_weight_triple(weights_csv);
    options.sampling = cfg.sampling;
    options.exemplars = lsrp::load_exemplars(cfg.exemplars_path);
    options.workers = cfg.workers;

    std::vector<std::pair<lsrp::UserProfile, lsrp::TaskSpec>> pairs;
    pairs.reserve(records.size());
    for (auto& r : records) pairs.emplace_back(r.profile, r.task);

    lsrp::IndexBuildStats stats;
    auto index = lsrp::build_index(pairs, backends.pipeline(), templates, options, &stats);
    index.save(out_dir);
    std::cout << "index: " << stats.built << " entries (" << stats.skipped << " skipped) -> "
              << out_dir << '\n';
    for (const auto& line : stats.skip_log) std::cerr << "skip: " << line << '\n';
    return 0;
}

int cmd_index_query(const CommonArgs& common, const std::string& index_dir,
                    const std::string& task_text, const std::string& profile_text,
                    const std::string& history_text, std::optional<std::size_t> k_override) {
    auto cfg = load_config(common);
    auto backends = lsrp::make_backends(cfg);
    auto index = lsrp::StrategyIndex::load(index_dir);

    lsrp::RetrievalConfig retrieval = cfg.retrieval;
    if (k_override) retrieval.k = *k_override;
    retrieval.include_privacy = index.include_privacy();

    lsrp::UserProfile profile{profile_text, history_text, {}};
    lsrp::TaskSpec task{task_text, cfg.dataset_id, "query"};
    auto query = lsrp::encode_pair(profile, task, retrieval, *backends.embedder);
    auto neighbors = index.top_k(query, retrieval.k);
    auto vote = lsrp::vote_strategy(neighbors);

    json tally = json::object();
    for (const auto& [s, n] : vote.tally) tally[lsrp::to_string(s)] = n;
    json neighbor_list = json::array();
    for (const auto& n : neighbors)
        neighbor_list.push_back({{"id", n.entry->id},
                                 {"distance", n.distance},
                                 {"strategy", lsrp::to_string(n.entry->best_strategy)}});
    std::cout << json{{"strategy", lsrp::to_string(vote.winner)},
                      {"tally", tally},
                      {"neighbors", neighbor_list}}
                     .dump(2)
              << '\n';
    return 0;
}

int cmd_run(const CommonArgs& common, const std::string& dataset_path,
            const std::string& index_dir, const std::string& out_path,
            const std::string& transcripts_path) {
    auto cfg = load_config(common);
    auto backends = lsrp::make_backends(cfg);
    auto templates = lsrp::TemplatePack::load(cfg.templates_dir);
    auto index = lsrp::StrategyIndex::load(index_dir);
    auto records = lsrp::load_dataset(dataset_path, cfg.dataset_id);

    auto options = lsrp::session_options(cfg, lsrp::resolve_weights(cfg),
                                         lsrp::load_exemplars(cfg.exemplars_path));
    options.retrieval.include_privacy = index.include_privacy();
    auto outcome = lsrp::run_batch(records, options, index, backends.pipeline(), templates,
                                   cfg.workers);

    json report = outcome.report.to_json();
    report["seed"] = cfg.seed;
    if (!cfg.deterministic) report["generatedAt"] = timestamp_now();
    write_json(out_path, report);

    if (!transcripts_path.empty()) {
        std::vector<json> events;
        for (std::size_t i = 0; i < records.size(); ++i) {
            for (auto& e : outcome.sessions[i].transcript.to_jsonl()) {
                e["recordId"] = records[i].task.record_id;
                events.push_back(std::move(e));
            }
        }
        lsrp::jsonl::write_file(transcripts_path, events);
    }
    std::cout << "run: " << outcome.report.successes << " ok, " << outcome.report.failures
              << " failed -> " << out_path << '\n';
    for (const auto& line : outcome.report.failure_log) std::cerr << "failure: " << line << '\n';
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& in_path, const std::string& out_path) {
    auto cfg = load_config(common);
    auto backends = lsrp::make_backends(cfg);
    auto templates = lsrp::TemplatePack::load(cfg.templates_dir);
    auto pipeline = backends.pipeline();

    auto records = lsrp::jsonl::read_file(in_path);
    std::vector<json> out(records.size());
    lsrp::parallel_for(records.size(), cfg.workers, [&](std::size_t i) {
        const auto& rec = records[i];
        lsrp::TaskSpec task{rec.value("task", std::string{}), cfg.dataset_id,
                            rec.value("id", std::to_string(i))};
        lsrp::UserProfile profile{rec.value("profile", std::string{}), {}, {}};
        const std::string response = rec.value("response", std::string{});
        if (task.task_text.empty() || response.empty())
            throw lsrp::IoError("record " + task.record_id + " needs task and response fields");
        auto m = lsrp::evaluate_response(pipeline, templates, task, profile, response,
                                         /*with_persona=*/true, /*with_fre=*/true);
        json j = rec;
        j["metrics"] = {{"qaRel", m.qa_rel},
                        {"udrr", m.udrr},
                        {"ppl", m.ppl},
                        {"persona", m.persona ? json(*m.persona) : json()},
                        {"fre", m.fre ? json(*m.fre) : json()}};
        out[i] = std::move(j);
    });
    lsrp::jsonl::write_file(out_path, out);
    std::cout << "evaluated " << out.size() << " records -> " << out_path << '\n';
    return 0;
}

int cmd_calibrate(const CommonArgs& common, const std::string& candidates_path,
                  const std::string& out_path) {
    auto cfg = load_config(common);
    std::vector<lsrp::CalibrationInstance> instances;
    for (const auto& rec : lsrp::jsonl::read_file(candidates_path)) {
        lsrp::CalibrationInstance inst;
        inst.id = rec.value("id", std::to_string(instances.size()));
        for (const auto& c : rec.at("candidates")) {
            lsrp::MetricVector m;
            m.qa_rel = c.at("qaRel").get<double>();
            m.udrr = c.at("udrr").get<double>();
            m.ppl = c.at("ppl").get<double>();
            inst.candidates.push_back(m);
        }
        instances.push_back(std::move(inst));
    }

    auto result = lsrp::calibrate_weights(instances, cfg.nsga);
    json report{{"w1", result.weights.w1},
                {"w2", result.weights.w2},
                {"w3", result.weights.w3},
                {"frontSize", result.front.points.size()},
                {"seed", result.seed}};
    write_json(out_path, report);
    std::cout << report.dump() << '\n';
    return 0;
}

int cmd_dpo_export(const CommonArgs& common, const std::string& dataset_path,
                   const std::string& out_path) {
    auto cfg = load_config(common);
    auto backends = lsrp::make_backends(cfg);
    auto templates = lsrp::TemplatePack::load(cfg.templates_dir);
    auto records = lsrp::load_dataset(dataset_path, cfg.dataset_id);

    std::vector<std::pair<lsrp::UserProfile, lsrp::TaskSpec>> pairs_in;
    pairs_in.reserve(records.size());
    for (auto& r : records) pairs_in.emplace_back(r.profile, r.task);

    auto outcomes = lsrp::generate_pairs(pairs_in, backends.pipeline(), templates,
                                         lsrp::resolve_weights(cfg), cfg.dpo, cfg.sampling,
                                         lsrp::load_exemplars(cfg.exemplars_path), cfg.workers);
    std::vector<lsrp::PreferencePair> pairs;
    std::size_t discarded = 0;
    for (auto& o : outcomes) {
        if (o.pair) {
            pairs.push_back(std::move(*o.pair));
        } else {
            ++discarded;
            std::cerr << "discard: " << o.task_ref << ": " << o.discard_reason << '\n';
        }
    }
    lsrp::export_dataset(pairs, out_path);
    std::cout << "exported " << pairs.size() << " pairs (" << discarded << " discarded) -> "
              << out_path << '\n';
    return 0;
}

int cmd_dpo_loss(const std::string& pairs_path, const std::string& logprobs_path, double lambda,
                 const std::string& out_path) {
    auto pairs = lsrp::load_pairs(pairs_path);
    std::map<std::string, lsrp::PairLogprobs> by_id;
    for (const auto& rec : lsrp::jsonl::read_file(logprobs_path)) {
        lsrp::PairLogprobs lp;
        lp.pair_id = rec.at("pairId").get<std::string>();
        lp.chosen = rec.at("chosenLogprobs").get<std::vector<double>>();
        lp.rejected = rec.at("rejectedLogprobs").get<std::vector<double>>();
        by_id[lp.pair_id] = std::move(lp);
    }
    std::vector<lsrp::PairLogprobs> joined;
    for (const auto& p : pairs) {
        auto it = by_id.find(p.pair_id);
        if (it == by_id.end())
            throw lsrp::Error("pair " + p.pair_id + " is missing logprobs");
        joined.push_back(it->second);
    }
    const double loss = lsrp::paper_loss(joined, lambda);
    json report{{"loss", loss}, {"pairs", joined.size()}, {"lambda", lambda}};
    if (!out_path.empty()) write_json(out_path, report);
    std::cout << report.dump() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"leader-subordinate cloud-device collaboration pipelines"};
    app.require_subcommand(1);

    CommonArgs common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "run configuration (TOML)")->required();
        sub->add_flag("--deterministic", common.deterministic,
                      "omit timestamps and timings from outputs");
    };

    // datagen
    std::string profiles_path, out_path;
    int repeat = 1;
    double split_ratio = 0.0;
    auto* datagen = app.add_subcommand("datagen", "synthesize user-task records from profiles");
    add_common(datagen);
    datagen->add_option("--profiles", profiles_path, "profiles JSONL")->required();
    datagen->add_option("--out", out_path, "output dataset JSONL")->required();
    datagen->add_option("--repeat", repeat, "tasks per profile")->check(CLI::PositiveNumber);
    datagen->add_option("--split-ratio", split_ratio,
                        "write train/test files at this training ratio");

    // index build / query
    auto* index = app.add_subcommand("index", "build or query the strategy index");
    index->require_subcommand(1);
    std::string dataset_path, index_dir, weights_csv;
    std::size_t k_value = 0;
    auto* build = index->add_subcommand("build", "build from a synthetic user-task dataset");
    add_common(build);
    build->add_option("--dataset", dataset_path, "dataset JSONL")->required();
    build->add_option("--out", index_dir, "output index directory")->required();
    auto* build_k = build->add_option("--k", k_value, "retrieval k recorded in config");
    build->add_option("--weights", weights_csv, "override weights as w1,w2,w3");

    std::string query_task, query_profile, query_history;
    auto* query = index->add_subcommand("query", "select a strategy for a user-task pair");
    add_common(query);
    query->add_option("--index", index_dir, "index directory")->required();
    query->add_option("--task", query_task, "task text")->required();
    query->add_option("--profile", query_profile, "profile text");
    query->add_option("--history", query_history, "history text");
    auto* query_k = query->add_option("--k", k_value, "neighbours to vote over");

    // run
    std::string report_path, transcripts_path;
    auto* run = app.add_subcommand("run", "run collaboration sessions over a dataset");
    add_common(run);
    run->add_option("--dataset", dataset_path, "dataset JSONL")->required();
    run->add_option("--index", index_dir, "strategy index directory")->required();
    run->add_option("--out", report_path, "batch report JSON")->required();
    run->add_option("--transcripts", transcripts_path, "transcript event JSONL");

    // eval
    std::string eval_in, eval_out;
    auto* eval = app.add_subcommand("eval", "compute metrics for existing responses");
    add_common(eval);
    eval->add_option("--in", eval_in, "records JSONL {id, task, profile, response}")->required();
    eval->add_option("--out", eval_out, "records with metrics")->required();

    // calibrate-weights
    std::string candidates_path, calibrate_out;
    auto* calibrate = app.add_subcommand("calibrate-weights",
                                         "search metric weights over candidate responses");
    add_common(calibrate);
    calibrate->add_option("--candidates", candidates_path, "candidates JSONL")->required();
    calibrate->add_option("--out", calibrate_out, "calibration report JSON")->required();

    // dpo export / loss
    auto* dpo = app.add_subcommand("dpo", "preference-pair dataset tools");
    dpo->require_subcommand(1);
    std::string pairs_out;
    auto* dpo_export = dpo->add_subcommand("export", "generate and export preference pairs");
    add_common(dpo_export);
    dpo_export->add_option("--dataset", dataset_path, "dataset JSONL")->required();
    dpo_export->add_option("--out", pairs_out, "pairs JSONL")->required();

    std::string pairs_path, logprobs_path, loss_out;
    double lambda = 0.1;
    auto* dpo_loss = dpo->add_subcommand("loss", "evaluate the preference loss on logprobs");
    dpo_loss->add_option("--pairs", pairs_path, "pairs JSONL")->required();
    dpo_loss->add_option("--logprobs", logprobs_path,
                         "JSONL {pairId, chosenLogprobs, rejectedLogprobs}")
        ->required();
    dpo_loss->add_option("--lambda", lambda, "rejected-side weight");
    dpo_loss->add_option("--out", loss_out, "report JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n' << app.help() << '\n';
        return 2;
    }

    try {
        if (datagen->parsed())
            return cmd_datagen(common, profiles_path, out_path, repeat, split_ratio);
        if (build->parsed())
            return cmd_index_build(common, dataset_path, index_dir,
                                   build_k->count() ? std::optional(k_value) : std::nullopt,
                                   weights_csv);
        if (query->parsed())
            return cmd_index_query(common, index_dir, query_task, query_profile, query_history,
                                   query_k->count() ? std::optional(k_value) : std::nullopt);
        if (run->parsed())
            return cmd_run(common, dataset_path, index_dir, report_path, transcripts_path);
        if (eval->parsed()) return cmd_eval(common, eval_in, eval_out);
        if (calibrate->parsed()) return cmd_calibrate(common, candidates_path, calibrate_out);
        if (dpo_export->parsed()) return cmd_dpo_export(common, dataset_path, pairs_out);
        if (dpo_loss->parsed()) return cmd_dpo_loss(pairs_path, logprobs_path, lambda, loss_out);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
