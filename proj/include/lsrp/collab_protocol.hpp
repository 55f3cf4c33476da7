#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsrp/errors.hpp"
#include "lsrp/pipeline.hpp"
#include "lsrp/uurag_index.hpp"

namespace lsrp {

// ---------------------------------------------------------------------------
// Wire messages. Cloud-bound payloads are scalars, labels and the shareable
// task text; none of these fields can hold a UserProfile (there is no
// serializer from that type), and every send is audited besides.

struct FeedbackSummary {
    double q_value = 0.0;
    std::optional<std::string> prefer_label; // "prefer" | "reject"
    std::optional<std::string> pair_id;
};

enum class CloudMessageKind { StrategyNotice, TaskRequest, Feedback };

inline std::string to_string(CloudMessageKind k) {
    switch (k) {
        case CloudMessageKind::StrategyNotice: return "strategyNotice";
        case CloudMessageKind::TaskRequest: return "taskRequest";
        case CloudMessageKind::Feedback: return "feedback";
    }
    return "feedback";
}

struct CloudBoundMessage {
    CloudMessageKind kind = CloudMessageKind::StrategyNotice;
    std::optional<LeaderStrategy> strategy;
    std::optional<std::string> task_text;
    std::optional<FeedbackSummary> feedback;

    static CloudBoundMessage strategy_notice(LeaderStrategy s) {
        CloudBoundMessage m;
        m.kind = CloudMessageKind::StrategyNotice;
        m.strategy = s;
        return m;
    }
    static CloudBoundMessage task_request(std::string task) {
        CloudBoundMessage m;
        m.kind = CloudMessageKind::TaskRequest;
        m.task_text = std::move(task);
        return m;
    }
    static CloudBoundMessage feedback_message(FeedbackSummary f) {
        CloudBoundMessage m;
        m.kind = CloudMessageKind::Feedback;
        m.feedback = std::move(f);
        return m;
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"kind", to_string(kind)}};
        if (strategy) j["strategy"] = to_string(*strategy);
        if (task_text) j["taskText"] = *task_text;
        if (feedback) {
            nlohmann::json f{{"qValue", feedback->q_value}};
            if (feedback->prefer_label) f["preferLabel"] = *feedback->prefer_label;
            if (feedback->pair_id) f["pairId"] = *feedback->pair_id;
            j["feedback"] = f;
        }
        return j;
    }
};

// ---------------------------------------------------------------------------
// Boundary audit: case-insensitive substring scan against the profile's
// sentinel tokens. A violation is a value, not an exception.

struct AuditResult {
    bool passed = true;
    std::string sentinel; // first match when failed
};

inline AuditResult audit_text(const std::string& payload, const UserProfile& profile) {
    const std::string haystack = text::to_lower(payload);
    for (const auto& sentinel : profile.sentinel_tokens()) {
        if (haystack.find(text::to_lower(sentinel)) != std::string::npos)
            return {false, sentinel};
    }
    return {true, {}};
}

inline AuditResult audit_cloud_bound(const CloudBoundMessage& message,
                                     const UserProfile& profile) {
    return audit_text(message.to_json().dump(), profile);
}

// ---------------------------------------------------------------------------
// Session transcript.

enum class SessionState {
    Init,
    StrategySelected,
    TaskSent,
    GuidelineReceived,
    ResponseGenerated,
    FeedbackSent,
    Done,
    Failed
};

inline std::string to_string(SessionState s) {
    switch (s) {
        case SessionState::Init: return "Init";
        case SessionState::StrategySelected: return "StrategySelected";
        case SessionState::TaskSent: return "TaskSent";
        case SessionState::GuidelineReceived: return "GuidelineReceived";
        case SessionState::ResponseGenerated: return "ResponseGenerated";
        case SessionState::FeedbackSent: return "FeedbackSent";
        case SessionState::Done: return "Done";
        case SessionState::Failed: return "Failed";
    }
    return "Failed";
}

struct TranscriptEvent {
    enum class Kind { State, CloudBound, DeviceBound, Violation, Error };
    std::size_t seq = 0;
    Kind kind = Kind::State;
    std::string label;
    std::string detail;
    std::optional<double> elapsed_ms; // absent in deterministic runs

    nlohmann::json to_json() const {
        nlohmann::json j{{"seq", seq}, {"kind", kind_name()}, {"label", label}};
        if (!detail.empty()) j["detail"] = detail;
        if (elapsed_ms) j["elapsedMs"] = *elapsed_ms;
        return j;
    }

    std::string kind_name() const {
        switch (kind) {
            case Kind::State: return "state";
            case Kind::CloudBound: return "cloudBound";
            case Kind::DeviceBound: return "deviceBound";
            case Kind::Violation: return "violation";
            case Kind::Error: return "error";
        }
        return "state";
    }
};

struct SessionTranscript {
    std::vector<TranscriptEvent> events;
    SessionState terminal = SessionState::Failed;

    std::size_t cloud_bound_count() const { return count(TranscriptEvent::Kind::CloudBound); }
    std::size_t device_bound_count() const { return count(TranscriptEvent::Kind::DeviceBound); }

    std::vector<nlohmann::json> to_jsonl() const {
        std::vector<nlohmann::json> out;
        out.reserve(events.size());
        for (const auto& e : events) out.push_back(e.to_json());
        return out;
    }

  private:
    std::size_t count(TranscriptEvent::Kind k) const {
        std::size_t n = 0;
        for (const auto& e : events)
            if (e.kind == k) ++n;
        return n;
    }
};

// The happy-path event grammar, in order.
inline bool transcript_is_valid(const SessionTranscript& t) {
    static const std::vector<std::pair<TranscriptEvent::Kind, std::string>> expected = {
        {TranscriptEvent::Kind::State, "Init"},
        {TranscriptEvent::Kind::State, "StrategySelected"},
        {TranscriptEvent::Kind::CloudBound, "strategyNotice"},
        {TranscriptEvent::Kind::CloudBound, "taskRequest"},
        {TranscriptEvent::Kind::State, "TaskSent"},
        {TranscriptEvent::Kind::DeviceBound, "guideline"},
        {TranscriptEvent::Kind::State, "GuidelineReceived"},
        {TranscriptEvent::Kind::State, "ResponseGenerated"},
        {TranscriptEvent::Kind::CloudBound, "feedback"},
        {TranscriptEvent::Kind::State, "FeedbackSent"},
        {TranscriptEvent::Kind::State, "Done"},
    };
    if (t.terminal != SessionState::Done) return false;
    if (t.events.size() != expected.size()) return false;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (t.events[i].seq != i) return false;
        if (t.events[i].kind != expected[i].first) return false;
        if (t.events[i].label != expected[i].second) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Audited transport. The only way a message reaches the cloud log is through
// send_cloud_bound, which audits first; a violation throws and delivers
// nothing. An injectable fault hook models transport failures.

class AuditedTransport {
  public:
    using FaultHook = std::function<void(const CloudBoundMessage&)>;

    explicit AuditedTransport(const UserProfile& profile) : profile_(&profile) {}

    void set_fault_hook(FaultHook hook) { fault_hook_ = std::move(hook); }

    const CloudBoundMessage& send_cloud_bound(CloudBoundMessage message) {
        auto audit = audit_cloud_bound(message, *profile_);
        if (!audit.passed) throw BoundaryViolation(audit.sentinel, to_string(message.kind));
        if (fault_hook_) fault_hook_(message);
        cloud_log_.push_back(std::move(message));
        return cloud_log_.back();
    }

    const Guideline& deliver_device_bound(Guideline guideline) {
        device_log_.push_back(std::move(guideline));
        return device_log_.back();
    }

    const std::vector<CloudBoundMessage>& cloud_log() const { return cloud_log_; }
    const std::vector<Guideline>& device_log() const { return device_log_; }

  private:
    const UserProfile* profile_;
    FaultHook fault_hook_;
    std::vector<CloudBoundMessage> cloud_log_;
    std::vector<Guideline> device_log_;
};

// ---------------------------------------------------------------------------
// Cloud node: sees only what the transport delivered. It reconstructs the
// task from wire fields; the dataset id is deployment configuration.

struct CloudNode {
    const PipelineBackends* backends = nullptr;
    const TemplatePack* templates = nullptr;
    std::string dataset_id;
    std::vector<std::string> exemplars;
    SamplingConfig sampling; // guideline generation runs at temperature 0

    Guideline make_guideline(LeaderStrategy strategy, const std::string& task_text) const {
        TaskSpec wire_task{task_text, dataset_id, {}};
        return generate_guideline(*backends, *templates, strategy, wire_task, exemplars, sampling);
    }
};

// ---------------------------------------------------------------------------
// Session driver.

struct SessionOptions {
    RetrievalConfig retrieval;
    WeightVector weights;
    SamplingConfig sampling;
    std::vector<std::string> exemplars;
    std::string dataset_id = "cogen";
    bool with_persona = true;
    bool with_fre = true;
    bool record_timings = false; // off for byte-identical transcripts
    AuditedTransport::FaultHook fault_hook;
};

struct SessionResult {
    SessionState status = SessionState::Failed;
    DeviceResponse response;
    std::optional<double> q_value;
    SessionTranscript transcript;
    std::string error; // violation or backend failure description
};

inline SessionResult run_session(const UserProfile& profile, const TaskSpec& task,
                                 const SessionOptions& options, const StrategyIndex& index,
                                 const PipelineBackends& backends, const TemplatePack& templates) {
    backends.require(/*need_embedder=*/true);
    if (task.task_text.empty()) throw Error("task text must be non-empty");

    SessionResult result;
    AuditedTransport transport(profile);
    if (options.fault_hook) transport.set_fault_hook(options.fault_hook);
    CloudNode cloud{&backends, &templates,
                    task.dataset_id.empty() ? options.dataset_id : task.dataset_id,
                    options.exemplars, options.sampling};

    const auto start = std::chrono::steady_clock::now();
    auto log = [&](TranscriptEvent::Kind kind, std::string label, std::string detail = {}) {
        TranscriptEvent e;
        e.seq = result.transcript.events.size();
        e.kind = kind;
        e.label = std::move(label);
        e.detail = std::move(detail);
        if (options.record_timings) {
            e.elapsed_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - start)
                               .count();
        }
        result.transcript.events.push_back(std::move(e));
    };
    auto enter = [&](SessionState s) { log(TranscriptEvent::Kind::State, to_string(s)); };

    try {
        enter(SessionState::Init);

        // Step 1: device-side strategy selection.
        const LeaderStrategy strategy =
            select_strategy(profile, task, options.retrieval, index, *backends.embedder);
        enter(SessionState::StrategySelected);
        const auto& notice =
            transport.send_cloud_bound(CloudBoundMessage::strategy_notice(strategy));
        log(TranscriptEvent::Kind::CloudBound, to_string(notice.kind), notice.to_json().dump());

        // Step 2: the shareable task crosses the boundary.
        const auto& request =
            transport.send_cloud_bound(CloudBoundMessage::task_request(task.task_text));
        log(TranscriptEvent::Kind::CloudBound, to_string(request.kind), request.to_json().dump());
        enter(SessionState::TaskSent);

        // Step 3: cloud generates the guideline from wire data only.
        const auto& guideline = transport.deliver_device_bound(
            cloud.make_guideline(*notice.strategy, *request.task_text));
        log(TranscriptEvent::Kind::DeviceBound, "guideline",
            nlohmann::json{{"strategy", to_string(guideline.strategy)},
                           {"text", guideline.text}}
                .dump());
        enter(SessionState::GuidelineReceived);

        // Step 4: device response from guideline + private data.
        result.response =
            generate_device_response(backends, templates, guideline, profile, task,
                                     options.sampling);
        enter(SessionState::ResponseGenerated);

        // Step 5: scalar evaluation crosses back.
        auto metrics = evaluate_response(backends, templates, task, profile, result.response.text,
                                         options.with_persona, options.with_fre);
        const double q = composite_q(metrics, options.weights);
        result.response.metrics = metrics;
        result.q_value = q;
        const auto& fb =
            transport.send_cloud_bound(CloudBoundMessage::feedback_message({q, {}, {}}));
        log(TranscriptEvent::Kind::CloudBound, to_string(fb.kind), fb.to_json().dump());
        enter(SessionState::FeedbackSent);

        enter(SessionState::Done);
        result.status = SessionState::Done;
        result.transcript.terminal = SessionState::Done;
    } catch (const BoundaryViolation& v) {
        result.error = v.what();
        log(TranscriptEvent::Kind::Violation, "boundaryViolation",
            nlohmann::json{{"sentinel", v.sentinel()}, {"messageKind", v.message_kind()}}.dump());
        enter(SessionState::Failed);
        result.status = SessionState::Failed;
        result.transcript.terminal = SessionState::Failed;
    } catch (const std::exception& e) {
        result.error = e.what();
        log(TranscriptEvent::Kind::Error, "sessionError", e.what());
        enter(SessionState::Failed);
        result.status = SessionState::Failed;
        result.transcript.terminal = SessionState::Failed;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Batch runner.

struct DatasetRecord {
    UserProfile profile;
    TaskSpec task;
};

inline std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path,
                                               const std::string& default_dataset_id) {
    std::vector<DatasetRecord> out;
    for (const auto& rec : jsonl::read_file(path)) {
        DatasetRecord r;
        r.task.record_id = rec.value("recordId", std::string{});
        r.task.task_text = rec.value("taskText", std::string{});
        r.task.dataset_id = rec.value("datasetId", default_dataset_id);
        r.profile.profile_text = rec.value("profileText", std::string{});
        r.profile.history_text = rec.value("historyText", std::string{});
        r.profile.device_log_text = rec.value("deviceLogText", std::string{});
        if (r.task.task_text.empty())
            throw IoError(path.string() + ": record " + r.task.record_id + " has no taskText");
        out.push_back(std::move(r));
    }
    return out;
}

struct MetricStats {
    std::size_t n = 0;
    double mean = 0.0;
    double stddev = 0.0; // population
};

inline MetricStats summarize(const std::vector<double>& values) {
    MetricStats s;
    s.n = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

struct BatchReport {
    std::size_t records = 0;
    std::size_t successes = 0;
    std::size_t failures = 0;
    std::map<std::string, MetricStats> metrics; // qaRel, persona, udrr, ppl, fre
    std::vector<std::string> failure_log;

    nlohmann::json to_json() const {
        nlohmann::json m = nlohmann::json::object();
        for (const auto& [name, s] : metrics)
            m[name] = {{"mean", s.mean}, {"std", s.stddev}, {"n", s.n}};
        return nlohmann::json{{"records", records},
                              {"successes", successes},
                              {"failures", failures},
                              {"metrics", m}};
    }
};

struct BatchOutcome {
    BatchReport report;
    std::vector<SessionResult> sessions; // aligned with the input records
};

inline BatchOutcome run_batch(const std::vector<DatasetRecord>& records,
                              const SessionOptions& options, const StrategyIndex& index,
                              const PipelineBackends& backends, const TemplatePack& templates,
                              std::size_t workers = 1) {
    BatchOutcome out;
    out.sessions.resize(records.size());
    parallel_for(records.size(), workers, [&](std::size_t i) {
        out.sessions[i] =
            run_session(records[i].profile, records[i].task, options, index, backends, templates);
    });

    std::map<std::string, std::vector<double>> columns;
    out.report.records = records.size();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& s = out.sessions[i];
        if (s.status != SessionState::Done || !s.response.metrics) {
            ++out.report.failures;
            out.report.failure_log.push_back(records[i].task.record_id + ": " + s.error);
            continue;
        }
        ++out.report.successes;
        const auto& m = *s.response.metrics;
        columns["qaRel"].push_back(m.qa_rel);
        columns["udrr"].push_back(m.udrr);
        columns["ppl"].push_back(m.ppl);
        if (m.persona) columns["persona"].push_back(*m.persona);
        if (m.fre) columns["fre"].push_back(*m.fre);
    }
    for (const auto& [name, values] : columns) out.report.metrics[name] = summarize(values);
    return out;
}

} // namespace lsrp
