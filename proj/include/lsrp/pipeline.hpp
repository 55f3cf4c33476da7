#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lsrp/errors.hpp"
#include "lsrp/metrics.hpp"
#include "lsrp/model_gateway.hpp"
#include "lsrp/profile.hpp"
#include "lsrp/strategy_catalog.hpp"

namespace lsrp {

// Cloud output produced under a leader strategy; the device consumes it.
struct Guideline {
    std::string text;
    LeaderStrategy strategy = LeaderStrategy::General;
    SamplingConfig sampling_used;
};

struct DeviceResponse {
    std::string text;
    std::optional<MetricVector> metrics;
};

// Backend handles for one run. All are borrowed, immutable-after-construction
// and shareable across concurrent sessions.
struct PipelineBackends {
    ChatBackend* cloud = nullptr;
    ChatBackend* device = nullptr;
    ChatBackend* judge = nullptr;
    LogprobSource* logprobs = nullptr;
    Embedder* embedder = nullptr;
    std::string cloud_model;
    std::string device_model;
    std::string judge_model;

    void require(bool need_embedder = false) const {
        if (!cloud || !device || !judge || !logprobs)
            throw ConfigError("pipeline requires cloud, device, judge and logprob backends");
        if (need_embedder && !embedder) throw ConfigError("pipeline requires an embedder");
    }
};

// Cloud side: render the leader prompt for a strategy and produce a guideline.
// Only the task and public exemplars reach this call.
inline Guideline generate_guideline(const PipelineBackends& backends, const TemplatePack& templates,
                                    LeaderStrategy strategy, const TaskSpec& task,
                                    const std::vector<std::string>& exemplars,
                                    SamplingConfig sampling) {
    auto prompt = render_leader_prompt(templates, strategy, task, exemplars, task.dataset_id);
    auto text = backends.cloud->chat(
        ChatRequest::single_user(prompt.text, sampling, backends.cloud_model));
    return {std::move(text), strategy, sampling};
}

// Device side: combine guideline, private profile and task into the response.
inline DeviceResponse generate_device_response(const PipelineBackends& backends,
                                               const TemplatePack& templates,
                                               const Guideline& guideline,
                                               const UserProfile& profile, const TaskSpec& task,
                                               SamplingConfig sampling) {
    auto prompt = render_subordinate_prompt(templates, guideline.text, profile.profile_text,
                                            profile.history_text, task);
    auto text = backends.device->chat(
        ChatRequest::single_user(prompt.text, sampling, backends.device_model));
    return {std::move(text), std::nullopt};
}

// Device-side evaluation of a response: judge relevance, user-data reference
// rate against the full private text, and perplexity from the configured
// logprob source. Persona and readability are optional extras.
inline MetricVector evaluate_response(const PipelineBackends& backends,
                                      const TemplatePack& templates, const TaskSpec& task,
                                      const UserProfile& profile, const std::string& response,
                                      bool with_persona = false, bool with_fre = false) {
    MetricVector m;
    JudgeClient judge(*backends.judge, templates, backends.judge_model);
    const std::string user_data = profile.private_text();
    m.qa_rel = judge.score(JudgeMetric::Relevance, task.task_text, user_data, response);
    m.udrr = udrr(user_data, response);
    m.ppl = perplexity(backends.logprobs->response_logprobs(response));
    if (with_persona)
        m.persona = judge.score(JudgeMetric::Persona, task.task_text, user_data, response);
    if (with_fre) m.fre = flesch_reading_ease(response);
    m.validate();
    return m;
}

} // namespace lsrp
