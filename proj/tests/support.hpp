#pragma once

// Shared fixtures for the test suites.

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lsrp/model_gateway.hpp"
#include "lsrp/pipeline.hpp"
#include "lsrp/strategy_catalog.hpp"

namespace testsupport {

inline std::filesystem::path source_dir() { return LSRP_SOURCE_DIR; }
inline std::filesystem::path templates_dir() { return source_dir() / "templates"; }
inline std::filesystem::path data_dir() { return source_dir() / "data" / "samples"; }
inline std::string cli_path() { return LSRP_CLI_PATH; }

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               ("lsrp-test-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(dir);
    return dir;
}

// Replies a fixed sequence, one element per call, then repeats the last.
// The production mock is a pure function of the request; retry paths need a
// backend whose replies vary across calls.
class SequenceChatBackend : public lsrp::ChatBackend {
  public:
    explicit SequenceChatBackend(std::vector<std::string> replies)
        : replies_(std::move(replies)) {}

    std::string chat(const lsrp::ChatRequest& request) override {
        request.validate();
        const std::size_t i = std::min(next_.fetch_add(1), replies_.size() - 1);
        return replies_[i];
    }

  private:
    std::vector<std::string> replies_;
    std::atomic<std::size_t> next_{0};
};

class FailingChatBackend : public lsrp::ChatBackend {
  public:
    std::string chat(const lsrp::ChatRequest&) override {
        throw lsrp::BackendError("scripted outage");
    }
};

// A fully mocked backend stack: scripted judge, uniform logprobs, hashing
// embedder. Cloud/device mocks synthesize deterministic replies unless a
// test scripts them.
struct MockWorld {
    lsrp::MockChatBackend cloud{11};
    lsrp::MockChatBackend device{22};
    lsrp::MockChatBackend judge{33};
    lsrp::MockLogprobBackend logprob_backend{64};
    lsrp::BackendLogprobSource logprob_source{logprob_backend, "device-model"};
    lsrp::HashingEmbedder embedder{32, 7};
    lsrp::TemplatePack templates = lsrp::TemplatePack::load(templates_dir());

    MockWorld() {
        judge.script("Relevance Score", "Relevance Score: 7");
        judge.script("Personalization Score", "Personalization Score: 6");
    }

    lsrp::PipelineBackends backends() {
        lsrp::PipelineBackends b;
        b.cloud = &cloud;
        b.device = &device;
        b.judge = &judge;
        b.logprobs = &logprob_source;
        b.embedder = &embedder;
        b.cloud_model = "cloud-model";
        b.device_model = "device-model";
        b.judge_model = "judge-model";
        return b;
    }
};

} // namespace testsupport
