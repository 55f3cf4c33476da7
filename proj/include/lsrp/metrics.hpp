#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "lsrp/errors.hpp"
#include "lsrp/model_gateway.hpp"
#include "lsrp/strategy_catalog.hpp"
#include "lsrp/text.hpp"

namespace lsrp {

struct MetricVector {
    double qa_rel = 0.0;          // judge score in [0,10]
    double udrr = 0.0;            // in [0,1]
    double ppl = 1.0;             // >= 1
    std::optional<double> persona; // judge score in [0,10]
    std::optional<double> fre;     // unclamped readability score

    void validate() const {
        if (qa_rel < 0.0 || qa_rel > 10.0) throw Error("qaRel out of [0,10]");
        if (udrr < 0.0 || udrr > 1.0) throw Error("udrr out of [0,1]");
        if (!(ppl >= 1.0) || !std::isfinite(ppl)) throw Error("ppl must be finite and >= 1");
        if (persona && (*persona < 0.0 || *persona > 10.0)) throw Error("persona out of [0,10]");
    }
};

struct WeightVector {
    double w1 = 1.0;
    double w2 = 1.0;
    double w3 = 1.0;

    void validate() const {
        if (w1 < 0.0 || w2 < 0.0 || w3 < 0.0) throw Error("weights must be >= 0");
        if (w1 == 0.0 && w2 == 0.0 && w3 == 0.0) throw Error("weights must not all be zero");
    }
};

// Fraction of the user data's unique words that appear in the output.
// Tokenization: lowercase, split on non-alphanumeric runs, deduplicate.
// An empty user word set scores 0 rather than failing the batch.
inline double udrr(const std::string& user_data, const std::string& output) {
    const auto user_words = text::word_set(user_data);
    if (user_words.empty()) return 0.0;
    const auto output_words = text::word_set(output);
    std::size_t shared = 0;
    for (const auto& w : user_words) shared += output_words.count(w);
    return static_cast<double>(shared) / static_cast<double>(user_words.size());
}

// exp of the mean negative token log-likelihood.
inline double perplexity(const TokenLogprobs& lp) {
    lp.validate();
    if (lp.logprobs.empty()) throw Error("perplexity requires at least one token");
    double sum = 0.0;
    for (double x : lp.logprobs) sum += x;
    return std::exp(-sum / static_cast<double>(lp.logprobs.size()));
}

// ---------------------------------------------------------------------------
// Word-level bigram model with add-one smoothing: a deterministic offline
// source of the logprobs that feed perplexity. Vocabulary is the corpus
// words plus an unknown marker; each corpus line starts a fresh sequence.
class BigramModel {
  public:
    explicit BigramModel(const std::vector<std::string>& corpus) {
        if (corpus.empty()) throw Error("bigram corpus must be non-empty");
        for (const auto& line : corpus) {
            std::string prev = kStart;
            for (const auto& tok : text::whitespace_tokens(line)) {
                vocab_.insert(tok);
                ++bigram_counts_[prev][tok];
                ++context_totals_[prev];
                prev = tok;
            }
        }
        vocab_.insert(kUnk);
    }

    std::size_t vocab_size() const { return vocab_.size(); }

    // P(token | context) with add-one smoothing; unseen contexts are uniform.
    double prob(const std::string& context, const std::string& token) const {
        const std::string c = canon(context);
        const std::string t = canon(token);
        double num = 1.0, den = static_cast<double>(vocab_.size());
        if (auto it = context_totals_.find(c); it != context_totals_.end())
            den += static_cast<double>(it->second);
        if (auto it = bigram_counts_.find(c); it != bigram_counts_.end()) {
            if (auto jt = it->second.find(t); jt != it->second.end())
                num += static_cast<double>(jt->second);
        }
        return num / den;
    }

    TokenLogprobs score(const std::string& continuation) const {
        auto tokens = text::whitespace_tokens(continuation);
        if (tokens.empty()) throw Error("bigram scoring requires a non-empty continuation");
        TokenLogprobs out;
        std::string prev = kStart;
        for (const auto& tok : tokens) {
            out.tokens.push_back(tok);
            out.logprobs.push_back(std::min(0.0, std::log(prob(prev, tok))));
            prev = tok;
        }
        out.validate();
        return out;
    }

    static constexpr const char* kStart = "<s>";
    static constexpr const char* kUnk = "<unk>";

  private:
    std::string canon(const std::string& tok) const {
        if (tok == kStart) return tok;
        return vocab_.count(tok) ? tok : std::string(kUnk);
    }

    std::set<std::string> vocab_;
    std::map<std::string, std::map<std::string, std::size_t>> bigram_counts_;
    std::map<std::string, std::size_t> context_totals_;
};

inline TokenLogprobs bigram_logprobs(const std::vector<std::string>& corpus,
                                     const std::string& continuation) {
    return BigramModel(corpus).score(continuation);
}

class BigramLogprobSource : public LogprobSource {
  public:
    explicit BigramLogprobSource(const std::vector<std::string>& corpus) : model_(corpus) {}

    TokenLogprobs response_logprobs(const std::string& response) override {
        return model_.score(response);
    }

  private:
    BigramModel model_;
};

// ---------------------------------------------------------------------------
// LLM-as-judge scoring.

// Parses the integer after the judge's output-format label; nullopt when the
// label is missing or not followed by an integer.
inline std::optional<int> parse_judge_score(JudgeMetric metric, const std::string& reply) {
    const std::string label =
        metric == JudgeMetric::Relevance ? "Relevance Score:" : "Personalization Score:";
    auto pos = reply.find(label);
    if (pos == std::string::npos) return std::nullopt;
    std::size_t i = pos + label.size();
    while (i < reply.size() && (reply[i] == ' ' || reply[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
    if (j == i) return std::nullopt;
    return std::stoi(reply.substr(i, j - i));
}

class JudgeClient {
  public:
    JudgeClient(ChatBackend& backend, const TemplatePack& templates, std::string model_id = {},
                SamplingConfig sampling = {})
        : backend_(&backend), templates_(&templates), model_id_(std::move(model_id)),
          sampling_(sampling) {}

    // Asks once, re-asks once on an unparseable reply, then fails.
    // A parseable score outside [0,10] is rejected immediately.
    double score(JudgeMetric metric, const std::string& task, const std::string& profile,
                 const std::string& response) const {
        auto prompt = render_judge_prompt(*templates_, metric, task, profile, response);
        auto request = ChatRequest::single_user(prompt.text, sampling_, model_id_);
        for (int attempt = 0; attempt < 2; ++attempt) {
            const std::string reply = backend_->chat(request);
            auto parsed = parse_judge_score(metric, reply);
            if (!parsed) continue;
            if (*parsed < 0 || *parsed > 10)
                throw Error("judge returned out-of-range score " + std::to_string(*parsed));
            return static_cast<double>(*parsed);
        }
        throw Error("judge reply was unparseable after one re-ask");
    }

  private:
    ChatBackend* backend_;
    const TemplatePack* templates_;
    std::string model_id_;
    SamplingConfig sampling_;
};

inline double judge_score(JudgeMetric metric, const std::string& task, const std::string& profile,
                          const std::string& response, ChatBackend& backend,
                          const TemplatePack& templates, const std::string& model_id = {},
                          SamplingConfig sampling = {}) {
    return JudgeClient(backend, templates, model_id, sampling).score(metric, task, profile, response);
}

// ---------------------------------------------------------------------------

// Q = w1*qaRel + w2*udrr - w3*ppl, on raw metric scales.
inline double composite_q(const MetricVector& m, const WeightVector& w) {
    m.validate();
    w.validate();
    return w.w1 * m.qa_rel + w.w2 * m.udrr - w.w3 * m.ppl;
}

// ---------------------------------------------------------------------------
// Flesch Reading Ease.

namespace detail {

// Vowel-group count with a silent trailing 'e' adjustment, minimum 1.
inline std::size_t syllables_in_word(const std::string& word) {
    std::string w;
    for (unsigned char c : word)
        if (std::isalpha(c)) w.push_back(static_cast<char>(std::tolower(c)));
    if (w.empty()) return 1;
    auto is_vowel = [](char c) {
        return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
    };
    std::size_t groups = 0;
    bool in_group = false;
    for (char c : w) {
        if (is_vowel(c)) {
            if (!in_group) ++groups;
            in_group = true;
        } else {
            in_group = false;
        }
    }
    if (groups > 1 && w.size() >= 2 && w.back() == 'e' && !is_vowel(w[w.size() - 2]) &&
        w.substr(w.size() - 2) != "le")
        --groups;
    return std::max<std::size_t>(groups, 1);
}

inline std::size_t sentence_count(const std::string& s) {
    std::size_t runs = 0;
    bool in_run = false;
    for (char c : s) {
        if (c == '.' || c == '!' || c == '?') {
            if (!in_run) ++runs;
            in_run = true;
        } else {
            in_run = false;
        }
    }
    return std::max<std::size_t>(runs, 1);
}

} // namespace detail

// 206.835 - 1.015*(words/sentences) - 84.6*(syllables/words). Text without a
// sentence terminator counts as a single sentence.
inline double flesch_reading_ease(const std::string& input) {
    std::vector<std::string> words;
    for (const auto& tok : text::whitespace_tokens(input)) {
        for (unsigned char c : tok) {
            if (std::isalnum(c)) {
                words.push_back(tok);
                break;
            }
        }
    }
    if (words.empty()) throw Error("readability requires at least one word");
    std::size_t syllables = 0;
    for (const auto& w : words) syllables += detail::syllables_in_word(w);
    const double n_words = static_cast<double>(words.size());
    const double n_sentences = static_cast<double>(detail::sentence_count(input));
    return 206.835 - 1.015 * (n_words / n_sentences) -
           84.6 * (static_cast<double>(syllables) / n_words);
}

} // namespace lsrp
