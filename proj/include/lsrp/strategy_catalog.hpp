#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsrp/errors.hpp"

namespace lsrp {

// The four path-goal leadership styles plus the general style used for
// preference-pair generation. Enum order is the fixed tie-break order.
enum class LeaderStrategy { Directive, Supportive, Participative, AchievementOriented, General };

inline constexpr std::array<LeaderStrategy, 4> kPathGoalStrategies = {
    LeaderStrategy::Directive,
    LeaderStrategy::Supportive,
    LeaderStrategy::Participative,
    LeaderStrategy::AchievementOriented,
};

inline std::string to_string(LeaderStrategy s) {
    switch (s) {
        case LeaderStrategy::Directive: return "directive";
        case LeaderStrategy::Supportive: return "supportive";
        case LeaderStrategy::Participative: return "participative";
        case LeaderStrategy::AchievementOriented: return "achievement";
        case LeaderStrategy::General: return "general";
    }
    return "general";
}

inline LeaderStrategy strategy_from_string(const std::string& s) {
    if (s == "directive") return LeaderStrategy::Directive;
    if (s == "supportive") return LeaderStrategy::Supportive;
    if (s == "participative") return LeaderStrategy::Participative;
    if (s == "achievement") return LeaderStrategy::AchievementOriented;
    if (s == "general") return LeaderStrategy::General;
    throw Error("unknown leader strategy: " + s);
}

enum class JudgeMetric { Relevance, Persona };

struct TaskSpec {
    std::string task_text;
    std::string dataset_id;
    std::string record_id;
};

struct RenderedPrompt {
    std::string text;
    std::string source_template_id;
    std::map<std::string, std::string> slot_values;
};

// A fill-in template with single-brace named placeholders, e.g. {task}.
struct PromptTemplate {
    std::string id;
    std::string body;
    std::set<std::string> required_slots;

    static PromptTemplate from_body(std::string id, std::string body) {
        PromptTemplate t;
        t.id = std::move(id);
        t.body = std::move(body);
        t.required_slots = scan_placeholders(t.body);
        return t;
    }

    static std::set<std::string> scan_placeholders(const std::string& body) {
        std::set<std::string> slots;
        for (std::size_t i = 0; i < body.size(); ++i) {
            if (body[i] != '{') continue;
            std::size_t j = i + 1;
            while (j < body.size() && (std::isalnum(static_cast<unsigned char>(body[j])) || body[j] == '_'))
                ++j;
            if (j > i + 1 && j < body.size() && body[j] == '}') {
                slots.insert(body.substr(i + 1, j - i - 1));
                i = j;
            }
        }
        return slots;
    }

    RenderedPrompt render(const std::map<std::string, std::string>& slots) const {
        for (const auto& name : required_slots) {
            if (!slots.count(name))
                throw TemplateError("template " + id + ": unresolved slot {" + name + "}");
        }
        std::string out = body;
        for (const auto& [name, value] : slots) {
            const std::string needle = "{" + name + "}";
            std::size_t pos = 0;
            while ((pos = out.find(needle, pos)) != std::string::npos) {
                out.replace(pos, needle.size(), value);
                pos += value.size();
            }
        }
        if (auto leftover = scan_placeholders(out); !leftover.empty())
            throw TemplateError("template " + id + ": unresolved slot {" + *leftover.begin() + "}");
        return {std::move(out), id, slots};
    }
};

// ---------------------------------------------------------------------------
// Template pack: a directory of UTF-8 template files plus a manifest mapping
// (dataset, role[, strategy]) to files. Judge and data-generation templates
// live under the reserved "common" dataset, which lookups fall back to.
class TemplatePack {
  public:
    static TemplatePack load(const std::filesystem::path& dir) {
        TemplatePack pack;
        pack.dir_ = dir;
        const auto manifest_path = dir / "manifest.json";
        std::ifstream in(manifest_path);
        if (!in) throw TemplateError("cannot open template manifest " + manifest_path.string());
        nlohmann::json manifest = nlohmann::json::parse(in, nullptr, false);
        if (manifest.is_discarded())
            throw TemplateError("invalid JSON in " + manifest_path.string());
        for (auto& [dataset, roles] : manifest.items()) {
            for (auto& [role, entry] : roles.items()) {
                if (entry.is_string()) {
                    pack.add(dataset, role, entry.get<std::string>());
                } else {
                    for (auto& [strategy, file] : entry.items())
                        pack.add(dataset, role + "/" + strategy, file.get<std::string>());
                }
            }
        }
        return pack;
    }

    bool has(const std::string& dataset, const std::string& key) const {
        return templates_.count(dataset + "/" + key) > 0 ||
               templates_.count("common/" + key) > 0;
    }

    const PromptTemplate& get(const std::string& dataset, const std::string& key) const {
        if (auto it = templates_.find(dataset + "/" + key); it != templates_.end())
            return it->second;
        if (auto it = templates_.find("common/" + key); it != templates_.end())
            return it->second;
        throw TemplateError("no template registered for (" + dataset + ", " + key + ")");
    }

    const PromptTemplate& leader(const std::string& dataset, LeaderStrategy s) const {
        return get(dataset, "leader/" + to_string(s));
    }

    std::vector<std::string> datasets() const {
        std::set<std::string> names;
        for (const auto& [key, _] : templates_) {
            auto slash = key.find('/');
            auto ds = key.substr(0, slash);
            if (ds != "common") names.insert(ds);
        }
        return {names.begin(), names.end()};
    }

  private:
    void add(const std::string& dataset, const std::string& key, const std::string& file) {
        const auto path = dir_ / file;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw TemplateError("cannot open template file " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        std::string body = buf.str();
        // strip one trailing newline so prompts end exactly where the file body does
        if (!body.empty() && body.back() == '\n') body.pop_back();
        templates_.emplace(dataset + "/" + key,
                           PromptTemplate::from_body(dataset + "/" + key, std::move(body)));
    }

    std::filesystem::path dir_;
    std::map<std::string, PromptTemplate> templates_;
};

// ---------------------------------------------------------------------------
// Render operations.
//
// The leader prompt is built from the task and public exemplars only; there
// is no parameter through which profile content could reach it.
inline RenderedPrompt render_leader_prompt(const TemplatePack& pack, LeaderStrategy strategy,
                                           const TaskSpec& task,
                                           const std::vector<std::string>& exemplars,
                                           const std::string& dataset) {
    if (task.task_text.empty()) throw TemplateError("leader prompt requires a non-empty task");
    const auto& tmpl = pack.leader(dataset, strategy);
    std::map<std::string, std::string> slots;
    slots["task"] = task.task_text;
    slots["exam1"] = exemplars.size() > 0 ? exemplars[0] : "";
    slots["exam2"] = exemplars.size() > 1 ? exemplars[1] : "";
    return tmpl.render(slots);
}

// Profile fields are supplied as already-flattened text so this header stays
// independent of the protocol types; collab_protocol wraps it.
inline RenderedPrompt render_subordinate_prompt(const TemplatePack& pack,
                                                const std::string& guideline_text,
                                                const std::string& profile_text,
                                                const std::string& history_text,
                                                const TaskSpec& task) {
    if (guideline_text.empty())
        throw TemplateError("subordinate prompt requires a non-empty guideline");
    const auto& tmpl = pack.get(task.dataset_id, "subordinate");
    std::map<std::string, std::string> slots;
    slots["leader_output"] = guideline_text;
    slots["profile"] = profile_text;
    if (tmpl.required_slots.count("history")) slots["history"] = history_text;
    slots["task"] = task.task_text;
    return tmpl.render(slots);
}

inline RenderedPrompt render_judge_prompt(const TemplatePack& pack, JudgeMetric metric,
                                          const std::string& question,
                                          const std::string& profile,
                                          const std::string& response) {
    if (question.empty() || profile.empty() || response.empty())
        throw TemplateError("judge prompt requires non-empty question, profile and response");
    const auto& tmpl =
        pack.get("common", metric == JudgeMetric::Relevance ? "judge/relevance" : "judge/persona");
    return tmpl.render({{"question", question}, {"profile", profile}, {"response", response}});
}

inline RenderedPrompt render_task_generation_prompt(const TemplatePack& pack,
                                                    const std::string& profile) {
    if (profile.empty()) throw TemplateError("task generation requires a non-empty profile");
    const auto& tmpl = pack.get("common", "datagen");
    return tmpl.render({{"profile", profile}});
}

} // namespace lsrp
