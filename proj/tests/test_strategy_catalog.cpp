#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "lsrp/profile.hpp"
#include "lsrp/strategy_catalog.hpp"
#include "support.hpp"

using namespace lsrp;
using testsupport::templates_dir;

namespace {

TaskSpec cogen_task(std::string text = "write a post about volunteering") {
    return {std::move(text), "cogen", "rec-1"};
}

} // namespace

TEST_CASE("template pack loads both datasets") {
    auto pack = TemplatePack::load(templates_dir());
    for (const auto& dataset : {"cogen", "movie"}) {
        for (auto s : kPathGoalStrategies) REQUIRE_NOTHROW(pack.leader(dataset, s));
        REQUIRE_NOTHROW(pack.leader(dataset, LeaderStrategy::General));
        REQUIRE_NOTHROW(pack.get(dataset, "subordinate"));
    }
    REQUIRE_NOTHROW(pack.get("common", "judge/relevance"));
    REQUIRE_NOTHROW(pack.get("common", "judge/persona"));
    REQUIRE_NOTHROW(pack.get("common", "datagen"));
}

TEST_CASE("leader prompt embeds task and exemplars with no leftover slots") {
    auto pack = TemplatePack::load(templates_dir());
    auto rendered = render_leader_prompt(pack, LeaderStrategy::Directive, cogen_task(),
                                         {"first exemplar", "second exemplar"}, "cogen");
    REQUIRE(rendered.text.find("write a post about volunteering") != std::string::npos);
    REQUIRE(rendered.text.find("first exemplar") != std::string::npos);
    REQUIRE(rendered.text.find("second exemplar") != std::string::npos);
    REQUIRE(rendered.text.find('{') == std::string::npos);
}

TEST_CASE("general leader prompt uses the general body") {
    auto pack = TemplatePack::load(templates_dir());
    auto rendered =
        render_leader_prompt(pack, LeaderStrategy::General, cogen_task("task t"), {}, "cogen");
    REQUIRE(rendered.text.rfind("You are a highly knowledgeable manager", 0) == 0);
    REQUIRE(rendered.text.find("task t") != std::string::npos);
    REQUIRE(rendered.text.find("smart device usage patterns") != std::string::npos);
}

TEST_CASE("empty task is rejected") {
    auto pack = TemplatePack::load(templates_dir());
    REQUIRE_THROWS_AS(
        render_leader_prompt(pack, LeaderStrategy::Directive, cogen_task(""), {}, "cogen"),
        TemplateError);
}

TEST_CASE("missing template is reported") {
    auto pack = TemplatePack::load(templates_dir());
    REQUIRE_THROWS_AS(
        render_leader_prompt(pack, LeaderStrategy::Directive, cogen_task(), {}, "nope"),
        TemplateError);
}

TEST_CASE("subordinate prompt carries guideline, profile, history and task") {
    auto pack = TemplatePack::load(templates_dir());
    auto rendered = render_subordinate_prompt(pack, "G-plan", "profile text here",
                                              "history text here", cogen_task());
    REQUIRE(rendered.text.find("Manager’s Plan") != std::string::npos);
    REQUIRE(rendered.text.find("G-plan") != std::string::npos);
    REQUIRE(rendered.text.find("profile text here") != std::string::npos);
    REQUIRE(rendered.text.find("history text here") != std::string::npos);
    REQUIRE(rendered.text.find("write a post about volunteering") != std::string::npos);
    REQUIRE(rendered.text.find("User Writing History") != std::string::npos);
}

TEST_CASE("movie subordinate layout has no history slot") {
    auto pack = TemplatePack::load(templates_dir());
    TaskSpec task{"explain the recommendation", "movie", "rec-9"};
    auto rendered =
        render_subordinate_prompt(pack, "G-plan", "profile text", "ignored history", task);
    REQUIRE(rendered.text.find("User Profile Data") != std::string::npos);
    REQUIRE(rendered.text.find("history") == std::string::npos);
    REQUIRE(rendered.text.find("ignored history") == std::string::npos);
}

TEST_CASE("empty guideline is rejected") {
    auto pack = TemplatePack::load(templates_dir());
    REQUIRE_THROWS_AS(render_subordinate_prompt(pack, "", "p", "h", cogen_task()),
                      TemplateError);
}

TEST_CASE("judge prompts end with the exact format line") {
    auto pack = TemplatePack::load(templates_dir());
    auto rel = render_judge_prompt(pack, JudgeMetric::Relevance, "q", "p", "a");
    REQUIRE(rel.text.size() >= 18);
    REQUIRE(rel.text.substr(rel.text.size() - 18) == "Relevance Score: X");
    auto per = render_judge_prompt(pack, JudgeMetric::Persona, "q", "p", "a");
    REQUIRE(per.text.substr(per.text.size() - 24) == "Personalization Score: X");

    REQUIRE_THROWS_AS(render_judge_prompt(pack, JudgeMetric::Relevance, "q", "p", ""),
                      TemplateError);
}

TEST_CASE("rendering is idempotent") {
    auto pack = TemplatePack::load(templates_dir());
    auto a = render_leader_prompt(pack, LeaderStrategy::Supportive, cogen_task(), {"e1"}, "cogen");
    auto b = render_leader_prompt(pack, LeaderStrategy::Supportive, cogen_task(), {"e1"}, "cogen");
    REQUIRE(a.text == b.text);
}

TEST_CASE("the five leader templates differ pairwise per dataset") {
    auto pack = TemplatePack::load(templates_dir());
    const std::array<LeaderStrategy, 5> all = {
        LeaderStrategy::Directive, LeaderStrategy::Supportive, LeaderStrategy::Participative,
        LeaderStrategy::AchievementOriented, LeaderStrategy::General};
    for (const auto& dataset : {"cogen", "movie"}) {
        std::set<std::string> bodies;
        for (auto s : all) bodies.insert(pack.leader(dataset, s).body);
        REQUIRE(bodies.size() == all.size());
    }
}

TEST_CASE("leader prompts are blind to fuzzed profiles") {
    auto pack = TemplatePack::load(templates_dir());
    std::mt19937_64 rng(99);
    const std::vector<std::string> tasks = {
        "draft an email to the team", "summarize the quarterly report",
        "write a product description", "plan a weekend itinerary"};
    for (int trial = 0; trial < 50; ++trial) {
        UserProfile profile;
        profile.profile_text = "sentinel-" + std::to_string(rng()) + " secret profile " +
                               std::to_string(rng());
        profile.history_text = "private history " + std::to_string(rng());
        const auto sentinels = profile.sentinel_tokens();
        REQUIRE_FALSE(sentinels.empty());
        for (auto strategy : kPathGoalStrategies) {
            auto rendered = render_leader_prompt(
                pack, strategy, {tasks[trial % tasks.size()], "cogen", "r"}, {"e1", "e2"},
                "cogen");
            for (const auto& s : sentinels)
                REQUIRE(rendered.text.find(s) == std::string::npos);
        }
    }
}

TEST_CASE("placeholder scanning and unresolved slots") {
    auto tmpl = PromptTemplate::from_body("t", "Hello {name}, task: {task}");
    REQUIRE(tmpl.required_slots == std::set<std::string>{"name", "task"});
    REQUIRE_THROWS_AS(tmpl.render({{"name", "x"}}), TemplateError);
    auto rendered = tmpl.render({{"name", "x"}, {"task", "y"}});
    REQUIRE(rendered.text == "Hello x, task: y");
}
