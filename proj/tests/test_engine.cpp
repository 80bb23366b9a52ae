#include "doctest.h"
#include "qqeval/engine.hpp"
#include "qqeval/errors.hpp"
#include "qqeval/parser.hpp"
#include "qqeval/util.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

using namespace qqeval;

namespace {

MetricScores make_scores(int g, int a, int r, int n, int c) {
    MetricScores s;
    s.set(Metric::gram, g);
    s.set(Metric::app, a);
    s.set(Metric::rel, r);
    s.set(Metric::nov, n);
    s.set(Metric::com, c);
    return s;
}

MetricScores flat(int v) { return make_scores(v, v, v, v, v); }

std::string judge_reply(int bs, int bw, const MetricScores& scores) {
    JudgeVerdict v;
    v.best_strength_index = bs;
    v.best_weakness_index = bw;
    v.scores = scores;
    return "Considered all candidates.\n" + format_judge_block(v) + "\n";
}

std::string gen_reply(const std::string& suffix) {
    return "Strength: strong point " + suffix + "\nWeakness: weak point " + suffix + "\n";
}

// Replies keyed by request tag; records every request so tests can assert on
// call order and prompt content. Unknown judge/baseline tags are an error,
// unknown generation tags fall back to a generic candidate.
struct ScriptProvider : CompletionProvider {
    std::map<std::string, std::string> by_tag;
    std::vector<std::string> seen_tags;
    std::map<std::string, std::string> seen_prompts;
    std::string name = "scripted";

    CompletionResponse complete(const CompletionRequest& req) override {
        seen_tags.push_back(req.request_tag);
        seen_prompts[req.request_tag] = req.prompt;
        auto it = by_tag.find(req.request_tag);
        if (it != by_tag.end()) return {it->second, name, 0, false};
        if (req.request_tag.rfind("gen/", 0) == 0)
            return {gen_reply("at " + req.request_tag), name, 0, false};
        throw Error("no scripted reply for tag " + req.request_tag);
    }
    const std::string& model_name() const override { return name; }

    bool saw(const std::string& tag) const {
        for (const auto& t : seen_tags)
            if (t == tag) return true;
        return false;
    }
};

QuestionRecord question(const std::string& id = "q") {
    QuestionRecord rec;
    rec.id = id;
    rec.dataset = "unit";
    rec.context = "Rivers erode their banks fastest on the outside of bends.";
    rec.question = "Where does a river erode its banks fastest, and why?";
    return rec;
}

Engine make_engine(EngineOptions options) {
    return Engine(PromptLibrary::builtin(), MetricDefinitionSet::defaults(options.scale),
                  std::move(options));
}

EngineOptions tiny_options(int max_iterations = 10) {
    EngineOptions opt;
    opt.n = 1;
    opt.temperatures = {0.5};
    opt.max_iterations = max_iterations;
    return opt;
}

// Fills the judge scripts for iterations 0..last: tm1 scores from `v1`,
// tm2 scores from `v2`, indexed by iteration.
void script_judges(ScriptProvider& p, const std::string& qid, int last,
                   const std::vector<MetricScores>& v1, const std::vector<MetricScores>& v2) {
    for (int k = 0; k <= last; ++k) {
        p.by_tag["judge/" + qid + "/iter" + std::to_string(k) + "/tm1"] =
            judge_reply(1, 1, v1[static_cast<size_t>(k)]);
        if (k >= 1)
            p.by_tag["judge/" + qid + "/iter" + std::to_string(k) + "/tm2"] =
                judge_reply(1, 1, v2[static_cast<size_t>(k)]);
    }
}

}  // namespace

TEST_CASE("engine options validation names fields") {
    EngineOptions opt;
    opt.n = 0;
    try {
        opt.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "n");
    }
    opt = EngineOptions{};
    opt.temperatures = {0.1, 0.2};  // n defaults to 10
    CHECK_THROWS_AS(opt.validate(), ConfigError);
    opt = EngineOptions{};
    opt.judge_temperature = 2.5;
    CHECK_THROWS_AS(opt.validate(), ConfigError);
    opt = EngineOptions{};
    opt.max_iterations = 1;
    try {
        opt.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "max_iterations");
    }
    opt = EngineOptions{};
    opt.scale = ScaleBounds{5, 5};
    CHECK_THROWS_AS(opt.validate(), ConfigError);
    CHECK_NOTHROW(EngineOptions{}.validate());
}

TEST_CASE("temperature schedule spans 0.1 to 1.0 evenly") {
    EngineOptions opt;
    opt.n = 10;
    auto temps = opt.schedule();
    REQUIRE(temps.size() == 10);
    CHECK(temps.front() == doctest::Approx(0.1));
    CHECK(temps.back() == doctest::Approx(1.0));
    CHECK(temps[1] == doctest::Approx(0.2));
    for (size_t i = 1; i < temps.size(); ++i) CHECK(temps[i] > temps[i - 1]);

    opt.n = 1;
    CHECK(opt.schedule() == std::vector<double>{0.1});

    opt.n = 3;
    opt.temperatures = {0.3, 0.6, 0.9};
    CHECK(opt.schedule() == opt.temperatures);
}

TEST_CASE("engine construction cross-checks the definition scale") {
    EngineOptions opt;
    opt.scale = ScaleBounds{1, 4};
    CHECK_THROWS_AS(Engine(PromptLibrary::builtin(), MetricDefinitionSet::defaults(), opt),
                    ConfigError);
}

TEST_CASE("generate_candidates attaches origins over the schedule") {
    EngineOptions opt;
    opt.n = 3;
    opt.temperatures = {0.2, 0.5, 0.8};
    Engine engine = make_engine(opt);
    ScriptProvider provider;
    int attempts = 0;
    CandidateSet set = engine.generate_candidates(question(), std::nullopt, TmModule::tm1, 0,
                                                  provider, &attempts);
    REQUIRE(set.pairs.size() == 3);
    CHECK(attempts == 3);
    for (int i = 0; i < 3; ++i) {
        const Origin& origin = set.pairs[static_cast<size_t>(i)].origin;
        CHECK(origin.module == TmModule::tm1);
        CHECK(origin.iteration == 0);
        CHECK(origin.candidate_index == i + 1);
        CHECK(origin.temperature == opt.temperatures[static_cast<size_t>(i)]);
    }
    CHECK(provider.saw("gen/q/iter0/tm1/cand1"));
    CHECK(provider.saw("gen/q/iter0/tm1/cand3"));
}

TEST_CASE("judge_select composes the best pair from two different candidates") {
    EngineOptions opt;
    opt.n = 3;
    opt.temperatures = {0.2, 0.5, 0.8};
    Engine engine = make_engine(opt);
    ScriptProvider provider;
    provider.by_tag["gen/q/iter0/tm1/cand1"] = "Strength: s one\nWeakness: w one";
    provider.by_tag["gen/q/iter0/tm1/cand2"] = "Strength: s two\nWeakness: w two";
    provider.by_tag["gen/q/iter0/tm1/cand3"] = "Strength: s three\nWeakness: w three";
    provider.by_tag["judge/q/iter0/tm1"] = judge_reply(2, 3, make_scores(5, 4, 3, 2, 1));

    CandidateSet set = engine.generate_candidates(question(), std::nullopt, TmModule::tm1, 0,
                                                  provider);
    auto outcome = engine.judge_select(question(), set, provider);
    CHECK(outcome.verdict.best_strength_index == 2);
    CHECK(outcome.verdict.best_weakness_index == 3);
    CHECK(outcome.state.best.strength == "s two");
    CHECK(outcome.state.best.weakness == "w three");
    // the composed pair inherits the strength candidate's origin
    CHECK(outcome.state.best.origin.candidate_index == 2);
    CHECK(outcome.state.best.origin.temperature == 0.5);
    CHECK(outcome.state.scores == make_scores(5, 4, 3, 2, 1));
    CHECK(outcome.attempts == 1);

    // the judge prompt listed the candidates under their 1-based indices
    const std::string& prompt = provider.seen_prompts["judge/q/iter0/tm1"];
    CHECK(contains(prompt, "There are 3 candidate pairs"));
    CHECK(contains(prompt, "2. s two"));
    CHECK(contains(prompt, "3. w three"));
}

TEST_CASE("strive converges when both modules agree twice in a row") {
    Engine engine = make_engine(tiny_options());
    auto provider = std::make_shared<ScriptProvider>();
    // iterations:     0        1        2         3
    // TM1 scores:  (1..1)  (3..3)  (5,4,4,3,3)  (5,4,4,3,3)
    // TM2 scores:     -    (2..2)  (5,4,4,3,3)  (5,4,4,3,3)
    script_judges(*provider, "q", 3,
                  {flat(1), flat(3), make_scores(5, 4, 4, 3, 3), make_scores(5, 4, 4, 3, 3)},
                  {flat(0), flat(2), make_scores(5, 4, 4, 3, 3), make_scores(5, 4, 4, 3, 3)});

    EvaluationTrace trace = engine.strive_evaluate(question(), EngineProviders(provider));
    CHECK(!trace.failed);
    CHECK(trace.converged);
    CHECK(trace.iterations_used == 3);
    REQUIRE(trace.final_scores.has_value());
    CHECK(*trace.final_scores == make_scores(5, 4, 4, 3, 3));
    REQUIRE(trace.iterations.size() == 4);  // iterations 0..3, nothing further
    CHECK(!provider->saw("gen/q/iter4/tm2/cand1"));
    CHECK(verify_trace(trace).empty());

    // matching scores at iteration 2 alone must not have stopped the loop:
    // the previous iteration still disagreed
    CHECK(trace_converged_at(trace, 3, ConvergenceRule::cross_module));
    CHECK(!trace_converged_at(trace, 2, ConvergenceRule::cross_module));
}

TEST_CASE("strive caps at max_iterations when the modules never agree") {
    Engine engine = make_engine(tiny_options(3));
    auto provider = std::make_shared<ScriptProvider>();
    script_judges(*provider, "q", 3, {flat(2), flat(2), flat(2), flat(2)},
                  {flat(1), flat(1), flat(1), flat(1)});

    EvaluationTrace trace = engine.strive_evaluate(question(), EngineProviders(provider));
    CHECK(!trace.failed);
    CHECK(!trace.converged);
    CHECK(trace.iterations_used == 3);
    REQUIRE(trace.final_scores.has_value());
    CHECK(*trace.final_scores == flat(2));  // last TM1 scores
    CHECK(trace.iterations.size() == 4);
    CHECK(verify_trace(trace).empty());
}

TEST_CASE("per_module rule accepts stable-but-different modules") {
    auto run = [&](ConvergenceRule rule) {
        EngineOptions opt = tiny_options(4);
        opt.convergence = rule;
        Engine engine = make_engine(opt);
        auto provider = std::make_shared<ScriptProvider>();
        script_judges(*provider, "q", 4, {flat(4), flat(4), flat(4), flat(4), flat(4)},
                      {flat(1), flat(1), flat(1), flat(1), flat(1)});
        return engine.strive_evaluate(question(), EngineProviders(provider));
    };
    EvaluationTrace cross = run(ConvergenceRule::cross_module);
    CHECK(!cross.converged);
    CHECK(cross.iterations_used == 4);

    EvaluationTrace per = run(ConvergenceRule::per_module);
    CHECK(per.converged);
    CHECK(per.iterations_used == 2);
    CHECK(*per.final_scores == flat(4));
    CHECK(verify_trace(per).empty());
    CHECK(verify_trace(cross).empty());
}

TEST_CASE("the best pair of each step feeds the next module's prompt") {
    Engine engine = make_engine(tiny_options());
    auto provider = std::make_shared<ScriptProvider>();
    provider->by_tag["gen/q/iter0/tm1/cand1"] = gen_reply("alpha");
    provider->by_tag["gen/q/iter1/tm2/cand1"] = gen_reply("beta");
    provider->by_tag["gen/q/iter1/tm1/cand1"] = gen_reply("gamma");
    script_judges(*provider, "q", 2,
                  {flat(3), flat(3), flat(3)}, {flat(3), flat(3), flat(3)});

    EvaluationTrace trace = engine.strive_evaluate(question(), EngineProviders(provider));
    CHECK(trace.converged);  // all scores equal from the start: stops at k=2

    // iteration 0 runs without feedback
    CHECK(!contains(provider->seen_prompts["gen/q/iter0/tm1/cand1"], "previous review round"));
    // TM2 at k=1 receives TM1's iteration-0 best pair verbatim
    const std::string& tm2_prompt = provider->seen_prompts["gen/q/iter1/tm2/cand1"];
    CHECK(contains(tm2_prompt, "strong point alpha"));
    CHECK(contains(tm2_prompt, "weak point alpha"));
    // TM1 at k=1 receives TM2's k=1 best pair
    const std::string& tm1_prompt = provider->seen_prompts["gen/q/iter1/tm1/cand1"];
    CHECK(contains(tm1_prompt, "strong point beta"));
    CHECK(contains(tm1_prompt, "weak point beta"));
    // TM2 at k=2 receives TM1's k=1 best pair
    CHECK(contains(provider->seen_prompts["gen/q/iter2/tm2/cand1"], "strong point gamma"));
}

TEST_CASE("a garbled judge reply is repaired with one corrective re-ask") {
    Engine engine = make_engine(tiny_options());
    auto provider = std::make_shared<ScriptProvider>();
    script_judges(*provider, "q", 2, {flat(3), flat(3), flat(3)}, {flat(3), flat(3), flat(3)});
    provider->by_tag["judge/q/iter0/tm1"] = "I pick the first one, it is clearly best.";
    provider->by_tag["judge/q/iter0/tm1/fix"] = judge_reply(1, 1, flat(3));

    EvaluationTrace trace = engine.strive_evaluate(question(), EngineProviders(provider));
    CHECK(!trace.failed);
    CHECK(trace.converged);
    REQUIRE(!trace.iterations.empty());
    CHECK(trace.iterations[0].tm1->judge_attempts == 2);
    // the re-ask carries the original prompt plus a parse-failure note
    CHECK(contains(provider->seen_prompts["judge/q/iter0/tm1/fix"], "could not be parsed"));
    CHECK(contains(provider->seen_prompts["judge/q/iter0/tm1/fix"], "There are 1 candidate"));
    bool tagged = false;
    for (const auto& t : trace.repair_tags) tagged |= t == "judge/q/iter0/tm1";
    CHECK(tagged);
    CHECK(verify_trace(trace).empty());
}

TEST_CASE("an unparseable candidate slot gets one fresh regeneration") {
    Engine engine = make_engine(tiny_options());
    auto provider = std::make_shared<ScriptProvider>();
    script_judges(*provider, "q", 2, {flat(3), flat(3), flat(3)}, {flat(3), flat(3), flat(3)});
    provider->by_tag["gen/q/iter0/tm1/cand1"] = "no sections here";
    provider->by_tag["gen/q/iter0/tm1/cand1/fix"] = "still nothing";
    provider->by_tag["gen/q/iter0/tm1/cand1/r2"] = gen_reply("recovered");

    EvaluationTrace trace = engine.strive_evaluate(question(), EngineProviders(provider));
    CHECK(!trace.failed);
    REQUIRE(!trace.iterations.empty());
    const TMStepRecord& step0 = *trace.iterations[0].tm1;
    CHECK(step0.generation_attempts == 3);  // original, fix, regen
    REQUIRE(step0.candidates.size() == 1);
    CHECK(step0.candidates[0].strength == "strong point recovered");
    CHECK(verify_trace(trace).empty());
}

TEST_CASE("a slot that fails generation twice fails the whole question") {
    Engine engine = make_engine(tiny_options());
    auto provider = std::make_shared<ScriptProvider>();
    provider->by_tag["gen/q/iter0/tm1/cand1"] = "garbage 1";
    provider->by_tag["gen/q/iter0/tm1/cand1/fix"] = "garbage 2";
    provider->by_tag["gen/q/iter0/tm1/cand1/r2"] = "garbage 3";
    provider->by_tag["gen/q/iter0/tm1/cand1/r2/fix"] = "garbage 4";

    EvaluationTrace trace = engine.strive_evaluate(question(), EngineProviders(provider));
    CHECK(trace.failed);
    CHECK(!trace.converged);
    CHECK(!trace.final_scores.has_value());
    CHECK(trace.iterations_used == 0);
    CHECK(contains(trace.failure_reason, "unparseable after repair"));
    REQUIRE(trace.failure_raw_texts.size() == 2);
    CHECK(trace.failure_raw_texts[0] == "garbage 3");
    CHECK(trace.failure_raw_texts[1] == "garbage 4");
    CHECK(verify_trace(trace).empty());
}

TEST_CASE("a mid-iteration failure keeps the finished TM2 half in the trace") {
    Engine engine = make_engine(tiny_options(3));
    auto provider = std::make_shared<ScriptProvider>();
    script_judges(*provider, "q", 1, {flat(2), flat(2)}, {flat(1), flat(1)});
    provider->by_tag["judge/q/iter1/tm1"] = "not a verdict";
    provider->by_tag["judge/q/iter1/tm1/fix"] = "also not a verdict";

    EvaluationTrace trace = engine.strive_evaluate(question(), EngineProviders(provider));
    CHECK(trace.failed);
    REQUIRE(trace.iterations.size() == 2);
    CHECK(trace.iterations[1].tm2.has_value());
    CHECK(!trace.iterations[1].tm1.has_value());
    CHECK(trace.iterations_used == 0);  // no full iteration completed
    CHECK(verify_trace(trace).empty());
}

TEST_CASE("distinct provider roles are routed per module") {
    Engine engine = make_engine(tiny_options(2));
    auto tm1 = std::make_shared<ScriptProvider>();
    auto tm2 = std::make_shared<ScriptProvider>();
    auto judge1 = std::make_shared<ScriptProvider>();
    auto judge2 = std::make_shared<ScriptProvider>();
    tm1->name = "gen-one";
    tm2->name = "gen-two";
    judge1->name = "judge-one";
    judge2->name = "judge-two";
    for (int k = 0; k <= 2; ++k) {
        judge1->by_tag["judge/q/iter" + std::to_string(k) + "/tm1"] = judge_reply(1, 1, flat(3));
        judge2->by_tag["judge/q/iter" + std::to_string(k) + "/tm2"] = judge_reply(1, 1, flat(3));
    }
    EngineProviders providers;
    providers.tm1 = tm1;
    providers.tm2 = tm2;
    providers.tm1_judge = judge1;
    providers.tm2_judge = judge2;

    EvaluationTrace trace = engine.strive_evaluate(question(), providers);
    CHECK(trace.converged);
    CHECK(tm1->saw("gen/q/iter0/tm1/cand1"));
    CHECK(tm2->saw("gen/q/iter1/tm2/cand1"));
    CHECK(judge1->saw("judge/q/iter0/tm1"));
    CHECK(judge2->saw("judge/q/iter1/tm2"));
    CHECK(!tm1->saw("gen/q/iter1/tm2/cand1"));
    CHECK(!judge1->saw("judge/q/iter1/tm2"));
    // all four model names recorded, sorted and deduplicated
    CHECK(trace.provider_models ==
          std::vector<std::string>{"gen-one", "gen-two", "judge-one", "judge-two"});
}

TEST_CASE("baseline evaluation scores in a single call") {
    Engine engine = make_engine(tiny_options());
    auto provider = std::make_shared<ScriptProvider>();
    provider->by_tag["base/q"] = "Solid question.\n" + format_scores_block(flat(4)) + "\n";

    EvaluationTrace trace = engine.baseline_evaluate(question(), EngineProviders(provider));
    CHECK(!trace.failed);
    CHECK(trace.converged);
    CHECK(trace.iterations_used == 1);
    CHECK(trace.max_iterations == 1);
    CHECK(trace.iterations.empty());
    CHECK(*trace.final_scores == flat(4));
    CHECK(trace.baseline_attempts == 1);
    CHECK(verify_trace(trace).empty());
}

TEST_CASE("baseline failure is captured in the trace, not thrown") {
    Engine engine = make_engine(tiny_options());
    auto provider = std::make_shared<ScriptProvider>();
    provider->by_tag["base/q"] = "no scores";
    provider->by_tag["base/q/fix"] = "still no scores";

    EvaluationTrace trace = engine.baseline_evaluate(question(), EngineProviders(provider));
    CHECK(trace.failed);
    CHECK(!trace.final_scores.has_value());
    CHECK(trace.baseline_attempts == 2);
    REQUIRE(trace.failure_raw_texts.size() == 2);
    CHECK(verify_trace(trace).empty());
}

TEST_CASE("transport failures surface as failed traces with the reason") {
    Engine engine = make_engine(tiny_options());
    struct Exploding : CompletionProvider {
        std::string name = "exploding";
        CompletionResponse complete(const CompletionRequest&) override {
            throw TransportError(503, "backend unavailable after 4 attempts");
        }
        const std::string& model_name() const override { return name; }
    };
    auto provider = std::make_shared<Exploding>();
    EvaluationTrace trace = engine.strive_evaluate(question(), EngineProviders(provider));
    CHECK(trace.failed);
    CHECK(contains(trace.failure_reason, "backend unavailable"));
    CHECK(trace.failure_raw_texts.empty());
}

TEST_CASE("trace JSON round-trips byte for byte") {
    Engine engine = make_engine(tiny_options());
    auto provider = std::make_shared<ScriptProvider>();
    script_judges(*provider, "q", 2,
                  {make_scores(1, 2, 3, 4, 5), flat(4), flat(4)},
                  {flat(1), flat(4), flat(4)});
    EvaluationTrace trace = engine.strive_evaluate(question(), EngineProviders(provider));
    REQUIRE(trace.converged);

    std::string text = trace_to_json_text(trace);
    EvaluationTrace back = trace_from_json_text(text);
    CHECK(trace_to_json_text(back) == text);
    CHECK(back.question_id == trace.question_id);
    CHECK(back.converged == trace.converged);
    CHECK(back.iterations_used == trace.iterations_used);
    CHECK(*back.final_scores == *trace.final_scores);
    CHECK(back.iterations.size() == trace.iterations.size());
    CHECK(back.iterations[0].tm1->candidates.size() ==
          trace.iterations[0].tm1->candidates.size());
    CHECK(back.template_hashes == trace.template_hashes);
    CHECK(verify_trace(back).empty());

    SUBCASE("failed traces round-trip too") {
        auto bad = std::make_shared<ScriptProvider>();
        bad->by_tag["base/q"] = "junk";
        bad->by_tag["base/q/fix"] = "junk";
        EvaluationTrace failed = engine.baseline_evaluate(question(), EngineProviders(bad));
        std::string ftext = trace_to_json_text(failed);
        EvaluationTrace fback = trace_from_json_text(ftext);
        CHECK(trace_to_json_text(fback) == ftext);
        CHECK(fback.failed);
        CHECK(fback.failure_raw_texts == failed.failure_raw_texts);
    }
}

TEST_CASE("trace_from_json_text rejects foreign documents") {
    CHECK_THROWS_AS(trace_from_json_text("{}"), Error);
    CHECK_THROWS_AS(trace_from_json_text("not json"), Error);
    CHECK_THROWS_AS(trace_from_json_text(R"({"schema": "something-else-v9"})"), Error);
}

TEST_CASE("verify_trace flags tampered traces") {
    Engine engine = make_engine(tiny_options());
    auto provider = std::make_shared<ScriptProvider>();
    script_judges(*provider, "q", 2, {flat(3), flat(3), flat(3)}, {flat(3), flat(3), flat(3)});
    EvaluationTrace good = engine.strive_evaluate(question(), EngineProviders(provider));
    REQUIRE(good.converged);
    REQUIRE(verify_trace(good).empty());

    SUBCASE("converged flag without score agreement") {
        EvaluationTrace t = good;
        t.iterations[2].tm2->scores = flat(1);
        t.iterations[2].tm2->verdict.scores = flat(1);
        CHECK(!verify_trace(t).empty());
    }
    SUBCASE("final scores out of sync with last TM1 step") {
        EvaluationTrace t = good;
        t.final_scores = flat(1);
        CHECK(!verify_trace(t).empty());
    }
    SUBCASE("verdict index beyond the candidate list") {
        EvaluationTrace t = good;
        t.iterations[0].tm1->verdict.best_strength_index = 7;
        CHECK(!verify_trace(t).empty());
    }
    SUBCASE("best pair not drawn from the candidates") {
        EvaluationTrace t = good;
        t.iterations[0].tm1->best.strength = "smuggled in from nowhere";
        CHECK(!verify_trace(t).empty());
    }
    SUBCASE("unconverged run that stopped early") {
        EvaluationTrace t = good;
        t.converged = false;  // iterations_used stays 2 < max_iterations 10
        CHECK(!verify_trace(t).empty());
    }
    SUBCASE("scores outside the scale") {
        EvaluationTrace t = good;
        t.iterations[1].tm1->scores = flat(9);
        t.iterations[1].tm1->verdict.scores = flat(9);
        CHECK(!verify_trace(t).empty());
    }
}

TEST_CASE("trace_converged_at needs both modules in both iterations") {
    EvaluationTrace empty;
    CHECK(!trace_converged_at(empty, 2, ConvergenceRule::cross_module));
    CHECK(!trace_converged_at(empty, 1, ConvergenceRule::cross_module));
}
