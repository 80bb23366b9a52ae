#include "doctest.h"
#include "qqeval/analysis.hpp"
#include "qqeval/errors.hpp"
#include "qqeval/util.hpp"

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

using namespace qqeval;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("qqeval_analysis_" + std::to_string(getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

struct Rng {
    uint64_t state;
    explicit Rng(uint64_t seed) : state(seed) {}
    uint64_t next() {
        state += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) / 9007199254740992.0; }
    int range(int lo, int hi) { return lo + static_cast<int>(next() % uint64_t(hi - lo + 1)); }
};

// Definitional oracle on raw sums in extended precision; a different
// computational path than the two-pass centered implementation.
std::optional<long double> oracle_pearson(const std::vector<double>& x,
                                          const std::vector<double>& y) {
    long double n = static_cast<long double>(x.size());
    long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        long double xi = x[i], yi = y[i];
        sx += xi;
        sy += yi;
        sxx += xi * xi;
        syy += yi * yi;
        sxy += xi * yi;
    }
    long double vx = n * sxx - sx * sx;
    long double vy = n * syy - sy * sy;
    if (vx <= 0 || vy <= 0) return std::nullopt;
    return (n * sxy - sx * sy) / sqrtl(vx * vy);
}

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

SummaryRow ok_row(const std::string& qid, const std::string& dataset, MetricScores scores) {
    SummaryRow row;
    row.question_id = qid;
    row.dataset = dataset;
    row.ok = true;
    row.scores = scores;
    row.converged = true;
    row.iterations_used = 2;
    return row;
}

HumanRating rating(const std::string& qid, const std::string& rater, MetricScores scores) {
    HumanRating r;
    r.question_id = qid;
    r.rater_id = rater;
    r.scores = scores;
    return r;
}

const ReportTable* find_table(const AnalysisReport& rep, const std::string& kind,
                              const std::string& dataset) {
    for (const ReportTable& t : rep.tables)
        if (t.kind == kind && t.dataset == dataset) return &t;
    return nullptr;
}

const ReportRow* find_row(const ReportTable& table, const std::string& label) {
    for (const ReportRow& r : table.rows)
        if (r.label == label) return &r;
    return nullptr;
}

}  // namespace

TEST_CASE("pearson_r matches a definitional oracle on random samples") {
    Rng rng(20260814);
    int defined_checked = 0;
    for (int round = 0; round < 400; ++round) {
        int n = rng.range(2, 200);
        std::vector<double> x, y;
        for (int i = 0; i < n; ++i) {
            // mix of small integers (likert-like) and continuous values
            if (round % 2 == 0) {
                x.push_back(rng.range(1, 5));
                y.push_back(rng.range(1, 5));
            } else {
                x.push_back(rng.uniform() * 20.0 - 10.0);
                y.push_back(rng.uniform() * 20.0 - 10.0);
            }
        }
        auto got = pearson_r(x, y);
        auto want = oracle_pearson(x, y);
        REQUIRE(got.has_value() == want.has_value());
        if (got) {
            ++defined_checked;
            CHECK(std::abs(*got - static_cast<double>(*want)) < 1e-12);
            CHECK(*got <= 1.0);
            CHECK(*got >= -1.0);
        }
    }
    CHECK(defined_checked > 300);  // the generator must mostly produce usable samples
}

TEST_CASE("pearson_r exact landmarks") {
    std::vector<double> up{1, 2, 3, 4};
    CHECK(*pearson_r(up, up) == 1.0);
    CHECK(*pearson_r(up, {4, 3, 2, 1}) == -1.0);
    CHECK(*pearson_r(up, {1, 3, 2, 4}) == 0.8);

    // exactly colinear data snaps to the pole, no rounding residue
    std::vector<double> x{1, 2, 5, 9, 12};
    std::vector<double> scaled, negated;
    for (double v : x) scaled.push_back(3.0 * v - 7.0);
    for (double v : x) negated.push_back(-0.5 * v + 2.0);
    CHECK(*pearson_r(x, scaled) == 1.0);
    CHECK(*pearson_r(x, negated) == -1.0);
}

TEST_CASE("pearson_r refuses degenerate input") {
    CHECK(!pearson_r({1, 1, 1}, {1, 2, 3}).has_value());
    CHECK(!pearson_r({1, 2, 3}, {4, 4, 4}).has_value());
    CHECK(!pearson_r({2, 2}, {2, 2}).has_value());
    CHECK_THROWS_AS(pearson_r({1, 2}, {1, 2, 3}), ArgumentError);
    CHECK_THROWS_AS(pearson_r({1}, {1}), ArgumentError);
    CHECK_THROWS_AS(pearson_r({}, {}), ArgumentError);
}

TEST_CASE("pearson_r is invariant under positive affine maps") {
    Rng rng(7);
    std::vector<double> x, y;
    for (int i = 0; i < 50; ++i) {
        x.push_back(rng.uniform() * 10.0);
        y.push_back(rng.uniform() * 10.0);
    }
    double base = *pearson_r(x, y);
    std::vector<double> shifted;
    for (double v : x) shifted.push_back(2.5 * v + 17.0);
    CHECK(*pearson_r(shifted, y) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("human index aggregates raters per question") {
    std::vector<HumanRating> ratings{
        rating("q1", "r1", flat(3)),
        rating("q1", "r2", flat(4)),
        rating("q2", "r1", make_scores(2, 2, 2, 2, 2)),
        rating("q2", "r2", make_scores(4, 4, 4, 4, 4)),
        rating("q2", "r3", make_scores(4, 4, 4, 4, 4)),
    };
    HumanIndex index(ratings);
    CHECK(index.question_count() == 2);
    CHECK(index.has("q1"));
    CHECK(!index.has("nope"));
    CHECK(!index.mean_of("nope").has_value());
    CHECK(!index.mode_low_of("nope").has_value());

    auto mean = index.mean_of("q1");
    REQUIRE(mean.has_value());
    for (double v : *mean) CHECK(v == 3.5);

    // 2 appears once, 4 twice: the mode is 4
    CHECK(*index.mode_low_of("q2") == flat(4));
    // a 1-1 tie resolves toward the lower score
    CHECK(*index.mode_low_of("q1") == flat(3));
}

TEST_CASE("mean_row and exact_match_rate") {
    ReportRow means = mean_row("g", {make_scores(1, 2, 3, 4, 5), make_scores(2, 3, 4, 5, 5)});
    CHECK(means.n == 2);
    CHECK(means.cells[0].value == 1.5);
    CHECK(means.cells[4].value == 5.0);
    CHECK_THROWS_AS(mean_row("g", {}), ArgumentError);

    std::vector<std::pair<MetricScores, MetricScores>> joined{
        {flat(3), flat(3)},                      // all five match
        {flat(3), flat(4)},                      // none match
        {make_scores(3, 4, 4, 4, 4), flat(4)},   // four match
        {make_scores(3, 3, 4, 4, 4), flat(4)},   // three match
    };
    ReportRow match = exact_match_rate("g", joined);
    CHECK(match.n == 4);
    CHECK(match.cells[0].value == 25.0);  // gram matches only in the first pair
    CHECK(match.cells[1].value == 50.0);  // app matches in pairs 1 and 3: exactly two of four
    CHECK(match.cells[2].value == 75.0);
    CHECK(match.cells[4].value == 75.0);
    CHECK_THROWS_AS(exact_match_rate("g", {}), ArgumentError);
}

TEST_CASE("analyze lays out means, correlation, match and delta per dataset") {
    RunData baseline;
    baseline.mode = RunMode::baseline;
    baseline.model = "alpha";
    RunData strive;
    strive.mode = RunMode::strive;
    strive.model = "alpha";

    std::vector<HumanRating> ratings;
    for (int i = 1; i <= 4; ++i) {
        std::string qid = "q" + std::to_string(i);
        ratings.push_back(rating(qid, "r1", flat(i)));
        baseline.rows.push_back(ok_row(qid, "ds", flat(i)));         // agrees with humans
        strive.rows.push_back(ok_row(qid, "ds", flat(5 - i)));       // reversed
    }
    // an unrated but scored question widens the means but not the joins
    baseline.rows.push_back(ok_row("q99", "ds", flat(4)));
    // a failed question is invisible to every table
    SummaryRow failed;
    failed.question_id = "q98";
    failed.dataset = "ds";
    failed.ok = false;
    failed.failure_reason = "unparseable after repair";
    baseline.rows.push_back(failed);

    AnalysisReport rep = analyze({baseline, strive}, HumanIndex(ratings));

    REQUIRE(rep.tables.size() == 4);
    CHECK(rep.tables[0].kind == "means");
    CHECK(rep.tables[1].kind == "correlation");
    CHECK(rep.tables[2].kind == "match");
    CHECK(rep.tables[3].kind == "delta");

    const ReportTable& means = rep.tables[0];
    REQUIRE(means.rows.size() == 3);
    CHECK(means.rows[0].label == "Human Baseline");
    CHECK(means.rows[0].n == 4);
    CHECK(means.rows[0].cells[0].value == 2.5);
    const ReportRow* bmeans = find_row(means, "alpha (Baseline Approach)");
    REQUIRE(bmeans);
    CHECK(bmeans->n == 5);  // q1..q4 plus unrated q99, failed q98 excluded
    CHECK(bmeans->cells[0].value == doctest::Approx((1 + 2 + 3 + 4 + 4) / 5.0));
    CHECK(find_row(means, "alpha (Feedback-based Approach)"));

    const ReportTable& corr = rep.tables[1];
    const ReportRow* bcorr = find_row(corr, "alpha (Baseline Approach)");
    const ReportRow* scorr = find_row(corr, "alpha (Feedback-based Approach)");
    REQUIRE(bcorr);
    REQUIRE(scorr);
    CHECK(bcorr->n == 4);  // only the rated questions join
    CHECK(bcorr->cells[0].value == 1.0);
    CHECK(scorr->cells[0].value == -1.0);

    const ReportTable& match = rep.tables[2];
    const ReportRow* bmatch = find_row(match, "alpha (Baseline Approach)");
    const ReportRow* smatch = find_row(match, "alpha (Feedback-based Approach)");
    REQUIRE(bmatch);
    REQUIRE(smatch);
    CHECK(bmatch->cells[0].value == 100.0);
    CHECK(smatch->cells[0].value == 0.0);

    const ReportTable& delta = rep.tables[3];
    REQUIRE(delta.rows.size() == 1);
    CHECK(delta.rows[0].label == "alpha (feedback - baseline)");
    CHECK(delta.rows[0].n == 4);
    CHECK(delta.rows[0].cells[0].value == -2.0);
}

TEST_CASE("analyze groups tables by dataset in first-appearance order") {
    RunData run;
    run.mode = RunMode::strive;
    run.model = "m";
    run.rows.push_back(ok_row("a1", "second", flat(2)));
    run.rows.push_back(ok_row("a2", "second", flat(3)));
    run.rows.push_back(ok_row("b1", "first", flat(2)));
    run.rows.push_back(ok_row("b2", "first", flat(4)));
    // "second" appears first in the row stream, so its tables come first
    std::vector<HumanRating> ratings{
        rating("a1", "r", flat(2)), rating("a2", "r", flat(4)),
        rating("b1", "r", flat(3)), rating("b2", "r", flat(3)),
    };
    AnalysisReport rep = analyze({run}, HumanIndex(ratings));
    REQUIRE(rep.tables.size() >= 4);
    CHECK(rep.tables[0].dataset == "second");
    CHECK(find_table(rep, "means", "first"));
    CHECK(find_table(rep, "match", "first"));
    // single-mode runs produce no delta tables
    CHECK(!find_table(rep, "delta", "first"));
    CHECK(!find_table(rep, "delta", "second"));
}

TEST_CASE("constant scores make the correlation undefined, not zero") {
    RunData run;
    run.mode = RunMode::strive;
    run.model = "m";
    std::vector<HumanRating> ratings;
    for (int i = 1; i <= 3; ++i) {
        std::string qid = "q" + std::to_string(i);
        run.rows.push_back(ok_row(qid, "ds", flat(3)));  // zero variance on the machine side
        ratings.push_back(rating(qid, "r", flat(i)));
    }
    AnalysisReport rep = analyze({run}, HumanIndex(ratings));
    const ReportTable* corr = find_table(rep, "correlation", "ds");
    REQUIRE(corr);
    REQUIRE(corr->rows.size() == 1);
    for (const ReportCell& cell : corr->rows[0].cells) CHECK(!cell.defined);
    REQUIRE(!corr->notes.empty());
    CHECK(contains(corr->notes[0], "zero variance"));
}

TEST_CASE("match sampling is seed-deterministic") {
    RunData run;
    run.mode = RunMode::strive;
    run.model = "m";
    std::vector<HumanRating> ratings;
    for (int i = 0; i < 12; ++i) {
        std::string qid = "q" + std::to_string(i);
        // half the questions match the human mode exactly, half do not
        run.rows.push_back(ok_row(qid, "ds", flat(i % 2 == 0 ? 3 : 1)));
        ratings.push_back(rating(qid, "r", flat(i % 3 == 0 ? 3 : 4)));
        ratings.push_back(rating(qid, "r2", flat(i % 2 == 0 ? 3 : 5)));
    }
    HumanIndex index(ratings);

    AnalysisOptions opt;
    opt.match_sample = 4;
    opt.seed = 7;
    AnalysisReport a = analyze({run}, index, opt);
    AnalysisReport b = analyze({run}, index, opt);
    const ReportTable* ta = find_table(a, "match", "ds");
    const ReportTable* tb = find_table(b, "match", "ds");
    REQUIRE(ta);
    REQUIRE(tb);
    REQUIRE(ta->rows.size() == 1);
    CHECK(ta->rows[0].n == 4);
    for (size_t m = 0; m < 5; ++m)
        CHECK(ta->rows[0].cells[m].value == tb->rows[0].cells[m].value);

    // different seeds reach different subsets (checked across many seeds so a
    // coincidental collision cannot flake the test)
    std::set<double> seen;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        AnalysisOptions o;
        o.match_sample = 3;
        o.seed = seed;
        AnalysisReport rep = analyze({run}, index, o);
        seen.insert(find_table(rep, "match", "ds")->rows[0].cells[0].value);
    }
    CHECK(seen.size() > 1);

    // a sample wider than the pool keeps the whole pool
    AnalysisOptions wide;
    wide.match_sample = 500;
    AnalysisReport rep = analyze({run}, index, wide);
    CHECK(find_table(rep, "match", "ds")->rows[0].n == 12);

    // correlation and means ignore the sampling options entirely
    CHECK(find_table(a, "correlation", "ds")->rows[0].n == 12);
    CHECK(find_table(a, "means", "ds")->rows[1].n == 12);
}

TEST_CASE("explicit match ids override sampling and drop unknowns") {
    RunData run;
    run.mode = RunMode::strive;
    run.model = "m";
    std::vector<HumanRating> ratings;
    for (int i = 0; i < 6; ++i) {
        std::string qid = "q" + std::to_string(i);
        run.rows.push_back(ok_row(qid, "ds", flat(3)));
        ratings.push_back(rating(qid, "r", flat(i < 3 ? 3 : 4)));
    }
    AnalysisOptions opt;
    opt.match_ids = {"q1", "q4", "zzz-unknown"};
    opt.match_sample = 1;  // ignored when ids are given
    AnalysisReport rep = analyze({run}, HumanIndex(ratings), opt);
    const ReportTable* match = find_table(rep, "match", "ds");
    REQUIRE(match);
    REQUIRE(match->rows.size() == 1);
    CHECK(match->rows[0].n == 2);
    CHECK(match->rows[0].cells[0].value == 50.0);  // q1 matches, q4 does not
}

TEST_CASE("disjoint runs and ratings are an argument error") {
    RunData run;
    run.mode = RunMode::strive;
    run.model = "m";
    run.rows.push_back(ok_row("q1", "ds", flat(3)));
    run.rows.push_back(ok_row("q2", "ds", flat(4)));
    std::vector<HumanRating> ratings{rating("other", "r", flat(3))};
    try {
        analyze({run}, HumanIndex(ratings));
        FAIL("expected ArgumentError");
    } catch (const ArgumentError& e) {
        CHECK(contains(e.what(), "share no question ids"));
    }
    CHECK_THROWS_AS(analyze({}, HumanIndex(ratings)), ArgumentError);
    CHECK_THROWS_AS(analyze({run}, HumanIndex()), ArgumentError);
}

TEST_CASE("unrated datasets are reported in warnings, not silently dropped") {
    RunData run;
    run.mode = RunMode::strive;
    run.model = "m";
    run.rows.push_back(ok_row("q1", "rated", flat(2)));
    run.rows.push_back(ok_row("q2", "rated", flat(4)));
    run.rows.push_back(ok_row("x1", "unrated", flat(3)));
    std::vector<HumanRating> ratings{rating("q1", "r", flat(2)), rating("q2", "r", flat(3))};

    AnalysisReport rep = analyze({run}, HumanIndex(ratings));
    CHECK(find_table(rep, "means", "unrated"));  // machine means still reportable
    CHECK(!find_table(rep, "correlation", "unrated"));
    bool warned = false;
    for (const std::string& w : rep.warnings)
        warned |= contains(w, "unrated") && contains(w, "Human Baseline row omitted");
    CHECK(warned);
}

TEST_CASE("csv rendering uses full precision and n/a for undefined") {
    AnalysisReport rep;
    ReportTable t{"correlation", "ds,with,commas", {}, {}};
    ReportRow row;
    row.label = "model \"x\" (Baseline Approach)";
    row.n = 3;
    row.cells[0] = ReportCell{1.0 / 3.0, true};
    row.cells[1] = ReportCell{0.0, false};
    row.cells[2] = ReportCell{-1.0, true};
    row.cells[3] = ReportCell{0.5, true};
    row.cells[4] = ReportCell{0.25, true};
    t.rows.push_back(row);
    rep.tables.push_back(t);

    std::string csv = report_to_csv(rep);
    std::vector<std::string> lines = split(trim(csv), '\n');
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "table,dataset,row,gram,app,rel,nov,com,n");
    std::vector<std::string> fields = parse_csv_line(lines[1]);
    REQUIRE(fields.size() == 9);
    CHECK(fields[0] == "correlation");
    CHECK(fields[1] == "ds,with,commas");
    CHECK(fields[2] == "model \"x\" (Baseline Approach)");
    CHECK(std::stod(fields[3]) == 1.0 / 3.0);  // full round-trip precision
    CHECK(fields[4] == "n/a");
    CHECK(fields[5] == "-1");
    CHECK(fields[8] == "3");
}

TEST_CASE("text rendering carries titles, notes and warnings") {
    AnalysisReport rep;
    ReportTable means{"means", "sciq", {}, {}};
    ReportRow hb;
    hb.label = "Human Baseline";
    hb.n = 10;
    for (auto& c : hb.cells) c = ReportCell{3.14159, true};
    means.rows.push_back(hb);
    rep.tables.push_back(means);

    ReportTable corr{"correlation", "sciq", {}, {"n/a: correlation undefined"}};
    ReportRow cr;
    cr.label = "m (Feedback-based Approach)";
    cr.n = 9;
    cr.cells[0] = ReportCell{0.8, true};
    cr.cells[1] = ReportCell{0.0, false};
    for (size_t m = 2; m < 5; ++m) cr.cells[m] = ReportCell{0.5, true};
    corr.rows.push_back(cr);
    rep.tables.push_back(corr);
    rep.warnings.push_back("dataset sciq: something was omitted");

    std::string text = report_to_text(rep);
    CHECK(contains(text, "Mean scores"));
    CHECK(contains(text, "Pearson correlation vs human ratings"));
    CHECK(contains(text, "sciq"));
    CHECK(contains(text, "3.14"));   // two decimals
    CHECK(!contains(text, "3.14159"));
    CHECK(contains(text, "0.80"));
    CHECK(contains(text, "n/a"));
    CHECK(contains(text, "note: n/a: correlation undefined"));
    CHECK(contains(text, "warnings:"));
    CHECK(contains(text, "- dataset sciq: something was omitted"));
    CHECK(contains(text, "Gram"));
    CHECK(contains(text, "Com"));
}

TEST_CASE("load_run reads a finished run directory") {
    TempDir dir;
    write_text_file(dir.file("manifest.json"), R"({
  "config": {
    "mode": "strive",
    "providers": {"tm1": {"model_name": "unit-model"}}
  },
  "config_hash": "abc"
})");
    write_text_file(
        dir.file("summary.csv"),
        "question_id,dataset,status,gram,app,rel,nov,com,converged,iterations_used,"
        "failure_reason\n"
        "q1,sciq,ok,5,4,4,3,3,true,3,\n"
        "q2,sciq,failed,,,,,,false,0,\"unparseable after repair: judge, twice\"\n");

    RunData run = load_run(dir.path.string());
    CHECK(run.mode == RunMode::strive);
    CHECK(run.model == "unit-model");
    REQUIRE(run.rows.size() == 2);
    CHECK(run.rows[0].ok);
    CHECK(run.rows[0].scores == make_scores(5, 4, 4, 3, 3));
    CHECK(run.rows[0].converged);
    CHECK(run.rows[0].iterations_used == 3);
    CHECK(!run.rows[1].ok);
    CHECK(run.rows[1].failure_reason == "unparseable after repair: judge, twice");

    SUBCASE("header drift is rejected") {
        write_text_file(dir.file("summary.csv"), "question,dataset\nq1,sciq\n");
        CHECK_THROWS_AS(load_run(dir.path.string()), Error);
    }
    SUBCASE("missing files are io errors") {
        std::filesystem::remove(dir.file("summary.csv"));
        CHECK_THROWS_AS(load_run(dir.path.string()), IoError);
    }
    SUBCASE("manifests without a config are rejected") {
        write_text_file(dir.file("manifest.json"), R"({"something": 1})");
        CHECK_THROWS_AS(load_run(dir.path.string()), Error);
    }
}
