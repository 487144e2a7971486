#include "zsugr/eval.hpp"

#include "zsugr/rng.hpp"

#include <doctest.h>

#include <algorithm>

using namespace zsugr;
using namespace zsugr::eval;
using zsl::PredictionResult;

namespace {

PredictionResult pred(const std::string& id, int truth, int guess) {
    PredictionResult p;
    p.sample_id = id;
    p.true_class = truth;
    p.predicted_class = guess;
    p.probabilities = {{guess, 1.0}};
    return p;
}

std::vector<PredictionResult> bulk(int cls, int count, int correct) {
    std::vector<PredictionResult> out;
    for (int i = 0; i < count; ++i)
        out.push_back(pred("c" + std::to_string(cls) + "_" + std::to_string(i), cls,
                           i < correct ? cls : cls + 1000));
    return out;
}

} // namespace

TEST_CASE("per-class accuracy: all correct gives 100 everywhere") {
    std::vector<PredictionResult> preds;
    for (int c : {1, 2, 5})
        for (int i = 0; i < 4; ++i) preds.push_back(pred(std::to_string(c * 10 + i), c, c));
    auto acc = per_class_top1(preds, {1, 2, 5});
    CHECK(acc.macro == doctest::Approx(100.0));
    CHECK(acc.micro == doctest::Approx(100.0));
    for (const auto& [c, a] : acc.per_class) CHECK(a == doctest::Approx(100.0));
}

// The witness that distinguishes per-class from sample-weighted accuracy:
// counts 99/1 with accuracies 100%/0% must average to 50%, not 99%.
TEST_CASE("per-class accuracy is the unweighted class mean") {
    auto preds = bulk(0, 99, 99);
    auto wrong = bulk(1, 1, 0);
    preds.insert(preds.end(), wrong.begin(), wrong.end());
    auto acc = per_class_top1(preds, {0, 1});
    CHECK(acc.macro == doctest::Approx(50.0));
    CHECK(acc.micro == doctest::Approx(99.0));
}

TEST_CASE("per-class accuracy edge cases") {
    CHECK_THROWS_AS(per_class_top1({}, {0}), std::invalid_argument);
    // true class outside the label set
    CHECK_THROWS_AS(per_class_top1({pred("x", 9, 9)}, {0, 1}), std::invalid_argument);
    // empty classes are excluded and recorded
    auto acc = per_class_top1({pred("x", 0, 0)}, {0, 1});
    CHECK(acc.macro == doctest::Approx(100.0));
    REQUIRE(acc.excluded_classes.size() == 1);
    CHECK(acc.excluded_classes.front() == 1);
}

TEST_CASE("per-class accuracy is invariant to prediction order") {
    std::vector<PredictionResult> preds;
    Rng rng(5);
    for (int i = 0; i < 30; ++i) {
        int truth = static_cast<int>(rng.index(3));
        int guess = static_cast<int>(rng.index(3));
        preds.push_back(pred("s" + std::to_string(i), truth, guess));
    }
    auto base = per_class_top1(preds, {0, 1, 2});
    shuffle_in_place(preds, rng);
    auto shuffled = per_class_top1(preds, {0, 1, 2});
    CHECK(base.macro == shuffled.macro);
    CHECK(base.micro == shuffled.micro);
}

TEST_CASE("harmonic mean identities") {
    for (double x : {1.0, 37.5, 94.11}) CHECK(harmonic_mean(x, x) == doctest::Approx(x));
    CHECK(harmonic_mean(50.0, 0.0) == 0.0);
    CHECK(harmonic_mean(0.0, 0.0) == 0.0);
    CHECK_THROWS_AS(harmonic_mean(-1.0, 5.0), std::invalid_argument);
    // H <= 2*min and H <= arithmetic mean; equality iff s == u
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        double s = 100.0 * rng.uniform(), u = 100.0 * rng.uniform();
        double h = harmonic_mean(s, u);
        CHECK(h <= 2.0 * std::min(s, u) + 1e-12);
        CHECK(h <= 0.5 * (s + u) + 1e-12);
        if (std::abs(s - u) > 1e-9) CHECK(h < 0.5 * (s + u));
    }
}

// Published GZSL row with S = 94.11, U = 2.58: the harmonic-mean formula
// gives 5.02 (the reported 5.01 +/- 0.87 averages per-split H values).
TEST_CASE("harmonic mean reproduces the published seen/unseen pair") {
    CHECK(harmonic_mean(94.11, 2.58) == doctest::Approx(5.02).epsilon(0.002));
}

TEST_CASE("aggregation uses population std and averages H per split") {
    EvalReport a, b, c;
    a.h = 20;
    b.h = 30;
    c.h = 40;
    auto agg = aggregate_splits({a, b, c});
    CHECK(agg.metrics.at("H").mean == doctest::Approx(30.0));
    CHECK(agg.metrics.at("H").stddev == doctest::Approx(8.16496580927726));

    auto single = aggregate_splits({a});
    CHECK(single.metrics.at("H").stddev == 0.0);
    CHECK_THROWS_AS(aggregate_splits({}), std::invalid_argument);

    // constant list: mean equals the constant, std zero
    auto flat = aggregate_splits({a, a, a});
    CHECK(flat.metrics.at("H").mean == doctest::Approx(20.0));
    CHECK(flat.metrics.at("H").stddev == 0.0);
}

// mean-of-H versus H-of-means witness: splits (90,10) and (10,90) give mean
// H = 18 while H of the mean accuracies would be 50.
TEST_CASE("aggregate never recomputes H from averaged accuracies") {
    EvalReport r1, r2;
    r1.s_gzsl = 90;
    r1.u_gzsl = 10;
    r1.h = harmonic_mean(90, 10);
    r2.s_gzsl = 10;
    r2.u_gzsl = 90;
    r2.h = harmonic_mean(10, 90);
    auto agg = aggregate_splits({r1, r2});
    CHECK(agg.metrics.at("H").mean == doctest::Approx(18.0));
    CHECK(harmonic_mean(agg.metrics.at("S_gzsl").mean, agg.metrics.at("U_gzsl").mean) ==
          doctest::Approx(50.0));
}

TEST_CASE("score_split separates the GZSL rosters") {
    // seen roster scored only against seen truths, unseen likewise, both
    // predicted over the union space
    std::vector<PredictionResult> czsl = {pred("u1", 10, 10), pred("u2", 11, 10)};
    std::vector<PredictionResult> seen = {pred("s1", 0, 0), pred("s2", 1, 10)};
    std::vector<PredictionResult> unseen = {pred("u1", 10, 0), pred("u2", 11, 11)};
    auto r = score_split(2, czsl, seen, unseen, {0, 1}, {10, 11});
    CHECK(r.split_index == 2);
    CHECK(r.u_czsl == doctest::Approx(50.0));
    CHECK(r.s_gzsl == doctest::Approx(50.0));
    CHECK(r.u_gzsl == doctest::Approx(50.0));
    CHECK(r.h == doctest::Approx(50.0));
    CHECK(r.n_samples_gzsl.at(0) == 1);
    CHECK(r.n_samples_gzsl.at(10) == 1);
}

TEST_CASE("cosine baseline predicts by nearest semantic direction") {
    std::map<int, RowVec> sems;
    RowVec a0(4), a1(4);
    a0 << 1, 0, 0, 0;
    a1 << 0, 1, 0, 0;
    sems[3] = a0;
    sems[4] = a1;

    providers::GestureFeature f;
    f.sample_id = "x";
    f.class_id = 3;
    f.data = a0;
    auto preds = baseline_cosine_predict({f}, sems, {3, 4});
    CHECK(preds.front().predicted_class == 3);

    // positive scaling never changes the argmax
    f.data = 17.0 * a0;
    CHECK(baseline_cosine_predict({f}, sems, {3, 4}).front().predicted_class == 3);

    f.data = RowVec::Zero(4);
    CHECK_THROWS_AS(baseline_cosine_predict({f}, sems, {3, 4}), std::invalid_argument);
    f.data = a0;
    CHECK_THROWS_AS(baseline_cosine_predict({f}, sems, {3, 9}), std::invalid_argument);
}

TEST_CASE("cosine baseline is perfect when features sit on the anchors") {
    Rng rng(11);
    std::map<int, RowVec> sems;
    for (int c = 0; c < 6; ++c) {
        RowVec v(16);
        for (int d = 0; d < 16; ++d) v(d) = rng.normal();
        sems[c] = v.normalized();
    }
    std::vector<providers::GestureFeature> feats;
    std::vector<int> labels{0, 1, 2, 3, 4, 5};
    for (int c : labels) {
        providers::GestureFeature f;
        f.sample_id = "f" + std::to_string(c);
        f.class_id = c;
        f.data = 2.5 * sems[c]; // sigma -> 0 limit: feature is the anchor
        feats.push_back(std::move(f));
    }
    auto preds = baseline_cosine_predict(feats, sems, labels);
    for (const auto& p : preds) CHECK(p.predicted_class == p.true_class);
}

TEST_CASE("confusion matrix accounting") {
    std::vector<PredictionResult> preds;
    preds.push_back(pred("a", 0, 0));
    preds.push_back(pred("b", 0, 1));
    preds.push_back(pred("c", 1, 1));
    preds.push_back(pred("d", 2, 0));
    auto cm = confusion(preds, {0, 1, 2});
    CHECK(cm.counts.rows() == 3);
    CHECK(cm.counts(0, 0) == 1);
    CHECK(cm.counts(0, 1) == 1);
    CHECK(cm.counts(1, 1) == 1);
    CHECK(cm.counts(2, 0) == 1);
    CHECK(cm.counts.sum() == 4);
    // row sums equal per-class counts
    CHECK(cm.counts.row(0).sum() == 2);
    CHECK(cm.counts.row(1).sum() == 1);

    // all-correct predictions give a diagonal matrix
    std::vector<PredictionResult> diag;
    for (int c : {0, 1, 2})
        for (int i = 0; i < c + 1; ++i) diag.push_back(pred("x", c, c));
    auto dm = confusion(diag, {0, 1, 2});
    CHECK(dm.counts(0, 0) == 1);
    CHECK(dm.counts(1, 1) == 2);
    CHECK(dm.counts(2, 2) == 3);
    CHECK(dm.counts.sum() == dm.counts.diagonal().sum());

    auto csv = confusion_to_csv(dm);
    CHECK(csv.find("true\\pred,0,1,2") != std::string::npos);
}

TEST_CASE("report JSON round-trips") {
    EvalReport r;
    r.split_index = 1;
    r.u_czsl = 45.91;
    r.s_gzsl = 61.93;
    r.u_gzsl = 20.03;
    r.h = harmonic_mean(r.s_gzsl, r.u_gzsl);
    r.u_czsl_micro = 44.0;
    r.s_gzsl_micro = 70.1;
    r.u_gzsl_micro = 18.2;
    r.h_micro = harmonic_mean(r.s_gzsl_micro, r.u_gzsl_micro);
    r.per_class_czsl[3] = 41.0;
    r.per_class_gzsl[0] = 88.0;
    r.n_samples_czsl[3] = 120;
    r.n_samples_gzsl[0] = 99;

    auto text = report_to_json(r);
    auto r2 = report_from_json(text);
    CHECK(r2.split_index == r.split_index);
    CHECK(r2.u_czsl == r.u_czsl);
    CHECK(r2.h == r.h);
    CHECK(r2.per_class_czsl.at(3) == 41.0);
    CHECK(r2.n_samples_gzsl.at(0) == 99);
    CHECK(report_to_json(r2) == text);

    auto agg = aggregate_splits({r, r2});
    auto table = render_table({r, r2}, agg);
    CHECK(table.find("U_czsl") != std::string::npos);
    CHECK(table.find("45.91") != std::string::npos);
    CHECK(aggregate_to_json(agg).find("population") != std::string::npos);
}
