#include "zsugr/eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace zsugr::eval {

using json = nlohmann::json;

PerClassAccuracy per_class_top1(const std::vector<PredictionResult>& predictions,
                                const std::vector<int>& label_set) {
    if (predictions.empty()) throw std::invalid_argument("per_class_top1: no predictions");
    std::set<int> labels(label_set.begin(), label_set.end());
    std::map<int, int> correct;
    PerClassAccuracy acc;
    for (const auto& p : predictions) {
        if (!labels.count(p.true_class))
            throw std::invalid_argument("prediction for sample " + p.sample_id +
                                        " has true class " + std::to_string(p.true_class) +
                                        " outside the label set");
        acc.counts[p.true_class]++;
        if (p.predicted_class == p.true_class) correct[p.true_class]++;
    }
    double macro_sum = 0.0;
    int n_classes = 0;
    long total_correct = 0;
    for (int c : label_set) {
        auto it = acc.counts.find(c);
        if (it == acc.counts.end()) {
            acc.excluded_classes.push_back(c);
            continue;
        }
        double a = 100.0 * static_cast<double>(correct[c]) / static_cast<double>(it->second);
        acc.per_class[c] = a;
        macro_sum += a;
        ++n_classes;
        total_correct += correct[c];
    }
    acc.macro = n_classes > 0 ? macro_sum / n_classes : 0.0;
    acc.micro = 100.0 * static_cast<double>(total_correct) / static_cast<double>(predictions.size());
    return acc;
}

double harmonic_mean(double s, double u) {
    if (s < 0 || u < 0) throw std::invalid_argument("harmonic_mean: negative input");
    if (s + u == 0.0) return 0.0;
    return 2.0 * s * u / (s + u);
}

EvalReport score_split(int split_index, const std::vector<PredictionResult>& czsl_predictions,
                       const std::vector<PredictionResult>& gzsl_seen_predictions,
                       const std::vector<PredictionResult>& gzsl_unseen_predictions,
                       const std::vector<int>& seen_classes,
                       const std::vector<int>& unseen_classes) {
    EvalReport r;
    r.split_index = split_index;

    auto czsl = per_class_top1(czsl_predictions, unseen_classes);
    r.u_czsl = czsl.macro;
    r.u_czsl_micro = czsl.micro;
    r.per_class_czsl = czsl.per_class;
    r.n_samples_czsl = czsl.counts;

    auto s_acc = per_class_top1(gzsl_seen_predictions, seen_classes);
    auto u_acc = per_class_top1(gzsl_unseen_predictions, unseen_classes);
    r.s_gzsl = s_acc.macro;
    r.u_gzsl = u_acc.macro;
    r.h = harmonic_mean(r.s_gzsl, r.u_gzsl);
    r.s_gzsl_micro = s_acc.micro;
    r.u_gzsl_micro = u_acc.micro;
    r.h_micro = harmonic_mean(r.s_gzsl_micro, r.u_gzsl_micro);
    r.per_class_gzsl = s_acc.per_class;
    for (const auto& [c, a] : u_acc.per_class) r.per_class_gzsl[c] = a;
    r.n_samples_gzsl = s_acc.counts;
    for (const auto& [c, n] : u_acc.counts) r.n_samples_gzsl[c] = n;
    return r;
}

namespace {

MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    return s;
}

} // namespace

AggregateReport aggregate_splits(const std::vector<EvalReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("aggregate_splits: no reports");
    AggregateReport agg;
    agg.n_splits = static_cast<int>(reports.size());
    auto collect = [&](const std::string& name, auto getter) {
        std::vector<double> vals;
        vals.reserve(reports.size());
        for (const auto& r : reports) vals.push_back(getter(r));
        agg.metrics[name] = summarize(vals);
    };
    collect("U_czsl", [](const EvalReport& r) { return r.u_czsl; });
    collect("S_gzsl", [](const EvalReport& r) { return r.s_gzsl; });
    collect("U_gzsl", [](const EvalReport& r) { return r.u_gzsl; });
    collect("H", [](const EvalReport& r) { return r.h; });
    collect("U_czsl_micro", [](const EvalReport& r) { return r.u_czsl_micro; });
    collect("S_gzsl_micro", [](const EvalReport& r) { return r.s_gzsl_micro; });
    collect("U_gzsl_micro", [](const EvalReport& r) { return r.u_gzsl_micro; });
    collect("H_micro", [](const EvalReport& r) { return r.h_micro; });
    return agg;
}

std::vector<PredictionResult>
baseline_cosine_predict(const std::vector<GestureFeature>& features,
                        const std::map<int, RowVec>& semantics, const std::vector<int>& label_set) {
    if (label_set.empty()) throw std::invalid_argument("baseline: empty label set");
    for (int c : label_set)
        if (!semantics.count(c))
            throw std::invalid_argument("baseline: missing semantics for class " +
                                        std::to_string(c));
    std::vector<PredictionResult> out;
    out.reserve(features.size());
    for (const auto& f : features) {
        double fn = f.data.norm();
        if (fn == 0.0)
            throw std::invalid_argument("baseline: zero-norm feature for sample " + f.sample_id);
        PredictionResult p;
        p.sample_id = f.sample_id;
        p.true_class = f.class_id;
        for (int c : label_set) {
            const RowVec& a = semantics.at(c);
            if (a.size() != f.data.size())
                throw std::invalid_argument("baseline: dimension mismatch for class " +
                                            std::to_string(c));
            double cosine = f.data.dot(a) / (fn * a.norm());
            p.probabilities.emplace_back(c, cosine);
        }
        std::stable_sort(p.probabilities.begin(), p.probabilities.end(),
                         [](const auto& x, const auto& y) { return x.second > y.second; });
        p.predicted_class = p.probabilities.front().first;
        out.push_back(std::move(p));
    }
    return out;
}

ConfusionMatrix confusion(const std::vector<PredictionResult>& predictions,
                          const std::vector<int>& label_set) {
    ConfusionMatrix cm;
    cm.class_order = label_set;
    std::sort(cm.class_order.begin(), cm.class_order.end());
    const auto n = static_cast<Eigen::Index>(cm.class_order.size());
    cm.counts = Eigen::MatrixXi::Zero(n, n);
    std::map<int, Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i) idx[cm.class_order[static_cast<std::size_t>(i)]] = i;
    for (const auto& p : predictions) {
        auto t = idx.find(p.true_class);
        auto q = idx.find(p.predicted_class);
        if (t == idx.end() || q == idx.end())
            throw std::invalid_argument("confusion: prediction outside the label set for sample " +
                                        p.sample_id);
        cm.counts(t->second, q->second)++;
    }
    return cm;
}

namespace {

json report_json(const EvalReport& r) {
    json j;
    j["schema_version"] = 1;
    j["split_index"] = r.split_index;
    j["U_czsl"] = r.u_czsl;
    j["S_gzsl"] = r.s_gzsl;
    j["U_gzsl"] = r.u_gzsl;
    j["H"] = r.h;
    j["micro"] = {{"U_czsl", r.u_czsl_micro},
                  {"S_gzsl", r.s_gzsl_micro},
                  {"U_gzsl", r.u_gzsl_micro},
                  {"H", r.h_micro}};
    auto dump_map = [](const auto& m) {
        json o = json::object();
        for (const auto& [k, v] : m) o[std::to_string(k)] = v;
        return o;
    };
    j["per_class_czsl"] = dump_map(r.per_class_czsl);
    j["per_class_gzsl"] = dump_map(r.per_class_gzsl);
    j["n_samples_czsl"] = dump_map(r.n_samples_czsl);
    j["n_samples_gzsl"] = dump_map(r.n_samples_gzsl);
    // Accuracies are per-class means; the deviation over splits uses the
    // population convention.
    j["conventions"] = {{"accuracy", "per-class mean top-1"}, {"stddev", "population"}};
    return j;
}

} // namespace

std::string report_to_json(const EvalReport& r) { return report_json(r).dump(2); }

EvalReport report_from_json(const std::string& text) {
    json j = json::parse(text);
    EvalReport r;
    r.split_index = j.at("split_index").get<int>();
    r.u_czsl = j.at("U_czsl").get<double>();
    r.s_gzsl = j.at("S_gzsl").get<double>();
    r.u_gzsl = j.at("U_gzsl").get<double>();
    r.h = j.at("H").get<double>();
    r.u_czsl_micro = j.at("micro").at("U_czsl").get<double>();
    r.s_gzsl_micro = j.at("micro").at("S_gzsl").get<double>();
    r.u_gzsl_micro = j.at("micro").at("U_gzsl").get<double>();
    r.h_micro = j.at("micro").at("H").get<double>();
    auto load_map_d = [&](const char* key, std::map<int, double>& m) {
        for (const auto& [k, v] : j.at(key).items()) m[std::stoi(k)] = v.get<double>();
    };
    auto load_map_i = [&](const char* key, std::map<int, int>& m) {
        for (const auto& [k, v] : j.at(key).items()) m[std::stoi(k)] = v.get<int>();
    };
    load_map_d("per_class_czsl", r.per_class_czsl);
    load_map_d("per_class_gzsl", r.per_class_gzsl);
    load_map_i("n_samples_czsl", r.n_samples_czsl);
    load_map_i("n_samples_gzsl", r.n_samples_gzsl);
    return r;
}

std::string aggregate_to_json(const AggregateReport& agg) {
    json j;
    j["schema_version"] = 1;
    j["n_splits"] = agg.n_splits;
    for (const auto& [name, m] : agg.metrics)
        j["metrics"][name] = {{"mean", m.mean}, {"stddev", m.stddev}};
    j["conventions"] = {{"accuracy", "per-class mean top-1"},
                        {"stddev", "population"},
                        {"H", "averaged per split"}};
    return j.dump(2);
}

std::string render_table(const std::vector<EvalReport>& reports, const AggregateReport& agg) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << "split   U_czsl   S_gzsl   U_gzsl        H\n";
    for (const auto& r : reports) {
        os.width(5);
        os << r.split_index;
        for (double v : {r.u_czsl, r.s_gzsl, r.u_gzsl, r.h}) {
            os.width(9);
            os << v;
        }
        os << "\n";
    }
    os << "mean +/- std over " << agg.n_splits << " splits:\n";
    for (const char* key : {"U_czsl", "S_gzsl", "U_gzsl", "H"}) {
        const auto& m = agg.metrics.at(key);
        os << "  " << key << " = " << m.mean << " +/- " << m.stddev << "\n";
    }
    return os.str();
}

std::string confusion_to_csv(const ConfusionMatrix& cm) {
    std::ostringstream os;
    os << "true\\pred";
    for (int c : cm.class_order) os << "," << c;
    os << "\n";
    for (Eigen::Index r = 0; r < cm.counts.rows(); ++r) {
        os << cm.class_order[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < cm.counts.cols(); ++c) os << "," << cm.counts(r, c);
        os << "\n";
    }
    return os.str();
}

} // namespace zsugr::eval
