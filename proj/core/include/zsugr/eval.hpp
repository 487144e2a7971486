#pragma once

#include "zsugr/matrix.hpp"
#include "zsugr/providers.hpp"
#include "zsugr/zsl.hpp"

#include <map>
#include <string>
#include <vector>

namespace zsugr::eval {

using providers::GestureFeature;
using zsl::PredictionResult;

struct PerClassAccuracy {
    std::map<int, double> per_class;   // percent, classes with samples only
    std::map<int, int> counts;
    std::vector<int> excluded_classes; // in the label set but without samples
    double macro = 0.0;                // unweighted mean over non-empty classes (percent)
    double micro = 0.0;                // sample-weighted accuracy (percent)
};

PerClassAccuracy per_class_top1(const std::vector<PredictionResult>& predictions,
                                const std::vector<int>& label_set);

// 2su/(s+u) in percent; 0 when s+u == 0.
double harmonic_mean(double s, double u);

struct EvalReport {
    int split_index = 0;
    double u_czsl = 0.0;
    double s_gzsl = 0.0;
    double u_gzsl = 0.0;
    double h = 0.0;
    double u_czsl_micro = 0.0;
    double s_gzsl_micro = 0.0;
    double u_gzsl_micro = 0.0;
    double h_micro = 0.0;
    std::map<int, double> per_class_czsl;
    std::map<int, double> per_class_gzsl;
    std::map<int, int> n_samples_czsl;
    std::map<int, int> n_samples_gzsl;
};

// S_gzsl is scored over the seen holdout roster only, U_gzsl over the unseen
// roster only, both with the full label space active in the predictions.
EvalReport score_split(int split_index, const std::vector<PredictionResult>& czsl_predictions,
                       const std::vector<PredictionResult>& gzsl_seen_predictions,
                       const std::vector<PredictionResult>& gzsl_unseen_predictions,
                       const std::vector<int>& seen_classes,
                       const std::vector<int>& unseen_classes);

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0; // population standard deviation
};

struct AggregateReport {
    int n_splits = 0;
    std::map<std::string, MetricSummary> metrics; // keyed U_czsl, S_gzsl, U_gzsl, H, *_micro
};

// H is averaged over per-split values, never recomputed from mean S and mean U.
AggregateReport aggregate_splits(const std::vector<EvalReport>& reports);

std::vector<PredictionResult>
baseline_cosine_predict(const std::vector<GestureFeature>& features,
                        const std::map<int, RowVec>& semantics, const std::vector<int>& label_set);

struct ConfusionMatrix {
    std::vector<int> class_order;  // row/col index -> class id, rows = true
    Eigen::MatrixXi counts;
};

ConfusionMatrix confusion(const std::vector<PredictionResult>& predictions,
                          const std::vector<int>& label_set);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
std::string aggregate_to_json(const AggregateReport& report);
std::string render_table(const std::vector<EvalReport>& reports, const AggregateReport& aggregate);
std::string confusion_to_csv(const ConfusionMatrix& cm);

} // namespace zsugr::eval
