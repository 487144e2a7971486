#pragma once

#include "zsugr/matrix.hpp"
#include "zsugr/providers.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace zsugr::zsl {

using providers::GestureFeature;

enum class Mode { Czsl, Gzsl };
Mode mode_from_string(const std::string& name);

struct LabeledFeatureSet {
    Mat features;                 // n x d, row per sample
    std::vector<int> labels;      // class ids, aligned with rows
    std::vector<std::string> sample_ids;
    std::vector<int> label_space; // sorted distinct class ids this set must cover
};

// czsl: synthetic unseen features only, labels over the unseen classes.
// gzsl: real seen + synthetic unseen, labels over the union.
// A label-space class with zero features is an error naming the class.
LabeledFeatureSet build_training_set(const std::vector<GestureFeature>& real_seen,
                                     const std::vector<GestureFeature>& synthetic_unseen,
                                     Mode mode, const std::vector<int>& seen_classes,
                                     const std::vector<int>& unseen_classes);

struct ClassifierConfig {
    double lr = 1e-3;
    int epochs = 50;
    int batch_size = 0; // 0 = full batch
    std::uint64_t seed = 0;
};

struct ClassifierWeights {
    Mat weight;  // n_classes x d
    RowVec bias; // n_classes
    std::vector<int> class_order; // row -> class id

    int row_of(int class_id) const;
    void save(const std::filesystem::path& path) const;
    static ClassifierWeights load(const std::filesystem::path& path);
};

// Cross-entropy-trained linear softmax classifier; zero-initialized, so the
// optimization is convex and runs are seed-deterministic.
ClassifierWeights train_classifier(const LabeledFeatureSet& set, const ClassifierConfig& cfg);

struct PredictionResult {
    std::string sample_id;
    int true_class = -1;
    int predicted_class = -1;
    // (class id, probability) over the restricted label set, descending prob.
    std::vector<std::pair<int, double>> probabilities;
};

// Argmax over the restricted label set; probabilities renormalized over it.
std::vector<PredictionResult> predict(const ClassifierWeights& weights,
                                      const std::vector<GestureFeature>& features,
                                      const std::vector<int>& restrict_to);

void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<PredictionResult>& predictions);
std::vector<PredictionResult> read_predictions_csv(const std::filesystem::path& path);

} // namespace zsugr::zsl
