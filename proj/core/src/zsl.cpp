#include "zsugr/zsl.hpp"

#include "zsugr/autograd.hpp"
#include "zsugr/nn.hpp"
#include "zsugr/rng.hpp"
#include "zsugr/tensor_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace zsugr::zsl {

using ag::Var;
using json = nlohmann::json;

Mode mode_from_string(const std::string& name) {
    if (name == "czsl") return Mode::Czsl;
    if (name == "gzsl") return Mode::Gzsl;
    throw std::invalid_argument("unknown zsl mode: " + name);
}

LabeledFeatureSet build_training_set(const std::vector<GestureFeature>& real_seen,
                                     const std::vector<GestureFeature>& synthetic_unseen,
                                     Mode mode, const std::vector<int>& seen_classes,
                                     const std::vector<int>& unseen_classes) {
    LabeledFeatureSet set;
    if (mode == Mode::Czsl) {
        set.label_space = unseen_classes;
    } else {
        set.label_space = seen_classes;
        set.label_space.insert(set.label_space.end(), unseen_classes.begin(),
                               unseen_classes.end());
    }
    std::sort(set.label_space.begin(), set.label_space.end());

    std::vector<const GestureFeature*> rows;
    if (mode == Mode::Gzsl)
        for (const auto& f : real_seen) rows.push_back(&f);
    for (const auto& f : synthetic_unseen) rows.push_back(&f);
    if (rows.empty()) throw std::invalid_argument("training set is empty");

    const auto d = rows.front()->data.size();
    std::map<int, int> per_class_count;
    set.features.resize(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i]->data.size() != d)
            throw std::invalid_argument("inconsistent feature dimension in training set");
        set.features.row(static_cast<Eigen::Index>(i)) = rows[i]->data;
        set.labels.push_back(rows[i]->class_id);
        set.sample_ids.push_back(rows[i]->sample_id);
        per_class_count[rows[i]->class_id]++;
    }
    for (int c : set.label_space)
        if (!per_class_count.count(c))
            throw std::runtime_error("no features for class " + std::to_string(c));
    return set;
}

int ClassifierWeights::row_of(int class_id) const {
    for (std::size_t i = 0; i < class_order.size(); ++i)
        if (class_order[i] == class_id) return static_cast<int>(i);
    throw std::out_of_range("class id " + std::to_string(class_id) +
                            " is outside the classifier label space");
}

ClassifierWeights train_classifier(const LabeledFeatureSet& set, const ClassifierConfig& cfg) {
    if (set.labels.empty()) throw std::invalid_argument("train_classifier: empty set");
    const auto n = static_cast<Eigen::Index>(set.labels.size());
    const auto d = set.features.cols();
    const auto n_classes = static_cast<Eigen::Index>(set.label_space.size());

    std::map<int, int> row_of;
    for (Eigen::Index i = 0; i < n_classes; ++i)
        row_of[set.label_space[static_cast<std::size_t>(i)]] = static_cast<int>(i);
    std::vector<int> targets;
    targets.reserve(static_cast<std::size_t>(n));
    for (int label : set.labels) {
        auto it = row_of.find(label);
        if (it == row_of.end())
            throw std::invalid_argument("label " + std::to_string(label) +
                                        " missing from label space");
        targets.push_back(it->second);
    }

    nn::ParamStore store;
    Var w = store.add("w", Mat::Zero(d, n_classes));
    Var b = store.add("b", Mat::Zero(1, n_classes));
    nn::Adam adam({cfg.lr, 0.9, 0.999, 1e-8, 0.0});

    const Eigen::Index batch = cfg.batch_size > 0 ? std::min<Eigen::Index>(cfg.batch_size, n) : n;
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (batch < n) {
            Rng rng(derive_seed(cfg.seed, "classifier-epoch", static_cast<std::uint64_t>(epoch)));
            shuffle_in_place(order, rng);
        }
        Eigen::Index cursor = 0;
        while (cursor < n) {
            const Eigen::Index bn = std::min(batch, n - cursor);
            Mat xb(bn, d);
            std::vector<int> tb(static_cast<std::size_t>(bn));
            for (Eigen::Index i = 0; i < bn; ++i) {
                const auto idx = order[static_cast<std::size_t>(cursor + i)];
                xb.row(i) = set.features.row(static_cast<Eigen::Index>(idx));
                tb[static_cast<std::size_t>(i)] = targets[idx];
            }
            Var logits = ag::add_rowvec(ag::matmul(Var::constant(xb), w), b);
            Var loss = ag::cross_entropy_with_logits(logits, tb);
            store.zero_grads();
            ag::backward(loss);
            adam.step(store);
            cursor += bn;
        }
    }

    ClassifierWeights out;
    out.weight = w.value().transpose();
    out.bias = b.value().row(0);
    out.class_order = set.label_space;
    return out;
}

std::vector<PredictionResult> predict(const ClassifierWeights& weights,
                                      const std::vector<GestureFeature>& features,
                                      const std::vector<int>& restrict_to) {
    if (restrict_to.empty()) throw std::invalid_argument("predict: empty label restriction");
    std::vector<int> rows;
    rows.reserve(restrict_to.size());
    for (int c : restrict_to) rows.push_back(weights.row_of(c));

    std::vector<PredictionResult> out;
    out.reserve(features.size());
    for (const auto& f : features) {
        if (f.data.size() != weights.weight.cols())
            throw std::invalid_argument("feature dim does not match classifier for sample " +
                                        f.sample_id);
        PredictionResult p;
        p.sample_id = f.sample_id;
        p.true_class = f.class_id;
        Eigen::VectorXd logits(restrict_to.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            logits(static_cast<Eigen::Index>(i)) =
                weights.weight.row(rows[i]).dot(f.data) + weights.bias(rows[i]);
        const double m = logits.maxCoeff();
        Eigen::VectorXd probs = (logits.array() - m).exp();
        probs /= probs.sum();
        for (std::size_t i = 0; i < restrict_to.size(); ++i)
            p.probabilities.emplace_back(restrict_to[i], probs(static_cast<Eigen::Index>(i)));
        std::stable_sort(p.probabilities.begin(), p.probabilities.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        p.predicted_class = p.probabilities.front().first;
        out.push_back(std::move(p));
    }
    return out;
}

void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<PredictionResult>& predictions) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::trunc);
    os << "sample_id,true_class,predicted_class,top3\n";
    os.precision(17);
    for (const auto& p : predictions) {
        os << p.sample_id << "," << p.true_class << "," << p.predicted_class << ",";
        const auto k = std::min<std::size_t>(3, p.probabilities.size());
        for (std::size_t i = 0; i < k; ++i) {
            if (i) os << ";";
            os << p.probabilities[i].first << ":" << p.probabilities[i].second;
        }
        os << "\n";
    }
}

std::vector<PredictionResult> read_predictions_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("predictions file not found: " + path.string());
    std::vector<PredictionResult> out;
    std::string line;
    bool header = true;
    while (std::getline(is, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        std::istringstream ls(line);
        PredictionResult p;
        std::string field;
        std::getline(ls, p.sample_id, ',');
        std::getline(ls, field, ',');
        p.true_class = std::stoi(field);
        std::getline(ls, field, ',');
        p.predicted_class = std::stoi(field);
        std::string top3;
        std::getline(ls, top3);
        std::istringstream ts(top3);
        std::string entry;
        while (std::getline(ts, entry, ';')) {
            auto colon = entry.find(':');
            if (colon == std::string::npos) continue;
            p.probabilities.emplace_back(std::stoi(entry.substr(0, colon)),
                                         std::stod(entry.substr(colon + 1)));
        }
        out.push_back(std::move(p));
    }
    return out;
}

void ClassifierWeights::save(const std::filesystem::path& path) const {
    TensorArchive archive;
    archive.kind = "classifier";
    json meta;
    meta["version"] = 1;
    meta["class_order"] = class_order;
    archive.meta_json = meta.dump();
    archive.tensors.push_back({"weight", weight});
    archive.tensors.push_back({"bias", Mat(bias)});
    write_archive(path, archive);
}

ClassifierWeights ClassifierWeights::load(const std::filesystem::path& path) {
    TensorArchive archive = read_archive(path);
    if (archive.kind != "classifier")
        throw std::runtime_error("not a classifier archive: " + path.string());
    json meta = json::parse(archive.meta_json);
    ClassifierWeights w;
    w.class_order = meta.at("class_order").get<std::vector<int>>();
    w.weight = *archive.find("weight");
    w.bias = archive.find("bias")->row(0);
    return w;
}

} // namespace zsugr::zsl
