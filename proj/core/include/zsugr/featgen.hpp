#pragma once

#include "zsugr/nn.hpp"
#include "zsugr/providers.hpp"

#include <filesystem>
#include <map>
#include <vector>

namespace zsugr::featgen {

using ag::Var;
using providers::GestureFeature;

// Plain MLP with leaky-rectifier hidden layers and a linear output. An empty
// hidden list degenerates to a single linear map, which is how the
// closed-form gradient-penalty oracles drive the production code path.
class Mlp {
public:
    Mlp() = default;
    Mlp(nn::ParamStore& store, const std::string& prefix, int in,
        const std::vector<int>& hidden, int out, Rng& rng);

    Var forward(const Var& x) const;

    // Builds, as graph nodes, the gradient of the scalar-per-row output with
    // respect to the first `lead_cols` input columns. Because the gradient is
    // itself a graph, backpropagating a loss through it yields exact
    // second-order (gradient-penalty) parameter gradients.
    Var input_gradient(const Var& x, Eigen::Index lead_cols) const;

    int in_dim() const { return in_; }
    int out_dim() const { return out_; }

private:
    std::vector<nn::Linear> layers_;
    int in_ = 0, out_ = 0;
};

struct GanConfig {
    double lambda_gp = 10.0;  // gradient-penalty coefficient
    double alpha_ms = 1e-4;   // mode-seeking weight
    double lr = 1e-4;
    int critic_steps = 5;     // critic updates per generator update
    int d_z = 512;
    int n_syn_per_class = 400;
    std::vector<int> hidden = {4096, 4096};
    int batch_size = 64;
    int iters = 2000; // generator updates
    double beta1 = 0.5;
    double beta2 = 0.999;
    double divergence_guard = 1e6;
    std::uint64_t seed = 0;

    void validate() const;
};

struct GanBundle {
    GanConfig cfg;
    int feature_dim = 0;
    int d_sem = 0;
    nn::ParamStore gen_params;
    nn::ParamStore critic_params;
    Mlp generator; // concat(z, a) -> feature
    Mlp critic;    // concat(feature, a) -> scalar score

    void save(const std::filesystem::path& path, const std::string& extra_meta_json = "{}") const;
    static GanBundle load(const std::filesystem::path& path);
};

GanBundle make_gan(const GanConfig& cfg, int feature_dim, int d_sem);

// E[D(fake,a)] - E[D(real,a)] + lambda * E[(||grad_interp D||_2 - 1)^2], the
// quantity the critic minimizes. Interpolation weights are drawn fresh per row.
Var critic_loss(const Mlp& critic, const Mat& real, const Mat& fake, const Mat& semantics,
                double lambda_gp, Rng& rho_rng);

// Standalone penalty term, exposed for the closed-form oracle.
Var gradient_penalty(const Mlp& critic, const Mat& real, const Mat& fake, const Mat& semantics,
                     Rng& rho_rng);

// -E[D(G(z1,a),a)] - alpha * E[ ||G(z1,a)-G(z2,a)||_1 / ||z1-z2||_1 ], the
// quantity the generator minimizes (mode-seeking ratio maximized).
Var generator_loss(const Mlp& generator, const Mlp& critic, const Mat& z1, const Mat& z2,
                   const Mat& semantics, double alpha_ms);

// Mode-seeking ratio alone (mean over rows), for the identity/homogeneity oracles.
Var mode_seeking_ratio(const Mlp& generator, const Mat& z1, const Mat& z2, const Mat& semantics);

// Standard-normal noise pair whose rows are guaranteed at least 1e-8 apart in
// L1 (degenerate pairs are resampled).
std::pair<Mat, Mat> sample_noise_pair(Eigen::Index batch, int d_z, Rng& rng);

struct GanTrainLog {
    std::vector<double> critic_losses;    // one per critic update
    std::vector<double> generator_losses; // one per generator update
};

GanTrainLog train_gan(GanBundle& bundle, const std::vector<GestureFeature>& seen_features,
                      const std::map<int, RowVec>& class_semantics);

std::vector<GestureFeature> synthesize(const GanBundle& bundle,
                                       const std::map<int, RowVec>& class_semantics,
                                       const std::vector<int>& class_ids, int n_per_class,
                                       std::uint64_t seed);

} // namespace zsugr::featgen
