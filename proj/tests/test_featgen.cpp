#include "zsugr/featgen.hpp"

#include "zsugr/rng.hpp"

#include "fd_check.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace zsugr;
using namespace zsugr::featgen;
using ag::Var;

namespace {

Mat randm(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    Rng rng(seed);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

// Linear critic D(x, a) = w . x : an Mlp with no hidden layers whose
// semantic-input rows are zeroed.
Mlp linear_critic(nn::ParamStore& store, const RowVec& w, int d_sem) {
    Rng rng(1);
    Mlp critic(store, "critic", static_cast<int>(w.size()) + d_sem, {}, 1, rng);
    Mat weight = Mat::Zero(w.size() + d_sem, 1);
    weight.topRows(w.size()) = w.transpose();
    store.at("critic.fc0.w").value_mut() = weight;
    store.at("critic.fc0.b").value_mut().setZero();
    return critic;
}

} // namespace

TEST_CASE("gan config validation") {
    GanConfig cfg;
    cfg.lambda_gp = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = GanConfig{};
    cfg.critic_steps = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = GanConfig{};
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("zero critic with zero penalty gives zero loss") {
    nn::ParamStore store;
    Rng rng(2);
    Mlp critic(store, "critic", 6, {}, 1, rng);
    store.at("critic.fc0.w").value_mut().setZero();
    store.at("critic.fc0.b").value_mut().setZero();
    Rng rho(3);
    Var loss = critic_loss(critic, randm(5, 4, 10), randm(5, 4, 11), randm(5, 2, 12), 0.0, rho);
    CHECK(loss.value()(0, 0) == 0.0);
}

// Closed-form oracle: for D(x) = w.x the interpolate gradient is w itself, so
// the penalty is exactly (||w|| - 1)^2 regardless of the batch.
TEST_CASE("gradient penalty matches (||w||-1)^2 for random linear critics") {
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        nn::ParamStore store;
        RowVec w = randm(1, 5, 100 + trial).row(0);
        Mlp critic = linear_critic(store, w, 3);
        Rng rho(trial);
        Var gp = gradient_penalty(critic, randm(6, 5, 200 + trial), randm(6, 5, 300 + trial),
                                  randm(6, 3, 400 + trial), rho);
        const double expected = std::pow(w.norm() - 1.0, 2.0);
        CHECK(std::abs(gp.value()(0, 0) - expected) < 1e-5);
    }
    // the worked example: w = 2*e1 gives penalty (2-1)^2 = 1
    nn::ParamStore store;
    RowVec w = RowVec::Zero(4);
    w(0) = 2.0;
    Mlp critic = linear_critic(store, w, 2);
    Rng rho(9);
    Mat real = randm(3, 4, 21);
    Var loss = critic_loss(critic, real, real, randm(3, 2, 22), 1.0, rho);
    CHECK(loss.value()(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("widening the real/fake score gap strictly decreases the penalty-free loss") {
    nn::ParamStore store;
    RowVec w = randm(1, 4, 31).row(0);
    Mlp critic = linear_critic(store, w, 2);
    Mat fake = randm(5, 4, 32);
    Mat sem = randm(5, 2, 33);
    Rng rho(1);
    Mat real = fake;
    double prev = critic_loss(critic, real, fake, sem, 0.0, rho).value()(0, 0);
    for (int step = 1; step <= 3; ++step) {
        Mat shifted = real.rowwise() + step * (w / w.norm());
        double cur = critic_loss(critic, shifted, fake, sem, 0.0, rho).value()(0, 0);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("mode-seeking ratio is exactly 1 for identity and 2 for doubling") {
    const int dz = 4, dsem = 3;
    nn::ParamStore store;
    Rng rng(5);
    Mlp gen(store, "gen", dz + dsem, {}, dz, rng);
    Mat weight = Mat::Zero(dz + dsem, dz);
    weight.topRows(dz) = Mat::Identity(dz, dz);
    store.at("gen.fc0.w").value_mut() = weight;
    store.at("gen.fc0.b").value_mut().setZero();

    Rng zrng(6);
    auto [z1, z2] = sample_noise_pair(7, dz, zrng);
    Mat sem = randm(7, dsem, 41);
    CHECK(mode_seeking_ratio(gen, z1, z2, sem).value()(0, 0) ==
          doctest::Approx(1.0).epsilon(1e-6));

    store.at("gen.fc0.w").value_mut() = 2.0 * weight;
    CHECK(mode_seeking_ratio(gen, z1, z2, sem).value()(0, 0) ==
          doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("mode-seeking ratio scales with |c| when the generator is scaled") {
    const int dz = 3, dsem = 2;
    nn::ParamStore store;
    Rng rng(7);
    Mlp gen(store, "gen", dz + dsem, {6}, 4, rng);
    Rng zrng(8);
    auto [z1, z2] = sample_noise_pair(5, dz, zrng);
    Mat sem = randm(5, dsem, 51);
    const double base = mode_seeking_ratio(gen, z1, z2, sem).value()(0, 0);
    Mat w_out = store.at("gen.fc1.w").value();
    Mat b_out = store.at("gen.fc1.b").value();
    for (double c : {0.5, 2.0, 3.0}) {
        store.at("gen.fc1.w").value_mut() = c * w_out;
        store.at("gen.fc1.b").value_mut() = c * b_out;
        const double scaled = mode_seeking_ratio(gen, z1, z2, sem).value()(0, 0);
        CHECK(scaled == doctest::Approx(std::abs(c) * base).epsilon(1e-9));
    }
}

TEST_CASE("a generator that ignores noise has zero mode-seeking term") {
    const int dz = 4, dsem = 3;
    nn::ParamStore store;
    Rng rng(9);
    Mlp gen(store, "gen", dz + dsem, {}, 5, rng);
    store.at("gen.fc0.w").value_mut().topRows(dz).setZero(); // out = f(a) only
    Rng zrng(10);
    auto [z1, z2] = sample_noise_pair(6, dz, zrng);
    Mat sem = randm(6, dsem, 61);
    CHECK(mode_seeking_ratio(gen, z1, z2, sem).value()(0, 0) == 0.0);
}

TEST_CASE("degenerate noise pairs are rejected / resampled") {
    const int dz = 3;
    nn::ParamStore store;
    Rng rng(11);
    Mlp gen(store, "gen", dz + 2, {}, 3, rng);
    Mat z = randm(4, dz, 71);
    CHECK_THROWS_WITH_AS(mode_seeking_ratio(gen, z, z, randm(4, 2, 72)),
                         doctest::Contains("too close"), std::invalid_argument);
    Rng zrng(12);
    auto [z1, z2] = sample_noise_pair(64, dz, zrng);
    for (Eigen::Index r = 0; r < z1.rows(); ++r)
        CHECK((z1.row(r) - z2.row(r)).cwiseAbs().sum() >= 1e-8);
}

// The decisive correctness check for the penalty path: analytic parameter
// gradients of the full critic loss (gradient penalty included) against
// central differences, on a deep critic.
TEST_CASE("critic loss gradients match central differences with the penalty active") {
    nn::ParamStore store;
    Rng rng(13);
    Mlp critic(store, "critic", 5, {6, 4}, 1, rng);
    Mat real = randm(4, 3, 81);
    Mat fake = randm(4, 3, 82);
    Mat sem = randm(4, 2, 83);

    auto build = [&] {
        Rng rho(77); // frozen interpolation draws keep the loss a pure function
        return critic_loss(critic, real, fake, sem, 10.0, rho);
    };
    auto rep = fd::check_gradients(store, build, 1e-5);
    CAPTURE(rep.worst_param);
    CAPTURE(rep.analytic);
    CAPTURE(rep.numeric);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("generator loss gradients match central differences") {
    nn::ParamStore gen_store, critic_store;
    Rng rng(14);
    Mlp gen(gen_store, "gen", 4, {6}, 3, rng);
    Mlp critic(critic_store, "critic", 5, {6}, 1, rng);
    Rng zrng(15);
    auto [z1, z2] = sample_noise_pair(4, 2, zrng);
    Mat sem = randm(4, 2, 91);

    auto build = [&] { return generator_loss(gen, critic, z1, z2, sem, 1e-2); };
    auto rep = fd::check_gradients(gen_store, build, 1e-5);
    CAPTURE(rep.worst_param);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("one idealized descent step lowers a quadratic toy critic loss") {
    // With a linear critic the loss is quadratic in w thanks to the penalty.
    nn::ParamStore store;
    RowVec w0 = randm(1, 4, 101).row(0);
    Mlp critic = linear_critic(store, w0, 2);
    Mat real = randm(8, 4, 102);
    Mat fake = randm(8, 4, 103);
    Mat sem = randm(8, 2, 104);
    auto build = [&] {
        Rng rho(55);
        return critic_loss(critic, real, fake, sem, 10.0, rho);
    };
    store.zero_grads();
    Var loss = build();
    const double before = loss.value()(0, 0);
    ag::backward(loss);
    const double eta = 1e-3;
    store.at("critic.fc0.w").value_mut() -= eta * store.at("critic.fc0.w").grad();
    store.at("critic.fc0.b").value_mut() -= eta * store.at("critic.fc0.b").grad();
    CHECK(build().value()(0, 0) < before);
}

namespace {

struct TwoClassFixture {
    std::vector<GestureFeature> features;
    std::map<int, RowVec> semantics;
    RowVec mean0, mean1;
};

TwoClassFixture two_class_features(int per_class, int dim, int d_sem, std::uint64_t seed) {
    TwoClassFixture fx;
    Rng rng(seed);
    RowVec a0 = randm(1, d_sem, seed + 1).row(0).normalized();
    RowVec a1 = randm(1, d_sem, seed + 2).row(0).normalized();
    RowVec c0 = randm(1, dim, seed + 3).row(0);
    RowVec c1 = randm(1, dim, seed + 4).row(0);
    fx.semantics[0] = a0;
    fx.semantics[1] = a1;
    fx.mean0 = RowVec::Zero(dim);
    fx.mean1 = RowVec::Zero(dim);
    for (int i = 0; i < per_class; ++i) {
        for (int cls = 0; cls < 2; ++cls) {
            GestureFeature f;
            f.sample_id = "c" + std::to_string(cls) + "_" + std::to_string(i);
            f.class_id = cls;
            RowVec noise(dim);
            for (int d = 0; d < dim; ++d) noise(d) = 0.15 * rng.normal();
            f.data = (cls == 0 ? c0 : c1) + noise;
            (cls == 0 ? fx.mean0 : fx.mean1) += f.data / per_class;
            fx.features.push_back(std::move(f));
        }
    }
    return fx;
}

} // namespace

TEST_CASE("trained conditional gan respects class conditioning") {
    auto fx = two_class_features(60, 8, 4, 1000);

    GanConfig cfg;
    cfg.d_z = 4;
    cfg.hidden = {48};
    cfg.batch_size = 32;
    cfg.iters = 1000;
    cfg.critic_steps = 5;
    cfg.lr = 5e-4;
    cfg.n_syn_per_class = 200;
    cfg.seed = 77;
    auto bundle = make_gan(cfg, 8, 4);
    auto log = train_gan(bundle, fx.features, fx.semantics);
    CHECK(log.critic_losses.size() == static_cast<std::size_t>(cfg.iters * cfg.critic_steps));
    CHECK(log.generator_losses.size() == static_cast<std::size_t>(cfg.iters));

    auto synth = synthesize(bundle, fx.semantics, {0, 1}, 200, 5);
    REQUIRE(synth.size() == 400);
    RowVec g0 = RowVec::Zero(8), g1 = RowVec::Zero(8);
    for (const auto& f : synth) (f.class_id == 0 ? g0 : g1) += f.data / 200.0;
    // class-conditional fidelity: own-mean distance beats cross-mean distance
    CHECK((g0 - fx.mean0).norm() < (g0 - fx.mean1).norm());
    CHECK((g1 - fx.mean1).norm() < (g1 - fx.mean0).norm());

    // conditioning matters: swapping the semantics degrades fidelity
    std::map<int, RowVec> swapped{{0, fx.semantics[1]}, {1, fx.semantics[0]}};
    auto shuffled = synthesize(bundle, swapped, {0, 1}, 200, 5);
    RowVec s0 = RowVec::Zero(8);
    for (const auto& f : shuffled)
        if (f.class_id == 0) s0 += f.data / 200.0;
    CHECK((s0 - fx.mean0).norm() > (g0 - fx.mean0).norm());
}

TEST_CASE("synthesis produces the requested count, reproducibly") {
    GanConfig cfg;
    cfg.d_z = 4;
    cfg.hidden = {8};
    cfg.seed = 3;
    auto bundle = make_gan(cfg, 6, 4);
    std::map<int, RowVec> sems;
    std::vector<int> classes{10, 11, 12, 13, 14, 15};
    for (int c : classes) sems[c] = randm(1, 4, 500 + static_cast<std::uint64_t>(c)).row(0);

    auto a = synthesize(bundle, sems, classes, 400, 9);
    CHECK(a.size() == 2400);
    for (const auto& f : a) {
        CHECK(f.data.size() == 6);
        CHECK(f.data.allFinite());
    }
    auto b = synthesize(bundle, sems, classes, 400, 9);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].class_id == b[i].class_id);
        CHECK((a[i].data - b[i].data).norm() == 0.0);
    }
    CHECK_THROWS_AS(synthesize(bundle, sems, {99}, 10, 1), std::invalid_argument);
}

TEST_CASE("divergence guard aborts training") {
    auto fx = two_class_features(10, 4, 3, 2000);
    GanConfig cfg;
    cfg.d_z = 3;
    cfg.hidden = {8};
    cfg.iters = 5;
    cfg.divergence_guard = 1e-12; // any nonzero loss trips it
    auto bundle = make_gan(cfg, 4, 3);
    CHECK_THROWS_WITH_AS(train_gan(bundle, fx.features, fx.semantics),
                         doctest::Contains("diverged"), std::runtime_error);
}

TEST_CASE("gan training validates inputs") {
    GanConfig cfg;
    cfg.d_z = 3;
    cfg.hidden = {8};
    auto bundle = make_gan(cfg, 4, 3);
    CHECK_THROWS_AS(train_gan(bundle, {}, {}), std::invalid_argument);
    GestureFeature f;
    f.sample_id = "x";
    f.class_id = 5;
    f.data = RowVec::Zero(4);
    CHECK_THROWS_WITH_AS(train_gan(bundle, {f}, {}), doctest::Contains("class 5"),
                         std::invalid_argument);
}

TEST_CASE("gan checkpoints round-trip") {
    GanConfig cfg;
    cfg.d_z = 4;
    cfg.hidden = {8, 6};
    cfg.seed = 21;
    auto bundle = make_gan(cfg, 5, 3);
    auto path = std::filesystem::temp_directory_path() / "zsugr_gan_ckpt.zt";
    bundle.save(path);
    auto loaded = GanBundle::load(path);
    CHECK(loaded.cfg.hidden == cfg.hidden);
    CHECK(loaded.feature_dim == 5);
    CHECK(loaded.d_sem == 3);
    for (const auto& [name, p] : bundle.gen_params.items())
        CHECK((loaded.gen_params.at(name).value() - p.value()).norm() == 0.0);
    for (const auto& [name, p] : bundle.critic_params.items())
        CHECK((loaded.critic_params.at(name).value() - p.value()).norm() == 0.0);
    std::filesystem::remove(path);
}
