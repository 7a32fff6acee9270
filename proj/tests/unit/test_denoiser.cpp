#include "loopshift/gaussian_oracle.hpp"
#include "loopshift/periodic_dataset.hpp"
#include "loopshift/toy_training.hpp"
#include "loopshift/toy_transformer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

using namespace loopshift;

namespace {

Matrix random_matrix(long rows, long cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Matrix m(rows, cols);
    for (long i = 0; i < m.size(); ++i) {
        m.data()[i] = normal(rng);
    }
    return m;
}

std::vector<int> iota_positions(std::size_t n) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    return p;
}

ToyArchitecture small_arch() {
    ToyArchitecture arch;
    arch.width = 16;
    arch.heads = 2;
    arch.head_dim = 8;
    arch.mlp_hidden = 24;
    arch.latent_dim = 4;
    arch.classes = 3;
    arch.max_context = 6;
    return arch;
}

RopeConfig rope_for(const ToyArchitecture& arch) {
    RopeConfig rope;
    rope.head_dim = arch.head_dim;
    return rope;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

} // namespace

TEST(Oracle, UnitGaussianPrior) {
    const NoiseSchedule sched = make_default_schedule();
    std::vector<double> row(6, 0.0);
    row[0] = 1.0;
    const GaussianPrior prior(Matrix::Zero(6, 3), row);
    std::mt19937_64 rng(1);
    const Matrix z = random_matrix(6, 3, rng);
    for (int t : {1, 250, 999}) {
        const Matrix expected = std::sqrt(1.0 - sched.alpha_bar(t)) * z;
        EXPECT_LT((analytic_eps(z, t, sched, prior) - expected).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Oracle, PriorMeanExplainsEverything) {
    const NoiseSchedule sched = make_default_schedule();
    std::mt19937_64 rng(2);
    const Matrix mean = random_matrix(8, 2, rng);
    const GaussianPrior prior(mean, make_periodic_prior(8, 2, 0.7).kernel());
    const int t = 400;
    const Matrix z = std::sqrt(sched.alpha_bar(t)) * mean;
    EXPECT_LT(analytic_eps(z, t, sched, prior).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Oracle, TwoFrameMatchesHandSolve) {
    const NoiseSchedule sched = make_default_schedule();
    const GaussianPrior prior(Matrix::Zero(2, 1), {1.0, 0.5});
    Matrix z(2, 1);
    z << 0.3, -1.2;
    const int t = 300;
    const double ab = sched.alpha_bar(t);
    // (ab S + (1 - ab) I) = [[a, b], [b, a]], inverted by the 2x2 adjugate.
    const double a = ab + (1.0 - ab);
    const double b = 0.5 * ab;
    const double det = a * a - b * b;
    const double y0 = (a * z(0, 0) - b * z(1, 0)) / det;
    const double y1 = (-b * z(0, 0) + a * z(1, 0)) / det;
    const double m0 = std::sqrt(ab) * (1.0 * y0 + 0.5 * y1);
    const double m1 = std::sqrt(ab) * (0.5 * y0 + 1.0 * y1);
    const double e0 = (z(0, 0) - std::sqrt(ab) * m0) / std::sqrt(1.0 - ab);
    const double e1 = (z(1, 0) - std::sqrt(ab) * m1) / std::sqrt(1.0 - ab);
    const Matrix spectral = analytic_eps(z, t, sched, prior);
    EXPECT_NEAR(spectral(0, 0), e0, 1e-12);
    EXPECT_NEAR(spectral(1, 0), e1, 1e-12);
    const GaussianOracleDenoiser oracle(prior, sched);
    const Matrix dense = oracle.predict_eps(z, t, iota_positions(2), RopeConfig{}, ConditionId{});
    EXPECT_NEAR(dense(0, 0), e0, 1e-12);
    EXPECT_NEAR(dense(1, 0), e1, 1e-12);
}

TEST(Oracle, SpectralAndDenseRoutesAgree) {
    const NoiseSchedule sched = make_default_schedule();
    std::mt19937_64 rng(3);
    for (std::size_t M : {4u, 8u, 16u, 15u}) {
        const GaussianOracleDenoiser oracle(make_periodic_prior(M, 3, 0.7), sched);
        const Matrix z = random_matrix(static_cast<long>(M), 3, rng);
        for (int t : {1, 20, 500, 1000}) {
            const Matrix dense = oracle.predict_eps(z, t, iota_positions(M), RopeConfig{}, ConditionId{});
            EXPECT_LT((dense - oracle.predict_cycle(z, t)).cwiseAbs().maxCoeff(), 1e-9) << M << " " << t;
        }
    }
}

TEST(Oracle, WindowUsesCyclicPositions) {
    // A window whose positions wrap must see the same covariance as the
    // equivalent contiguous window, because the prior is stationary.
    const NoiseSchedule sched = make_default_schedule();
    const GaussianOracleDenoiser oracle(make_periodic_prior(16, 2, 0.7), sched);
    std::mt19937_64 rng(4);
    const Matrix w = random_matrix(8, 2, rng);
    std::vector<int> wrapped(8);
    for (int i = 0; i < 8; ++i) {
        wrapped[static_cast<std::size_t>(i)] = (12 + i) % 16;
    }
    const Matrix a = oracle.predict_eps(w, 600, wrapped, RopeConfig{}, ConditionId{});
    const Matrix b = oracle.predict_eps(w, 600, iota_positions(8), RopeConfig{}, ConditionId{});
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Oracle, PriorValidation) {
    EXPECT_THROW(GaussianPrior(Matrix::Zero(3, 1), {1.0, 0.5, 0.2}), ConfigError);
    EXPECT_THROW(GaussianPrior(Matrix::Zero(2, 1), {1.0, 2.0}), ConfigError);
    EXPECT_THROW(GaussianPrior(Matrix::Zero(3, 1), {1.0, 0.5}), ConfigError);
    const GaussianPrior p = make_periodic_prior(9, 1, 0.7);
    for (std::size_t i = 1; i < 9; ++i) {
        EXPECT_EQ(p.kernel()[i], p.kernel()[9 - i]);
    }
    for (double lambda : p.eigenvalues()) {
        EXPECT_GT(lambda, 0.0);
    }
}

TEST(Oracle, BeatsConstantPredictor) {
    // For any constant c, E|eps - c|^2 = E|eps|^2 + |c|^2, so the zero
    // predictor is the best constant one.
    const NoiseSchedule sched = make_default_schedule();
    const GaussianPrior prior = make_periodic_prior(8, 1, 0.7);
    const Eigen::LLT<Matrix> chol(prior.covariance_matrix());
    const Matrix L = chol.matrixL();
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> pick_t(1, 1000);
    double oracle_se = 0.0;
    double zero_se = 0.0;
    const int samples = 10000;
    for (int s = 0; s < samples; ++s) {
        const Matrix x0 = L * random_matrix(8, 1, rng);
        const Matrix eps = random_matrix(8, 1, rng);
        const int t = pick_t(rng);
        const Matrix z = add_noise(x0, eps, t, sched);
        oracle_se += (analytic_eps(z, t, sched, prior) - eps).squaredNorm();
        zero_se += eps.squaredNorm();
    }
    EXPECT_LT(oracle_se, zero_se);
    EXPECT_LT(oracle_se / zero_se, 0.95);
}

TEST(Dataset, TwoDimensionalUnitCircle) {
    const std::size_t N = 12;
    const PeriodicDataset data(N, 2, {ClassProfile{N, {1.0}}});
    const Matrix seq = data.sequence(ConditionId{0}, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(N);
        EXPECT_NEAR(seq(static_cast<long>(i), 0), std::sin(a), 1e-15);
        EXPECT_NEAR(seq(static_cast<long>(i), 1), std::cos(a), 1e-15);
    }
}

TEST(Dataset, CyclicByConstruction) {
    const PeriodicDataset data = make_periodic_dataset(4, 16, 8, 7);
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const PeriodicSample s = data.sample(rng);
        const Matrix across = data.frames(s.condition, s.phase, 15, 2);
        EXPECT_TRUE(bit_equal(across.row(1), s.frames.row(0)));
        EXPECT_TRUE(bit_equal(data.frames(s.condition, s.phase, 16, 16), s.frames));
    }
    EXPECT_EQ(data.profile(ConditionId{1}).period, 8u);
    EXPECT_EQ(data.profile(ConditionId{2}).period, 16u);
    EXPECT_THROW(PeriodicDataset(16, 2, {ClassProfile{5, {1.0}}}), ConfigError);
    EXPECT_THROW(make_periodic_dataset(2, 3, 8, 1), ConfigError);
    EXPECT_THROW(make_periodic_dataset(2, 8, 1, 1), ConfigError);
}

TEST(Dataset, UnitSinusoidVarianceIsHalf) {
    const PeriodicDataset data(8, 2, {ClassProfile{8, {1.0}}});
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> phase(0.0, 1.0);
    double sum = 0.0;
    double sq = 0.0;
    const int samples = 20000;
    for (int s = 0; s < samples; ++s) {
        const double x = data.frames(ConditionId{0}, phase(rng), 3, 1)(0, 0);
        sum += x;
        sq += x * x;
    }
    const double mean = sum / samples;
    EXPECT_NEAR(sq / samples - mean * mean, 0.5, 0.02);
}

TEST(Toy, ZeroWeightsGiveOutputBias) {
    const ToyArchitecture arch = small_arch();
    ToyTransformerParams<double> p = ToyTransformerParams<double>::zeros(arch);
    p.output_bias << 0.5, -1.0, 2.0, 0.25;
    const ToyTransformerDenoiser den(p);
    std::mt19937_64 rng(9);
    const Matrix out = den.predict_eps(random_matrix(5, 4, rng), 123, iota_positions(5), rope_for(arch), ConditionId{1});
    for (long r = 0; r < out.rows(); ++r) {
        EXPECT_EQ(out.row(r), p.output_bias);
    }
}

TEST(Toy, PermutationEquivariance) {
    const ToyArchitecture arch = small_arch();
    const ToyTransformerDenoiser den(init_toy_params<double>(arch, 10));
    std::mt19937_64 rng(11);
    const Matrix w = random_matrix(6, 4, rng);
    const std::vector<int> positions{0, 1, 2, 3, 4, 5};
    const std::vector<int> perm{4, 0, 5, 2, 1, 3};
    Matrix pw(6, 4);
    std::vector<int> pp(6);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        pw.row(static_cast<long>(i)) = w.row(perm[i]);
        pp[i] = positions[static_cast<std::size_t>(perm[i])];
    }
    const Matrix out = den.predict_eps(w, 400, positions, rope_for(arch), ConditionId{2});
    const Matrix pout = den.predict_eps(pw, 400, pp, rope_for(arch), ConditionId{2});
    for (std::size_t i = 0; i < perm.size(); ++i) {
        EXPECT_LT((pout.row(static_cast<long>(i)) - out.row(perm[i])).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Toy, DeterministicAndValidated) {
    const ToyArchitecture arch = small_arch();
    const ToyTransformerDenoiser den(init_toy_params<double>(arch, 12));
    std::mt19937_64 rng(13);
    const Matrix w = random_matrix(6, 4, rng);
    const Matrix a = den.predict_eps(w, 50, iota_positions(6), rope_for(arch), ConditionId{0});
    const Matrix b = den.predict_eps(w, 50, iota_positions(6), rope_for(arch), ConditionId{0});
    EXPECT_TRUE(bit_equal(a, b));
    EXPECT_THROW(den.predict_eps(w, 50, iota_positions(6), rope_for(arch), ConditionId{3}), ConfigError);
    EXPECT_THROW(den.predict_eps(random_matrix(7, 4, rng), 50, iota_positions(7), rope_for(arch), ConditionId{0}),
                 ConfigError);
    EXPECT_THROW(den.predict_eps(w, 50, iota_positions(5), rope_for(arch), ConditionId{0}), ConfigError);
    ToyArchitecture odd = arch;
    odd.head_dim = 7;
    EXPECT_THROW(odd.validate(), ConfigError);
}

TEST(Toy, ParameterCountIsReported) {
    const ToyArchitecture arch;
    const ToyTransformerParams<float> p = init_toy_params<float>(arch, 1);
    const std::size_t W = 64, D = 8, H = 128, C = 4;
    const std::size_t per_layer = 4 * W + (W * 3 * W + 3 * W) + (W * W + W) + (W * H + H) + (H * W + W);
    const std::size_t expected = (D * W + W) + (W * W + W) + C * W + 2 * per_layer + 2 * W + (W * D + D);
    EXPECT_EQ(p.parameter_count(), expected);
    EXPECT_TRUE(p.all_finite());
}

TEST(Toy, GradientMatchesCentralDifferences) {
    const ToyArchitecture arch = small_arch();
    ToyTransformerParams<double> params = init_toy_params<double>(arch, 14);
    // Non-trivial layer-norm and bias values so every tensor carries gradient.
    std::mt19937_64 rng(15);
    std::normal_distribution<double> normal;
    for (auto& [name, tensor] : params.tensors()) {
        if (name.find("bias") != std::string::npos || name.find("gain") != std::string::npos) {
            for (long i = 0; i < tensor->size(); ++i) {
                tensor->data()[i] += 0.3 * normal(rng);
            }
        }
    }
    const std::size_t f = 5;
    const std::vector<int> positions{0, 1, 2, 3, 4};
    const RopeConfig rope = rope_for(arch);
    const std::vector<int> timesteps{37, 811};
    const std::vector<ConditionId> conditions{ConditionId{0}, ConditionId{2}};
    const Matrix input = random_matrix(static_cast<long>(2 * f), 4, rng);
    const Matrix target = random_matrix(static_cast<long>(2 * f), 4, rng);

    auto loss_of = [&](const ToyTransformerParams<double>& p) {
        const Matrix out = toy_forward_batch<double>(p, input, timesteps, conditions, positions, rope);
        return mse_loss<double>(out, target, nullptr);
    };

    ToyForwardCache<double> cache;
    const Matrix out = toy_forward_batch<double>(params, input, timesteps, conditions, positions, rope, &cache);
    Matrix d_out;
    mse_loss<double>(out, target, &d_out);
    ToyTransformerParams<double> grads = ToyTransformerParams<double>::zeros(arch);
    toy_backward<double>(params, cache, positions, rope, d_out, grads);

    auto tensors = params.tensors();
    auto grad_tensors = grads.tensors();
    std::vector<std::pair<std::size_t, long>> coords;
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        for (long i = 0; i < tensors[k].second->size(); ++i) {
            coords.emplace_back(k, i);
        }
    }
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(100);
    // Make sure every tensor is probed at least once as well.
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        coords.emplace_back(k, static_cast<long>(rng() % static_cast<std::uint64_t>(tensors[k].second->size())));
    }
    const double h = 1e-5;
    int checked = 0;
    for (const auto& [k, i] : coords) {
        double& w = tensors[k].second->data()[i];
        const double saved = w;
        w = saved + h;
        const double up = loss_of(params);
        w = saved - h;
        const double down = loss_of(params);
        w = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = grad_tensors[k].second->data()[i];
        const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-7});
        EXPECT_LT(std::abs(numeric - analytic) / scale, 1e-3) << tensors[k].first << "[" << i << "]";
        ++checked;
    }
    EXPECT_GE(checked, 100);
}

TEST(Denoisers, ConformOnRandomShapes) {
    const NoiseSchedule sched = make_default_schedule();
    std::mt19937_64 rng(16);
    const ToyArchitecture arch = small_arch();
    const ToyTransformerDenoiser toy(init_toy_params<double>(arch, 17));
    std::uniform_int_distribution<int> pick_t(1, 1000);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t M = 2 + rng() % 15;
        const std::size_t D = 1 + rng() % 4;
        const GaussianOracleDenoiser oracle(make_periodic_prior(M, D, 0.5 + 0.1 * static_cast<double>(rng() % 10)),
                                            sched);
        const std::size_t f = 1 + rng() % M;
        std::vector<int> positions(f);
        const std::size_t start = rng() % M;
        for (std::size_t i = 0; i < f; ++i) {
            positions[i] = static_cast<int>((start + i) % M);
        }
        const Matrix w = random_matrix(static_cast<long>(f), static_cast<long>(D), rng);
        const Matrix e = oracle.predict_eps(w, pick_t(rng), positions, RopeConfig{}, ConditionId{});
        EXPECT_EQ(e.rows(), w.rows());
        EXPECT_EQ(e.cols(), w.cols());
        EXPECT_TRUE(e.allFinite());

        const std::size_t tf = 1 + rng() % 6;
        const Matrix tw = random_matrix(static_cast<long>(tf), 4, rng);
        const Matrix te = toy.predict_eps(tw, pick_t(rng), iota_positions(tf), rope_for(arch),
                                          ConditionId{static_cast<std::uint32_t>(rng() % 3)});
        EXPECT_EQ(te.rows(), tw.rows());
        EXPECT_EQ(te.cols(), tw.cols());
        EXPECT_TRUE(te.allFinite());
    }
}

namespace {

TrainConfig small_train_config() {
    TrainConfig cfg;
    cfg.arch = small_arch();
    cfg.arch.latent_dim = 4;
    cfg.arch.classes = 2;
    cfg.dataset_cycle = 8;
    cfg.batch = 4;
    cfg.steps = 4;
    return cfg;
}

} // namespace

TEST(Training, RejectsZeroSteps) {
    TrainConfig cfg = small_train_config();
    cfg.steps = 0;
    const PeriodicDataset data = make_periodic_dataset(2, 8, 4, 7);
    EXPECT_THROW(train_toy(cfg, data, make_default_schedule()), ConfigError);
}

TEST(Training, OneStepSmoke) {
    TrainConfig cfg = small_train_config();
    cfg.steps = 1;
    const PeriodicDataset data = make_periodic_dataset(2, 8, 4, 7);
    const TrainResult r = train_toy(cfg, data, make_default_schedule());
    ASSERT_EQ(r.losses.size(), 1u);
    EXPECT_TRUE(std::isfinite(r.losses[0].second));
    EXPECT_TRUE(r.state.params.all_finite());
    EXPECT_EQ(r.state.step, 1);
}

TEST(Training, ResumeIsBitIdentical) {
    const TrainConfig cfg = small_train_config();
    const PeriodicDataset data = make_periodic_dataset(2, 8, 4, 7);
    const NoiseSchedule sched = make_default_schedule();
    const TrainResult full = train_toy(cfg, data, sched);
    TrainConfig half = cfg;
    half.steps = 2;
    const TrainResult first = train_toy(half, data, sched);
    const TrainResult second = train_toy(half, data, sched, first.state);
    EXPECT_EQ(second.state.step, 4);
    EXPECT_EQ(second.losses.front().first, 2);
    auto a = full.state.params.tensors();
    auto b = second.state.params.tensors();
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(*a[k].second, *b[k].second) << a[k].first;
    }
    EXPECT_EQ(full.losses.back().second, second.losses.back().second);
}

TEST(Training, DivergenceIsReported) {
    TrainConfig cfg = small_train_config();
    cfg.learning_rate = 1e38;
    cfg.steps = 50;
    const PeriodicDataset data = make_periodic_dataset(2, 8, 4, 7);
    EXPECT_THROW(train_toy(cfg, data, make_default_schedule()), NumericError);
}

TEST(Training, ShortRunReducesLoss) {
    TrainConfig cfg = small_train_config();
    cfg.steps = 300;
    cfg.batch = 16;
    const PeriodicDataset data = make_periodic_dataset(2, 8, 4, 7);
    const TrainResult r = train_toy(cfg, data, make_default_schedule());
    for (const auto& [step, loss] : r.losses) {
        EXPECT_TRUE(std::isfinite(loss));
    }
    EXPECT_LT(smoothed_loss_ratio(r.losses), 1.0);
    EXPECT_TRUE(r.state.params.all_finite());
}
