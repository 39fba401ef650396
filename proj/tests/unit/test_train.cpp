#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "mmcvae/train.hpp"
#include "oracles.hpp"
#include "toy.hpp"

using namespace mmcvae;

namespace {

SynthData small_synth(std::uint64_t seed, std::size_t n = 300) {
    SynthConfig cfg;
    cfg.n_target = n;
    cfg.m_background = n;
    cfg.seed = seed;
    Rng rng(seed);
    return synth_contrastive(cfg, rng);
}

MmcVaeModel model_for(const SynthData& data, std::size_t hidden, std::uint64_t seed, bool zero_bias = false) {
    ModelShape shape;
    shape.input_dim = data.target.dim();
    shape.background_dim = 4;
    shape.salient_dim = 2;
    shape.hidden_dim = hidden;
    shape.zero_bias_decoder = zero_bias;
    Rng rng(seed);
    return MmcVaeModel::initialize(shape, rng);
}

}  // namespace

TEST(TrainConfig, Defaults) {
    const TrainConfig cfg;
    EXPECT_EQ(cfg.lambda1, 1000.0);
    EXPECT_EQ(cfg.lambda2, 10000.0);
    EXPECT_EQ(cfg.lr, 0.001);
    EXPECT_EQ(cfg.beta1, 0.9);
    EXPECT_EQ(cfg.beta2, 0.999);
    EXPECT_EQ(cfg.eps, 1e-8);
    EXPECT_EQ(cfg.batch_size, 128u);
    EXPECT_EQ(cfg.epochs, 200u);
    EXPECT_EQ(cfg.kernel.mode, KernelConfig::Mode::median_heuristic);
    EXPECT_NO_THROW(cfg.validate());
}

TEST(TrainConfig, Validation) {
    auto with = [](auto mutate) {
        TrainConfig c;
        mutate(c);
        return c;
    };
    EXPECT_THROW(with([](TrainConfig& c) { c.lambda1 = -1.0; }).validate(), ConfigError);
    EXPECT_THROW(with([](TrainConfig& c) { c.lambda2 = -1.0; }).validate(), ConfigError);
    EXPECT_THROW(with([](TrainConfig& c) { c.lr = 0.0; }).validate(), ConfigError);
    EXPECT_THROW(with([](TrainConfig& c) { c.beta1 = 1.0; }).validate(), ConfigError);
    EXPECT_THROW(with([](TrainConfig& c) { c.beta2 = -0.1; }).validate(), ConfigError);
    EXPECT_THROW(with([](TrainConfig& c) { c.batch_size = 1; }).validate(), ConfigError);
    EXPECT_THROW(with([](TrainConfig& c) { c.kernel = KernelConfig::fixed(-1.0); }).validate(), ConfigError);
    EXPECT_NO_THROW(with([](TrainConfig& c) { c.beta1 = 0.0; }).validate());
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    Rng rng(1);
    Param p("p", oracle::random_matrix(rng, 3, 2));
    const Matrix before = p.value;
    std::vector<Param*> params{&p};
    AdamState state = AdamState::for_params(params);
    for (int i = 0; i < 5; ++i) {
        adam_step(params, state, 0.001, 0.9, 0.999, 1e-8);
    }
    EXPECT_EQ(p.value, before);
    EXPECT_EQ(state.t, 5u);
}

TEST(Adam, FirstStepMagnitude) {
    Param p("p", Matrix(1, 1, 0.5));
    std::vector<Param*> params{&p};
    AdamState state = AdamState::for_params(params);
    p.grad(0, 0) = 1.0;
    adam_step(params, state, 0.001, 0.9, 0.999, 1e-8);
    EXPECT_NEAR(p.value(0, 0), 0.5 - 0.001 / (1.0 + 1e-8), 1e-15);
    EXPECT_EQ(p.grad(0, 0), 0.0);
}

TEST(Adam, MatchesHandRecursion) {
    Param p("p", Matrix(1, 2));
    std::vector<Param*> params{&p};
    AdamState state = AdamState::for_params(params);
    double m = 0.0, v = 0.0, x = 0.0;
    const double b1 = 0.8, b2 = 0.99, lr = 0.01, eps = 1e-6;
    for (int t = 1; t <= 20; ++t) {
        const double g = std::sin(t) + 0.3;
        p.grad(0, 0) = g;
        p.grad(0, 1) = 0.0;
        adam_step(params, state, lr, b1, b2, eps);
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
        EXPECT_NEAR(p.value(0, 0), x, 1e-12);
        EXPECT_EQ(p.value(0, 1), 0.0);
    }
}

TEST(Adam, ConstantGradientStepConvergesToLearningRate) {
    Param p("p", Matrix(1, 1));
    std::vector<Param*> params{&p};
    AdamState state = AdamState::for_params(params);
    double previous = 0.0, step = 0.0;
    for (int t = 0; t < 5000; ++t) {
        p.grad(0, 0) = -3.0;
        adam_step(params, state, 0.001, 0.9, 0.999, 1e-8);
        step = p.value(0, 0) - previous;
        previous = p.value(0, 0);
    }
    EXPECT_NEAR(step, 0.001, 1e-8);
}

TEST(Adam, NonFiniteGradientAbortsAndNamesParam) {
    Param a("alpha", Matrix(1, 2, 1.0)), b("beta", Matrix(1, 1, 2.0));
    std::vector<Param*> params{&a, &b};
    AdamState state = AdamState::for_params(params);
    a.grad(0, 0) = 1.0;
    b.grad(0, 0) = std::nan("");
    try {
        adam_step(params, state, 0.1, 0.9, 0.999, 1e-8);
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
    }
    EXPECT_EQ(a.value, Matrix(1, 2, 1.0));
    EXPECT_EQ(state.t, 0u);
}

TEST(MakeBatches, EqualSizesOneStep) {
    Rng rng(2);
    const auto batches = make_batches(8, 8, 8, rng);
    ASSERT_EQ(batches.size(), 1u);
    EXPECT_EQ(std::set<std::size_t>(batches[0].target.begin(), batches[0].target.end()).size(), 8u);
    EXPECT_EQ(std::set<std::size_t>(batches[0].background.begin(), batches[0].background.end()).size(), 8u);
}

TEST(MakeBatches, SmallerSetCycles) {
    Rng rng(3);
    const auto batches = make_batches(10, 4, 4, rng);
    ASSERT_EQ(batches.size(), 3u);
    EXPECT_EQ(batches[0].target.size(), 4u);
    EXPECT_EQ(batches[1].target.size(), 4u);
    EXPECT_EQ(batches[2].target.size(), 2u);
    std::multiset<std::size_t> targets;
    for (const auto& b : batches) {
        EXPECT_EQ(b.background.size(), b.target.size());
        targets.insert(b.target.begin(), b.target.end());
        for (std::size_t i : b.background) {
            EXPECT_LT(i, 4u);
        }
        EXPECT_EQ(std::set<std::size_t>(b.background.begin(), b.background.end()).size(), b.background.size());
    }
    EXPECT_EQ(targets.size(), 10u);
    EXPECT_EQ(std::set<std::size_t>(targets.begin(), targets.end()).size(), 10u);
    // The first 4 background draws are one full shuffle.
    EXPECT_EQ(std::set<std::size_t>(batches[0].background.begin(), batches[0].background.end()).size(), 4u);
}

TEST(MakeBatches, LargerBackgroundVisitedOnce) {
    Rng rng(4);
    const auto batches = make_batches(3, 11, 5, rng);
    ASSERT_EQ(batches.size(), 3u);
    std::multiset<std::size_t> seen;
    for (const auto& b : batches) {
        EXPECT_EQ(b.target.size(), b.background.size());
        seen.insert(b.background.begin(), b.background.end());
    }
    EXPECT_EQ(seen.size(), 11u);
    EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 11u);
}

TEST(MakeBatches, Deterministic) {
    Rng a(5), b(5), c(6);
    const auto x = make_batches(37, 23, 8, a), y = make_batches(37, 23, 8, b), z = make_batches(37, 23, 8, c);
    ASSERT_EQ(x.size(), y.size());
    bool differs = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_EQ(x[i].target, y[i].target);
        EXPECT_EQ(x[i].background, y[i].background);
        differs = differs || x[i].target != z[i].target;
    }
    EXPECT_TRUE(differs);
}

TEST(MakeBatches, StepCountProperty) {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(100), m = 1 + rng.uniform_index(100), bs = 2 + rng.uniform_index(30);
        const auto batches = make_batches(n, m, bs, rng);
        EXPECT_EQ(batches.size(), (std::max(n, m) + bs - 1) / bs);
    }
}

TEST(Fit, ZeroEpochsLeavesModelUnchanged) {
    const SynthData data = small_synth(8, 50);
    MmcVaeModel model = model_for(data, 16, 9);
    const MmcVaeModel before = model;
    TrainConfig cfg;
    cfg.epochs = 0;
    const TrainLog log = fit(model, data.target, data.background, cfg);
    EXPECT_TRUE(log.epochs.empty());
    const auto a = model.parameters();
    const auto b = before.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i]->value, b[i]->value);
    }
}

TEST(Fit, DimensionMismatchIsAnError) {
    const SynthData data = small_synth(10, 50);
    ModelShape shape;
    shape.input_dim = 7;
    Rng rng(11);
    MmcVaeModel model = MmcVaeModel::initialize(shape, rng);
    EXPECT_THROW(fit(model, data.target, data.background, TrainConfig{}), DimensionError);
}

TEST(Fit, DeterministicParametersAndLog) {
    const SynthData data = small_synth(12, 200);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 64;
    cfg.seed = 13;
    MmcVaeModel a = model_for(data, 32, 14), b = model_for(data, 32, 14);
    const TrainLog la = fit(a, data.target, data.background, cfg);
    const TrainLog lb = fit(b, data.target, data.background, cfg);
    const auto pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
    }
    ASSERT_EQ(la.epochs.size(), 3u);
    for (std::size_t e = 0; e < 3; ++e) {
        EXPECT_EQ(la.epochs[e].mean.total, lb.epochs[e].mean.total);
        EXPECT_TRUE(std::isfinite(la.epochs[e].mean.total));
        EXPECT_EQ(la.epochs[e].epoch, e);
    }
    EXPECT_EQ(la.seed, 13u);
}

TEST(Fit, CallbackSeesEveryEpoch) {
    const SynthData data = small_synth(15, 60);
    TrainConfig cfg;
    cfg.epochs = 4;
    MmcVaeModel model = model_for(data, 8, 16);
    std::vector<std::size_t> seen;
    fit(model, data.target, data.background, cfg, [&](const EpochRecord& r) { seen.push_back(r.epoch); });
    EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Fit, ZeroBiasDecoderStaysExactlyZero) {
    const SynthData data = small_synth(17, 200);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 32;
    cfg.zero_bias_decoder = true;
    MmcVaeModel model = model_for(data, 32, 18, true);
    fit(model, data.target, data.background, cfg);
    EXPECT_EQ(model.decoder.hidden_bias.value, Matrix(1, 32));
    EXPECT_EQ(model.decoder.output_bias.value, Matrix(1, data.target.dim()));
    EXPECT_NE(model.encoder_z.hidden_bias.value, Matrix(1, 32));
}

TEST(Fit, CoupledVaesWithoutPenaltiesReduceLoss) {
    const SynthData data = small_synth(19, 400);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.lambda1 = 0.0;
    cfg.lambda2 = 0.0;
    cfg.batch_size = 64;
    MmcVaeModel model = model_for(data, 64, 20);
    const TrainLog log = fit(model, data.target, data.target, cfg);
    ASSERT_EQ(log.epochs.size(), 50u);
    double early = 0.0, late = 0.0;
    for (std::size_t e = 0; e < 5; ++e) {
        early += log.epochs[e].mean.total;
        late += log.epochs[45 + e].mean.total;
    }
    EXPECT_LT(late, early);
    EXPECT_LT(late / 5.0, 0.5 * early / 5.0);
}

TEST(TrainLog, JsonLinesOnePerEpoch) {
    const SynthData data = small_synth(21, 60);
    TrainConfig cfg;
    cfg.epochs = 3;
    MmcVaeModel model = model_for(data, 8, 22);
    const TrainLog log = fit(model, data.target, data.background, cfg);
    const auto dir = oracle::scratch_dir("trainlog");
    write_train_log(log, dir / "log.jsonl");
    std::ifstream in(dir / "log.jsonl");
    std::string line;
    std::size_t count = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        ++count;
        EXPECT_EQ(j.at("epoch").get<std::size_t>(), count - 1);
        for (const char* key : {"recon_target", "kl_z_target", "kl_s_target", "recon_background", "kl_z_background",
                                "mmd_salient_dirac", "mmd_background_match", "total"}) {
            EXPECT_TRUE(j.contains(key)) << key;
        }
        EXPECT_EQ(j.at("total").get<double>(), log.epochs[count - 1].mean.total);
    }
    EXPECT_EQ(count, 3u);
}
