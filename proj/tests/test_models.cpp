#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <liteinc/counters.hpp>
#include <liteinc/nn.hpp>

#include <cmath>
#include <set>

using namespace liteinc;

namespace {

ModelSpec small_spec(std::vector<int> kernels, bool maxpool, int depth = 3, int df = 16,
                     int db = 8, int cin = 4, int classes = 3) {
    ModelSpec ms;
    ms.conv_kernels = std::move(kernels);
    ms.use_maxpool_branch = maxpool;
    ms.filters_per_branch = df;
    ms.bottleneck_width = db;
    ms.depth = depth;
    ms.input_channels = cin;
    ms.classes = classes;
    return ms;
}

Tensor<double> random_input(int B, int C, int T, uint64_t seed) {
    Rng rng(seed);
    Tensor<double> x({B, C, T});
    for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform(-1, 1);
    return x;
}

}  // namespace

TEST_CASE("receptive field arithmetic") {
    CHECK(receptive_field(3, 6) == 13);
    CHECK(receptive_field(7, 6) == 37);
    CHECK(receptive_field(3, 1) == 3);
    CHECK_THROWS_AS(receptive_field(0, 1), std::invalid_argument);
}

TEST_CASE("inception module output channel counts") {
    Rng rng(1);
    InceptionModuleSpec one_one;
    one_one.conv_kernels = {3};
    one_one.use_maxpool_branch = true;
    one_one.filters_per_branch = 128;
    one_one.bottleneck_width = 64;
    one_one.input_channels = 15;
    InceptionBlock<float> blk(one_one, rng);
    Tensor<float> x({1, 15, 20}, 0.5f);
    CHECK(blk.forward(x, NormMode::Eval).shape() == std::vector<int>{1, 256, 20});

    InceptionModuleSpec three_one = one_one;
    three_one.conv_kernels = {3, 5, 7};
    InceptionBlock<float> blk3(three_one, rng);
    CHECK(blk3.forward(x, NormMode::Eval).shape() == std::vector<int>{1, 512, 20});
}

TEST_CASE("module weight enumeration equals the analytic expression") {
    InceptionModuleSpec s;
    s.conv_kernels = {3};
    s.use_maxpool_branch = true;
    s.filters_per_branch = 128;
    s.bottleneck_width = 64;
    s.input_channels = 15;
    CHECK(analytic_module_weights(s) == 960 + 24576 + 1920);
    CHECK(analytic_module_weights(s) == 27456);

    InceptionModuleSpec s3 = s;
    s3.conv_kernels = {3, 5, 7};
    CHECK(analytic_module_weights(s3) == 960 + 122880 + 1920);
    CHECK(analytic_module_weights(s3) == 125760);

    // conv-branch weight term ratio (k1+k2+k3)/k = 5 exactly
    const int64_t fixed = 960 + 1920;
    CHECK((analytic_module_weights(s3) - fixed) == 5 * (analytic_module_weights(s) - fixed));

    // enumeration oracle: walk the built module's tensors
    Rng rng(2);
    InceptionBlock<float> blk(s, rng);
    std::vector<ParamRef<float>> params;
    blk.collect("block0", params);
    int64_t conv_weights = 0;
    for (auto& p : params)
        if (p.category == ParamCategory::ConvWeight) conv_weights += p.tensor.numel();
    CHECK(conv_weights == 27456);

    InceptionBlock<float> blk3(s3, rng);
    params.clear();
    blk3.collect("block0", params);
    conv_weights = 0;
    for (auto& p : params)
        if (p.category == ParamCategory::ConvWeight) conv_weights += p.tensor.numel();
    CHECK(conv_weights == 125760);
}

TEST_CASE("backbone shape contract and residual junction count") {
    ModelSpec ms;  // production defaults: depth 6, filters 128, bottleneck 64, 15 ch, 19 classes
    auto model = build_model<float>(ms, 7);
    auto logits = model->forward(Tensor<float>({1, 15, 256}, 0.1f));
    CHECK(logits.shape() == std::vector<int>{1, 19});

    CHECK(model->residual_junctions() == 2);  // depth 6, period 3
}

TEST_CASE("count_params: enumeration matches analytics for every module") {
    for (auto kernels : {std::vector<int>{3}, std::vector<int>{3, 5}, std::vector<int>{3, 5, 7}}) {
        ModelSpec ms;
        ms.conv_kernels = kernels;
        auto model = build_model<float>(ms, 3);
        auto rep = count_params(*model);
        REQUIRE(rep.modules.size() == 6);
        for (auto& m : rep.modules) {
            CHECK(m.enumerated == m.analytic);
            CHECK(m.enumerated > 0);
        }
        // biases and BN affine are reported as their own categories
        std::set<std::string> cats;
        for (auto& [c, n] : rep.per_category) cats.insert(c);
        CHECK(cats.count("conv_weight") == 1);
        CHECK(cats.count("conv_bias") == 1);
        CHECK(cats.count("bn_affine") == 1);
    }
}

TEST_CASE("branch-count compression: params ordering and 1+1 / 3+1 ratio") {
    auto total = [](std::vector<int> kernels) {
        ModelSpec ms;
        ms.conv_kernels = std::move(kernels);
        auto model = build_model<float>(ms, 5);
        return count_params(*model).total;
    };
    const int64_t p11 = total({3});
    const int64_t p21 = total({3, 5});
    const int64_t p31 = total({3, 5, 7});
    CHECK(p11 < p21);
    CHECK(p21 < p31);
    const double ratio = static_cast<double>(p11) / static_cast<double>(p31);
    CHECK(ratio >= 0.25);
    CHECK(ratio <= 0.35);
}

TEST_CASE("all four branch configs build and emit finite outputs") {
    struct Cfg {
        std::vector<int> kernels;
        bool maxpool;
    };
    for (auto cfg : {Cfg{{3}, false}, Cfg{{3}, true}, Cfg{{3, 5}, true}, Cfg{{3, 5, 7}, true}}) {
        auto model = build_model<float>(small_spec(cfg.kernels, cfg.maxpool), 11);
        auto y = model->forward(Tensor<float>({2, 4, 32}, 0.3f), NormMode::Eval);
        for (float v : y.value()) CHECK(std::isfinite(v));
    }
}

TEST_CASE("builders are deterministic given a seed") {
    auto a = build_model<float>(small_spec({3}, true), 99);
    auto b = build_model<float>(small_spec({3}, true), 99);
    auto pa = a->named_params();
    auto pb = b->named_params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(pa[i].tensor.value() == pb[i].tensor.value());
    }
}

TEST_CASE("SE gate: zeroed output layer is an identity map") {
    Rng rng(13);
    SEGate<double> gate({4, 2}, rng);  // fc2 starts at zero
    Tensor<double> x = random_input(2, 4, 8, 5);
    auto y = gate.forward(x);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]));
    for (double s : gate.last_gate) CHECK(s == doctest::Approx(1.0));
}

TEST_CASE("SE gate weights stay in (0.5, 1.5) for any parameters") {
    Rng rng(17);
    SEGate<double> gate({6, 2}, rng);
    // scramble both layers with large values
    for (auto& v : gate.fc2.w.value()) v = rng.uniform(-30, 30);
    for (auto& v : gate.fc2.b.value()) v = rng.uniform(-30, 30);
    auto x = random_input(3, 6, 10, 23);
    gate.forward(x);
    for (double s : gate.last_gate) {
        CHECK(s > 0.5);
        CHECK(s < 1.5);
    }
}

TEST_CASE("SE gate closed-form check on M=2") {
    Rng rng(19);
    SEGate<double> gate({2, 2}, rng);  // hidden = 1
    gate.fc1.w.value() = {0.5, -0.25};
    gate.fc1.b.value() = {0.1};
    gate.fc2.w.value() = {2.0, -1.0};
    gate.fc2.b.value() = {0.3, -0.2};
    Tensor<double> x({1, 2, 2}, {1.0, 3.0, -2.0, 0.0});  // channel means: 2, -1
    gate.forward(x);
    const double h = std::max(0.0, 0.5 * 2.0 + (-0.25) * (-1.0) + 0.1);  // 1.35
    const double s0 = 1.0 / (1.0 + std::exp(-(2.0 * h + 0.3))) + 0.5;
    const double s1 = 1.0 / (1.0 + std::exp(-(-1.0 * h - 0.2))) + 0.5;
    CHECK(gate.last_gate[0] == doctest::Approx(s0).epsilon(1e-12));
    CHECK(gate.last_gate[1] == doctest::Approx(s1).epsilon(1e-12));
}

TEST_CASE("hybrid encoder: attention rows sum to 1 and length follows downsampling") {
    ModelSpec ms = small_spec({3}, true, 3, 8, 4, 4, 2);
    ms.kind = "hybrid";
    ms.d_model = 8;
    ms.heads = 2;
    ms.encoder_layers = 2;
    ms.ff_width = 16;
    ms.dropout = 0.0;
    ms.attn_downsample = 4;
    HybridModel<double> model(ms, 31);

    const int T = 30;  // ceil(30/4) = 8
    auto y = model.forward(random_input(2, 4, T, 41), NormMode::Eval);
    CHECK(y.shape() == std::vector<int>{2, 2});

    const int Ts = (T + ms.attn_downsample - 1) / ms.attn_downsample;
    REQUIRE(model.last_attention().size() == 2);
    for (auto& probs : model.last_attention()) {
        REQUIRE(static_cast<int>(probs.size()) == 2 * ms.heads * Ts * Ts);
        for (int row = 0; row < 2 * ms.heads * Ts; ++row) {
            double sum = 0;
            for (int j = 0; j < Ts; ++j) sum += probs[static_cast<size_t>(row) * Ts + j];
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }

    ModelSpec bad = ms;
    bad.d_model = 9;  // not divisible by heads
    CHECK_THROWS_AS(build_model<double>(bad, 1), std::invalid_argument);
}

TEST_CASE("full-model gradient checks (64-bit, eval-mode normalization)") {
    // depth-3, 16-filter backbone w.r.t. the input
    {
        auto model = build_model<double>(small_spec({3}, true, 3, 16, 8, 3, 3), 51);
        auto f = [&](std::vector<Tensor<double>>& xs) {
            return nll_mean(log_softmax_t(model->forward(xs[0], NormMode::Eval), 1.0), {1});
        };
        Tensor<double> x = random_input(1, 3, 10, 53);
        std::vector<Tensor<double>> in{x};
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);
    }
    // 2-module composite, checking input and a parameter tensor jointly
    {
        auto model = build_model<double>(small_spec({3}, true, 2, 4, 2, 2, 2), 57);
        auto params = model->named_params();
        Tensor<double> head_w;
        for (auto& p : params)
            if (p.name == "head.w") head_w = p.tensor;
        auto f = [&](std::vector<Tensor<double>>& xs) {
            return nll_mean(log_softmax_t(model->forward(xs[0], NormMode::Eval), 1.0), {0});
        };
        Tensor<double> x = random_input(1, 2, 8, 59);
        std::vector<Tensor<double>> in{x, head_w};
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);
    }
    // 1-layer, 1-head encoder
    {
        ModelSpec ms = small_spec({3}, true, 1, 4, 2, 2, 2);
        ms.kind = "hybrid";
        ms.d_model = 4;
        ms.heads = 1;
        ms.encoder_layers = 1;
        ms.ff_width = 8;
        ms.dropout = 0.0;
        ms.attn_downsample = 2;
        HybridModel<double> model(ms, 61);
        auto f = [&](std::vector<Tensor<double>>& xs) {
            return nll_mean(log_softmax_t(model.forward(xs[0], NormMode::Eval), 1.0), {0});
        };
        Tensor<double> x = random_input(1, 2, 8, 63);
        std::vector<Tensor<double>> in{x};
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);
    }
}

TEST_CASE("flop accounting follows the stated convention") {
    CHECK(flops_conv1d_same(4, 1, 1, 3) == 24);

    // conv/dense work scales linearly in T; pointwise terms are affine
    ModelSpec ms = small_spec({3}, true, 3, 16, 8, 4, 3);
    auto r1 = count_flops(ms, 128);
    auto r2 = count_flops(ms, 256);
    CHECK(r2.conv == 2 * r1.conv);

    // full-backbone 1+1 vs 3+1 ratio at the paper configuration
    ModelSpec lite;  // defaults: {3}+maxpool, filters 128, bottleneck 64, depth 6
    ModelSpec full = lite;
    full.conv_kernels = {3, 5, 7};
    const double ratio = static_cast<double>(count_flops(lite, 2048).total) /
                         static_cast<double>(count_flops(full, 2048).total);
    CHECK(ratio >= 0.25);
    CHECK(ratio <= 0.35);
}

TEST_CASE("gated model exposes per-sample gate weights") {
    ModelSpec ms = small_spec({3}, true, 2, 8, 4, 5, 3);
    ms.input_gate = true;
    auto model = build_model<float>(ms, 71);
    model->forward(Tensor<float>({3, 5, 16}, 0.4f), NormMode::Eval);
    REQUIRE(model->last_gate().size() == 3 * 5);
    for (float s : model->last_gate()) CHECK(s == doctest::Approx(1.0f));  // fresh gate is identity
}
