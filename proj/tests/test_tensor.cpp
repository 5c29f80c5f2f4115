#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <liteinc/tensor.hpp>

#include <cmath>
#include <random>
#include <thread>

using namespace liteinc;

namespace {

// Independent sliding-window oracle for 1-D convolution (zero same-padding,
// stride 1, single batch/channel).
std::vector<double> conv_oracle(const std::vector<double>& x, const std::vector<double>& w, double b) {
    const int T = static_cast<int>(x.size());
    const int k = static_cast<int>(w.size());
    std::vector<double> out(static_cast<size_t>(T), 0.0);
    for (int t = 0; t < T; ++t) {
        double s = b;
        for (int d = 0; d < k; ++d) {
            int src = t + d - k / 2;
            if (src >= 0 && src < T) s += w[static_cast<size_t>(d)] * x[static_cast<size_t>(src)];
        }
        out[static_cast<size_t>(t)] = s;
    }
    return out;
}

std::vector<double> maxpool_oracle(const std::vector<double>& x, int k) {
    const int T = static_cast<int>(x.size());
    std::vector<double> out(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
        double best = -1e300;
        for (int d = 0; d < k; ++d) {
            int src = t + d - k / 2;
            if (src >= 0 && src < T) best = std::max(best, x[static_cast<size_t>(src)]);
        }
        out[static_cast<size_t>(t)] = best;
    }
    return out;
}

Tensor<double> bct(const std::vector<double>& v) {
    return Tensor<double>({1, 1, static_cast<int>(v.size())}, v);
}

std::vector<Tensor<double>> kink_free_inputs(std::vector<int> shape, unsigned seed, int count = 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> mag(0.2, 1.2);
    std::bernoulli_distribution sign(0.5);
    std::vector<Tensor<double>> out;
    for (int c = 0; c < count; ++c) {
        Tensor<double> t(shape);
        for (int64_t i = 0; i < t.numel(); ++i)
            t.data()[i] = (sign(rng) ? 1.0 : -1.0) * mag(rng);
        out.push_back(t);
    }
    return out;
}

}  // namespace

TEST_CASE("conv1d matches the sliding-window oracle") {
    // delta kernel identity
    auto x = bct({1, 2, 3});
    Tensor<double> w({1, 1, 3}, {0, 1, 0});
    Tensor<double> b({1}, {0});
    auto y = conv1d(x, w, b);
    CHECK(y.value() == std::vector<double>{1, 2, 3});

    // box kernel against the oracle
    Tensor<double> w2({1, 1, 3}, {1, 1, 1});
    auto y2 = conv1d(x, w2, b);
    auto expect = conv_oracle({1, 2, 3}, {1, 1, 1}, 0.0);
    CHECK(expect == std::vector<double>{3, 6, 5});
    CHECK(y2.value() == expect);

    // zero kernel, constant bias
    Tensor<double> w3({1, 1, 3}, {0, 0, 0});
    Tensor<double> b3({1}, {4.5});
    auto y3 = conv1d(x, w3, b3);
    for (double v : y3.value()) CHECK(v == 4.5);

    // randomized multi-channel check against a direct re-evaluation
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(-1, 1);
    Tensor<double> xr({2, 3, 9});
    Tensor<double> wr({4, 3, 5});
    Tensor<double> br({4});
    for (int64_t i = 0; i < xr.numel(); ++i) xr.data()[i] = dist(rng);
    for (int64_t i = 0; i < wr.numel(); ++i) wr.data()[i] = dist(rng);
    for (int64_t i = 0; i < br.numel(); ++i) br.data()[i] = dist(rng);
    auto yr = conv1d(xr, wr, br);
    REQUIRE(yr.shape() == std::vector<int>{2, 4, 9});
    for (int bi = 0; bi < 2; ++bi)
        for (int o = 0; o < 4; ++o)
            for (int t = 0; t < 9; ++t) {
                double s = br.data()[o];
                for (int i = 0; i < 3; ++i)
                    for (int d = 0; d < 5; ++d) {
                        int src = t + d - 2;
                        if (src >= 0 && src < 9) s += wr.data()[(o * 3 + i) * 5 + d] * xr.data()[(bi * 3 + i) * 9 + src];
                    }
                CHECK(yr.data()[(bi * 4 + o) * 9 + t] == doctest::Approx(s).epsilon(1e-12));
            }
}

TEST_CASE("conv1d rejects bad inputs") {
    auto x = bct({1, 2, 3});
    Tensor<double> w({1, 2, 3});  // channel mismatch
    Tensor<double> b({1});
    CHECK_THROWS_AS(conv1d(x, w, b), std::invalid_argument);
    Tensor<double> empty({1, 1, 0});
    Tensor<double> w1({1, 1, 3});
    CHECK_THROWS_AS(conv1d(empty, w1, b), std::invalid_argument);
}

TEST_CASE("conv1d valid padding and stride") {
    auto x = bct({1, 2, 3, 4, 5});
    Tensor<double> w({1, 1, 3}, {1, 1, 1});
    Tensor<double> b({1}, {0});
    auto y = conv1d(x, w, b, Padding::Valid);
    CHECK(y.value() == std::vector<double>{6, 9, 12});
    auto ys = conv1d(x, w, b, Padding::Same, 2);
    // centers 0, 2, 4
    CHECK(ys.value() == std::vector<double>{3, 9, 9});
}

TEST_CASE("maxpool1d matches the sliding-window oracle") {
    auto y = maxpool1d(bct({1, 3, 2, 5}), 3);
    CHECK(maxpool_oracle({1, 3, 2, 5}, 3) == std::vector<double>{3, 3, 5, 5});
    CHECK(y.value() == std::vector<double>{3, 3, 5, 5});

    auto y2 = maxpool1d(bct({1, 2, 3, 4}), 3);
    CHECK(maxpool_oracle({1, 2, 3, 4}, 3) == std::vector<double>{2, 3, 4, 4});
    CHECK(y2.value() == std::vector<double>{2, 3, 4, 4});

    auto yc = maxpool1d(bct({2.5, 2.5, 2.5}), 3);
    CHECK(yc.value() == std::vector<double>{2.5, 2.5, 2.5});

    CHECK_THROWS_AS(maxpool1d(Tensor<double>({1, 1, 0}), 3), std::invalid_argument);
}

TEST_CASE("maxpool1d same padding preserves T; strided output is ceil(T/s)") {
    Tensor<double> x({1, 2, 7}, 1.0);
    CHECK(maxpool1d(x, 3).shape() == std::vector<int>{1, 2, 7});
    CHECK(maxpool1d(x, 4, 4).shape() == std::vector<int>{1, 2, 2});
}

TEST_CASE("maxpool gradient routes to the first argmax on ties") {
    Tensor<double> x({1, 1, 3}, {2, 2, 1});
    x.set_requires_grad(true);
    Tape<double> tape;
    auto guard = tape.activate();
    auto y = maxpool1d(x, 3);
    auto loss = sum_all(y);
    tape.backward(loss);
    // windows: [-,0,1]->idx0, [0,1,2]->idx0, [1,2,-]->idx1
    CHECK(x.grad() == std::vector<double>{2, 1, 0});
}

TEST_CASE("batchnorm1d normalizes per channel with biased variance") {
    std::vector<double> rm, rv;
    Tensor<double> gamma({1}, {1.0});
    Tensor<double> beta({1}, {0.0});

    Tensor<double> x({1, 1, 2}, {-1, 1});
    auto y = batchnorm1d(x, gamma, beta, NormMode::Train, rm, rv);
    CHECK(y.data()[0] == doctest::Approx(-1).epsilon(1e-4));
    CHECK(y.data()[1] == doctest::Approx(1).epsilon(1e-4));

    // two-pass mean/variance oracle on {0,2}: mean 1, biased var 1
    rm.clear();
    rv.clear();
    Tensor<double> x2({1, 1, 2}, {0, 2});
    auto y2 = batchnorm1d(x2, gamma, beta, NormMode::Train, rm, rv);
    CHECK(y2.data()[0] == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(y2.data()[1] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(rm[0] == doctest::Approx(0.1));   // momentum 0.1 from zero init
    CHECK(rv[0] == doctest::Approx(1.0));   // 0.9*1 + 0.1*1

    // gamma = 0 pins the output at beta
    rm.clear();
    rv.clear();
    Tensor<double> g0({1}, {0.0});
    Tensor<double> b7({1}, {7.0});
    auto y3 = batchnorm1d(x2, g0, b7, NormMode::Train, rm, rv);
    for (double v : y3.value()) CHECK(v == doctest::Approx(7.0));

    // zero-variance channel is rescued by eps, not an error
    rm.clear();
    rv.clear();
    Tensor<double> xc({1, 1, 4}, 3.0);
    auto y4 = batchnorm1d(xc, gamma, beta, NormMode::Train, rm, rv);
    for (double v : y4.value()) CHECK(v == doctest::Approx(0.0));

    CHECK_THROWS_AS(batchnorm1d(Tensor<double>({1, 1, 1}, 0.0), gamma, beta, NormMode::Train, rm, rv),
                    std::invalid_argument);
}

TEST_CASE("batchnorm1d eval mode uses running statistics") {
    std::vector<double> rm{2.0}, rv{4.0};
    Tensor<double> gamma({1}, {1.0});
    Tensor<double> beta({1}, {0.0});
    Tensor<double> x({1, 1, 2}, {2, 4});
    auto y = batchnorm1d(x, gamma, beta, NormMode::Eval, rm, rv);
    CHECK(y.data()[0] == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(y.data()[1] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("pointwise activations") {
    Tensor<double> x({2}, {-1, 2});
    auto r = relu(x);
    CHECK(r.value() == std::vector<double>{0, 2});
    CHECK(sigmoid(Tensor<double>::scalar(0)).item() == doctest::Approx(0.5));
    CHECK(sigmoid(Tensor<double>::scalar(10)).item() == doctest::Approx(0.9999546).epsilon(1e-6));
}

TEST_CASE("softmax_t closed forms, stability and shift invariance") {
    Tensor<double> z({2}, {2, 0});
    auto p1 = softmax_t(z, 1.0);
    CHECK(p1.data()[0] == doctest::Approx(0.88080).epsilon(1e-4));
    CHECK(p1.data()[1] == doctest::Approx(0.11920).epsilon(1e-4));
    auto p2 = softmax_t(z, 2.0);
    CHECK(p2.data()[0] == doctest::Approx(0.73106).epsilon(1e-4));
    CHECK(p2.data()[1] == doctest::Approx(0.26894).epsilon(1e-4));

    Tensor<double> zc({5}, 3.25);
    auto pu = softmax_t(zc, 7.0);
    for (double v : pu.value()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));

    // sums to one within 1e-12, invariant to adding a constant to all logits
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-5, 5);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor<double> zr({7});
        Tensor<double> zs({7});
        for (int i = 0; i < 7; ++i) {
            zr.data()[i] = dist(rng);
            zs.data()[i] = zr.data()[i] + 123.456;
        }
        auto a = softmax_t(zr, 1.7);
        auto b = softmax_t(zs, 1.7);
        double sum = 0;
        for (int i = 0; i < 7; ++i) {
            sum += a.data()[i];
            CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-9));
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }

    // monotone in logits
    Tensor<double> za({3}, {1.0, 2.0, 0.5});
    Tensor<double> zb({3}, {1.0, 2.5, 0.5});
    CHECK(softmax_t(zb, 1.0).data()[1] > softmax_t(za, 1.0).data()[1]);

    Tensor<double> bad({2}, {1.0, std::numeric_limits<double>::infinity()});
    CHECK_THROWS_AS(softmax_t(bad, 1.0), std::domain_error);
    CHECK_THROWS_AS(softmax_t(z, 0.0), std::invalid_argument);
}

TEST_CASE("gap averages over time and is linear") {
    CHECK(gap(bct({1, 2, 3, 4})).item() == doctest::Approx(2.5));
    CHECK(gap(bct({6, 6, 6})).item() == doctest::Approx(6.0));

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(-2, 2);
    Tensor<double> x({1, 2, 8}), y({1, 2, 8});
    for (int64_t i = 0; i < x.numel(); ++i) {
        x.data()[i] = dist(rng);
        y.data()[i] = dist(rng);
    }
    auto lhs = gap(add(scale(x, 2.0), scale(y, -3.0)));
    auto ga = gap(x);
    auto gb = gap(y);
    for (int c = 0; c < 2; ++c)
        CHECK(lhs.data()[c] == doctest::Approx(2.0 * ga.data()[c] - 3.0 * gb.data()[c]).epsilon(1e-12));
}

TEST_CASE("dense dot-product oracle") {
    Tensor<double> w({1, 2}, {1, 2});
    Tensor<double> x({2}, {3, 4});
    Tensor<double> b({1}, {1});
    CHECK(dense(x, w, b).item() == doctest::Approx(12.0));

    Tensor<double> eye({2, 2}, {1, 0, 0, 1});
    Tensor<double> zb({2}, {0, 0});
    CHECK(dense(x, eye, zb).value() == std::vector<double>{3, 4});

    Tensor<double> wz({2, 2}, 0.0);
    Tensor<double> bb({2}, {5, -1});
    CHECK(dense(x, wz, bb).value() == std::vector<double>{5, -1});

    Tensor<double> wbad({3, 3});
    Tensor<double> bbad({3});
    CHECK_THROWS_AS(dense(x, wbad, bbad), std::invalid_argument);
}

TEST_CASE("concat_channels layout and order preservation") {
    Tensor<double> a({1, 2, 4}, 1.0);
    Tensor<double> b({1, 3, 4}, 2.0);
    auto y = concat_channels(a, b);
    CHECK(y.shape() == std::vector<int>{1, 5, 4});
    // channel C1 of the result equals channel 0 of b
    for (int t = 0; t < 4; ++t) CHECK(y.data()[2 * 4 + t] == 2.0);

    Tensor<double> empty({1, 0, 4});
    auto ye = concat_channels(a, empty);
    CHECK(ye.shape() == std::vector<int>{1, 2, 4});
    CHECK(ye.value() == a.value());

    Tensor<double> mism({1, 1, 3});
    CHECK_THROWS_AS(concat_channels(a, mism), std::invalid_argument);
}

TEST_CASE("layer_norm closed forms") {
    Tensor<double> gamma({2}, {1, 1});
    Tensor<double> beta({2}, {0, 0});
    Tensor<double> x({2}, {1, 3});
    auto y = layer_norm(x, gamma, beta);
    CHECK(y.data()[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(y.data()[1] == doctest::Approx(1.0).epsilon(1e-4));

    Tensor<double> xc({2}, {4, 4});
    auto yc = layer_norm(xc, gamma, beta);
    for (double v : yc.value()) CHECK(v == doctest::Approx(0.0));

    Tensor<double> g2({2}, {2, 2});
    auto y2 = layer_norm(x, g2, beta);
    for (int i = 0; i < 2; ++i) CHECK(y2.data()[i] == doctest::Approx(2.0 * y.data()[i]));
}

TEST_CASE("matmul identities") {
    Tensor<double> a({2, 2}, {1, 2, 3, 4});
    Tensor<double> eye({2, 2}, {1, 0, 0, 1});
    CHECK(matmul(a, eye).value() == a.value());

    Tensor<double> ones({2, 1}, {1, 1});
    auto y = matmul(a, ones);
    CHECK(y.value() == std::vector<double>{3, 7});

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> dist(-1, 1);
    Tensor<double> p({3, 3}), q({3, 3});
    for (int i = 0; i < 9; ++i) {
        p.data()[i] = dist(rng);
        q.data()[i] = dist(rng);
    }
    auto lhs = transpose2d(matmul(p, q));
    auto rhs = matmul(transpose2d(q), transpose2d(p));
    for (int i = 0; i < 9; ++i) CHECK(lhs.data()[i] == doctest::Approx(rhs.data()[i]).epsilon(1e-12));

    Tensor<double> bad({4, 2});
    CHECK_THROWS_AS(matmul(a, bad), std::invalid_argument);
}

TEST_CASE("split/merge heads round-trip") {
    Tensor<double> x({2, 3, 4});
    for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = static_cast<double>(i);
    auto s = split_heads(x, 2);
    CHECK(s.shape() == std::vector<int>{4, 3, 2});
    auto m = merge_heads(s, 2);
    CHECK(m.value() == x.value());
}

TEST_CASE("backward populates leaf gradients") {
    // sum(x) -> all-ones gradient
    Tensor<double> x({2, 3}, 1.5);
    x.set_requires_grad(true);
    {
        Tape<double> tape;
        auto g = tape.activate();
        auto loss = sum_all(x);
        tape.backward(loss);
    }
    for (double v : x.grad()) CHECK(v == 1.0);

    // relu gate
    Tensor<double> x2({2}, {-1, 2});
    x2.set_requires_grad(true);
    {
        Tape<double> tape;
        auto g = tape.activate();
        auto loss = sum_all(relu(x2));
        tape.backward(loss);
    }
    CHECK(x2.grad() == std::vector<double>{0, 1});

    // dense(gap(x)) with W=[[1]], b=0: chain rule gives dx = 1/T
    Tensor<double> x3({1, 1, 2}, {2, 4});
    x3.set_requires_grad(true);
    {
        Tape<double> tape;
        auto g = tape.activate();
        Tensor<double> w({1, 1}, {1});
        Tensor<double> b({1}, {0});
        auto loss = sum_all(dense(gap(x3), w, b));
        tape.backward(loss);
    }
    CHECK(x3.grad() == std::vector<double>{0.5, 0.5});
}

TEST_CASE("backward error contracts") {
    Tensor<double> x({3}, 1.0);
    x.set_requires_grad(true);
    Tape<double> tape;
    auto g = tape.activate();
    auto y = scale(x, 2.0);  // non-scalar
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
    auto loss = sum_all(y);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
    // a fresh forward on a cleared tape works again
    tape.clear();
    x.zero_grad();
    auto loss2 = sum_all(scale(x, 3.0));
    tape.backward(loss2);
    CHECK(x.grad() == std::vector<double>{3, 3, 3});
}

TEST_CASE("gradient linearity: backward of a sum equals sum of backwards") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> dist(-1, 1);
    Tensor<double> x({1, 2, 6});
    for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = dist(rng);
    x.set_requires_grad(true);

    auto loss_a = [](Tensor<double>& t) { return sum_all(sigmoid(t)); };
    auto loss_b = [](Tensor<double>& t) { return mean_all(mul(t, t)); };

    x.zero_grad();
    {
        Tape<double> tape;
        auto g = tape.activate();
        auto loss = add(loss_a(x), loss_b(x));
        tape.backward(loss);
    }
    auto combined = x.grad();

    x.zero_grad();
    {
        Tape<double> tape;
        auto g = tape.activate();
        auto la = loss_a(x);
        tape.backward(la);
    }
    auto ga = x.grad();
    x.zero_grad();
    {
        Tape<double> tape;
        auto g = tape.activate();
        auto lb = loss_b(x);
        tape.backward(lb);
    }
    for (size_t i = 0; i < combined.size(); ++i)
        CHECK(combined[i] == doctest::Approx(ga[i] + x.grad()[i]).epsilon(1e-12));
}

TEST_CASE("grad_check: linear functions are exact") {
    std::vector<double> w{0.3, -1.2, 0.8};
    auto f = [&](std::vector<Tensor<double>>& xs) { return dot_const(xs[0], w); };
    auto x0 = kink_free_inputs({3}, 21);
    CHECK(grad_check<double>(f, x0) < 1e-10);
}

TEST_CASE("grad_check: every primitive op") {
    // conv1d w.r.t. x, w, b
    {
        auto f = [](std::vector<Tensor<double>>& xs) {
            return sum_all(sigmoid(conv1d(xs[0], xs[1], xs[2])));
        };
        auto xs = kink_free_inputs({1, 2, 7}, 31);
        auto ws = kink_free_inputs({3, 2, 3}, 32);
        auto bs = kink_free_inputs({3}, 33);
        std::vector<Tensor<double>> in{xs[0], ws[0], bs[0]};
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);
    }
    // strided valid conv
    {
        auto f = [](std::vector<Tensor<double>>& xs) {
            return mean_all(conv1d(xs[0], xs[1], xs[2], Padding::Valid, 2));
        };
        auto xs = kink_free_inputs({1, 1, 9}, 34);
        auto ws = kink_free_inputs({2, 1, 3}, 35);
        auto bs = kink_free_inputs({2}, 36);
        std::vector<Tensor<double>> in{xs[0], ws[0], bs[0]};
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);
    }
    // maxpool (inputs spaced to keep argmax stable under h)
    {
        auto f = [](std::vector<Tensor<double>>& xs) { return mean_all(maxpool1d(xs[0], 3)); };
        Tensor<double> x({1, 2, 8});
        for (int i = 0; i < 16; ++i) x.data()[i] = (i * 7) % 16 + 0.01 * i;
        std::vector<Tensor<double>> in{x};
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);
    }
    // batchnorm train and eval
    {
        auto f = [](std::vector<Tensor<double>>& xs) {
            std::vector<double> rm, rv;
            return mean_all(sigmoid(batchnorm1d(xs[0], xs[1], xs[2], NormMode::Train, rm, rv)));
        };
        auto xs = kink_free_inputs({2, 2, 4}, 41);
        auto gs = kink_free_inputs({2}, 42);
        auto bs = kink_free_inputs({2}, 43);
        std::vector<Tensor<double>> in{xs[0], gs[0], bs[0]};
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);

        std::vector<double> rm{0.1, -0.2}, rv{0.9, 1.3};
        auto fe = [&](std::vector<Tensor<double>>& xs2) {
            auto rm2 = rm;
            auto rv2 = rv;
            return mean_all(sigmoid(batchnorm1d(xs2[0], xs2[1], xs2[2], NormMode::Eval, rm2, rv2)));
        };
        CHECK(grad_check<double>(fe, in, 1e-5) < 1e-4);
    }
    // relu away from kinks / sigmoid
    {
        auto f = [](std::vector<Tensor<double>>& xs) { return sum_all(relu(xs[0])); };
        auto in = kink_free_inputs({6}, 51);
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);
        auto f2 = [](std::vector<Tensor<double>>& xs) { return sum_all(sigmoid(xs[0])); };
        CHECK(grad_check<double>(f2, in, 1e-5) < 1e-4);
    }
    // softmax_t / log_softmax_t
    {
        std::vector<double> pick{1, 0, 0, 0, 0};
        auto f = [&](std::vector<Tensor<double>>& xs) { return dot_const(softmax_t(xs[0], 2.0), pick); };
        auto in = kink_free_inputs({5}, 61);
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);
        auto f2 = [&](std::vector<Tensor<double>>& xs) { return dot_const(log_softmax_t(xs[0], 0.7), pick); };
        CHECK(grad_check<double>(f2, in, 1e-5) < 1e-4);
    }
    // gap, dense, matmul, bmm, transpose, concat, scale_channels, layer_norm, heads
    {
        auto f = [](std::vector<Tensor<double>>& xs) {
            auto cat = concat_channels(xs[0], xs[1]);
            auto pooled = gap(cat);
            return mean_all(mul(pooled, pooled));
        };
        auto a = kink_free_inputs({1, 2, 5}, 71);
        auto b = kink_free_inputs({1, 3, 5}, 72);
        std::vector<Tensor<double>> in{a[0], b[0]};
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);
    }
    {
        auto f = [](std::vector<Tensor<double>>& xs) {
            return mean_all(sigmoid(dense(xs[0], xs[1], xs[2])));
        };
        auto x = kink_free_inputs({2, 4}, 73);
        auto w = kink_free_inputs({3, 4}, 74);
        auto b = kink_free_inputs({3}, 75);
        std::vector<Tensor<double>> in{x[0], w[0], b[0]};
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);
    }
    {
        auto f = [](std::vector<Tensor<double>>& xs) {
            return mean_all(matmul(xs[0], transpose2d(xs[1])));
        };
        auto a = kink_free_inputs({3, 2}, 76);
        auto b = kink_free_inputs({4, 2}, 77);
        std::vector<Tensor<double>> in{a[0], b[0]};
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);
    }
    {
        auto f = [](std::vector<Tensor<double>>& xs) {
            auto q = split_heads(xs[0], 2);
            auto scores = bmm(q, transpose_12(q));
            auto p = softmax_t(scores, 1.0);
            return mean_all(merge_heads(bmm(p, q), 2));
        };
        auto x = kink_free_inputs({1, 3, 4}, 78);
        std::vector<Tensor<double>> in{x[0]};
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);
    }
    {
        auto f = [](std::vector<Tensor<double>>& xs) {
            auto gate = add_scalar(sigmoid(gap(xs[0])), 0.5);
            return mean_all(scale_channels(xs[0], gate));
        };
        auto x = kink_free_inputs({2, 3, 4}, 79);
        std::vector<Tensor<double>> in{x[0]};
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);
    }
    {
        auto f = [](std::vector<Tensor<double>>& xs) {
            return mean_all(sigmoid(layer_norm(xs[0], xs[1], xs[2])));
        };
        auto x = kink_free_inputs({2, 3, 4}, 80);
        auto g = kink_free_inputs({4}, 81);
        auto b = kink_free_inputs({4}, 82);
        std::vector<Tensor<double>> in{x[0], g[0], b[0]};
        CHECK(grad_check<double>(f, in, 1e-5) < 1e-4);
    }
    {
        auto f = [](std::vector<Tensor<double>>& xs) {
            return nll_mean(log_softmax_t(xs[0], 1.0), {1, 0});
        };
        auto x = kink_free_inputs({2, 3}, 83);
        CHECK(grad_check<double>(f, x, 1e-5) < 1e-4);
    }
}

TEST_CASE("softmax + cross-entropy composite gradient is tight") {
    auto f = [](std::vector<Tensor<double>>& xs) {
        return nll_mean(log_softmax_t(xs[0], 1.0), {2});
    };
    auto x = kink_free_inputs({1, 6}, 91);
    CHECK(grad_check<double>(f, x, 1e-5) < 1e-6);
}

TEST_CASE("32-bit and 64-bit forwards agree on magnitude-1 inputs") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> dist(-1, 1);
    std::vector<double> xd(2 * 3 * 10), wd(4 * 3 * 3), bd(4);
    for (auto& v : xd) v = dist(rng);
    for (auto& v : wd) v = dist(rng);
    for (auto& v : bd) v = dist(rng);

    Tensor<double> x64({2, 3, 10}, xd);
    Tensor<double> w64({4, 3, 3}, wd);
    Tensor<double> b64({4}, bd);
    auto y64 = gap(relu(conv1d(x64, w64, b64)));

    std::vector<float> xf(xd.begin(), xd.end()), wf(wd.begin(), wd.end()), bf(bd.begin(), bd.end());
    Tensor<float> x32({2, 3, 10}, xf);
    Tensor<float> w32({4, 3, 3}, wf);
    Tensor<float> b32({4}, bf);
    auto y32 = gap(relu(conv1d(x32, w32, b32)));

    for (int64_t i = 0; i < y64.numel(); ++i) {
        double a = y64.data()[i];
        double b = static_cast<double>(y32.data()[i]);
        CHECK(std::abs(a - b) <= 1e-4 * std::max(1.0, std::abs(a)));
    }
}

TEST_CASE("distinct recordings run concurrently on distinct threads") {
    // shared read-only parameters, one tape per thread
    Tensor<double> w({2, 1, 3}, {0.5, -0.25, 0.75, 0.1, 0.2, 0.3});
    w.set_requires_grad(true);
    Tensor<double> b({2}, {0.0, 0.1});
    b.set_requires_grad(true);

    auto run = [&](uint64_t seed, std::vector<double>* out) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> dist(-1, 1);
        Tensor<double> x({1, 1, 8});
        for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = dist(rng);
        x.set_requires_grad(true);
        Tape<double> tape;
        auto guard = tape.activate();
        auto loss = mean_all(relu(conv1d(x, w, b)));
        tape.backward(loss);
        *out = x.grad();
    };

    std::vector<double> serial_a, serial_b, threaded_a, threaded_b;
    run(1, &serial_a);
    run(2, &serial_b);
    {
        std::thread ta(run, 1, &threaded_a);
        std::thread tb(run, 2, &threaded_b);
        ta.join();
        tb.join();
    }
    CHECK(threaded_a == serial_a);
    CHECK(threaded_b == serial_b);
}

TEST_CASE("no NaN/Inf after ops on finite inputs") {
    std::mt19937_64 rng(111);
    std::uniform_real_distribution<double> dist(-3, 3);
    Tensor<double> x({2, 4, 12});
    for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = dist(rng);
    auto y = softmax_t(gap(relu(maxpool1d(x, 3))), 1.0);
    for (double v : y.value()) CHECK(std::isfinite(v));
}
