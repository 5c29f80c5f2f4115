#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <liteinc/cascade.hpp>

using namespace liteinc;

namespace {

TimeSeriesSample dummy_sample(double value = 0.5, int C = 2, int T = 8) {
    TimeSeriesSample s;
    s.channels = C;
    s.length = T;
    s.grid.assign(static_cast<size_t>(C) * T, static_cast<float>(value));
    return s;
}

}  // namespace

TEST_CASE("cascade_predict branch semantics") {
    CascadeConfig cfg;
    cfg.threshold = 0.5;
    double p1 = 0.1;
    int c2 = 6;
    cfg.stage1_probability = [&](const TimeSeriesSample&) { return p1; };
    cfg.stage2_class = [&](const TimeSeriesSample&) { return c2; };

    auto s = dummy_sample();
    auto trace = cascade_predict(s, cfg);
    CHECK(trace.label == 0);
    CHECK_FALSE(trace.stage2_ran);
    CHECK(trace.stage1_probability == 0.1);

    p1 = 0.9;
    trace = cascade_predict(s, cfg);
    CHECK(trace.stage2_ran);
    CHECK(trace.label == 7);  // 1 + argmax class
    CHECK(trace.stage2_class == 6);

    // threshold 0: stage 2 always runs
    cfg.threshold = 0.0;
    p1 = 0.0;
    trace = cascade_predict(s, cfg);
    CHECK(trace.stage2_ran);
}

TEST_CASE("cascade equals the brute-force composition on 1000 stubbed outputs") {
    Rng rng(17);
    CascadeConfig cfg;
    cfg.threshold = 0.37;
    double p1 = 0;
    int c2 = 0;
    cfg.stage1_probability = [&](const TimeSeriesSample&) { return p1; };
    cfg.stage2_class = [&](const TimeSeriesSample&) { return c2; };
    auto s = dummy_sample();

    int64_t stage2_runs = 0, flagged = 0;
    for (int i = 0; i < 1000; ++i) {
        p1 = rng.uniform();
        c2 = rng.uniform_int(19);
        auto trace = cascade_predict(s, cfg);
        const int expect = p1 >= cfg.threshold ? 1 + c2 : 0;  // brute-force oracle
        CHECK(trace.label == expect);
        if (trace.stage2_ran) ++stage2_runs;
        if (p1 >= cfg.threshold) ++flagged;
    }
    // stage-2 compute is invoked iff the trace says so
    CHECK(stage2_runs == flagged);
}

TEST_CASE("cascade over real models checks input shape") {
    ModelSpec s1;
    s1.conv_kernels = {3};
    s1.filters_per_branch = 4;
    s1.bottleneck_width = 2;
    s1.depth = 1;
    s1.input_channels = 2;
    s1.classes = 2;
    ModelSpec s2 = s1;
    s2.classes = 5;
    auto stage1 = build_model<float>(s1, 1);
    auto stage2 = build_model<float>(s2, 2);
    auto cfg = make_cascade(*stage1, *stage2, 0.5);

    auto trace = cascade_predict(dummy_sample(0.5, 2, 8), cfg);
    CHECK(trace.label >= 0);
    CHECK(trace.label <= 5);

    CHECK_THROWS_AS(cascade_predict(dummy_sample(0.5, 3, 8), cfg), std::invalid_argument);

    ModelSpec s3 = s1;
    s3.input_channels = 4;
    auto other = build_model<float>(s3, 3);
    CHECK_THROWS_AS(make_cascade(*stage1, *other), std::invalid_argument);
}

TEST_CASE("expected cost arithmetic, linearity, monotonicity") {
    CHECK(expected_cost({1.0, 2.0, 1.0}) == doctest::Approx(1.0));
    CHECK(expected_cost({1.0, 2.0, 0.0}) == doctest::Approx(3.0));
    CHECK(expected_cost({1.0, 2.0, 0.5}) == doctest::Approx(2.0));

    // linear in C2
    const double a = expected_cost({1.0, 1.0, 0.3});
    const double b = expected_cost({1.0, 2.0, 0.3});
    const double c = expected_cost({1.0, 3.0, 0.3});
    CHECK(c - b == doctest::Approx(b - a));

    // decreasing in the normal proportion
    double prev = expected_cost({1.0, 2.0, 0.0});
    for (double p : {0.25, 0.5, 0.75, 1.0}) {
        const double v = expected_cost({1.0, 2.0, p});
        CHECK(v < prev);
        prev = v;
    }

    CHECK_THROWS_AS(expected_cost({-1.0, 2.0, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(expected_cost({1.0, 2.0, 1.5}), std::invalid_argument);
}

TEST_CASE("threshold sweep: degenerate extremes and monotone recall") {
    Rng rng(23);
    std::vector<TimeSeriesSample> set;
    std::vector<double> probs;
    for (int i = 0; i < 200; ++i) {
        auto s = dummy_sample();
        s.label = i % 2;
        // anomalous samples skew toward higher stage-1 probability
        probs.push_back(s.label ? 0.4 + 0.6 * rng.uniform() : 0.6 * rng.uniform());
        set.push_back(std::move(s));
    }
    size_t cursor = 0;
    auto stage1 = [&](const TimeSeriesSample&) { return probs[cursor++ % probs.size()]; };

    std::vector<double> grid{0.001, 0.1, 0.3, 0.5, 0.7, 0.9, 0.999};
    auto table = threshold_sweep(stage1, set, grid);
    REQUIRE(table.size() == grid.size());
    CHECK(table.front().recall == doctest::Approx(1.0));  // everything flagged
    CHECK(table.back().recall < 0.35);                    // nearly nothing flagged
    for (size_t i = 1; i < table.size(); ++i) CHECK(table[i].recall <= table[i - 1].recall + 1e-12);

    // single-class set rejected
    std::vector<TimeSeriesSample> normals(5, dummy_sample());
    CHECK_THROWS_AS(threshold_sweep([](const TimeSeriesSample&) { return 0.5; }, normals, grid),
                    std::invalid_argument);
    CHECK_THROWS_AS(threshold_sweep(stage1, set, {0.5, 0.4}), std::invalid_argument);
}
