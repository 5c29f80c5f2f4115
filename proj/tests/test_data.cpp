#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <liteinc/data.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace liteinc;

namespace {

RawFlight make_flight(std::vector<std::vector<double>> rows, const std::string& id = "f") {
    RawFlight f;
    f.source_id = id;
    for (size_t c = 0; c < rows.front().size(); ++c)
        f.channel_names.push_back("ch" + std::to_string(c));
    f.rows = std::move(rows);
    return f;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

TEST_CASE("interior gaps interpolate linearly; edges use the nearest value") {
    std::vector<double> v{0, kNaN, 2};
    CHECK(detail::fill_missing(v) == 1);
    CHECK(v == std::vector<double>{0, 1, 2});

    std::vector<double> w{kNaN, 5, kNaN, kNaN, 11, kNaN};
    CHECK(detail::fill_missing(w) == 4);
    CHECK(w == std::vector<double>{5, 5, 7, 9, 11, 11});
}

TEST_CASE("linear resample oracle") {
    CHECK(detail::resample_linear({0, 1}, 4) == std::vector<double>{0, 1.0 / 3, 2.0 / 3, 1});
    CHECK(detail::resample_linear({3, 3, 3}, 5) == std::vector<double>{3, 3, 3, 3, 3});
    // identity when the length already matches
    std::vector<double> v{0.5, 0.1, 0.9, 0.3};
    CHECK(detail::resample_linear(v, 4) == v);
}

TEST_CASE("drop rules and manifest accounting") {
    PreprocessConfig cfg;
    cfg.target_length = 8;
    cfg.min_length = 4;

    // 21% missing entries: dropped and counted
    std::vector<std::vector<double>> rows(100, std::vector<double>{1.0});
    for (int i = 0; i < 21; ++i) rows[static_cast<size_t>(i)][0] = kNaN;
    // a healthy flight so the pipeline still yields output
    std::vector<std::vector<double>> good;
    for (int i = 0; i < 10; ++i) good.push_back({static_cast<double>(i)});

    auto [samples, manifest] =
        ingest_and_preprocess({make_flight(rows, "bad"), make_flight(good, "good")}, cfg);
    CHECK(samples.size() == 1);
    CHECK(manifest.dropped_missing == 1);
    CHECK(manifest.sample_count == 1);

    // short flight dropped
    std::vector<std::vector<double>> tiny{{1.0}, {2.0}};
    auto [s2, m2] = ingest_and_preprocess({make_flight(tiny, "short"), make_flight(good, "good")}, cfg);
    CHECK(m2.dropped_short == 1);
    CHECK(s2.size() == 1);

    // 20% missing exactly is kept (rule is strictly greater)
    std::vector<std::vector<double>> edge(10, std::vector<double>{1.0, 2.0});
    edge[0][0] = kNaN;
    edge[1][0] = kNaN;
    edge[2][0] = kNaN;
    edge[3][0] = kNaN;  // 4 of 20 cells = 20%
    for (int i = 0; i < 10; ++i) edge[static_cast<size_t>(i)][1] = i;
    auto [s3, m3] = ingest_and_preprocess({make_flight(edge, "edge")}, cfg);
    CHECK(s3.size() == 1);
    CHECK(m3.interpolated_cells == 4);

    CHECK_THROWS_AS(ingest_and_preprocess({make_flight(tiny, "only-short")}, cfg), std::runtime_error);
}

TEST_CASE("preprocessing output satisfies the sample invariants") {
    PreprocessConfig cfg;
    cfg.target_length = 16;
    cfg.min_length = 4;
    Rng rng(3);
    std::vector<std::vector<double>> rows;
    for (int t = 0; t < 37; ++t)
        rows.push_back({rng.uniform(-5, 9), rng.uniform(100, 300), 42.0});
    rows[5][0] = kNaN;
    rows[6][0] = kNaN;
    auto [samples, manifest] = ingest_and_preprocess({make_flight(rows)}, cfg);
    REQUIRE(samples.size() == 1);
    const auto& s = samples[0];
    CHECK(s.length == 16);
    CHECK(s.channels == 3);
    for (float v : s.grid) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    // constant channel maps to the midpoint
    for (int t = 0; t < 16; ++t) CHECK(s.at(2, t) == 0.5f);
    CHECK(manifest.interpolated_cells == 2);
}

TEST_CASE("preprocessing is idempotent on processed samples") {
    PreprocessConfig cfg;
    cfg.target_length = 32;
    cfg.min_length = 8;
    Rng rng(9);
    std::vector<std::vector<double>> rows;
    for (int t = 0; t < 50; ++t) rows.push_back({rng.uniform(0, 2), rng.uniform(-4, 4)});
    auto [samples, m1] = ingest_and_preprocess({make_flight(rows)}, cfg);

    // feed the processed sample back through as a raw flight
    RawFlight again;
    again.channel_names = {"ch0", "ch1"};
    again.source_id = "again";
    for (int t = 0; t < 32; ++t)
        again.rows.push_back({samples[0].at(0, t), samples[0].at(1, t)});
    auto [samples2, m2] = ingest_and_preprocess({again}, cfg);
    for (size_t i = 0; i < samples[0].grid.size(); ++i)
        CHECK(std::abs(static_cast<double>(samples2[0].grid[i]) -
                       static_cast<double>(samples[0].grid[i])) < 1e-12);
}

TEST_CASE("timewarp: identity at zero intensity, contracts always hold") {
    SynthSpec spec;
    spec.classes = 2;
    spec.channels = 3;
    spec.length = 64;
    spec.per_class = 2;
    spec.seed = 4;
    auto [samples, manifest] = synth_generate(spec);
    const auto& s = samples[0];

    Rng rng(11);
    auto same = timewarp_augment(s, 0.0, rng);
    CHECK(same.grid == s.grid);

    for (int trial = 0; trial < 10; ++trial) {
        auto warped = timewarp_augment(s, 0.03, rng);
        CHECK(warped.length == s.length);
        CHECK(warped.label == s.label);
        // endpoints preserved
        for (int c = 0; c < s.channels; ++c) {
            CHECK(warped.at(c, 0) == s.at(c, 0));
            CHECK(warped.at(c, s.length - 1) == s.at(c, s.length - 1));
        }
        // convexity of linear interpolation keeps values inside the source range
        for (int c = 0; c < s.channels; ++c) {
            float lo = s.at(c, 0), hi = s.at(c, 0);
            for (int t = 0; t < s.length; ++t) {
                lo = std::min(lo, s.at(c, t));
                hi = std::max(hi, s.at(c, t));
            }
            for (int t = 0; t < s.length; ++t) {
                CHECK(warped.at(c, t) >= lo - 1e-6f);
                CHECK(warped.at(c, t) <= hi + 1e-6f);
            }
        }
    }
}

TEST_CASE("balance_dataset grows minority classes to the majority count") {
    SynthSpec spec;
    spec.classes = 2;
    spec.channels = 2;
    spec.length = 32;
    spec.per_class = 10;
    spec.seed = 6;
    auto [samples, manifest] = synth_generate(spec);
    // drop 6 of class 1 to get counts {10, 4}
    std::vector<TimeSeriesSample> skewed;
    int kept1 = 0;
    for (auto& s : samples) {
        if (s.label == 1 && kept1 >= 4) continue;
        if (s.label == 1) ++kept1;
        skewed.push_back(s);
    }

    auto balanced = balance_dataset(skewed, 77);
    std::map<int, int> counts;
    for (auto& s : balanced) counts[s.label]++;
    CHECK(counts[0] == 10);
    CHECK(counts[1] == 10);

    // originals are preserved verbatim at the front
    for (size_t i = 0; i < skewed.size(); ++i) CHECK(balanced[i].grid == skewed[i].grid);

    // already balanced input is returned unchanged
    auto again = balance_dataset(balanced, 78);
    CHECK(again.size() == balanced.size());
}

TEST_CASE("stratified split proportions and determinism") {
    SynthSpec spec;
    spec.classes = 2;
    spec.channels = 2;
    spec.length = 16;
    spec.per_class = 50;
    spec.seed = 8;
    auto [samples, manifest] = synth_generate(spec);

    auto split = stratified_split(samples, 0.8, 123);
    std::map<int, int> train_counts, test_counts;
    for (auto& s : split.train) train_counts[s.label]++;
    for (auto& s : split.test) test_counts[s.label]++;
    for (int k = 0; k < 2; ++k) {
        CHECK(train_counts[k] == 40);
        CHECK(test_counts[k] == 10);
    }

    auto split2 = stratified_split(samples, 0.8, 123);
    REQUIRE(split.train.size() == split2.train.size());
    for (size_t i = 0; i < split.train.size(); ++i)
        CHECK(split.train[i].source_id == split2.train[i].source_id);

    // tiny class goes entirely to train, with a warning
    std::vector<TimeSeriesSample> tiny(samples.begin(), samples.begin() + 3);
    tiny[2].label = 1;
    tiny[0].label = 0;
    tiny[1].label = 0;
    auto split3 = stratified_split(tiny, 0.8, 1);
    CHECK(split3.warnings.size() == 1);
    CHECK(split3.train.size() + split3.test.size() == 3);

    CHECK_THROWS_AS(stratified_split(samples, 1.5, 1), std::invalid_argument);
}

TEST_CASE("synthetic generator determinism and annotations") {
    SynthSpec spec;
    spec.classes = 3;
    spec.channels = 4;
    spec.length = 64;
    spec.per_class = 5;
    spec.seed = 42;

    auto [a, ma] = synth_generate(spec);
    auto [b, mb] = synth_generate(spec);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].grid == b[i].grid);

    for (auto& s : a) {
        if (s.label == 0)
            CHECK(s.truth.empty());
        else {
            CHECK(!s.truth.empty());
            CHECK(s.truth.window_begin < s.truth.window_end);
        }
        for (float v : s.grid) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
    CHECK(ma.sample_count == 15);
    CHECK(ma.class_counts.at(0) == 5);
}

TEST_CASE("matched-filter oracle recovers the injected bump") {
    SynthSpec spec;
    spec.classes = 2;
    spec.channels = 4;
    spec.length = 128;
    spec.per_class = 100;
    spec.noise_sigma = 0.05;
    FaultSpec fault;
    fault.channels = {2};
    fault.window_begin = 0.4;
    fault.window_end = 0.6;
    fault.kind = "bump";
    fault.amplitude = 5 * spec.noise_sigma;
    spec.faults = {fault};
    spec.seed = 55;
    auto [samples, manifest] = synth_generate(spec);

    // matched filter: least-squares removal of the known base components
    // (DC + the channel's two sinusoid frequencies), then correlation of the
    // residual with the half-sine template placed at the known window
    const int T = spec.length;
    const int w0 = static_cast<int>(0.4 * T), w1 = static_cast<int>(0.6 * T);
    const double pi = 3.14159265358979323846;
    const double f1 = 1.0 + 2 % 3, f2 = 3.0 + 2 % 5;  // channel 2 frequencies
    auto score = [&](const TimeSeriesSample& s) {
        std::vector<std::vector<double>> basis(5, std::vector<double>(static_cast<size_t>(T)));
        for (int t = 0; t < T; ++t) {
            basis[0][static_cast<size_t>(t)] = 1.0;
            basis[1][static_cast<size_t>(t)] = std::sin(2 * pi * f1 * t / T);
            basis[2][static_cast<size_t>(t)] = std::cos(2 * pi * f1 * t / T);
            basis[3][static_cast<size_t>(t)] = std::sin(2 * pi * f2 * t / T);
            basis[4][static_cast<size_t>(t)] = std::cos(2 * pi * f2 * t / T);
        }
        // 5x5 normal equations solved by Gaussian elimination
        double A[5][6] = {};
        for (int i = 0; i < 5; ++i) {
            for (int j = 0; j < 5; ++j)
                for (int t = 0; t < T; ++t)
                    A[i][j] += basis[static_cast<size_t>(i)][static_cast<size_t>(t)] *
                               basis[static_cast<size_t>(j)][static_cast<size_t>(t)];
            for (int t = 0; t < T; ++t)
                A[i][5] += basis[static_cast<size_t>(i)][static_cast<size_t>(t)] * s.at(2, t);
        }
        for (int i = 0; i < 5; ++i) {
            int piv = i;
            for (int r = i + 1; r < 5; ++r)
                if (std::abs(A[r][i]) > std::abs(A[piv][i])) piv = r;
            for (int c = 0; c < 6; ++c) std::swap(A[i][c], A[piv][c]);
            for (int r = 0; r < 5; ++r) {
                if (r == i) continue;
                const double m = A[r][i] / A[i][i];
                for (int c = i; c < 6; ++c) A[r][c] -= m * A[i][c];
            }
        }
        double coef[5];
        for (int i = 0; i < 5; ++i) coef[i] = A[i][5] / A[i][i];
        double acc = 0;
        for (int t = w0; t < w1; ++t) {
            double fitted = 0;
            for (int i = 0; i < 5; ++i) fitted += coef[i] * basis[static_cast<size_t>(i)][static_cast<size_t>(t)];
            const double u = (t - w0) / std::max(1.0, static_cast<double>(w1 - w0 - 1));
            acc += (s.at(2, t) - fitted) * std::sin(pi * u);
        }
        return acc;
    };
    // threshold halfway between the class means
    double m0 = 0, m1 = 0;
    for (auto& s : samples) (s.label == 0 ? m0 : m1) += score(s) / spec.per_class;
    const double thr = 0.5 * (m0 + m1);
    int detected = 0, false_pos = 0;
    for (auto& s : samples) {
        const bool flag = score(s) > thr;
        if (s.label == 1 && flag) ++detected;
        if (s.label == 0 && flag) ++false_pos;
    }
    CHECK(static_cast<double>(detected) / spec.per_class > 0.99);
    CHECK(static_cast<double>(false_pos) / spec.per_class < 0.05);
}

TEST_CASE("synth spec validation") {
    SynthSpec spec;
    spec.noise_sigma = 0.2;
    FaultSpec weak;
    weak.channels = {0};
    weak.amplitude = 0.1;  // below 3 sigma
    spec.faults = {weak, weak, weak};
    CHECK_THROWS_AS(synth_generate(spec), std::invalid_argument);
}

TEST_CASE("dataset container round-trips byte-identically") {
    SynthSpec spec;
    spec.classes = 3;
    spec.channels = 3;
    spec.length = 32;
    spec.per_class = 4;
    spec.seed = 91;
    auto [samples, manifest] = synth_generate(spec);

    namespace fs = std::filesystem;
    const std::string dir1 = (fs::temp_directory_path() / "liteinc_ds1").string();
    const std::string dir2 = (fs::temp_directory_path() / "liteinc_ds2").string();
    fs::remove_all(dir1);
    fs::remove_all(dir2);

    save_dataset(dir1, samples, manifest);
    auto [loaded, lm] = load_dataset(dir1);
    REQUIRE(loaded.size() == samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        CHECK(loaded[i].grid == samples[i].grid);
        CHECK(loaded[i].label == samples[i].label);
        CHECK(loaded[i].truth.channels == samples[i].truth.channels);
    }
    save_dataset(dir2, loaded, lm);

    for (const char* name : {"data.f32", "labels.i32", "manifest.json"}) {
        std::ifstream f1(dir1 + "/" + name, std::ios::binary);
        std::ifstream f2(dir2 + "/" + name, std::ios::binary);
        std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(b1 == b2);
        CHECK(!b1.empty());
    }
    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("flight CSV reader handles missing cells") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "liteinc_flight.csv").string();
    {
        std::ofstream out(path);
        out << "volt1,amp1,oilt\n";
        out << "1.0,2.0,3.0\n";
        out << "1.5,,3.5\n";
        out << "2.0,4.0,\n";
    }
    auto flight = read_flight_csv(path);
    CHECK(flight.channel_names == std::vector<std::string>{"volt1", "amp1", "oilt"});
    REQUIRE(flight.rows.size() == 3);
    CHECK(flight.rows[0] == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(std::isnan(flight.rows[1][1]));
    CHECK(std::isnan(flight.rows[2][2]));
    fs::remove(path);
}
