#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <liteinc/checkpoint.hpp>
#include <liteinc/config.hpp>
#include <liteinc/report.hpp>
#include <liteinc/serde.hpp>
#include <liteinc/train.hpp>

#include <filesystem>
#include <fstream>

using namespace liteinc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

ModelSpec small_spec() {
    ModelSpec ms;
    ms.conv_kernels = {3};
    ms.filters_per_branch = 8;
    ms.bottleneck_width = 4;
    ms.depth = 2;
    ms.input_channels = 3;
    ms.classes = 4;
    return ms;
}

}  // namespace

TEST_CASE("config: parse, override, serialize round-trip") {
    const std::string text =
        "# comment\n"
        "[model]\n"
        "depth = 3\n"
        "kernels = 3,5\n"
        "[train]\n"
        "learning_rate = 0.001\n"
        "seed = 42\n";
    auto cfg = Config::parse_string(text);
    CHECK(cfg.get_int("model.depth", 0) == 3);
    CHECK(cfg.get_int_list("model.kernels", {}) == std::vector<int>{3, 5});
    CHECK(cfg.get_double("train.learning_rate", 0) == doctest::Approx(0.001));
    CHECK(cfg.get_uint64("train.seed", 0) == 42);
    CHECK(cfg.get("missing.key", "fallback") == "fallback");

    // command-line style override wins
    cfg.set("model.depth", "6");
    CHECK(cfg.get_int("model.depth", 0) == 6);

    // serialize -> parse -> serialize is stable
    const std::string once = cfg.serialize();
    const std::string twice = Config::parse_string(once).serialize();
    CHECK(once == twice);

    CHECK_THROWS_AS(Config::parse_string("[unterminated\n"), std::runtime_error);
    CHECK_THROWS_AS(Config::parse_string("no equals sign here\n"), std::runtime_error);
}

TEST_CASE("model spec survives the config round-trip") {
    ModelSpec spec = small_spec();
    spec.kind = "hybrid";
    spec.d_model = 16;
    spec.heads = 2;
    spec.dropout = 0.05;
    spec.input_gate = true;

    Config cfg;
    model_spec_to_config(spec, cfg);
    auto back = model_spec_from_config(cfg);
    CHECK(back.kind == spec.kind);
    CHECK(back.conv_kernels == spec.conv_kernels);
    CHECK(back.filters_per_branch == spec.filters_per_branch);
    CHECK(back.d_model == spec.d_model);
    CHECK(back.dropout == doctest::Approx(spec.dropout));
    CHECK(back.input_gate == spec.input_gate);

    // json round-trip as well
    auto j = to_json(spec);
    auto back2 = model_spec_from_json(j);
    CHECK(to_json(back2) == j);
}

TEST_CASE("checkpoint: save/load round-trip reproduces outputs bit-exactly") {
    auto model = build_model<float>(small_spec(), 77);
    // perturb parameters away from init so the blobs matter
    Rng rng(5);
    for (auto& p : model->named_params())
        for (auto& v : p.tensor.value()) v += static_cast<float>(0.01 * rng.uniform(-1, 1));
    // and push the running stats off their defaults
    Tensor<float> warm({4, 3, 16});
    for (int64_t i = 0; i < warm.numel(); ++i) warm.data()[i] = static_cast<float>(rng.uniform());
    model->forward(warm, NormMode::Train);

    const std::string path = (fs::temp_directory_path() / "liteinc_ck.litn").string();
    save_checkpoint(path, *model, 77, {{"purpose", "round-trip test"}});

    auto [loaded, meta] = load_checkpoint(path);
    CHECK(meta.seed == 77);
    CHECK(meta.provenance.at("purpose") == "round-trip test");
    CHECK(to_json(meta.spec) == to_json(model->spec()));

    Tensor<float> x({2, 3, 20});
    for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = static_cast<float>(rng.uniform());
    auto a = model->forward(x, NormMode::Eval);
    auto b = loaded->forward(x, NormMode::Eval);
    CHECK(a.value() == b.value());  // bit-exact in 32-bit mode

    // save -> load -> save is byte-identical
    const std::string path2 = (fs::temp_directory_path() / "liteinc_ck2.litn").string();
    save_checkpoint(path2, *loaded, meta.seed, meta.provenance);
    CHECK(slurp(path) == slurp(path2));

    // magic check
    {
        std::ofstream bad(path2, std::ios::binary);
        bad << "NOPE";
    }
    CHECK_THROWS_AS(load_checkpoint(path2), std::runtime_error);
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("checkpoint header starts with the LITN magic") {
    auto model = build_model<float>(small_spec(), 3);
    const std::string path = (fs::temp_directory_path() / "liteinc_magic.litn").string();
    save_checkpoint(path, *model, 3);
    auto bytes = slurp(path);
    REQUIRE(bytes.size() > 16);
    CHECK(bytes.substr(0, 4) == "LITN");
    fs::remove(path);
}

TEST_CASE("report emission is stable and round-trips") {
    RunReport report;
    report.command = "bench";
    report.resolved_config = "[model]\ndepth = 6\n";
    report.metrics["accuracy"] = 0.9375;
    report.metrics["macro_f1"] = 1.0 / 3.0;
    report.counters["params_total"] = 27456;
    report.timings["train_s"] = 12.25;
    report.extra["note"] = "verbatim";

    const std::string p1 = (fs::temp_directory_path() / "liteinc_rep1.json").string();
    const std::string p2 = (fs::temp_directory_path() / "liteinc_rep2.json").string();
    emit_report(report, p1);
    emit_report(report, p1);  // re-emission over the same path
    const std::string once = slurp(p1);

    // emit -> parse -> emit is byte-identical (full-precision numbers)
    auto parsed = nlohmann::json::parse(once);
    {
        std::ofstream out(p2);
        out << parsed.dump(2) << "\n";
    }
    CHECK(slurp(p2) == once);
    CHECK(parsed.at("metrics").at("macro_f1").get<double>() == 1.0 / 3.0);
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("delimited matrix export has T rows and C columns") {
    const std::string path = (fs::temp_directory_path() / "liteinc_grid.tsv").string();
    std::vector<double> grid{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    write_delimited_matrix(path, 4, 3, grid);
    std::ifstream in(path);
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), '\t') == 2);
    }
    CHECK(rows == 4);
    fs::remove(path);

    CHECK_THROWS_AS(write_delimited_matrix(path, 2, 2, grid), std::invalid_argument);
}

TEST_CASE("latency helper reports sane statistics") {
    auto model = build_model<float>(small_spec(), 9);
    auto stats = measure_latency(*model, 3, 32, 100, 3);
    CHECK(stats.runs >= 100);
    CHECK(stats.mean_ms > 0);
    CHECK(stats.p95_ms >= stats.mean_ms * 0.2);
}
