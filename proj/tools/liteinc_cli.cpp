// Command-line surface tying the modules into reproducible jobs. Every run
// echoes its fully resolved configuration and writes a JSON run report into
// the output directory. Exit codes: 0 success, 1 runtime failure, 2 usage
// error.

#include <liteinc/attribution.hpp>
#include <liteinc/cascade.hpp>
#include <liteinc/checkpoint.hpp>
#include <liteinc/config.hpp>
#include <liteinc/counters.hpp>
#include <liteinc/report.hpp>
#include <liteinc/select.hpp>
#include <liteinc/serde.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace liteinc;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_dir = "out";
    int precision = 32;
    bool seed_given = false;
    uint64_t seed = 1;
    std::vector<std::string> overrides;  // section.key=value
};

Config resolve_config(const GlobalArgs& g) {
    Config cfg;
    if (!g.config_path.empty()) cfg = Config::parse_file(g.config_path);
    for (const std::string& kv : g.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--set expects section.key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (g.seed_given) cfg.set("run.seed", std::to_string(g.seed));
    return cfg;
}

uint64_t run_seed(const Config& cfg) { return cfg.get_uint64("run.seed", 1); }

// Every command funnels its fully resolved knobs back through this before
// running, so reports and stdout always carry reproducible settings.
void echo_config(const Config& cfg, RunReport& report) {
    report.resolved_config = cfg.serialize();
    std::cout << "resolved config:\n" << report.resolved_config << std::flush;
}

void finish(const GlobalArgs& g, RunReport& report) {
    fs::create_directories(g.out_dir);
    const std::string path = g.out_dir + "/report_" + report.command + ".json";
    emit_report(report, path);
    std::cout << "report: " << path << "\n";
}

// Dataset label transforms for the two cascade stages.
std::vector<TimeSeriesSample> apply_stage(const std::vector<TimeSeriesSample>& in,
                                          const std::string& stage) {
    if (stage == "single") return in;
    std::vector<TimeSeriesSample> out;
    if (stage == "detect") {
        out = in;
        for (auto& s : out) s.label = s.label == 0 ? 0 : 1;
    } else if (stage == "identify") {
        for (auto& s : in) {
            if (s.label == 0) continue;
            out.push_back(s);
            out.back().label -= 1;
        }
    } else {
        throw std::runtime_error("unknown stage '" + stage + "' (single|detect|identify)");
    }
    if (out.empty()) throw std::runtime_error("stage '" + stage + "' left no samples");
    return out;
}

int label_space(const std::vector<TimeSeriesSample>& samples) {
    int hi = 0;
    for (auto& s : samples) hi = std::max(hi, s.label);
    return hi + 1;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

int cmd_gen_data(const GlobalArgs& g) {
    Config cfg = resolve_config(g);
    SynthSpec spec = synth_spec_from_config(cfg);
    if (cfg.has("run.seed")) spec.seed = run_seed(cfg);
    synth_spec_to_config(spec, cfg);

    RunReport report;
    report.command = "gen-data";
    echo_config(cfg, report);

    PhaseTimer timer;
    timer.start("generate_s");
    auto [samples, manifest] = synth_generate(spec);
    timer.stop(report.timings);

    const std::string dir = g.out_dir + "/dataset";
    timer.start("write_s");
    save_dataset(dir, samples, manifest);
    timer.stop(report.timings);

    report.counters["samples"] = manifest.sample_count;
    report.counters["channels"] = manifest.channels;
    report.counters["length"] = manifest.length;
    report.extra["dataset_dir"] = dir;
    finish(g, report);
    return 0;
}

// ---------------------------------------------------------------------------
// train / distill
// ---------------------------------------------------------------------------

struct SplitSets {
    std::vector<TimeSeriesSample> train;
    std::vector<TimeSeriesSample> test;
};

SplitSets load_and_split(const Config& cfg, const std::string& data_dir, const std::string& stage) {
    auto [samples, manifest] = load_dataset(data_dir);
    auto staged = apply_stage(samples, stage);
    auto split = stratified_split(staged, cfg.get_double("train.split", 0.8), run_seed(cfg));
    for (auto& w : split.warnings) std::cout << "warning: " << w << "\n";
    if (cfg.get_bool("train.balance", false))
        split.train = balance_dataset(split.train, run_seed(cfg) ^ 0xba1a9ceULL);
    return {std::move(split.train), std::move(split.test)};
}

template <typename T>
int run_train(const GlobalArgs& g, Config cfg, const std::string& data_dir, const std::string& stage,
              const std::string& teacher_path) {
    const bool distilling = !teacher_path.empty();
    ModelSpec spec = model_spec_from_config(cfg);
    TrainConfig tc = train_config_from_config(cfg);
    tc.seed = run_seed(cfg);
    double temperature = cfg.get_double("distill.temperature", 8.0);
    double soft_weight = cfg.get_double("distill.soft_weight", 0.7);

    RunReport report;
    report.command = distilling ? "distill" : "train";
    fs::create_directories(g.out_dir);
    if (tc.history_path.empty()) {
        tc.history_path = g.out_dir + "/history_" + report.command + ".log";
        cfg.set("train.history_path", tc.history_path);
    }
    model_spec_to_config(spec, cfg);
    train_config_to_config(tc, cfg);
    cfg.set("run.stage", stage);
    cfg.set("run.data", data_dir);
    cfg.set("run.precision", std::to_string(g.precision));
    echo_config(cfg, report);

    PhaseTimer timer;
    timer.start("load_s");
    auto sets = load_and_split(cfg, data_dir, stage);
    timer.stop(report.timings);
    const int classes = label_space(sets.train);
    if (spec.classes != classes)
        throw std::runtime_error("model.classes = " + std::to_string(spec.classes) +
                                 " but the staged dataset has " + std::to_string(classes) + " labels");

    auto model = build_model<T>(spec, tc.seed);
    std::unique_ptr<Model<T>> teacher;
    DistillConfig<T> dc;
    const DistillConfig<T>* dc_ptr = nullptr;
    if (distilling) {
        auto [loaded, meta] = load_checkpoint_as<T>(teacher_path);
        teacher = std::move(loaded);
        dc.temperature = temperature;
        dc.soft_weight = soft_weight;
        dc.teacher = teacher.get();
        dc_ptr = &dc;
    }

    timer.start("fit_s");
    auto history = fit(*model, sets.train, sets.test, tc, dc_ptr);
    timer.stop(report.timings);

    auto preds = predict(*model, sets.test);
    std::vector<int> labels;
    for (auto& s : sets.test) labels.push_back(s.label);
    auto metrics = evaluate_metrics(preds, labels, spec.classes);
    report.metrics = to_json(metrics);
    report.metrics["best_epoch"] = history.best_epoch;
    report.counters = to_json(count_params(*model));

    const std::string ckpt = g.out_dir + (distilling ? "/student.litn" : "/model.litn");
    std::map<std::string, std::string> provenance{{"command", report.command},
                                                  {"data", data_dir},
                                                  {"stage", stage}};
    if (distilling) provenance["teacher"] = teacher_path;
    save_checkpoint_as(ckpt, *model, tc.seed, provenance);
    report.extra["checkpoint"] = ckpt;
    report.extra["history"] = tc.history_path;
    finish(g, report);
    return 0;
}

// ---------------------------------------------------------------------------
// select-channels
// ---------------------------------------------------------------------------

template <typename T>
int cmd_select(const GlobalArgs& g, const std::string& data_dir, const std::string& ckpt,
               const std::string& gated_ckpt, const std::string& override_path,
               const std::string& stage) {
    Config cfg = resolve_config(g);
    RunReport report;
    report.command = "select-channels";
    cfg.set("run.stage", stage);
    cfg.set("run.data", data_dir);
    echo_config(cfg, report);

    auto sets = load_and_split(cfg, data_dir, stage);
    const int classes = label_space(sets.train);

    PhaseTimer timer;
    timer.start("mi_s");
    auto mi = mi_scores(sets.train, cfg.get_int("select.bins", 16));
    timer.stop(report.timings);

    auto get_model = [&](const std::string& path, bool gated) {
        if (!path.empty()) {
            auto [model, meta] = load_checkpoint_as<T>(path);
            return std::move(model);
        }
        // no checkpoint given: train a quick desk-scale model
        ModelSpec spec = model_spec_from_config(cfg);
        spec.classes = classes;
        spec.input_gate = gated;
        spec.input_channels = sets.train.front().channels;
        TrainConfig tc = train_config_from_config(cfg);
        tc.seed = run_seed(cfg) + (gated ? 1 : 0);
        auto model = build_model<T>(spec, tc.seed);
        fit(*model, sets.train, sets.test, tc);
        return model;
    };

    timer.start("gradient_s");
    auto plain = get_model(ckpt, false);
    std::vector<TimeSeriesSample> probe(sets.test.begin(),
                                        sets.test.begin() + std::min<size_t>(sets.test.size(), 64));
    auto grads = grad_importance(*plain, probe);
    timer.stop(report.timings);

    timer.start("se_s");
    auto gated = get_model(gated_ckpt, true);
    auto se = se_channel_weights(*gated, sets.test);
    timer.stop(report.timings);

    std::vector<OverrideEntry> overrides;
    if (!override_path.empty()) overrides = parse_override_file(override_path);

    auto selection = fuse_select(ChannelScores::from_scores(mi, grads, se), overrides);
    report.extra["selection"] = to_json(selection);
    nlohmann::json retained = selection.retained;
    std::cout << "retained channels: " << retained.dump() << "\n";
    finish(g, report);
    return 0;
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

template <typename T>
int cmd_explain(const GlobalArgs& g, const std::string& data_dir, const std::string& ckpt,
                int target_class, const std::string& stage, bool run_noise_study, bool dump_grids) {
    Config cfg = resolve_config(g);
    RunReport report;
    report.command = "explain";
    cfg.set("run.stage", stage);
    cfg.set("run.data", data_dir);
    cfg.set("explain.class", std::to_string(target_class));
    echo_config(cfg, report);

    auto [samples, manifest] = load_dataset(data_dir);
    auto staged = apply_stage(samples, stage);
    auto [model, meta] = load_checkpoint_as<T>(ckpt);

    const int want = cfg.get_int("explain.samples", 30);
    const int ig_steps = cfg.get_int("explain.ig_steps", 50);
    PhaseTimer timer;
    timer.start("collect_s");
    auto correct = collect_correct_samples(*model, staged, target_class, want);
    timer.stop(report.timings);
    if (correct.empty()) throw std::runtime_error("no correctly classified samples for this class");

    timer.start("chain_s");
    auto chain = evidence_chain(*model, correct, target_class, want, ig_steps);
    timer.stop(report.timings);
    if (chain.fewer_than_requested)
        std::cout << "warning: only " << chain.samples_used << " of " << want
                  << " requested samples available\n";
    report.extra["evidence_chain"] = to_json(chain);

    if (run_noise_study) {
        timer.start("noise_s");
        auto study = noise_perturbation_study(*model, correct.front(), target_class,
                                              {0.0, 0.01, 0.03}, run_seed(cfg), ig_steps);
        timer.stop(report.timings);
        report.extra["noise_study"] = to_json(study);
    }
    if (dump_grids) {
        fs::create_directories(g.out_dir);
        auto ig_map = input_gradient(*model, correct.front(), target_class);
        write_delimited_matrix(g.out_dir + "/input_gradient_grid.tsv", ig_map.length,
                               ig_map.channels, ig_map.grid);
        auto intg = integrated_gradients(*model, correct.front(), target_class, ig_steps);
        write_delimited_matrix(g.out_dir + "/integrated_gradients_grid.tsv", intg.length,
                               intg.channels, intg.grid);
        report.extra["grid_dumps"] = {g.out_dir + "/input_gradient_grid.tsv",
                                      g.out_dir + "/integrated_gradients_grid.tsv"};
    }
    finish(g, report);
    return 0;
}

// ---------------------------------------------------------------------------
// cascade / sweep-threshold
// ---------------------------------------------------------------------------

template <typename T>
int cmd_cascade(const GlobalArgs& g, const std::string& data_dir, const std::string& stage1_path,
                const std::string& stage2_path, double threshold) {
    Config cfg = resolve_config(g);
    RunReport report;
    report.command = "cascade";
    cfg.set("cascade.threshold", std::to_string(threshold));
    cfg.set("run.data", data_dir);
    echo_config(cfg, report);

    auto [samples, manifest] = load_dataset(data_dir);
    auto [stage1, meta1] = load_checkpoint_as<T>(stage1_path);
    auto [stage2, meta2] = load_checkpoint_as<T>(stage2_path);
    auto cascade_cfg = make_cascade(*stage1, *stage2, threshold);

    PhaseTimer timer;
    timer.start("evaluate_s");
    int64_t stage2_runs = 0, correct = 0;
    std::vector<int> detect_pred, detect_truth;
    for (auto& s : samples) {
        auto trace = cascade_predict(s, cascade_cfg);
        if (trace.stage2_ran) ++stage2_runs;
        if (trace.label == s.label) ++correct;
        detect_pred.push_back(trace.label == 0 ? 0 : 1);
        detect_truth.push_back(s.label == 0 ? 0 : 1);
    }
    timer.stop(report.timings);

    auto detect_metrics = evaluate_metrics(detect_pred, detect_truth, 2);
    const double p_normal = 1.0 - static_cast<double>(stage2_runs) / static_cast<double>(samples.size());
    const auto flops1 = count_flops(stage1->spec(), manifest.length).total;
    const auto flops2 = count_flops(stage2->spec(), manifest.length).total;

    report.metrics["end_to_end_accuracy"] =
        static_cast<double>(correct) / static_cast<double>(samples.size());
    report.metrics["detection"] = to_json(detect_metrics);
    report.metrics["stage2_invocation_fraction"] =
        static_cast<double>(stage2_runs) / static_cast<double>(samples.size());
    report.counters["stage1_flops"] = flops1;
    report.counters["stage2_flops"] = flops2;
    report.counters["expected_cost_flops"] =
        expected_cost({static_cast<double>(flops1), static_cast<double>(flops2), p_normal});
    finish(g, report);
    return 0;
}

template <typename T>
int cmd_sweep(const GlobalArgs& g, const std::string& data_dir, const std::string& stage1_path,
              std::vector<double> grid) {
    Config cfg = resolve_config(g);
    RunReport report;
    report.command = "sweep-threshold";
    cfg.set("run.data", data_dir);
    echo_config(cfg, report);

    auto [samples, manifest] = load_dataset(data_dir);
    for (auto& s : samples) s.label = s.label == 0 ? 0 : 1;
    auto [stage1, meta] = load_checkpoint_as<T>(stage1_path);
    auto prob = [&](const TimeSeriesSample& s) {
        auto probs = softmax_t(stage1->forward(sample_tensor<T>(s), NormMode::Eval), T(1));
        return static_cast<double>(probs.data()[1]);
    };
    if (grid.empty())
        for (int i = 1; i <= 9; ++i) grid.push_back(i / 10.0);

    auto table = threshold_sweep(prob, samples, grid);
    report.extra["sweep"] = to_json(table);

    fs::create_directories(g.out_dir);
    const std::string tsv = g.out_dir + "/threshold_sweep.tsv";
    {
        std::ofstream out(tsv);
        out.precision(17);
        out << "threshold\tprecision\trecall\tf1\tflagged\n";
        for (auto& p : table)
            out << p.threshold << "\t" << p.precision << "\t" << p.recall << "\t" << p.f1 << "\t"
                << p.flagged << "\n";
    }
    report.extra["table"] = tsv;
    finish(g, report);
    return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

template <typename T>
int cmd_bench(const GlobalArgs& g, bool compare) {
    Config cfg = resolve_config(g);
    RunReport report;
    report.command = "bench";
    ModelSpec spec = model_spec_from_config(cfg);
    const int T_len = cfg.get_int("bench.length", 2048);
    const int runs = cfg.get_int("bench.runs", 100);
    model_spec_to_config(spec, cfg);
    cfg.set("bench.length", std::to_string(T_len));
    cfg.set("bench.runs", std::to_string(runs));
    echo_config(cfg, report);

    auto bench_one = [&](const ModelSpec& ms, const std::string& tag) {
        auto model = build_model<T>(ms, run_seed(cfg));
        auto params = count_params(*model);
        auto flops = count_flops(ms, T_len);
        PhaseTimer timer;
        timer.start(tag + "_latency_s");
        auto latency = measure_latency(*model, ms.input_channels, T_len, runs);
        timer.stop(report.timings);
        nlohmann::json j;
        j["params"] = to_json(params);
        j["flops"] = to_json(flops);
        j["latency_mean_ms"] = latency.mean_ms;
        j["latency_p95_ms"] = latency.p95_ms;
        j["latency_runs"] = latency.runs;
        report.counters[tag] = j;
        return std::make_tuple(params.total, flops.total, latency.mean_ms);
    };

    if (compare) {
        ModelSpec lite = spec;
        lite.conv_kernels = {3};
        lite.use_maxpool_branch = true;
        ModelSpec full = spec;
        full.conv_kernels = {3, 5, 7};
        full.use_maxpool_branch = true;
        auto [p1, f1, l1] = bench_one(lite, "lite_1p1");
        auto [p3, f3, l3] = bench_one(full, "full_3p1");
        report.metrics["param_ratio"] = static_cast<double>(p1) / static_cast<double>(p3);
        report.metrics["flop_ratio"] = static_cast<double>(f1) / static_cast<double>(f3);
        report.metrics["cpu_speedup"] = l3 / l1;
    } else {
        bench_one(spec, "model");
    }
    finish(g, report);
    return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

// Augmentation families compared by the `ablate augment` experiment.
TimeSeriesSample augment_variant(const TimeSeriesSample& s, const std::string& kind, Rng& rng) {
    TimeSeriesSample out = s;
    auto clamp01 = [](double v) { return std::min(1.0, std::max(0.0, v)); };
    if (kind == "timewarp") return timewarp_augment(s, 0.03, rng);
    if (kind == "noise") {
        for (auto& v : out.grid) v = static_cast<float>(clamp01(v + 0.02 * rng.normal()));
    } else if (kind == "scale") {
        const double f = rng.uniform(0.8, 1.2);
        for (auto& v : out.grid) v = static_cast<float>(clamp01(v * f));
    } else if (kind == "smooth") {
        for (int c = 0; c < s.channels; ++c)
            for (int t = 0; t < s.length; ++t) {
                double acc = 0;
                int n = 0;
                for (int d = -2; d <= 2; ++d)
                    if (t + d >= 0 && t + d < s.length) {
                        acc += s.at(c, t + d);
                        ++n;
                    }
                out.at(c, t) = static_cast<float>(acc / n);
            }
    } else if (kind == "slice") {
        // crop a random 90% window and stretch it back to full length
        const int crop = static_cast<int>(0.9 * s.length);
        const int start = rng.uniform_int(s.length - crop + 1);
        for (int c = 0; c < s.channels; ++c) {
            std::vector<double> series(static_cast<size_t>(crop));
            for (int t = 0; t < crop; ++t) series[static_cast<size_t>(t)] = s.at(c, start + t);
            auto stretched = detail::resample_linear(series, s.length);
            for (int t = 0; t < s.length; ++t)
                out.at(c, t) = static_cast<float>(stretched[static_cast<size_t>(t)]);
        }
    } else {
        throw std::runtime_error("unknown augmentation '" + kind + "'");
    }
    return out;
}

template <typename T>
int cmd_ablate(const GlobalArgs& g, const std::string& axis) {
    Config cfg = resolve_config(g);
    RunReport report;
    report.command = "ablate-" + axis;

    // desk-scale defaults; everything overridable through [data]/[train]
    if (!cfg.has("data.per_class")) cfg.set("data.per_class", "40");
    if (!cfg.has("data.length")) cfg.set("data.length", "64");
    if (!cfg.has("data.channels")) cfg.set("data.channels", "6");
    if (!cfg.has("data.classes")) cfg.set("data.classes", "3");
    if (!cfg.has("train.epochs")) cfg.set("train.epochs", "10");
    if (!cfg.has("train.learning_rate")) cfg.set("train.learning_rate", "0.003");
    if (!cfg.has("model.filters")) cfg.set("model.filters", "8");
    if (!cfg.has("model.bottleneck")) cfg.set("model.bottleneck", "4");
    if (!cfg.has("model.depth")) cfg.set("model.depth", "3");

    SynthSpec dspec = synth_spec_from_config(cfg);
    dspec.seed = run_seed(cfg);
    synth_spec_to_config(dspec, cfg);
    echo_config(cfg, report);

    auto [samples, manifest] = synth_generate(dspec);
    auto split = stratified_split(samples, cfg.get_double("train.split", 0.8), run_seed(cfg));

    ModelSpec base = model_spec_from_config(cfg);
    base.input_channels = dspec.channels + dspec.distractor_channels;
    base.classes = dspec.classes;
    TrainConfig tc = train_config_from_config(cfg);
    tc.seed = run_seed(cfg);

    auto train_once = [&](const ModelSpec& ms, const std::vector<TimeSeriesSample>& train_set,
                          const DistillConfig<T>* dc = nullptr) {
        auto model = build_model<T>(ms, tc.seed);
        fit(*model, train_set, split.test, tc, dc);
        auto preds = predict(*model, split.test);
        std::vector<int> labels;
        for (auto& s : split.test) labels.push_back(s.label);
        return std::make_pair(std::move(model), evaluate_metrics(preds, labels, ms.classes));
    };

    nlohmann::json table = nlohmann::json::array();
    if (axis == "branches") {
        struct Row {
            const char* name;
            std::vector<int> kernels;
            bool maxpool;
        };
        for (auto row : {Row{"1+0", {3}, false}, Row{"1+1", {3}, true}, Row{"2+1", {3, 5}, true},
                         Row{"3+1", {3, 5, 7}, true}}) {
            ModelSpec ms = base;
            ms.conv_kernels = row.kernels;
            ms.use_maxpool_branch = row.maxpool;
            auto [model, metrics] = train_once(ms, split.train);
            table.push_back({{"architecture", row.name},
                             {"params", count_params(*model).total},
                             {"accuracy", metrics.accuracy},
                             {"macro_f1", metrics.macro_f1}});
        }
    } else if (axis == "depth") {
        for (int depth : cfg.get_int_list("ablate.depths", {3, 6, 9, 12})) {
            ModelSpec ms = base;
            ms.depth = depth;
            auto [model, metrics] = train_once(ms, split.train);
            table.push_back({{"depth", depth},
                             {"params", count_params(*model).total},
                             {"accuracy", metrics.accuracy},
                             {"macro_f1", metrics.macro_f1}});
        }
    } else if (axis == "kernel") {
        for (int k : cfg.get_int_list("ablate.kernels", {3, 9, 21, 39})) {
            ModelSpec ms = base;
            ms.conv_kernels = {k};
            auto [model, metrics] = train_once(ms, split.train);
            table.push_back({{"kernel", k},
                             {"receptive_field", receptive_field(k, ms.depth)},
                             {"accuracy", metrics.accuracy},
                             {"macro_f1", metrics.macro_f1}});
        }
    } else if (axis == "augment") {
        Rng rng(run_seed(cfg) ^ 0xa06ULL);
        for (const std::string kind :
             {"none", "timewarp", "smooth", "slice", "noise", "scale"}) {
            auto train_set = split.train;
            if (kind != "none")
                for (auto& s : split.train) train_set.push_back(augment_variant(s, kind, rng));
            auto [model, metrics] = train_once(base, train_set);
            table.push_back(
                {{"augmentation", kind}, {"accuracy", metrics.accuracy}, {"macro_f1", metrics.macro_f1}});
        }
    } else if (axis == "kd-grid") {
        ModelSpec teacher_spec = base;
        teacher_spec.conv_kernels = {3, 5, 7};
        auto [teacher, teacher_metrics] = train_once(teacher_spec, split.train);
        ModelSpec student_spec = base;
        student_spec.conv_kernels = {3};
        for (double tau : {2.0, 4.0, 6.0, 8.0})
            for (double alpha : {0.3, 0.5, 0.7, 0.9}) {
                DistillConfig<T> dc;
                dc.temperature = tau;
                dc.soft_weight = alpha;
                dc.teacher = teacher.get();
                auto [student, metrics] = train_once(student_spec, split.train, &dc);
                table.push_back({{"temperature", tau},
                                 {"soft_weight", alpha},
                                 {"accuracy", metrics.accuracy},
                                 {"macro_f1", metrics.macro_f1},
                                 {"macro_precision", metrics.macro_precision},
                                 {"macro_recall", metrics.macro_recall}});
            }
        report.extra["teacher_macro_f1"] = teacher_metrics.macro_f1;
    } else {
        throw std::runtime_error("unknown ablation axis '" + axis + "'");
    }
    report.extra["table"] = table;
    finish(g, report);
    return 0;
}

template <typename F32, typename F64>
int with_precision(int precision, F32&& f32, F64&& f64) {
    if (precision == 32) return f32();
    if (precision == 64) return f64();
    throw CLI::ValidationError("--precision must be 32 or 64");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lightweight two-stage time-series fault diagnosis toolkit"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "configuration file");
    app.add_option("--out", g.out_dir, "output directory");
    app.add_option("--precision", g.precision, "numeric precision (32 or 64)")
        ->check(CLI::IsMember({32, 64}));
    auto* seed_opt = app.add_option("--seed", g.seed, "run seed");
    app.add_option("--set", g.overrides, "config override, section.key=value")->take_all();

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset with ground truth");

    std::string data_dir = "out/dataset";
    std::string stage = "single";
    std::string teacher_path, ckpt_path, gated_ckpt, override_path, stage2_path;
    int target_class = 1;
    bool noise_study = false, dump_grids = false, compare = false;
    double threshold = 0.5;
    std::vector<double> grid;

    auto* train = app.add_subcommand("train", "train a model on a dataset");
    train->add_option("--data", data_dir, "dataset container directory");
    train->add_option("--stage", stage, "label transform: single|detect|identify");

    auto* distill = app.add_subcommand("distill", "train a student against a frozen teacher");
    distill->add_option("--data", data_dir, "dataset container directory");
    distill->add_option("--stage", stage, "label transform: single|detect|identify");
    distill->add_option("--teacher", teacher_path, "teacher checkpoint")->required();

    auto* select = app.add_subcommand("select-channels", "score and fuse channel importance");
    select->add_option("--data", data_dir, "dataset container directory");
    select->add_option("--stage", stage, "label transform: single|detect|identify");
    select->add_option("--checkpoint", ckpt_path, "trained model (trained on the fly when absent)");
    select->add_option("--gated-checkpoint", gated_ckpt, "trained input-gate model");
    select->add_option("--overrides", override_path, "domain override file");

    auto* explain = app.add_subcommand("explain", "attribution evidence chain for one class");
    explain->add_option("--data", data_dir, "dataset container directory");
    explain->add_option("--checkpoint", ckpt_path, "trained model")->required();
    explain->add_option("--class", target_class, "target class in the model's label space");
    explain->add_option("--stage", stage, "label transform: single|detect|identify");
    explain->add_flag("--noise-study", noise_study, "run the noise-perturbation study");
    explain->add_flag("--dump-grids", dump_grids, "write attribution grids as delimited text");

    auto* casc = app.add_subcommand("cascade", "end-to-end two-stage evaluation");
    casc->add_option("--data", data_dir, "dataset container directory");
    casc->add_option("--stage1", ckpt_path, "detection checkpoint")->required();
    casc->add_option("--stage2", stage2_path, "identification checkpoint")->required();
    casc->add_option("--threshold", threshold, "stage-1 anomaly threshold");

    auto* sweep = app.add_subcommand("sweep-threshold", "stage-1 threshold sweep table");
    sweep->add_option("--data", data_dir, "dataset container directory");
    sweep->add_option("--stage1", ckpt_path, "detection checkpoint")->required();
    sweep->add_option("--grid", grid, "ascending thresholds in (0,1)");

    auto* bench = app.add_subcommand("bench", "parameter/FLOP counters and CPU latency");
    bench->add_flag("--compare", compare, "benchmark the 1+1 and 3+1 variants side by side");

    auto* ablate = app.add_subcommand("ablate", "run an ablation experiment");
    std::string axis;
    ablate->add_option("axis", axis, "branches | augment | kd-grid | depth | kernel")->required();

    for (auto* sub : app.get_subcommands(nullptr))
        sub->fallthrough();  // global flags may follow the subcommand

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    g.seed_given = seed_opt->count() > 0;

    try {
        if (*gen) return cmd_gen_data(g);
        if (*train)
            return with_precision(
                g.precision,
                [&] { return run_train<float>(g, resolve_config(g), data_dir, stage, ""); },
                [&] { return run_train<double>(g, resolve_config(g), data_dir, stage, ""); });
        if (*distill)
            return with_precision(
                g.precision,
                [&] { return run_train<float>(g, resolve_config(g), data_dir, stage, teacher_path); },
                [&] { return run_train<double>(g, resolve_config(g), data_dir, stage, teacher_path); });
        if (*select)
            return with_precision(
                g.precision,
                [&] { return cmd_select<float>(g, data_dir, ckpt_path, gated_ckpt, override_path, stage); },
                [&] { return cmd_select<double>(g, data_dir, ckpt_path, gated_ckpt, override_path, stage); });
        if (*explain)
            return with_precision(
                g.precision,
                [&] {
                    return cmd_explain<float>(g, data_dir, ckpt_path, target_class, stage, noise_study,
                                              dump_grids);
                },
                [&] {
                    return cmd_explain<double>(g, data_dir, ckpt_path, target_class, stage, noise_study,
                                               dump_grids);
                });
        if (*casc)
            return with_precision(
                g.precision,
                [&] { return cmd_cascade<float>(g, data_dir, ckpt_path, stage2_path, threshold); },
                [&] { return cmd_cascade<double>(g, data_dir, ckpt_path, stage2_path, threshold); });
        if (*sweep)
            return with_precision(
                g.precision, [&] { return cmd_sweep<float>(g, data_dir, ckpt_path, grid); },
                [&] { return cmd_sweep<double>(g, data_dir, ckpt_path, grid); });
        if (*bench)
            return with_precision(
                g.precision, [&] { return cmd_bench<float>(g, compare); },
                [&] { return cmd_bench<double>(g, compare); });
        if (*ablate)
            return with_precision(
                g.precision, [&] { return cmd_ablate<float>(g, axis); },
                [&] { return cmd_ablate<double>(g, axis); });
        std::cerr << "no command selected\n";
        return 2;
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
