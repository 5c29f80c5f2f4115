#pragma once

// Run reports and delimited-text exports. Reports are JSON documents with
// stable key ordering and full-precision numbers, so re-emitting the same
// report is byte-identical.

#include <liteinc/nn.hpp>

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <string>

namespace liteinc {

struct RunReport {
    std::string command;
    std::string resolved_config;  // serialized config text, defaults included
    nlohmann::json metrics = nlohmann::json::object();
    nlohmann::json counters = nlohmann::json::object();
    nlohmann::json timings = nlohmann::json::object();  // seconds per phase
    nlohmann::json extra = nlohmann::json::object();    // command-specific documents

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["command"] = command;
        j["resolved_config"] = resolved_config;
        j["metrics"] = metrics;
        j["counters"] = counters;
        j["timings"] = timings;
        j["extra"] = extra;
        return j;
    }
};

inline void emit_report(const RunReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    out << report.to_json().dump(2) << "\n";
    if (!out) throw std::runtime_error("short write on report: " + path);
}

// T rows x C columns, tab-separated, full double precision.
inline void write_delimited_matrix(const std::string& path, int rows, int cols,
                                   const std::vector<double>& values) {
    if (static_cast<int64_t>(values.size()) != static_cast<int64_t>(rows) * cols)
        throw std::invalid_argument("delimited matrix: size mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write matrix: " + path);
    out.precision(17);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c)
            out << values[static_cast<size_t>(r) * cols + c] << (c + 1 == cols ? "" : "\t");
        out << "\n";
    }
}

// Wall-clock phase timer.
class PhaseTimer {
public:
    void start(const std::string& phase) {
        phase_ = phase;
        begin_ = std::chrono::steady_clock::now();
    }
    void stop(nlohmann::json& timings) {
        const auto end = std::chrono::steady_clock::now();
        timings[phase_] = std::chrono::duration<double>(end - begin_).count();
    }

private:
    std::string phase_;
    std::chrono::steady_clock::time_point begin_;
};

struct LatencyStats {
    double mean_ms = 0;
    double p95_ms = 0;
    int runs = 0;
};

// Single-threaded warm per-sample inference latency: `warmup` discarded
// forwards, then at least 100 timed runs (mean and p95).
template <typename T>
LatencyStats measure_latency(Model<T>& model, int channels, int length, int runs = 100,
                             int warmup = 10) {
    runs = std::max(runs, 100);
    Rng rng(7);
    Tensor<T> x({1, channels, length});
    for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = static_cast<T>(rng.uniform());
    for (int i = 0; i < warmup; ++i) model.forward(x, NormMode::Eval);

    std::vector<double> times;
    times.reserve(static_cast<size_t>(runs));
    for (int i = 0; i < runs; ++i) {
        const auto begin = std::chrono::steady_clock::now();
        model.forward(x, NormMode::Eval);
        const auto end = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(end - begin).count());
    }
    std::sort(times.begin(), times.end());
    LatencyStats stats;
    stats.runs = runs;
    for (double t : times) stats.mean_ms += t / runs;
    stats.p95_ms = times[static_cast<size_t>(std::min<double>(
        static_cast<double>(runs) - 1, std::ceil(0.95 * runs) - 1))];
    return stats;
}

}  // namespace liteinc
