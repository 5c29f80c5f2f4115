#pragma once

// Dataset ingestion, preprocessing, augmentation, splitting, balancing, and
// the ground-truth-bearing synthetic generator.
//
// Samples store their value grid channel-major ([C][T] flattened) in 32-bit
// floats, matching the packed dataset container. The external text interface
// (one CSV row per time step) is converted at the IO boundary.

#include <liteinc/nn.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace liteinc {

// Ground-truth fault location, populated by the synthetic generator only.
struct FaultAnnotation {
    std::vector<int> channels;
    double window_begin = 0;  // fractions of T
    double window_end = 0;
    bool empty() const { return channels.empty(); }
};

struct TimeSeriesSample {
    int channels = 0;
    int length = 0;
    std::vector<float> grid;  // [C][T], values in [0,1]
    int label = 0;
    std::string source_id;
    FaultAnnotation truth;

    float at(int c, int t) const { return grid[static_cast<size_t>(c) * length + t]; }
    float& at(int c, int t) { return grid[static_cast<size_t>(c) * length + t]; }
};

struct RawFlight {
    std::vector<std::string> channel_names;
    std::vector<std::vector<double>> rows;  // one row per time step; NaN marks a missing entry
    std::string source_id;
};

struct DatasetManifest {
    int64_t sample_count = 0;
    int channels = 0;
    int length = 0;
    std::vector<std::string> channel_names;
    std::map<int, int64_t> class_counts;
    int64_t dropped_missing = 0;
    int64_t dropped_short = 0;
    int64_t interpolated_cells = 0;
    uint64_t seed = 0;
    std::vector<std::string> notes;

    void count(const std::vector<TimeSeriesSample>& samples) {
        sample_count = static_cast<int64_t>(samples.size());
        class_counts.clear();
        for (auto& s : samples) class_counts[s.label]++;
        if (!samples.empty()) {
            channels = samples.front().channels;
            length = samples.front().length;
        }
    }
};

struct PreprocessConfig {
    int target_length = 2048;
    double max_missing_fraction = 0.2;
    int min_length = 2000;
};

namespace detail {

// Linear sample of v at fractional position p in [0, size-1]. Exact at
// integer positions.
inline double lerp_at(const std::vector<double>& v, double p) {
    if (v.size() == 1) return v[0];
    if (p <= 0) return v.front();
    const double last = static_cast<double>(v.size() - 1);
    if (p >= last) return v.back();
    const size_t lo = static_cast<size_t>(p);
    const double frac = p - static_cast<double>(lo);
    if (frac == 0.0) return v[lo];
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

inline std::vector<double> resample_linear(const std::vector<double>& v, int target) {
    std::vector<double> out(static_cast<size_t>(target));
    if (v.empty()) return out;
    if (target == 1) {
        out[0] = v.front();
        return out;
    }
    const double scale = static_cast<double>(v.size() - 1) / (target - 1);
    for (int i = 0; i < target; ++i) out[static_cast<size_t>(i)] = lerp_at(v, i * scale);
    return out;
}

// Interior gaps linearly interpolated, leading/trailing gaps filled with the
// nearest observed value. Returns the number of filled cells.
inline int64_t fill_missing(std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    int64_t filled = 0;
    int first = -1, last = -1;
    for (int i = 0; i < n; ++i)
        if (!std::isnan(v[static_cast<size_t>(i)])) {
            if (first < 0) first = i;
            last = i;
        }
    if (first < 0) {  // fully missing channel
        for (auto& x : v) x = 0.0;
        return n;
    }
    for (int i = 0; i < first; ++i) {
        v[static_cast<size_t>(i)] = v[static_cast<size_t>(first)];
        ++filled;
    }
    for (int i = last + 1; i < n; ++i) {
        v[static_cast<size_t>(i)] = v[static_cast<size_t>(last)];
        ++filled;
    }
    int i = first;
    while (i <= last) {
        if (!std::isnan(v[static_cast<size_t>(i)])) {
            ++i;
            continue;
        }
        int j = i;
        while (std::isnan(v[static_cast<size_t>(j)])) ++j;
        const double a = v[static_cast<size_t>(i - 1)];
        const double b = v[static_cast<size_t>(j)];
        for (int k = i; k < j; ++k) {
            v[static_cast<size_t>(k)] = a + (b - a) * (k - i + 1) / (j - i + 1);
            ++filled;
        }
        i = j;
    }
    return filled;
}

// Per-channel min-max to [0,1]; constant channels map to the midpoint.
inline void minmax_normalize(std::vector<double>& v) {
    double lo = v[0], hi = v[0];
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (hi == lo) {
        for (auto& x : v) x = 0.5;
        return;
    }
    for (auto& x : v) x = (x - lo) / (hi - lo);
}

}  // namespace detail

// Pipeline order: (1) drop flights with too many missing entries or too few
// rows; (2) fill gaps; (3) linear resample to the target length; (4) per-
// sample per-channel min-max. Running it on already-processed samples is a
// no-op.
inline std::pair<std::vector<TimeSeriesSample>, DatasetManifest> ingest_and_preprocess(
    const std::vector<RawFlight>& flights, const PreprocessConfig& cfg = {},
    const std::vector<int>* labels = nullptr) {
    if (!flights.empty()) {
        const size_t C = flights.front().channel_names.size();
        for (auto& f : flights)
            if (f.channel_names.size() != C)
                throw std::invalid_argument("ingest: channel count differs between flights");
    }
    std::vector<TimeSeriesSample> out;
    DatasetManifest manifest;
    if (!flights.empty()) manifest.channel_names = flights.front().channel_names;

    for (size_t fi = 0; fi < flights.size(); ++fi) {
        const RawFlight& fl = flights[fi];
        const int C = static_cast<int>(fl.channel_names.size());
        const int L = static_cast<int>(fl.rows.size());
        for (auto& row : fl.rows)
            if (static_cast<int>(row.size()) != C)
                throw std::invalid_argument("ingest: row width differs from channel count in " + fl.source_id);

        int64_t missing = 0;
        for (auto& row : fl.rows)
            for (double v : row)
                if (std::isnan(v)) ++missing;
        const double missing_frac = L == 0 ? 1.0 : static_cast<double>(missing) / (static_cast<double>(L) * C);
        if (missing_frac > cfg.max_missing_fraction) {
            manifest.dropped_missing++;
            manifest.notes.push_back("dropped " + fl.source_id + ": missing fraction " +
                                     std::to_string(missing_frac));
            continue;
        }
        if (L < cfg.min_length) {
            manifest.dropped_short++;
            manifest.notes.push_back("dropped " + fl.source_id + ": length " + std::to_string(L));
            continue;
        }

        TimeSeriesSample s;
        s.channels = C;
        s.length = cfg.target_length;
        s.grid.resize(static_cast<size_t>(C) * cfg.target_length);
        s.source_id = fl.source_id;
        if (labels) s.label = (*labels)[fi];
        for (int c = 0; c < C; ++c) {
            std::vector<double> series(static_cast<size_t>(L));
            for (int t = 0; t < L; ++t) series[static_cast<size_t>(t)] = fl.rows[static_cast<size_t>(t)][static_cast<size_t>(c)];
            manifest.interpolated_cells += detail::fill_missing(series);
            series = detail::resample_linear(series, cfg.target_length);
            detail::minmax_normalize(series);
            for (int t = 0; t < cfg.target_length; ++t)
                s.at(c, t) = static_cast<float>(series[static_cast<size_t>(t)]);
        }
        out.push_back(std::move(s));
    }
    if (out.empty()) throw std::runtime_error("ingest: no flights survived preprocessing");
    manifest.count(out);
    return {std::move(out), std::move(manifest)};
}

// Monotone time-axis warp built from 4 interior knots with Gaussian source
// offsets (std = intensity * T), endpoints fixed; all channels are resampled
// through the same map. Zero intensity is an exact identity.
inline TimeSeriesSample timewarp_augment(const TimeSeriesSample& sample, double intensity, Rng& rng) {
    if (intensity < 0) throw std::invalid_argument("timewarp: intensity must be >= 0");
    const int T = sample.length;
    const int kKnots = 4;
    std::vector<double> knot_pos(kKnots), knot_src(kKnots);
    for (int j = 0; j < kKnots; ++j)
        knot_pos[static_cast<size_t>(j)] = (j + 1) * static_cast<double>(T - 1) / (kKnots + 1);

    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        for (int j = 0; j < kKnots; ++j)
            knot_src[static_cast<size_t>(j)] =
                knot_pos[static_cast<size_t>(j)] + rng.normal() * intensity * T;
        ok = true;
        double prev = 0;
        for (int j = 0; j < kKnots; ++j) {
            if (knot_src[static_cast<size_t>(j)] <= prev) {
                ok = false;
                break;
            }
            prev = knot_src[static_cast<size_t>(j)];
        }
        if (prev >= static_cast<double>(T - 1)) ok = false;
        if (intensity == 0) ok = true;
    }
    if (!ok) throw std::runtime_error("timewarp: could not draw a monotone knot set");
    if (intensity == 0)
        for (int j = 0; j < kKnots; ++j) knot_src[static_cast<size_t>(j)] = knot_pos[static_cast<size_t>(j)];

    // piecewise-linear map through (0,0), (knot_pos, knot_src), (T-1, T-1)
    std::vector<double> xs{0}, ys{0};
    for (int j = 0; j < kKnots; ++j) {
        xs.push_back(knot_pos[static_cast<size_t>(j)]);
        ys.push_back(knot_src[static_cast<size_t>(j)]);
    }
    xs.push_back(static_cast<double>(T - 1));
    ys.push_back(static_cast<double>(T - 1));

    TimeSeriesSample out = sample;
    std::vector<double> series(static_cast<size_t>(T));
    for (int c = 0; c < sample.channels; ++c) {
        for (int t = 0; t < T; ++t) series[static_cast<size_t>(t)] = sample.at(c, t);
        for (int t = 0; t < T; ++t) {
            const double x = static_cast<double>(t);
            size_t seg = 1;
            while (seg + 1 < xs.size() && x > xs[seg]) ++seg;
            const double f = (x - xs[seg - 1]) / (xs[seg] - xs[seg - 1]);
            const double src = ys[seg - 1] + f * (ys[seg] - ys[seg - 1]);
            out.at(c, t) = static_cast<float>(detail::lerp_at(series, src));
        }
    }
    out.source_id = sample.source_id + "+warp";
    return out;
}

// Adds warped copies (two per original, cycling through the originals) to
// every minority class until each class count reaches the majority count.
// Originals are never removed.
inline std::vector<TimeSeriesSample> balance_dataset(const std::vector<TimeSeriesSample>& samples,
                                                     uint64_t seed, double intensity = 0.03) {
    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);
    if (by_class.empty()) return samples;
    size_t target = 0;
    for (auto& [label, idx] : by_class) target = std::max(target, idx.size());

    std::vector<TimeSeriesSample> out = samples;
    Rng rng(seed);
    for (auto& [label, idx] : by_class) {
        size_t count = idx.size();
        size_t j = 0;
        while (count < target) {
            const size_t original = idx[(j / 2) % idx.size()];
            out.push_back(timewarp_augment(samples[original], intensity, rng));
            ++count;
            ++j;
        }
    }
    return out;
}

struct SplitResult {
    std::vector<TimeSeriesSample> train;
    std::vector<TimeSeriesSample> test;
    std::vector<std::string> warnings;
};

// Per-class split with train count = round(fraction * n), seeded shuffle
// within each class. Classes with fewer than 2 samples go entirely to train.
inline SplitResult stratified_split(const std::vector<TimeSeriesSample>& samples, double fraction,
                                    uint64_t seed) {
    if (fraction <= 0 || fraction >= 1) throw std::invalid_argument("split: fraction must be in (0,1)");
    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);
    SplitResult result;
    Rng rng(seed);
    for (auto& [label, idx] : by_class) {
        // Fisher-Yates with our own RNG for cross-platform reproducibility
        for (size_t i = idx.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(rng.uniform_int(static_cast<int>(i)));
            std::swap(idx[i - 1], idx[j]);
        }
        if (idx.size() < 2) {
            result.warnings.push_back("class " + std::to_string(label) + " has fewer than 2 samples; all to train");
            for (size_t i : idx) result.train.push_back(samples[i]);
            continue;
        }
        const size_t train_n = static_cast<size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        for (size_t i = 0; i < idx.size(); ++i)
            (i < train_n ? result.train : result.test).push_back(samples[idx[i]]);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Synthetic generator with ground truth
// ---------------------------------------------------------------------------

struct FaultSpec {
    std::vector<int> channels;
    double window_begin = 0.4;  // fractions of T
    double window_end = 0.6;
    std::string kind = "bump";  // bump | ramp | freq
    double amplitude = 0.5;
};

struct SynthSpec {
    int classes = 4;  // class 0 is "normal" and carries no signature
    int channels = 8;
    int length = 256;
    int per_class = 250;
    double noise_sigma = 0.05;
    std::vector<FaultSpec> faults;  // one per class 1..classes-1; defaulted when empty
    int distractor_channels = 0;    // pure-noise channels appended after the informative ones
    uint64_t seed = 1;

    void validate() const {
        if (classes < 2 || channels < 1 || length < 8 || per_class < 1)
            throw std::invalid_argument("synth spec: bad dims");
        if (!faults.empty() && static_cast<int>(faults.size()) != classes - 1)
            throw std::invalid_argument("synth spec: need one fault definition per non-normal class");
        for (auto& f : faults) {
            if (f.channels.empty()) throw std::invalid_argument("synth spec: fault names no channels");
            for (int c : f.channels)
                if (c < 0 || c >= channels) throw std::invalid_argument("synth spec: fault channel out of range");
            if (!(f.window_begin >= 0 && f.window_end <= 1 && f.window_begin < f.window_end))
                throw std::invalid_argument("synth spec: bad fault window");
            if (f.kind != "bump" && f.kind != "ramp" && f.kind != "freq")
                throw std::invalid_argument("synth spec: unknown fault kind '" + f.kind + "'");
            if (f.amplitude < 3 * noise_sigma)
                throw std::invalid_argument("synth spec: fault amplitude must be >= 3 * noise sigma");
        }
    }

    std::vector<FaultSpec> resolved_faults() const {
        if (!faults.empty()) return faults;
        std::vector<FaultSpec> out;
        const char* kinds[] = {"bump", "freq", "ramp"};
        for (int k = 1; k < classes; ++k) {
            FaultSpec f;
            f.channels = {(k - 1) % channels};
            if (channels > 1) f.channels.push_back(k % channels);
            f.kind = kinds[(k - 1) % 3];
            // a sharp narrow bump reads as a spike against the slow base
            // sinusoids; ramp and frequency signatures can afford wider spans
            const double width = f.kind == "bump" ? 0.12 : 0.25;
            f.window_begin = 0.15 + 0.18 * ((k - 1) % 3);
            f.window_end = f.window_begin + width;
            f.amplitude = std::max(f.kind == "bump" ? 1.3 : 1.0, 3.5 * noise_sigma);
            out.push_back(f);
        }
        return out;
    }
};

// Base signal per channel: two sinusoids with per-sample random phases plus
// Gaussian noise. Non-normal classes add their signature inside the fault
// window on the fault channels. Channels map to [0,1] through fixed
// per-channel ranges (the ranges a real sensor would be scaled by), never
// per-sample statistics: sample-dependent scaling would smear the fault
// signature over every time step and break attribution ground truth.
inline std::pair<std::vector<TimeSeriesSample>, DatasetManifest> synth_generate(const SynthSpec& spec) {
    spec.validate();
    const auto faults = spec.resolved_faults();

    const int total_channels_for_range = spec.channels + spec.distractor_channels;
    const double base_reach = 0.4 + 0.25 + 4 * spec.noise_sigma;
    std::vector<double> range_lo(static_cast<size_t>(total_channels_for_range), -base_reach);
    std::vector<double> range_hi(static_cast<size_t>(total_channels_for_range), base_reach);
    for (auto& f : faults)
        for (int c : f.channels) {
            // bump and ramp are one-sided; the frequency signature swings both ways
            range_hi[static_cast<size_t>(c)] =
                std::max(range_hi[static_cast<size_t>(c)], base_reach + f.amplitude);
            if (f.kind == "freq")
                range_lo[static_cast<size_t>(c)] =
                    std::min(range_lo[static_cast<size_t>(c)], -base_reach - f.amplitude);
        }

    Rng rng(spec.seed);
    const int total_channels = spec.channels + spec.distractor_channels;
    const int T = spec.length;
    std::vector<TimeSeriesSample> samples;
    DatasetManifest manifest;
    manifest.seed = spec.seed;

    for (int k = 0; k < spec.classes; ++k) {
        for (int i = 0; i < spec.per_class; ++i) {
            TimeSeriesSample s;
            s.channels = total_channels;
            s.length = T;
            s.grid.resize(static_cast<size_t>(total_channels) * T);
            s.label = k;
            s.source_id = "synth" + std::to_string(k) + "_" + std::to_string(i);

            std::vector<double> series(static_cast<size_t>(T));
            for (int c = 0; c < total_channels; ++c) {
                const bool distractor = c >= spec.channels;
                const double phase1 = rng.uniform(0, 2 * 3.14159265358979323846);
                const double phase2 = rng.uniform(0, 2 * 3.14159265358979323846);
                const double f1 = 1.0 + c % 3;
                const double f2 = 3.0 + c % 5;
                for (int t = 0; t < T; ++t) {
                    double v = rng.normal() * spec.noise_sigma;
                    if (!distractor)
                        v += 0.4 * std::sin(2 * 3.14159265358979323846 * f1 * t / T + phase1) +
                             0.25 * std::sin(2 * 3.14159265358979323846 * f2 * t / T + phase2);
                    series[static_cast<size_t>(t)] = v;
                }
                if (k > 0) {
                    const FaultSpec& f = faults[static_cast<size_t>(k - 1)];
                    bool hit = false;
                    for (int fc : f.channels) hit |= fc == c;
                    if (hit) {
                        const int w0 = static_cast<int>(f.window_begin * T);
                        const int w1 = static_cast<int>(f.window_end * T);
                        for (int t = w0; t < w1 && t < T; ++t) {
                            const double u = (t - w0) / std::max(1.0, static_cast<double>(w1 - w0 - 1));
                            double sig = 0;
                            if (f.kind == "bump")
                                sig = f.amplitude * std::sin(3.14159265358979323846 * u);
                            else if (f.kind == "ramp")
                                sig = f.amplitude * u;
                            else  // freq
                                sig = f.amplitude * std::sin(2 * 3.14159265358979323846 * 24.0 * t / T);
                            series[static_cast<size_t>(t)] += sig;
                        }
                    }
                }
                const double lo = range_lo[static_cast<size_t>(c)];
                const double hi = range_hi[static_cast<size_t>(c)];
                for (int t = 0; t < T; ++t) {
                    const double v = (series[static_cast<size_t>(t)] - lo) / (hi - lo);
                    s.at(c, t) = static_cast<float>(std::min(1.0, std::max(0.0, v)));
                }
            }
            if (k > 0) {
                const FaultSpec& f = faults[static_cast<size_t>(k - 1)];
                s.truth.channels = f.channels;
                s.truth.window_begin = f.window_begin;
                s.truth.window_end = f.window_end;
            }
            samples.push_back(std::move(s));
        }
    }

    for (size_t a = 0; a < faults.size(); ++a)
        for (size_t b = a + 1; b < faults.size(); ++b)
            for (int ca : faults[a].channels)
                for (int cb : faults[b].channels)
                    if (ca == cb && faults[a].window_begin < faults[b].window_end &&
                        faults[b].window_begin < faults[a].window_end)
                        manifest.notes.push_back("classes " + std::to_string(a + 1) + " and " +
                                                 std::to_string(b + 1) +
                                                 " overlap on channel " + std::to_string(ca));
    manifest.count(samples);
    return {std::move(samples), std::move(manifest)};
}

// ---------------------------------------------------------------------------
// External exchange formats (implemented in src/data_io.cpp)
// ---------------------------------------------------------------------------

// Delimited-text flight: header row = channel names, one row per second,
// empty cell = missing.
RawFlight read_flight_csv(const std::string& path);

// Dataset container: manifest.json + packed little-endian float32 N x C x T
// block + int32 label block. Layout and byte order are normative.
void save_dataset(const std::string& dir, const std::vector<TimeSeriesSample>& samples,
                  const DatasetManifest& manifest);
std::pair<std::vector<TimeSeriesSample>, DatasetManifest> load_dataset(const std::string& dir);

}  // namespace liteinc
