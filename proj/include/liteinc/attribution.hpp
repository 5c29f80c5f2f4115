#pragma once

// Four-method attribution suite with dual-level (channel x time) aggregation,
// key-segment extraction, cross-method consensus, and the noise-perturbation
// validation study. Attribution over a frozen model is read-only.
//
// Targets: input-gradient and grad-cam differentiate the pre-softmax class
// logit; occlusion and integrated gradients work on the post-softmax class
// probability.

#include <liteinc/train.hpp>

#include <array>
#include <map>
#include <set>

namespace liteinc {

struct AttributionMap {
    std::string method;
    int target_class = 0;
    int length = 0;    // T
    int channels = 0;  // C
    // T x C grid in the external time-major convention; empty for the
    // occlusion method, which scores time windows and whole channels
    // separately rather than single cells.
    std::vector<double> grid;
    bool signed_grid = false;  // aggregations take |value| when set
    std::vector<double> channel_scores;  // S^ch, length C
    std::vector<double> time_scores;     // S^time, length T

    double at(int t, int c) const { return grid[static_cast<size_t>(t) * channels + c]; }
};

// Exact axis sums of the grid (absolute values for signed grids); grid-less
// maps return their stored vectors.
inline std::pair<std::vector<double>, std::vector<double>> aggregate(const AttributionMap& map) {
    if (map.grid.empty()) return {map.channel_scores, map.time_scores};
    std::vector<double> ch(static_cast<size_t>(map.channels), 0.0);
    std::vector<double> time(static_cast<size_t>(map.length), 0.0);
    for (int t = 0; t < map.length; ++t)
        for (int c = 0; c < map.channels; ++c) {
            const double v = map.signed_grid ? std::abs(map.at(t, c)) : map.at(t, c);
            ch[static_cast<size_t>(c)] += v;
            time[static_cast<size_t>(t)] += v;
        }
    return {ch, time};
}

namespace detail {

// Gradient of `target(logits)` w.r.t. the input, returned in the internal
// {C, T} layout together with the feature-map values/gradients when asked.
template <typename T>
struct BackwardCapture {
    std::vector<T> input_grad;    // C*T
    std::vector<T> feature_vals;  // K*T'
    std::vector<T> feature_grad;  // K*T'
    int feature_channels = 0;
    int feature_length = 0;
};

template <typename T>
BackwardCapture<T> backprop_target(Model<T>& model, const Tensor<T>& x0, int target_class,
                                   bool probability_target, bool want_features) {
    Tensor<T> x(x0.shape(), x0.value());
    x.set_requires_grad(true);
    BackwardCapture<T> cap;
    Tape<T> tape;
    {
        auto guard = tape.activate();
        auto probe = model.forward_probe(x, NormMode::Eval);
        const int K = probe.logits.shape().back();
        if (target_class < 0 || target_class >= K)
            throw std::out_of_range("attribution: target class out of range");
        std::vector<T> pick(static_cast<size_t>(K), T(0));
        pick[static_cast<size_t>(target_class)] = T(1);
        auto loss = probability_target ? dot_const(softmax_t(probe.logits, T(1)), pick)
                                       : dot_const(probe.logits, pick);
        tape.backward(loss);
        cap.input_grad = x.grad();
        if (want_features) {
            cap.feature_vals = probe.features.value();
            cap.feature_grad = probe.features.grad();
            cap.feature_channels = probe.features.dim(1);
            cap.feature_length = probe.features.dim(2);
        }
    }
    return cap;
}

template <typename T>
double class_probability(Model<T>& model, const Tensor<T>& x, int target_class) {
    auto probs = softmax_t(model.forward(x, NormMode::Eval), T(1));
    return static_cast<double>(probs.data()[target_class]);
}

// Linear interpolation of a curve from length `from` to length `to` with
// aligned endpoints; identity when the lengths match.
inline std::vector<double> interp_linear(const std::vector<double>& curve, int to) {
    const int from = static_cast<int>(curve.size());
    if (from == to) return curve;
    std::vector<double> out(static_cast<size_t>(to));
    if (from == 1) {
        std::fill(out.begin(), out.end(), curve[0]);
        return out;
    }
    const double scale = static_cast<double>(from - 1) / (to - 1);
    for (int t = 0; t < to; ++t) {
        const double p = t * scale;
        const size_t lo = std::min(static_cast<size_t>(p), static_cast<size_t>(from - 2));
        const double frac = p - static_cast<double>(lo);
        out[static_cast<size_t>(t)] = curve[lo] + frac * (curve[lo + 1] - curve[lo]);
    }
    return out;
}

}  // namespace detail

// S(t,j) = |d logit_c / d x_{t,j}| from one backward pass.
template <typename T>
AttributionMap input_gradient(Model<T>& model, const TimeSeriesSample& sample, int target_class) {
    auto x = sample_tensor<T>(sample);
    auto cap = detail::backprop_target(model, x, target_class, /*probability=*/false,
                                       /*features=*/false);
    AttributionMap map;
    map.method = "input_gradient";
    map.target_class = target_class;
    map.length = sample.length;
    map.channels = sample.channels;
    map.grid.resize(static_cast<size_t>(sample.length) * sample.channels);
    for (int t = 0; t < sample.length; ++t)
        for (int c = 0; c < sample.channels; ++c)
            map.grid[static_cast<size_t>(t) * sample.channels + c] = std::abs(
                static_cast<double>(cap.input_grad[static_cast<size_t>(c) * sample.length + t]));
    std::tie(map.channel_scores, map.time_scores) = aggregate(map);
    return map;
}

// Time score of a window starting at t0: P(c|x) - P(c|x with [t0, t0+w) of
// all channels replaced by the baseline), distributed to covered steps by
// averaging over covering windows. Channel score j: probability drop when the
// whole channel is replaced.
template <typename T>
AttributionMap occlusion_sensitivity(Model<T>& model, const TimeSeriesSample& sample,
                                     int target_class, int window = 0, int stride = 0,
                                     double baseline = 0.0) {
    const int L = sample.length, C = sample.channels;
    if (window == 0) window = std::max(1, L / 16);
    if (stride == 0) stride = std::max(1, window / 2);
    if (window < 1 || window > L) throw std::invalid_argument("occlusion: window must lie in [1, T]");
    if (stride < 1) throw std::invalid_argument("occlusion: stride must be >= 1");

    auto x = sample_tensor<T>(sample);
    const double p_base = detail::class_probability(model, x, target_class);

    AttributionMap map;
    map.method = "occlusion";
    map.target_class = target_class;
    map.length = L;
    map.channels = C;
    map.signed_grid = true;

    std::vector<double> sum(static_cast<size_t>(L), 0.0);
    std::vector<int> cover(static_cast<size_t>(L), 0);
    for (int t0 = 0; t0 < L; t0 += stride) {
        const int t1 = std::min(t0 + window, L);
        Tensor<T> occluded(x.shape(), x.value());
        for (int c = 0; c < C; ++c)
            for (int t = t0; t < t1; ++t)
                occluded.data()[static_cast<int64_t>(c) * L + t] = static_cast<T>(baseline);
        const double drop = p_base - detail::class_probability(model, occluded, target_class);
        for (int t = t0; t < t1; ++t) {
            sum[static_cast<size_t>(t)] += drop;
            cover[static_cast<size_t>(t)]++;
        }
        if (t1 == L) break;
    }
    map.time_scores.resize(static_cast<size_t>(L));
    for (int t = 0; t < L; ++t)
        map.time_scores[static_cast<size_t>(t)] =
            cover[static_cast<size_t>(t)] ? sum[static_cast<size_t>(t)] / cover[static_cast<size_t>(t)] : 0.0;

    map.channel_scores.resize(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c) {
        Tensor<T> occluded(x.shape(), x.value());
        for (int t = 0; t < L; ++t) occluded.data()[static_cast<int64_t>(c) * L + t] = static_cast<T>(baseline);
        map.channel_scores[static_cast<size_t>(c)] =
            p_base - detail::class_probability(model, occluded, target_class);
    }
    return map;
}

// Gradient-weighted activation map over the last inception module's feature
// maps, ReLU-rectified and linearly interpolated to the input resolution.
// The returned time curve is exactly that heatmap; channel scores distribute
// it over input channels by the magnitude of each channel's mean logit
// gradient, so the grid stays a consistent non-negative T x C field.
template <typename T>
AttributionMap grad_cam(Model<T>& model, const TimeSeriesSample& sample, int target_class) {
    auto x = sample_tensor<T>(sample);
    auto cap = detail::backprop_target(model, x, target_class, /*probability=*/false,
                                       /*features=*/true);
    const int K = cap.feature_channels, Tp = cap.feature_length;
    std::vector<double> curve(static_cast<size_t>(Tp), 0.0);
    for (int k = 0; k < K; ++k) {
        double alpha = 0;
        for (int t = 0; t < Tp; ++t)
            alpha += static_cast<double>(cap.feature_grad[static_cast<size_t>(k) * Tp + t]);
        alpha /= Tp;
        for (int t = 0; t < Tp; ++t)
            curve[static_cast<size_t>(t)] +=
                alpha * static_cast<double>(cap.feature_vals[static_cast<size_t>(k) * Tp + t]);
    }
    for (auto& v : curve) v = std::max(0.0, v);

    AttributionMap map;
    map.method = "grad_cam";
    map.target_class = target_class;
    map.length = sample.length;
    map.channels = sample.channels;
    map.time_scores = detail::interp_linear(curve, sample.length);

    // per-input-channel CAM weights: |mean-over-time gradient|
    map.channel_scores.assign(static_cast<size_t>(sample.channels), 0.0);
    double wsum = 0;
    for (int c = 0; c < sample.channels; ++c) {
        double mean_grad = 0;
        for (int t = 0; t < sample.length; ++t)
            mean_grad += static_cast<double>(cap.input_grad[static_cast<size_t>(c) * sample.length + t]);
        map.channel_scores[static_cast<size_t>(c)] = std::abs(mean_grad / sample.length);
        wsum += map.channel_scores[static_cast<size_t>(c)];
    }
    // grid = outer(curve, normalized channel weights): row sums reproduce the
    // curve, column sums are proportional to the channel weights
    map.grid.resize(static_cast<size_t>(sample.length) * sample.channels);
    for (int t = 0; t < sample.length; ++t)
        for (int c = 0; c < sample.channels; ++c) {
            const double w = wsum > 0 ? map.channel_scores[static_cast<size_t>(c)] / wsum
                                      : 1.0 / sample.channels;
            map.grid[static_cast<size_t>(t) * sample.channels + c] =
                map.time_scores[static_cast<size_t>(t)] * w;
        }
    // keep S^ch consistent with the grid column sums
    std::tie(map.channel_scores, std::ignore) = aggregate(map);
    return map;
}

// IG(t,j) = (x - x')_{t,j} times the trapezoidal average of dF/dx along the
// straight path from the baseline, F being the post-softmax class
// probability. The grid keeps its signs; aggregations use |IG|.
template <typename T>
AttributionMap integrated_gradients(Model<T>& model, const TimeSeriesSample& sample,
                                    int target_class, int steps = 50, double baseline = 0.0,
                                    bool probability_target = true) {
    if (steps < 1) throw std::invalid_argument("integrated_gradients: steps must be >= 1");
    const int L = sample.length, C = sample.channels;
    auto x = sample_tensor<T>(sample);

    std::vector<double> avg(static_cast<size_t>(C) * L, 0.0);
    for (int i = 0; i <= steps; ++i) {
        const double a = static_cast<double>(i) / steps;
        Tensor<T> xi(x.shape());
        for (int64_t j = 0; j < x.numel(); ++j)
            xi.data()[j] = static_cast<T>(baseline + a * (static_cast<double>(x.data()[j]) - baseline));
        auto cap = detail::backprop_target(model, xi, target_class, probability_target,
                                           /*features=*/false);
        const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
        for (size_t j = 0; j < avg.size(); ++j) avg[j] += w * static_cast<double>(cap.input_grad[j]);
    }
    for (auto& v : avg) v /= steps;

    AttributionMap map;
    map.method = "integrated_gradients";
    map.target_class = target_class;
    map.length = L;
    map.channels = C;
    map.signed_grid = true;
    map.grid.resize(static_cast<size_t>(L) * C);
    for (int t = 0; t < L; ++t)
        for (int c = 0; c < C; ++c)
            map.grid[static_cast<size_t>(t) * C + c] =
                (static_cast<double>(x.data()[static_cast<int64_t>(c) * L + t]) - baseline) *
                avg[static_cast<size_t>(c) * L + t];
    std::tie(map.channel_scores, map.time_scores) = aggregate(map);
    return map;
}

// ---------------------------------------------------------------------------
// Segments, consensus, evidence chain
// ---------------------------------------------------------------------------

struct Segment {
    int begin = 0;  // [begin, end)
    int end = 0;
    double begin_percent(int T) const { return 100.0 * begin / T; }
    double end_percent(int T) const { return 100.0 * end / T; }
};

// Maximal runs of values strictly greater than the 90th-percentile
// (linear-interpolated order statistic); adjacent runs separated by less than
// T/64 steps are merged. Constant curves yield no segments.
inline std::vector<Segment> key_segments(const std::vector<double>& curve, double percentile = 90.0) {
    const int T = static_cast<int>(curve.size());
    if (T < 10) throw std::invalid_argument("key_segments: curve too short");
    std::vector<double> sorted(curve);
    std::sort(sorted.begin(), sorted.end());
    const double pos = percentile / 100.0 * (T - 1);
    const size_t lo = std::min(static_cast<size_t>(pos), static_cast<size_t>(T - 2));
    const double frac = pos - static_cast<double>(lo);
    const double threshold = sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);

    std::vector<Segment> runs;
    int start = -1;
    for (int t = 0; t <= T; ++t) {
        const bool above = t < T && curve[static_cast<size_t>(t)] > threshold;
        if (above && start < 0) start = t;
        if (!above && start >= 0) {
            runs.push_back({start, t});
            start = -1;
        }
    }
    const int merge_gap = std::max(1, T / 64);
    std::vector<Segment> merged;
    for (auto& r : runs) {
        if (!merged.empty() && r.begin - merged.back().end < merge_gap)
            merged.back().end = r.end;
        else
            merged.push_back(r);
    }
    return merged;
}

// Top-k channels by score, ties broken toward the lower channel index.
inline std::vector<int> top_k_channels(const std::vector<double>& scores, int k) {
    std::vector<int> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    });
    order.resize(std::min<size_t>(order.size(), static_cast<size_t>(k)));
    return order;
}

// Intersection of each method's top-k channel set.
inline std::vector<int> consensus_sensors(const std::vector<std::vector<double>>& channel_scores,
                                          int k = 5) {
    if (channel_scores.empty()) throw std::invalid_argument("consensus: no methods");
    for (auto& v : channel_scores)
        if (v.size() != channel_scores.front().size())
            throw std::invalid_argument("consensus: channel counts differ");
    std::map<int, int> votes;
    for (auto& scores : channel_scores)
        for (int c : top_k_channels(scores, k)) votes[c]++;
    std::vector<int> out;
    for (auto& [c, n] : votes)
        if (n == static_cast<int>(channel_scores.size())) out.push_back(c);
    return out;
}

struct MethodEvidence {
    std::string method;
    std::vector<double> channel_scores;   // averaged over samples
    std::vector<double> time_scores;      // averaged over samples
    std::vector<int> top5;
    std::vector<Segment> segments;
};

struct EvidenceChain {
    int target_class = 0;
    int samples_used = 0;
    bool fewer_than_requested = false;
    std::vector<MethodEvidence> methods;  // input_gradient, occlusion, grad_cam, integrated_gradients
    std::vector<int> consensus;
    int length = 0;
};

// Runs all four methods on up to N samples of the class, averages the
// attributions, then derives per-method top-5 channels, the cross-method
// consensus, and per-method key segments.
template <typename T>
EvidenceChain evidence_chain(Model<T>& model, const std::vector<TimeSeriesSample>& samples,
                             int target_class, int want = 30, int ig_steps = 50) {
    if (samples.empty()) throw std::invalid_argument("evidence_chain: no qualifying samples");
    EvidenceChain chain;
    chain.target_class = target_class;
    chain.samples_used = static_cast<int>(std::min<size_t>(samples.size(), static_cast<size_t>(want)));
    chain.fewer_than_requested = chain.samples_used < want;
    chain.length = samples.front().length;

    const std::array<std::string, 4> names{"input_gradient", "occlusion", "grad_cam",
                                           "integrated_gradients"};
    std::array<std::vector<double>, 4> ch_acc, time_acc;
    for (int i = 0; i < chain.samples_used; ++i) {
        const auto& s = samples[static_cast<size_t>(i)];
        std::array<AttributionMap, 4> maps{
            input_gradient(model, s, target_class), occlusion_sensitivity(model, s, target_class),
            grad_cam(model, s, target_class),
            integrated_gradients(model, s, target_class, ig_steps)};
        for (int m = 0; m < 4; ++m) {
            auto [ch, time] = aggregate(maps[static_cast<size_t>(m)]);
            auto& ca = ch_acc[static_cast<size_t>(m)];
            auto& ta = time_acc[static_cast<size_t>(m)];
            if (ca.empty()) {
                ca.assign(ch.size(), 0.0);
                ta.assign(time.size(), 0.0);
            }
            for (size_t j = 0; j < ch.size(); ++j) ca[j] += ch[j] / chain.samples_used;
            for (size_t j = 0; j < time.size(); ++j) ta[j] += time[j] / chain.samples_used;
        }
    }

    std::vector<std::vector<double>> all_channel_scores;
    for (int m = 0; m < 4; ++m) {
        MethodEvidence ev;
        ev.method = names[static_cast<size_t>(m)];
        ev.channel_scores = ch_acc[static_cast<size_t>(m)];
        ev.time_scores = time_acc[static_cast<size_t>(m)];
        ev.top5 = top_k_channels(ev.channel_scores, 5);
        ev.segments = key_segments(ev.time_scores);
        all_channel_scores.push_back(ev.channel_scores);
        chain.methods.push_back(std::move(ev));
    }
    chain.consensus = consensus_sensors(all_channel_scores, 5);
    return chain;
}

// Correctly classified samples of one class, capped at `want`.
template <typename T>
std::vector<TimeSeriesSample> collect_correct_samples(Model<T>& model,
                                                      const std::vector<TimeSeriesSample>& samples,
                                                      int target_class, int want = 30) {
    auto preds = predict(model, samples);
    std::vector<TimeSeriesSample> out;
    for (size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].label == target_class && preds[i] == target_class) {
            out.push_back(samples[i]);
            if (static_cast<int>(out.size()) >= want) break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Noise-perturbation validation
// ---------------------------------------------------------------------------

struct NoiseStudyResult {
    std::vector<double> sigma_levels;
    std::vector<double> confidence;  // P(c | x + noise) per level
    // normalized attribution entropy H(p)/ln T per level per method
    std::vector<std::map<std::string, double>> entropy;
    std::vector<std::map<std::string, bool>> degenerate;  // sum of S^time was zero
    AttributionMap unperturbed_input_gradient;            // sigma-0 reference
};

inline double normalized_entropy(const std::vector<double>& time_scores, bool* degenerate = nullptr) {
    double sum = 0;
    for (double v : time_scores) sum += std::abs(v);
    if (degenerate) *degenerate = sum <= 0;
    if (sum <= 0) return 1.0;
    double h = 0;
    for (double v : time_scores) {
        const double p = std::abs(v) / sum;
        if (p > 0) h -= p * std::log(p);
    }
    return h / std::log(static_cast<double>(time_scores.size()));
}

// Adds seeded zero-mean Gaussian noise of each level to every grid element
// and records the model confidence and each method's normalized attribution
// entropy. The sigma = 0 entry reproduces the unperturbed attribution
// bit-exactly.
template <typename T>
NoiseStudyResult noise_perturbation_study(Model<T>& model, const TimeSeriesSample& sample,
                                          int target_class,
                                          std::vector<double> sigmas = {0.0, 0.01, 0.03},
                                          uint64_t seed = 1, int ig_steps = 50) {
    NoiseStudyResult result;
    result.sigma_levels = sigmas;
    Rng rng(seed);
    for (double sigma : sigmas) {
        TimeSeriesSample noisy = sample;
        if (sigma > 0)
            for (auto& v : noisy.grid) v = static_cast<float>(v + rng.normal() * sigma);
        auto x = sample_tensor<T>(noisy);
        result.confidence.push_back(detail::class_probability(model, x, target_class));

        std::array<AttributionMap, 4> maps{
            input_gradient(model, noisy, target_class),
            occlusion_sensitivity(model, noisy, target_class), grad_cam(model, noisy, target_class),
            integrated_gradients(model, noisy, target_class, ig_steps)};
        std::map<std::string, double> ent;
        std::map<std::string, bool> flags;
        for (auto& map : maps) {
            bool degenerate = false;
            ent[map.method] = normalized_entropy(map.time_scores, &degenerate);
            flags[map.method] = degenerate;
        }
        result.entropy.push_back(std::move(ent));
        result.degenerate.push_back(std::move(flags));
        if (sigma == 0.0) result.unperturbed_input_gradient = maps[0];
    }
    return result;
}

}  // namespace liteinc
