#pragma once

// Two-stage decision composition, expected-cost accounting, and stage-1
// threshold sweeping. The composition is pure over frozen models and safe for
// concurrent per-sample use.

#include <liteinc/train.hpp>

#include <functional>

namespace liteinc {

// Stage handles abstract over real models and test stubs. Stage 1 yields
// P(anomalous); stage 2 yields an identification class in [0, K).
struct CascadeConfig {
    std::function<double(const TimeSeriesSample&)> stage1_probability;
    std::function<int(const TimeSeriesSample&)> stage2_class;
    double threshold = 0.5;  // stage-2 triggers when P(anomalous) >= threshold
    int input_channels = 0;
    int input_length = 0;

    void validate() const {
        if (!stage1_probability || !stage2_class)
            throw std::invalid_argument("cascade config: both stage handles required");
        if (!(threshold >= 0 && threshold <= 1))
            throw std::invalid_argument("cascade config: threshold must lie in [0,1]");
    }
};

// Stage-1 convention: class index 1 = anomalous.
template <typename T>
CascadeConfig make_cascade(Model<T>& stage1, Model<T>& stage2, double threshold = 0.5) {
    if (stage1.spec().input_channels != stage2.spec().input_channels)
        throw std::invalid_argument("cascade: stage models disagree on input channels");
    CascadeConfig cfg;
    cfg.threshold = threshold;
    cfg.input_channels = stage1.spec().input_channels;
    cfg.stage1_probability = [&stage1](const TimeSeriesSample& s) {
        auto probs = softmax_t(stage1.forward(sample_tensor<T>(s), NormMode::Eval), T(1));
        return static_cast<double>(probs.data()[1]);
    };
    cfg.stage2_class = [&stage2](const TimeSeriesSample& s) {
        auto logits = stage2.forward(sample_tensor<T>(s), NormMode::Eval);
        int best = 0;
        for (int k = 1; k < logits.dim(1); ++k)
            if (logits.data()[k] > logits.data()[best]) best = k;
        return best;
    };
    return cfg;
}

struct CascadeTrace {
    double stage1_probability = 0;
    bool stage2_ran = false;
    int stage2_class = -1;  // identification class in [0, K), valid when stage 2 ran
    int label = 0;          // 0 = normal, 1..K = identified fault class
};

// Returns 0 when the stage-1 anomaly probability is below the threshold;
// otherwise 1 + the stage-2 class. The trace records both stage outputs.
inline CascadeTrace cascade_predict(const TimeSeriesSample& sample, const CascadeConfig& cfg) {
    cfg.validate();
    if (cfg.input_channels && sample.channels != cfg.input_channels)
        throw std::invalid_argument("cascade: sample channel count mismatch");
    if (cfg.input_length && sample.length != cfg.input_length)
        throw std::invalid_argument("cascade: sample length mismatch");
    CascadeTrace trace;
    trace.stage1_probability = cfg.stage1_probability(sample);
    if (trace.stage1_probability >= cfg.threshold) {
        trace.stage2_ran = true;
        trace.stage2_class = cfg.stage2_class(sample);
        trace.label = 1 + trace.stage2_class;
    } else {
        trace.label = 0;
    }
    return trace;
}

struct CostModel {
    double stage1_cost = 0;        // per-sample cost of the screening stage
    double stage2_cost = 0;        // per-sample cost of the identification stage
    double normal_proportion = 0;  // fraction of samples the screen filters out

    void validate() const {
        if (stage1_cost < 0 || stage2_cost < 0)
            throw std::invalid_argument("cost model: costs must be >= 0");
        if (!(normal_proportion >= 0 && normal_proportion <= 1))
            throw std::invalid_argument("cost model: proportion must lie in [0,1]");
    }
};

// Expected per-sample cost C1 + (1 - p) * C2.
inline double expected_cost(const CostModel& m) {
    m.validate();
    return m.stage1_cost + (1.0 - m.normal_proportion) * m.stage2_cost;
}

struct ThresholdPoint {
    double threshold = 0;
    double precision = 0;  // of the anomaly class
    double recall = 0;
    double f1 = 0;
    int64_t flagged = 0;
};

// Anomaly-class precision/recall/F1 per threshold over a labeled set
// (labels: 0 = normal, 1 = anomalous). Stage-1 probabilities are evaluated
// once and reused across the grid.
inline std::vector<ThresholdPoint> threshold_sweep(
    const std::function<double(const TimeSeriesSample&)>& stage1_probability,
    const std::vector<TimeSeriesSample>& samples, const std::vector<double>& thresholds) {
    if (samples.empty()) throw std::invalid_argument("threshold_sweep: empty evaluation set");
    bool has_pos = false, has_neg = false;
    for (auto& s : samples) (s.label == 0 ? has_neg : has_pos) = true;
    if (!has_pos || !has_neg) throw std::invalid_argument("threshold_sweep: single-class evaluation set");
    for (size_t i = 1; i < thresholds.size(); ++i)
        if (thresholds[i] <= thresholds[i - 1])
            throw std::invalid_argument("threshold_sweep: thresholds must be sorted ascending");

    std::vector<double> probs;
    for (auto& s : samples) probs.push_back(stage1_probability(s));

    std::vector<ThresholdPoint> out;
    for (double thr : thresholds) {
        ThresholdPoint pt;
        pt.threshold = thr;
        int64_t tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < samples.size(); ++i) {
            const bool flag = probs[i] >= thr;
            const bool truth = samples[i].label != 0;
            if (flag) pt.flagged++;
            if (flag && truth) ++tp;
            if (flag && !truth) ++fp;
            if (!flag && truth) ++fn;
        }
        pt.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
        pt.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
        pt.f1 = pt.precision + pt.recall == 0 ? 0.0
                                              : 2 * pt.precision * pt.recall / (pt.precision + pt.recall);
        out.push_back(pt);
    }
    return out;
}

}  // namespace liteinc
