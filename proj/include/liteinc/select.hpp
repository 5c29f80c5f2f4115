#pragma once

// Channel-importance estimators (mutual information over summary statistics,
// gradient magnitude, SE gate weights) and the fusion decision procedure.
// All estimators are read-only over the model and dataset.

#include <liteinc/train.hpp>

#include <array>
#include <fstream>
#include <sstream>

namespace liteinc {

// [mean, population std, max, min] of one channel's series.
inline std::array<double, 4> stat_features(const std::vector<double>& series) {
    if (series.size() < 2) throw std::invalid_argument("stat_features: needs at least 2 values");
    double mean = 0, hi = series[0], lo = series[0];
    for (double v : series) {
        mean += v;
        hi = std::max(hi, v);
        lo = std::min(lo, v);
    }
    mean /= static_cast<double>(series.size());
    double var = 0;
    for (double v : series) var += (v - mean) * (v - mean);
    var /= static_cast<double>(series.size());
    return {mean, std::sqrt(var), hi, lo};
}

// Binned plug-in mutual information (nats) between a scalar feature and a
// discrete label: equal-width bins over the feature's observed range.
inline double mi_of_feature(const std::vector<double>& feature, const std::vector<int>& labels,
                            int bins = 16) {
    if (bins < 2) throw std::invalid_argument("mi: needs at least 2 bins");
    if (feature.size() != labels.size() || feature.empty())
        throw std::invalid_argument("mi: feature/label length mismatch");
    const size_t n = feature.size();
    double lo = feature[0], hi = feature[0];
    for (double v : feature) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) return 0.0;  // constant feature carries no information

    int max_label = 0;
    for (int y : labels) max_label = std::max(max_label, y);
    const int L = max_label + 1;
    std::vector<double> joint(static_cast<size_t>(bins) * L, 0.0);
    std::vector<double> pb(static_cast<size_t>(bins), 0.0), py(static_cast<size_t>(L), 0.0);
    for (size_t i = 0; i < n; ++i) {
        int b = static_cast<int>((feature[i] - lo) / (hi - lo) * bins);
        b = std::min(b, bins - 1);
        joint[static_cast<size_t>(b) * L + labels[i]] += 1.0 / static_cast<double>(n);
        pb[static_cast<size_t>(b)] += 1.0 / static_cast<double>(n);
        py[static_cast<size_t>(labels[i])] += 1.0 / static_cast<double>(n);
    }
    double mi = 0;
    for (int b = 0; b < bins; ++b)
        for (int y = 0; y < L; ++y) {
            const double pxy = joint[static_cast<size_t>(b) * L + y];
            if (pxy > 0) mi += pxy * std::log(pxy / (pb[static_cast<size_t>(b)] * py[static_cast<size_t>(y)]));
        }
    return mi;
}

// Per-channel MI: the average over the four summary statistics of each
// feature's MI with the label. Single-class label sets yield zeros and set
// the warning flag.
inline std::vector<double> mi_scores(const std::vector<TimeSeriesSample>& samples, int bins = 16,
                                     bool* single_class_warning = nullptr) {
    if (samples.empty()) throw std::invalid_argument("mi_scores: empty dataset");
    const int C = samples.front().channels;
    std::vector<int> labels;
    for (auto& s : samples) labels.push_back(s.label);
    bool single = true;
    for (int y : labels) single &= y == labels[0];
    if (single_class_warning) *single_class_warning = single;
    if (single) return std::vector<double>(static_cast<size_t>(C), 0.0);

    std::vector<double> out(static_cast<size_t>(C), 0.0);
    std::vector<double> series;
    for (int c = 0; c < C; ++c) {
        std::array<std::vector<double>, 4> feats;
        for (auto& f : feats) f.reserve(samples.size());
        for (auto& s : samples) {
            series.assign(s.grid.begin() + static_cast<long>(c) * s.length,
                          s.grid.begin() + static_cast<long>(c + 1) * s.length);
            auto st = stat_features(series);
            for (int i = 0; i < 4; ++i) feats[static_cast<size_t>(i)].push_back(st[static_cast<size_t>(i)]);
        }
        double acc = 0;
        for (int i = 0; i < 4; ++i) acc += mi_of_feature(feats[static_cast<size_t>(i)], labels, bins);
        out[static_cast<size_t>(c)] = acc / 4.0;
    }
    return out;
}

// G_c = mean over (batch, time) of |dL/dx| with cross-entropy loss, evaluated
// at the model's current (best-validation) parameters.
template <typename T>
std::vector<double> grad_importance(Model<T>& model, const std::vector<TimeSeriesSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("grad_importance: empty batch");
    const int C = samples.front().channels;
    const int L = samples.front().length;
    std::vector<size_t> idx(samples.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto x = batch_tensor<T>(samples, idx);
    x.set_requires_grad(true);
    std::vector<int> labels;
    for (auto& s : samples) labels.push_back(s.label);

    Tape<T> tape;
    {
        auto guard = tape.activate();
        auto loss = cross_entropy(model.forward(x, NormMode::Eval), labels);
        tape.backward(loss);
    }
    std::vector<double> out(static_cast<size_t>(C), 0.0);
    const auto& g = x.grad();
    for (size_t b = 0; b < samples.size(); ++b)
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < L; ++t)
                out[static_cast<size_t>(c)] +=
                    std::abs(static_cast<double>(g[(b * C + c) * static_cast<size_t>(L) + t]));
    for (auto& v : out) v /= static_cast<double>(samples.size()) * L;
    return out;
}

// Mean SE gate weight per channel over a validation set. Requires a model
// built with an input gate.
template <typename T>
std::vector<double> se_channel_weights(Model<T>& model, const std::vector<TimeSeriesSample>& samples,
                                       int batch_size = 32) {
    if (!model.spec().input_gate) throw std::logic_error("se_channel_weights: model has no input gate");
    if (samples.empty()) throw std::invalid_argument("se_channel_weights: empty set");
    const int C = samples.front().channels;
    std::vector<double> out(static_cast<size_t>(C), 0.0);
    int64_t count = 0;
    for (size_t begin = 0; begin < samples.size(); begin += static_cast<size_t>(batch_size)) {
        std::vector<size_t> idx;
        for (size_t i = begin; i < std::min(samples.size(), begin + static_cast<size_t>(batch_size)); ++i)
            idx.push_back(i);
        model.forward(batch_tensor<T>(samples, idx), NormMode::Eval);
        const auto& gate = model.last_gate();
        for (size_t b = 0; b < idx.size(); ++b)
            for (int c = 0; c < C; ++c)
                out[static_cast<size_t>(c)] += static_cast<double>(gate[b * C + c]);
        count += static_cast<int64_t>(idx.size());
    }
    for (auto& v : out) v /= static_cast<double>(count);
    return out;
}

// ---------------------------------------------------------------------------
// Fusion
// ---------------------------------------------------------------------------

struct ChannelScores {
    int channels = 0;
    std::vector<double> mi, gradient, se_weight;
    std::vector<int> mi_rank, gradient_rank, se_rank;  // 1 = most important

    static std::vector<int> rank_desc(const std::vector<double>& score) {
        std::vector<int> order(score.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return score[static_cast<size_t>(a)] > score[static_cast<size_t>(b)];
        });
        std::vector<int> rank(score.size());
        for (size_t pos = 0; pos < order.size(); ++pos)
            rank[static_cast<size_t>(order[pos])] = static_cast<int>(pos) + 1;
        return rank;
    }

    static ChannelScores from_scores(std::vector<double> mi, std::vector<double> gradient,
                                     std::vector<double> se_weight) {
        ChannelScores s;
        s.channels = static_cast<int>(mi.size());
        if (gradient.size() != mi.size() || se_weight.size() != mi.size())
            throw std::invalid_argument("channel scores: length mismatch");
        s.mi = std::move(mi);
        s.gradient = std::move(gradient);
        s.se_weight = std::move(se_weight);
        s.mi_rank = rank_desc(s.mi);
        s.gradient_rank = rank_desc(s.gradient);
        s.se_rank = rank_desc(s.se_weight);
        return s;
    }
};

enum class OverrideKind { ForceIn, ForceOutCausality, ForceOutRedundancy };

struct OverrideEntry {
    int channel = -1;
    OverrideKind kind = OverrideKind::ForceIn;
    std::string reason;
};

// Override file grammar, one entry per line:
//   <channel> <force_in | force_out_causality | force_out_redundancy> <reason...>
// '#' starts a comment.
inline std::vector<OverrideEntry> parse_override_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open override file: " + path);
    std::vector<OverrideEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::stringstream ss(line);
        OverrideEntry e;
        std::string kind;
        if (!(ss >> e.channel >> kind)) continue;
        if (kind == "force_in")
            e.kind = OverrideKind::ForceIn;
        else if (kind == "force_out_causality")
            e.kind = OverrideKind::ForceOutCausality;
        else if (kind == "force_out_redundancy")
            e.kind = OverrideKind::ForceOutRedundancy;
        else
            throw std::runtime_error("override file: unknown action '" + kind + "'");
        std::getline(ss, e.reason);
        while (!e.reason.empty() && e.reason.front() == ' ') e.reason.erase(e.reason.begin());
        out.push_back(std::move(e));
    }
    return out;
}

struct ChannelVerdict {
    int channel = 0;
    bool retained = false;
    std::string criterion;  // consistency | causality-override | redundancy-override | domain-include
    std::string reason;
    int mi_rank = 0, gradient_rank = 0, se_rank = 0;
    double median_rank = 0;
};

struct SelectionReport {
    ChannelScores scores;
    std::vector<int> retained;
    std::vector<ChannelVerdict> verdicts;
};

// Default rule: retain a channel when its median rank across the three
// methods is <= M/2 and it is top-half in at least two methods. Overrides
// then force channels out (with the physical criterion that fired) or in;
// every decision carries its criterion.
inline SelectionReport fuse_select(const ChannelScores& scores,
                                   const std::vector<OverrideEntry>& overrides = {}) {
    const int M = scores.channels;
    if (M < 1) throw std::invalid_argument("fuse_select: no channels");
    std::vector<const OverrideEntry*> by_channel(static_cast<size_t>(M), nullptr);
    for (auto& e : overrides) {
        if (e.channel < 0 || e.channel >= M)
            throw std::invalid_argument("fuse_select: override channel out of range");
        if (by_channel[static_cast<size_t>(e.channel)] != nullptr)
            throw std::invalid_argument("fuse_select: conflicting overrides on channel " +
                                        std::to_string(e.channel));
        by_channel[static_cast<size_t>(e.channel)] = &e;
    }

    SelectionReport report;
    report.scores = scores;
    const double half = M / 2.0;
    for (int c = 0; c < M; ++c) {
        ChannelVerdict v;
        v.channel = c;
        v.mi_rank = scores.mi_rank[static_cast<size_t>(c)];
        v.gradient_rank = scores.gradient_rank[static_cast<size_t>(c)];
        v.se_rank = scores.se_rank[static_cast<size_t>(c)];
        std::array<int, 3> ranks{v.mi_rank, v.gradient_rank, v.se_rank};
        std::sort(ranks.begin(), ranks.end());
        v.median_rank = ranks[1];
        const int top_half_votes = (v.mi_rank <= half) + (v.gradient_rank <= half) + (v.se_rank <= half);

        if (const OverrideEntry* e = by_channel[static_cast<size_t>(c)]) {
            v.reason = e->reason;
            switch (e->kind) {
                case OverrideKind::ForceIn:
                    v.retained = true;
                    v.criterion = "domain-include";
                    break;
                case OverrideKind::ForceOutCausality:
                    v.retained = false;
                    v.criterion = "causality-override";
                    break;
                case OverrideKind::ForceOutRedundancy:
                    v.retained = false;
                    v.criterion = "redundancy-override";
                    break;
            }
        } else {
            v.retained = v.median_rank <= half && top_half_votes >= 2;
            v.criterion = "consistency";
        }
        if (v.retained) report.retained.push_back(c);
        report.verdicts.push_back(std::move(v));
    }
    return report;
}

}  // namespace liteinc
