#pragma once

// Losses (cross-entropy, temperature-scaled distillation), Adam with coupled
// weight decay, global-norm clipping, plateau scheduling, the fit loop and
// classification metrics.

#include <liteinc/data.hpp>
#include <liteinc/nn.hpp>

#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>

namespace liteinc {

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;
    int batch_size = 32;
    int max_epochs = 200;
    double clip_max_norm = 1.0;
    double plateau_factor = 0.5;
    int plateau_patience = 10;
    uint64_t seed = 0;
    std::string select_by = "macro_f1";  // best-checkpoint metric: macro_f1 | recall
    std::string history_path;            // optional line-oriented training log

    void validate() const {
        if (learning_rate <= 0 || weight_decay < 0 || batch_size < 1 || max_epochs < 1)
            throw std::invalid_argument("train config: bad values");
        if (clip_max_norm <= 0) throw std::invalid_argument("train config: clip max norm must be > 0");
        if (plateau_factor <= 0 || plateau_factor >= 1 || plateau_patience < 1)
            throw std::invalid_argument("train config: bad plateau settings");
        if (select_by != "macro_f1" && select_by != "recall")
            throw std::invalid_argument("train config: select_by must be macro_f1 or recall");
    }
};

template <typename T>
struct DistillConfig {
    double temperature = 8.0;
    double soft_weight = 0.7;  // weight on the soft loss
    Model<T>* teacher = nullptr;

    void validate() const {
        if (temperature <= 0) throw std::invalid_argument("distill config: temperature must be > 0");
        if (soft_weight < 0 || soft_weight > 1)
            throw std::invalid_argument("distill config: soft weight must lie in [0,1]");
        if (!teacher) throw std::invalid_argument("distill config: teacher model required");
    }
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean over the batch of -log softmax(logits)[label].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    Tensor<T> z = logits;
    if (z.rank() == 1) z = Tensor<T>({1, z.dim(0)}, z.value(), z.requires_grad());
    return nll_mean(log_softmax_t(z, T(1)), labels);
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, int label) {
    return cross_entropy(logits, std::vector<int>{label});
}

// tau^2 * KL( softmax(z_t / tau) || softmax(z_s / tau) ), natural log, mean
// over batch rows. The teacher side is treated as a constant: gradients flow
// only through the student logits.
template <typename T>
Tensor<T> kd_loss(const Tensor<T>& teacher_logits, const Tensor<T>& student_logits, T temperature) {
    if (temperature <= T(0)) throw std::invalid_argument("kd_loss: temperature must be > 0");
    if (teacher_logits.shape() != student_logits.shape())
        throw std::invalid_argument("kd_loss: logit shapes differ");
    detail::check_finite(teacher_logits, "kd_loss");
    detail::check_finite(student_logits, "kd_loss");

    const int K = teacher_logits.shape().back();
    const int64_t R = detail::checked_rows(teacher_logits.numel(), K, "kd_loss");

    // teacher distribution and its entropy term, computed outside the recording
    std::vector<T> p(static_cast<size_t>(teacher_logits.numel()));
    T entropy_term = T(0);  // sum over rows of sum_i p_i * log p_i
    for (int64_t r = 0; r < R; ++r) {
        const T* row = teacher_logits.data() + r * K;
        T mx = row[0];
        for (int i = 1; i < K; ++i) mx = std::max(mx, row[i]);
        T sum = T(0);
        for (int i = 0; i < K; ++i) {
            p[static_cast<size_t>(r * K + i)] = std::exp((row[i] - mx) / temperature);
            sum += p[static_cast<size_t>(r * K + i)];
        }
        const T log_sum = std::log(sum);
        for (int i = 0; i < K; ++i) {
            T& pi = p[static_cast<size_t>(r * K + i)];
            const T logp = (row[i] - mx) / temperature - log_sum;
            pi /= sum;
            entropy_term += pi * logp;
        }
    }

    auto logp_s = log_softmax_t(student_logits, temperature);
    auto cross = dot_const(logp_s, p);  // sum over rows of sum_i p_i * log q_i
    const T factor = temperature * temperature / static_cast<T>(R);
    return scale(add_scalar(scale(cross, T(-1)), entropy_term), factor);
}

// soft_weight * kd + (1 - soft_weight) * cross-entropy.
template <typename T>
Tensor<T> total_distill_loss(const Tensor<T>& teacher_logits, const Tensor<T>& student_logits,
                             const std::vector<int>& labels, double temperature, double soft_weight) {
    if (temperature <= 0) throw std::invalid_argument("distill loss: temperature must be > 0");
    if (soft_weight < 0 || soft_weight > 1)
        throw std::invalid_argument("distill loss: soft weight must lie in [0,1]");
    auto soft = kd_loss(teacher_logits, student_logits, static_cast<T>(temperature));
    auto hard = cross_entropy(student_logits, labels);
    return add(scale(soft, static_cast<T>(soft_weight)), scale(hard, static_cast<T>(1.0 - soft_weight)));
}

// ---------------------------------------------------------------------------
// Optimizer, clipping, scheduling
// ---------------------------------------------------------------------------

// Standard bias-corrected Adam. Weight decay is coupled: wd * theta is added
// to the gradient before the moment update. A non-finite gradient aborts the
// step before any parameter is touched.
template <typename T>
class Adam {
public:
    Adam(std::vector<Tensor<T>> params, double lr, double weight_decay = 0)
        : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay) {
        for (auto& p : params_) {
            m_.emplace_back(p.value().size(), T(0));
            v_.emplace_back(p.value().size(), T(0));
        }
    }

    void step() {
        for (auto& p : params_)
            for (T g : p.grad())
                if (!std::isfinite(static_cast<double>(g)))
                    throw std::domain_error("adam: non-finite gradient");
        ++t_;
        const double bc1 = 1.0 - std::pow(0.9, t_);
        const double bc2 = 1.0 - std::pow(0.999, t_);
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& val = params_[i].value();
            auto& grad = params_[i].grad();
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t j = 0; j < val.size(); ++j) {
                const double g = static_cast<double>(grad[j]) + weight_decay_ * static_cast<double>(val[j]);
                m[j] = static_cast<T>(0.9 * m[j] + 0.1 * g);
                v[j] = static_cast<T>(0.999 * v[j] + 0.001 * g * g);
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                val[j] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + 1e-8));
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    double lr_;
    double weight_decay_;
    int64_t t_ = 0;
};

// Scales all gradients by max_norm / g when the global L2 norm g exceeds
// max_norm. Returns the pre-clip norm.
template <typename T>
double clip_global_norm(std::vector<Tensor<T>>& params, double max_norm) {
    if (max_norm <= 0) throw std::invalid_argument("clip: max_norm must be > 0");
    double sq = 0;
    for (auto& p : params)
        for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const T s = static_cast<T>(max_norm / norm);
        for (auto& p : params)
            for (T& g : p.grad()) g *= s;
    }
    return norm;
}

// Halves (by `factor`) the learning rate after `patience` consecutive epochs
// without a strict improvement of the monitored value (tolerance 1e-8);
// never drops below 1e-7.
class PlateauScheduler {
public:
    PlateauScheduler(double factor = 0.5, int patience = 10) : factor_(factor), patience_(patience) {
        if (factor <= 0 || factor >= 1) throw std::invalid_argument("plateau: factor must be in (0,1)");
        if (patience < 1) throw std::invalid_argument("plateau: patience must be >= 1");
    }

    double step(double lr, double monitored) {
        if (monitored < best_ - 1e-8) {
            best_ = monitored;
            bad_epochs_ = 0;
            return lr;
        }
        if (++bad_epochs_ >= patience_) {
            bad_epochs_ = 0;
            lr = std::max(lr * factor_, 1e-7);
        }
        return lr;
    }

private:
    double factor_;
    int patience_;
    double best_ = std::numeric_limits<double>::infinity();
    int bad_epochs_ = 0;
};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct MetricsReport {
    double accuracy = 0;
    std::vector<double> precision, recall, f1;  // per class
    double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
    std::vector<int64_t> confusion;  // K x K row-major, row = true label
    int classes = 0;

    int64_t support(int k) const {
        int64_t s = 0;
        for (int j = 0; j < classes; ++j) s += confusion[static_cast<size_t>(k) * classes + j];
        return s;
    }
};

// Per-class precision/recall/F1 with the 0-convention on zero denominators;
// macro scores are unweighted class means.
inline MetricsReport evaluate_metrics(const std::vector<int>& predictions,
                                      const std::vector<int>& labels, int K) {
    if (predictions.empty()) throw std::invalid_argument("metrics: empty input");
    if (predictions.size() != labels.size()) throw std::invalid_argument("metrics: length mismatch");
    MetricsReport rep;
    rep.classes = K;
    rep.confusion.assign(static_cast<size_t>(K) * K, 0);
    int64_t correct = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= K || predictions[i] < 0 || predictions[i] >= K)
            throw std::out_of_range("metrics: label outside [0,K)");
        rep.confusion[static_cast<size_t>(labels[i]) * K + predictions[i]]++;
        if (labels[i] == predictions[i]) ++correct;
    }
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    rep.precision.resize(static_cast<size_t>(K));
    rep.recall.resize(static_cast<size_t>(K));
    rep.f1.resize(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
        int64_t tp = rep.confusion[static_cast<size_t>(k) * K + k];
        int64_t fp = 0, fn = 0;
        for (int j = 0; j < K; ++j) {
            if (j != k) {
                fp += rep.confusion[static_cast<size_t>(j) * K + k];
                fn += rep.confusion[static_cast<size_t>(k) * K + j];
            }
        }
        const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
        const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
        rep.precision[static_cast<size_t>(k)] = p;
        rep.recall[static_cast<size_t>(k)] = r;
        rep.f1[static_cast<size_t>(k)] = p + r == 0 ? 0.0 : 2 * p * r / (p + r);
        rep.macro_precision += p / K;
        rep.macro_recall += r / K;
        rep.macro_f1 += rep.f1[static_cast<size_t>(k)] / K;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Batch assembly, prediction helpers
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> batch_tensor(const std::vector<TimeSeriesSample>& samples, const std::vector<size_t>& idx) {
    if (idx.empty()) throw std::invalid_argument("batch_tensor: empty index set");
    const int C = samples[idx[0]].channels;
    const int L = samples[idx[0]].length;
    Tensor<T> x({static_cast<int>(idx.size()), C, L});
    for (size_t b = 0; b < idx.size(); ++b) {
        const auto& s = samples[idx[b]];
        if (s.channels != C || s.length != L) throw std::invalid_argument("batch_tensor: inconsistent shapes");
        for (size_t i = 0; i < s.grid.size(); ++i)
            x.data()[b * s.grid.size() + i] = static_cast<T>(s.grid[i]);
    }
    return x;
}

template <typename T>
Tensor<T> sample_tensor(const TimeSeriesSample& s) {
    return batch_tensor<T>({s}, {0});
}

// Class probabilities for every sample, batched, eval mode, no recording.
template <typename T>
std::vector<std::vector<double>> predict_probs(Model<T>& model,
                                               const std::vector<TimeSeriesSample>& samples,
                                               int batch_size = 32) {
    std::vector<std::vector<double>> out;
    for (size_t begin = 0; begin < samples.size(); begin += static_cast<size_t>(batch_size)) {
        std::vector<size_t> idx;
        for (size_t i = begin; i < std::min(samples.size(), begin + static_cast<size_t>(batch_size)); ++i)
            idx.push_back(i);
        auto probs = softmax_t(model.forward(batch_tensor<T>(samples, idx), NormMode::Eval), T(1));
        const int K = probs.dim(1);
        for (size_t b = 0; b < idx.size(); ++b) {
            std::vector<double> row(static_cast<size_t>(K));
            for (int k = 0; k < K; ++k) row[static_cast<size_t>(k)] = static_cast<double>(probs.data()[b * K + k]);
            out.push_back(std::move(row));
        }
    }
    return out;
}

template <typename T>
std::vector<int> predict(Model<T>& model, const std::vector<TimeSeriesSample>& samples,
                         int batch_size = 32) {
    std::vector<int> out;
    for (auto& row : predict_probs(model, samples, batch_size)) {
        int best = 0;
        for (size_t k = 1; k < row.size(); ++k)
            if (row[k] > row[static_cast<size_t>(best)]) best = static_cast<int>(k);
        out.push_back(best);
    }
    return out;
}

// Mean over samples of the prediction entropy -sum_k p_k ln p_k.
template <typename T>
double mean_prediction_entropy(Model<T>& model, const std::vector<TimeSeriesSample>& samples) {
    double total = 0;
    auto probs = predict_probs(model, samples);
    for (auto& row : probs) {
        double h = 0;
        for (double p : row)
            if (p > 0) h -= p * std::log(p);
        total += h;
    }
    return total / static_cast<double>(probs.size());
}

// ---------------------------------------------------------------------------
// Fit loop
// ---------------------------------------------------------------------------

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;
    double val_loss = 0;
    double val_accuracy = 0;
    double val_macro_f1 = 0;
    double val_macro_recall = 0;
    double lr = 0;
};

struct FitHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    MetricsReport best_metrics;
};

// Epoch loop of shuffled fixed-size batches: loss -> backward -> clip ->
// adam, with per-epoch validation metrics, plateau scheduling on the
// validation loss, and best-checkpoint retention by the configured metric.
// Fully reproducible given the seed.
template <typename T>
FitHistory fit(Model<T>& model, const std::vector<TimeSeriesSample>& train_set,
               const std::vector<TimeSeriesSample>& val_set, const TrainConfig& cfg,
               const DistillConfig<T>* distill = nullptr) {
    cfg.validate();
    if (distill) distill->validate();
    if (train_set.empty() || val_set.empty()) throw std::invalid_argument("fit: empty split");

    auto params = model.params();
    Adam<T> opt(params, cfg.learning_rate, cfg.weight_decay);
    PlateauScheduler sched(cfg.plateau_factor, cfg.plateau_patience);
    Rng shuffle_rng(cfg.seed ^ 0xf17f17ULL);

    std::ofstream log;
    if (!cfg.history_path.empty()) {
        log.open(cfg.history_path);
        if (!log) throw std::runtime_error("fit: cannot open history log " + cfg.history_path);
    }

    std::vector<int> val_labels;
    for (auto& s : val_set) val_labels.push_back(s.label);

    FitHistory history;
    double best_score = -1;
    std::vector<std::vector<T>> best_params;
    std::vector<std::vector<T>> best_state;

    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.uniform_int(static_cast<int>(i)))]);

        double loss_sum = 0;
        int64_t batches = 0;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            std::vector<size_t> idx(order.begin() + static_cast<long>(begin),
                                    order.begin() + static_cast<long>(std::min(
                                                        order.size(), begin + static_cast<size_t>(cfg.batch_size))));
            auto x = batch_tensor<T>(train_set, idx);
            std::vector<int> labels;
            for (size_t i : idx) labels.push_back(train_set[i].label);

            Tensor<T> teacher_logits;
            if (distill) teacher_logits = distill->teacher->forward(x, NormMode::Eval);

            opt.zero_grad();
            Tape<T> tape;
            {
                auto guard = tape.activate();
                auto logits = model.forward(x, NormMode::Train);
                auto loss = distill ? total_distill_loss(teacher_logits, logits, labels,
                                                         distill->temperature, distill->soft_weight)
                                    : cross_entropy(logits, labels);
                const double lv = static_cast<double>(loss.item());
                if (!std::isfinite(lv))
                    throw std::runtime_error("fit: non-finite loss at epoch " + std::to_string(epoch) +
                                             ", batch " + std::to_string(batches));
                loss_sum += lv;
                ++batches;
                tape.backward(loss);
            }
            clip_global_norm(params, cfg.clip_max_norm);
            opt.step();
        }

        // validation pass
        double val_loss = 0;
        std::vector<int> val_pred;
        {
            int64_t vbatches = 0;
            for (size_t begin = 0; begin < val_set.size(); begin += static_cast<size_t>(cfg.batch_size)) {
                std::vector<size_t> idx;
                for (size_t i = begin;
                     i < std::min(val_set.size(), begin + static_cast<size_t>(cfg.batch_size)); ++i)
                    idx.push_back(i);
                auto logits = model.forward(batch_tensor<T>(val_set, idx), NormMode::Eval);
                std::vector<int> labels;
                for (size_t i : idx) labels.push_back(val_set[i].label);
                val_loss += static_cast<double>(cross_entropy(logits, labels).item());
                ++vbatches;
                const int K = logits.dim(1);
                for (size_t b = 0; b < idx.size(); ++b) {
                    int best = 0;
                    for (int k = 1; k < K; ++k)
                        if (logits.data()[b * K + k] > logits.data()[b * K + best]) best = k;
                    val_pred.push_back(best);
                }
            }
            val_loss /= static_cast<double>(vbatches);
        }
        auto metrics = evaluate_metrics(val_pred, val_labels, model.spec().classes);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(batches);
        rec.val_loss = val_loss;
        rec.val_accuracy = metrics.accuracy;
        rec.val_macro_f1 = metrics.macro_f1;
        rec.val_macro_recall = metrics.macro_recall;
        rec.lr = opt.lr();
        history.epochs.push_back(rec);
        if (log) {
            log << "epoch=" << rec.epoch << " train_loss=" << rec.train_loss
                << " val_loss=" << rec.val_loss << " val_accuracy=" << rec.val_accuracy
                << " val_macro_f1=" << rec.val_macro_f1 << " val_macro_recall=" << rec.val_macro_recall
                << " lr=" << rec.lr << "\n";
        }

        // ties update to the latest epoch, so a run that saturates the metric
        // still retains the most-trained weights
        const double score = cfg.select_by == "recall" ? metrics.macro_recall : metrics.macro_f1;
        if (score >= best_score) {
            best_score = score;
            history.best_epoch = epoch;
            history.best_metrics = metrics;
            best_params.clear();
            for (auto& p : params) best_params.push_back(p.value());
            best_state.clear();
            for (auto& s : model.named_state()) best_state.push_back(*s.data);
        }
        opt.set_lr(sched.step(opt.lr(), val_loss));
    }

    // restore the best checkpoint
    if (history.best_epoch > 0) {
        for (size_t i = 0; i < params.size(); ++i) params[i].value() = best_params[i];
        auto state = model.named_state();
        for (size_t i = 0; i < state.size(); ++i) *state[i].data = best_state[i];
    }
    return history;
}

}  // namespace liteinc
