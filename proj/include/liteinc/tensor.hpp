#pragma once

// Recorded-operation tensors with reverse-mode differentiation.
//
// Layout convention: feature maps are channel-major {B, C, T} so the
// convolution inner loops run over contiguous time steps. Sequence data for
// attention is {B, T, D}. Conversion to/from the external T x C convention
// happens at module boundaries, not here.
//
// A Tape is a single-threaded unit of work: ops record onto the thread's
// active tape when any input requires gradients. Distinct tapes may run on
// distinct threads concurrently; parameter buffers are only read during
// forward/backward.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace liteinc {

template <typename T>
struct TensorNode {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until the node participates in a backward pass
    bool requires_grad = false;

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <typename T>
class Tensor {
public:
    Tensor() : node_(std::make_shared<TensorNode<T>>()) {}

    Tensor(std::vector<int> shape, T fill = T(0), bool requires_grad = false)
        : node_(std::make_shared<TensorNode<T>>()) {
        node_->shape = std::move(shape);
        node_->value.assign(static_cast<size_t>(node_->numel()), fill);
        node_->requires_grad = requires_grad;
    }

    Tensor(std::vector<int> shape, std::vector<T> data, bool requires_grad = false)
        : node_(std::make_shared<TensorNode<T>>()) {
        node_->shape = std::move(shape);
        if (static_cast<int64_t>(data.size()) != node_->numel())
            throw std::invalid_argument("tensor: data length does not match shape");
        node_->value = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int64_t numel() const { return node_->numel(); }

    std::vector<T>& value() { return node_->value; }
    const std::vector<T>& value() const { return node_->value; }
    T* data() { return node_->value.data(); }
    const T* data() const { return node_->value.data(); }
    T item() const {
        if (numel() != 1) throw std::logic_error("item() on non-scalar tensor");
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    std::vector<T>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<T>& grad() const { return node_->grad; }
    void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

    std::shared_ptr<TensorNode<T>> node() const { return node_; }

    bool defined() const { return !node_->shape.empty(); }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

// Append-only recording of the forward pass. Entries are stored in execution
// order, so the reverse sweep is a valid reverse-topological visit that hits
// every recorded op exactly once.
template <typename T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    class Guard {
    public:
        explicit Guard(Tape* t) : prev_(current_), mine_(t) { current_ = t; }
        ~Guard() { current_ = prev_; }
        Guard(const Guard&) = delete;
        Guard& operator=(const Guard&) = delete;

    private:
        Tape* prev_;
        Tape* mine_;
    };

    Guard activate() { return Guard(this); }
    static Tape* current() { return current_; }

    void record(const char* tag, std::function<void()> backward) {
        entries_.push_back({tag, std::move(backward)});
        backward_done_ = false;
    }

    size_t size() const { return entries_.size(); }

    void backward(Tensor<T>& loss) {
        if (loss.numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar");
        if (entries_.empty())
            throw std::logic_error("backward: recording is empty");
        if (backward_done_)
            throw std::logic_error("backward: called twice without a fresh forward");
        loss.grad()[0] = T(1);
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
        backward_done_ = true;
    }

    // Drops the recorded ops (and their saved values) so the same tape can
    // host a fresh forward pass.
    void clear() {
        entries_.clear();
        backward_done_ = false;
    }

private:
    struct Entry {
        const char* tag;
        std::function<void()> fn;
    };
    std::vector<Entry> entries_;
    bool backward_done_ = false;
    static thread_local Tape* current_;
};

template <typename T>
thread_local Tape<T>* Tape<T>::current_ = nullptr;

enum class Padding { Same, Valid };
enum class NormMode { Train, Eval };

namespace detail {

template <typename T>
bool recording(std::initializer_list<const Tensor<T>*> inputs) {
    if (Tape<T>::current() == nullptr) return false;
    for (const Tensor<T>* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

template <typename T>
void mark_recorded(Tensor<T>& out) {
    out.set_requires_grad(true);
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* what) {
    for (T v : t.value())
        if (!std::isfinite(static_cast<double>(v)))
            throw std::domain_error(std::string(what) + ": non-finite value");
}

inline int64_t checked_rows(int64_t numel, int n, const char* what) {
    if (n <= 0 || numel % n != 0)
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
    return numel / n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and arithmetic ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (int64_t i = 0, n = out.numel(); i < n; ++i) po[i] = pa[i] + pb[i];
    if (detail::recording<T>({&a, &b})) {
        detail::mark_recorded(out);
        auto an = a.node(), bn = b.node(), on = out.node();
        Tape<T>::current()->record("add", [an, bn, on]() {
            an->ensure_grad();
            bn->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) {
                an->grad[i] += on->grad[i];
                bn->grad[i] += on->grad[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("sub: shape mismatch");
    Tensor<T> out(a.shape());
    for (int64_t i = 0, n = out.numel(); i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (detail::recording<T>({&a, &b})) {
        detail::mark_recorded(out);
        auto an = a.node(), bn = b.node(), on = out.node();
        Tape<T>::current()->record("sub", [an, bn, on]() {
            an->ensure_grad();
            bn->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) {
                an->grad[i] += on->grad[i];
                bn->grad[i] -= on->grad[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("mul: shape mismatch");
    Tensor<T> out(a.shape());
    for (int64_t i = 0, n = out.numel(); i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (detail::recording<T>({&a, &b})) {
        detail::mark_recorded(out);
        auto an = a.node(), bn = b.node(), on = out.node();
        Tape<T>::current()->record("mul", [an, bn, on]() {
            an->ensure_grad();
            bn->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) {
                an->grad[i] += on->grad[i] * bn->value[i];
                bn->grad[i] += on->grad[i] * an->value[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    Tensor<T> out(a.shape());
    for (int64_t i = 0, n = out.numel(); i < n; ++i) out.data()[i] = a.data()[i] * c;
    if (detail::recording<T>({&a})) {
        detail::mark_recorded(out);
        auto an = a.node(), on = out.node();
        Tape<T>::current()->record("scale", [an, on, c]() {
            an->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * c;
        });
    }
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    Tensor<T> out(a.shape());
    for (int64_t i = 0, n = out.numel(); i < n; ++i) out.data()[i] = a.data()[i] + c;
    if (detail::recording<T>({&a})) {
        detail::mark_recorded(out);
        auto an = a.node(), on = out.node();
        Tape<T>::current()->record("add_scalar", [an, on]() {
            an->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (int64_t i = 0, n = out.numel(); i < n; ++i)
        out.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
    if (detail::recording<T>({&x})) {
        detail::mark_recorded(out);
        auto xn = x.node(), on = out.node();
        Tape<T>::current()->record("relu", [xn, on]() {
            xn->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i)
                if (xn->value[i] > T(0)) xn->grad[i] += on->grad[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (int64_t i = 0, n = out.numel(); i < n; ++i) {
        T v = x.data()[i];
        out.data()[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                                  : std::exp(v) / (T(1) + std::exp(v));
    }
    if (detail::recording<T>({&x})) {
        detail::mark_recorded(out);
        auto xn = x.node(), on = out.node();
        Tape<T>::current()->record("sigmoid", [xn, on]() {
            xn->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) {
                T s = on->value[i];
                xn->grad[i] += on->grad[i] * s * (T(1) - s);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convolution / pooling on {B, C, T}
// ---------------------------------------------------------------------------

namespace detail {

inline int conv_out_len(int T_in, int k, int stride, Padding pad) {
    if (pad == Padding::Same) return (T_in + stride - 1) / stride;
    if (T_in < k) throw std::invalid_argument("conv/pool: input shorter than kernel (valid padding)");
    return (T_in - k) / stride + 1;
}

}  // namespace detail

// w is {Cout, Cin, k}; bias is {Cout}. Same padding pads with zeros, window
// for output position t starts at t*stride - k/2.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 Padding pad = Padding::Same, int stride = 1) {
    if (x.rank() != 3 || w.rank() != 3) throw std::invalid_argument("conv1d: expects {B,C,T} input and {Cout,Cin,k} kernel");
    const int B = x.dim(0), Cin = x.dim(1), Tin = x.dim(2);
    const int Cout = w.dim(0), k = w.dim(2);
    if (k < 1 || stride < 1) throw std::invalid_argument("conv1d: k and stride must be >= 1");
    if (w.dim(1) != Cin) throw std::invalid_argument("conv1d: channel mismatch between input and kernel");
    if (b.numel() != Cout) throw std::invalid_argument("conv1d: bias length mismatch");
    if (B == 0 || Cin == 0 || Tin == 0) throw std::invalid_argument("conv1d: empty input");

    const int offset = pad == Padding::Same ? k / 2 : 0;
    const int Tout = detail::conv_out_len(Tin, k, stride, pad);
    Tensor<T> out({B, Cout, Tout});

    const T* xp = x.data();
    const T* wp = w.data();
    const T* bp = b.data();
    T* op = out.data();
    for (int bi = 0; bi < B; ++bi) {
        const T* xb = xp + static_cast<int64_t>(bi) * Cin * Tin;
        T* ob = op + static_cast<int64_t>(bi) * Cout * Tout;
        for (int o = 0; o < Cout; ++o) {
            T* orow = ob + static_cast<int64_t>(o) * Tout;
            for (int t = 0; t < Tout; ++t) orow[t] = bp[o];
            for (int i = 0; i < Cin; ++i) {
                const T* xrow = xb + static_cast<int64_t>(i) * Tin;
                const T* wrow = wp + (static_cast<int64_t>(o) * Cin + i) * k;
                for (int d = 0; d < k; ++d) {
                    const T wv = wrow[d];
                    if (wv == T(0)) continue;
                    // output t reads input position t*stride + d - offset
                    if (stride == 1) {
                        const int shift = d - offset;
                        const int lo = std::max(0, -shift);
                        const int hi = std::min(Tout, Tin - shift);
                        const T* xs = xrow + shift;
                        for (int t = lo; t < hi; ++t) orow[t] += wv * xs[t];
                    } else {
                        for (int t = 0; t < Tout; ++t) {
                            int src = t * stride + d - offset;
                            if (src >= 0 && src < Tin) orow[t] += wv * xrow[src];
                        }
                    }
                }
            }
        }
    }

    if (detail::recording<T>({&x, &w, &b})) {
        detail::mark_recorded(out);
        auto xn = x.node(), wn = w.node(), bn = b.node(), on = out.node();
        Tape<T>::current()->record("conv1d", [xn, wn, bn, on, B, Cin, Tin, Cout, k, stride, offset, Tout]() {
            xn->ensure_grad();
            wn->ensure_grad();
            bn->ensure_grad();
            const T* gy = on->grad.data();
            const T* xv = xn->value.data();
            const T* wv = wn->value.data();
            for (int bi = 0; bi < B; ++bi) {
                const T* xb = xv + static_cast<int64_t>(bi) * Cin * Tin;
                T* gxb = xn->grad.data() + static_cast<int64_t>(bi) * Cin * Tin;
                const T* gyb = gy + static_cast<int64_t>(bi) * Cout * Tout;
                for (int o = 0; o < Cout; ++o) {
                    const T* gyrow = gyb + static_cast<int64_t>(o) * Tout;
                    for (int t = 0; t < Tout; ++t) bn->grad[o] += gyrow[t];
                    for (int i = 0; i < Cin; ++i) {
                        const T* xrow = xb + static_cast<int64_t>(i) * Tin;
                        T* gxrow = gxb + static_cast<int64_t>(i) * Tin;
                        const T* wrow = wv + (static_cast<int64_t>(o) * Cin + i) * k;
                        T* gwrow = wn->grad.data() + (static_cast<int64_t>(o) * Cin + i) * k;
                        for (int d = 0; d < k; ++d) {
                            T gw_acc = T(0);
                            const T wvd = wrow[d];
                            if (stride == 1) {
                                const int shift = d - offset;
                                const int lo = std::max(0, -shift);
                                const int hi = std::min(Tout, Tin - shift);
                                const T* xs = xrow + shift;
                                T* gxs = gxrow + shift;
                                for (int t = lo; t < hi; ++t) {
                                    gw_acc += gyrow[t] * xs[t];
                                    gxs[t] += gyrow[t] * wvd;
                                }
                            } else {
                                for (int t = 0; t < Tout; ++t) {
                                    int src = t * stride + d - offset;
                                    if (src >= 0 && src < Tin) {
                                        gw_acc += gyrow[t] * xrow[src];
                                        gxrow[src] += gyrow[t] * wvd;
                                    }
                                }
                            }
                            gwrow[d] += gw_acc;
                        }
                    }
                }
            }
        });
    }
    return out;
}

// Same padding uses -inf (never selected); gradient routes to the first
// maximal index of each window.
template <typename T>
Tensor<T> maxpool1d(const Tensor<T>& x, int k, int stride = 1, Padding pad = Padding::Same) {
    if (x.rank() != 3) throw std::invalid_argument("maxpool1d: expects {B,C,T}");
    const int B = x.dim(0), C = x.dim(1), Tin = x.dim(2);
    if (k < 1 || stride < 1) throw std::invalid_argument("maxpool1d: k and stride must be >= 1");
    if (B == 0 || C == 0 || Tin == 0) throw std::invalid_argument("maxpool1d: empty input");

    const int offset = pad == Padding::Same ? k / 2 : 0;
    const int Tout = detail::conv_out_len(Tin, k, stride, pad);
    Tensor<T> out({B, C, Tout});
    std::vector<int32_t> argmax(static_cast<size_t>(out.numel()));

    const T* xp = x.data();
    T* op = out.data();
    int64_t oi = 0;
    for (int bi = 0; bi < B; ++bi) {
        for (int c = 0; c < C; ++c) {
            const T* xrow = xp + (static_cast<int64_t>(bi) * C + c) * Tin;
            for (int t = 0; t < Tout; ++t, ++oi) {
                T best = -std::numeric_limits<T>::infinity();
                int best_idx = -1;
                for (int d = 0; d < k; ++d) {
                    int src = t * stride + d - offset;
                    if (src < 0 || src >= Tin) continue;
                    if (xrow[src] > best) {
                        best = xrow[src];
                        best_idx = src;
                    }
                }
                op[oi] = best;
                argmax[static_cast<size_t>(oi)] = best_idx;
            }
        }
    }

    if (detail::recording<T>({&x})) {
        detail::mark_recorded(out);
        auto xn = x.node(), on = out.node();
        Tape<T>::current()->record("maxpool1d", [xn, on, argmax = std::move(argmax), B, C, Tin, Tout]() {
            xn->ensure_grad();
            int64_t oi = 0;
            for (int bi = 0; bi < B; ++bi)
                for (int c = 0; c < C; ++c) {
                    T* gxrow = xn->grad.data() + (static_cast<int64_t>(bi) * C + c) * Tin;
                    for (int t = 0; t < Tout; ++t, ++oi)
                        gxrow[argmax[static_cast<size_t>(oi)]] += on->grad[static_cast<size_t>(oi)];
                }
        });
    }
    return out;
}

// Normalizes each channel over (batch, time) with biased variance. Train mode
// updates the running statistics in place with the given momentum; eval mode
// reads them. Both modes are differentiable w.r.t. x, gamma, beta.
template <typename T>
Tensor<T> batchnorm1d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      NormMode mode, std::vector<T>& running_mean, std::vector<T>& running_var,
                      T eps = T(1e-5), T momentum = T(0.1)) {
    if (x.rank() != 3) throw std::invalid_argument("batchnorm1d: expects {B,C,T}");
    const int B = x.dim(0), C = x.dim(1), Tin = x.dim(2);
    if (gamma.numel() != C || beta.numel() != C) throw std::invalid_argument("batchnorm1d: affine length mismatch");
    if (eps <= T(0)) throw std::invalid_argument("batchnorm1d: eps must be > 0");
    if (running_mean.size() != static_cast<size_t>(C)) running_mean.assign(static_cast<size_t>(C), T(0));
    if (running_var.size() != static_cast<size_t>(C)) running_var.assign(static_cast<size_t>(C), T(1));
    const int64_t N = static_cast<int64_t>(B) * Tin;
    if (mode == NormMode::Train && N < 2) throw std::invalid_argument("batchnorm1d: train mode needs B*T >= 2");

    std::vector<T> mean(static_cast<size_t>(C)), var(static_cast<size_t>(C));
    if (mode == NormMode::Train) {
        for (int c = 0; c < C; ++c) {
            T s = T(0);
            for (int bi = 0; bi < B; ++bi) {
                const T* row = x.data() + (static_cast<int64_t>(bi) * C + c) * Tin;
                for (int t = 0; t < Tin; ++t) s += row[t];
            }
            T m = s / static_cast<T>(N);
            T v = T(0);
            for (int bi = 0; bi < B; ++bi) {
                const T* row = x.data() + (static_cast<int64_t>(bi) * C + c) * Tin;
                for (int t = 0; t < Tin; ++t) {
                    T d = row[t] - m;
                    v += d * d;
                }
            }
            mean[static_cast<size_t>(c)] = m;
            var[static_cast<size_t>(c)] = v / static_cast<T>(N);
            running_mean[static_cast<size_t>(c)] =
                (T(1) - momentum) * running_mean[static_cast<size_t>(c)] + momentum * m;
            running_var[static_cast<size_t>(c)] =
                (T(1) - momentum) * running_var[static_cast<size_t>(c)] + momentum * var[static_cast<size_t>(c)];
        }
    } else {
        mean = running_mean;
        var = running_var;
    }

    Tensor<T> out(x.shape());
    std::vector<T> inv_std(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c)
        inv_std[static_cast<size_t>(c)] = T(1) / std::sqrt(var[static_cast<size_t>(c)] + eps);
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c) {
            const T* row = x.data() + (static_cast<int64_t>(bi) * C + c) * Tin;
            T* orow = out.data() + (static_cast<int64_t>(bi) * C + c) * Tin;
            const T g = gamma.data()[c], be = beta.data()[c];
            const T m = mean[static_cast<size_t>(c)], is = inv_std[static_cast<size_t>(c)];
            for (int t = 0; t < Tin; ++t) orow[t] = g * (row[t] - m) * is + be;
        }

    if (detail::recording<T>({&x, &gamma, &beta})) {
        detail::mark_recorded(out);
        auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
        bool train = mode == NormMode::Train;
        Tape<T>::current()->record("batchnorm1d",
                                   [xn, gn, bn, on, mean, inv_std, B, C, Tin, N, train]() {
            xn->ensure_grad();
            gn->ensure_grad();
            bn->ensure_grad();
            for (int c = 0; c < C; ++c) {
                const T m = mean[static_cast<size_t>(c)], is = inv_std[static_cast<size_t>(c)];
                const T g = gn->value[static_cast<size_t>(c)];
                T sum_dy = T(0), sum_dy_xhat = T(0);
                for (int bi = 0; bi < B; ++bi) {
                    const int64_t base = (static_cast<int64_t>(bi) * C + c) * Tin;
                    for (int t = 0; t < Tin; ++t) {
                        const T dy = on->grad[static_cast<size_t>(base + t)];
                        const T xhat = (xn->value[static_cast<size_t>(base + t)] - m) * is;
                        sum_dy += dy;
                        sum_dy_xhat += dy * xhat;
                    }
                }
                gn->grad[static_cast<size_t>(c)] += sum_dy_xhat;
                bn->grad[static_cast<size_t>(c)] += sum_dy;
                for (int bi = 0; bi < B; ++bi) {
                    const int64_t base = (static_cast<int64_t>(bi) * C + c) * Tin;
                    for (int t = 0; t < Tin; ++t) {
                        const T dy = on->grad[static_cast<size_t>(base + t)];
                        if (train) {
                            const T xhat = (xn->value[static_cast<size_t>(base + t)] - m) * is;
                            xn->grad[static_cast<size_t>(base + t)] +=
                                g * is * (dy - sum_dy / static_cast<T>(N) - xhat * sum_dy_xhat / static_cast<T>(N));
                        } else {
                            xn->grad[static_cast<size_t>(base + t)] += g * is * dy;
                        }
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions, dense algebra
// ---------------------------------------------------------------------------

// Global average pooling over time: {B, C, T} -> {B, C}.
template <typename T>
Tensor<T> gap(const Tensor<T>& x) {
    if (x.rank() != 3) throw std::invalid_argument("gap: expects {B,C,T}");
    const int B = x.dim(0), C = x.dim(1), Tin = x.dim(2);
    if (Tin < 1) throw std::invalid_argument("gap: empty time axis");
    Tensor<T> out({B, C});
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c) {
            const T* row = x.data() + (static_cast<int64_t>(bi) * C + c) * Tin;
            T s = T(0);
            for (int t = 0; t < Tin; ++t) s += row[t];
            out.data()[static_cast<int64_t>(bi) * C + c] = s / static_cast<T>(Tin);
        }
    if (detail::recording<T>({&x})) {
        detail::mark_recorded(out);
        auto xn = x.node(), on = out.node();
        Tape<T>::current()->record("gap", [xn, on, B, C, Tin]() {
            xn->ensure_grad();
            for (int bi = 0; bi < B; ++bi)
                for (int c = 0; c < C; ++c) {
                    const T g = on->grad[static_cast<size_t>(bi) * C + c] / static_cast<T>(Tin);
                    T* gxrow = xn->grad.data() + (static_cast<int64_t>(bi) * C + c) * Tin;
                    for (int t = 0; t < Tin; ++t) gxrow[t] += g;
                }
        });
    }
    return out;
}

// Mean over the middle axis: {B, T, D} -> {B, D}.
template <typename T>
Tensor<T> seq_mean(const Tensor<T>& x) {
    if (x.rank() != 3) throw std::invalid_argument("seq_mean: expects {B,T,D}");
    const int B = x.dim(0), Tin = x.dim(1), D = x.dim(2);
    Tensor<T> out({B, D});
    for (int bi = 0; bi < B; ++bi)
        for (int d = 0; d < D; ++d) {
            T s = T(0);
            for (int t = 0; t < Tin; ++t)
                s += x.data()[(static_cast<int64_t>(bi) * Tin + t) * D + d];
            out.data()[static_cast<int64_t>(bi) * D + d] = s / static_cast<T>(Tin);
        }
    if (detail::recording<T>({&x})) {
        detail::mark_recorded(out);
        auto xn = x.node(), on = out.node();
        Tape<T>::current()->record("seq_mean", [xn, on, B, Tin, D]() {
            xn->ensure_grad();
            for (int bi = 0; bi < B; ++bi)
                for (int t = 0; t < Tin; ++t)
                    for (int d = 0; d < D; ++d)
                        xn->grad[(static_cast<size_t>(bi) * Tin + t) * D + d] +=
                            on->grad[static_cast<size_t>(bi) * D + d] / static_cast<T>(Tin);
        });
    }
    return out;
}

// y = x W^T + b on the trailing axis: x {..., n}, W {m, n}, b {m} -> {..., m}.
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (w.rank() != 2) throw std::invalid_argument("dense: weight must be {m,n}");
    const int m = w.dim(0), n = w.dim(1);
    if (x.rank() < 1 || x.shape().back() != n)
        throw std::invalid_argument("dense: input trailing dim does not match weight");
    if (b.numel() != m) throw std::invalid_argument("dense: bias length mismatch");
    const int64_t R = detail::checked_rows(x.numel(), n, "dense");

    std::vector<int> oshape(x.shape());
    oshape.back() = m;
    Tensor<T> out(oshape);
    for (int64_t r = 0; r < R; ++r) {
        const T* xr = x.data() + r * n;
        T* orow = out.data() + r * m;
        for (int j = 0; j < m; ++j) {
            const T* wr = w.data() + static_cast<int64_t>(j) * n;
            T s = b.data()[j];
            for (int i = 0; i < n; ++i) s += wr[i] * xr[i];
            orow[j] = s;
        }
    }
    if (detail::recording<T>({&x, &w, &b})) {
        detail::mark_recorded(out);
        auto xn = x.node(), wn = w.node(), bn = b.node(), on = out.node();
        Tape<T>::current()->record("dense", [xn, wn, bn, on, R, m, n]() {
            xn->ensure_grad();
            wn->ensure_grad();
            bn->ensure_grad();
            for (int64_t r = 0; r < R; ++r) {
                const T* xr = xn->value.data() + r * n;
                T* gxr = xn->grad.data() + r * n;
                const T* gyr = on->grad.data() + r * m;
                for (int j = 0; j < m; ++j) {
                    const T gy = gyr[j];
                    if (gy == T(0)) continue;
                    bn->grad[static_cast<size_t>(j)] += gy;
                    const T* wr = wn->value.data() + static_cast<int64_t>(j) * n;
                    T* gwr = wn->grad.data() + static_cast<int64_t>(j) * n;
                    for (int i = 0; i < n; ++i) {
                        gwr[i] += gy * xr[i];
                        gxr[i] += gy * wr[i];
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: inner dimensions disagree");
    const int m = a.dim(0), n = a.dim(1), p = b.dim(1);
    Tensor<T> out({m, p});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < p; ++j) {
            T s = T(0);
            for (int l = 0; l < n; ++l) s += a.data()[i * n + l] * b.data()[l * p + j];
            out.data()[i * p + j] = s;
        }
    if (detail::recording<T>({&a, &b})) {
        detail::mark_recorded(out);
        auto an = a.node(), bn = b.node(), on = out.node();
        Tape<T>::current()->record("matmul", [an, bn, on, m, n, p]() {
            an->ensure_grad();
            bn->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < p; ++j) {
                    const T g = on->grad[static_cast<size_t>(i) * p + j];
                    for (int l = 0; l < n; ++l) {
                        an->grad[static_cast<size_t>(i) * n + l] += g * bn->value[static_cast<size_t>(l) * p + j];
                        bn->grad[static_cast<size_t>(l) * p + j] += g * an->value[static_cast<size_t>(i) * n + l];
                    }
                }
        });
    }
    return out;
}

// Batched matmul: {G,m,n} x {G,n,p} -> {G,m,p}.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw std::invalid_argument("bmm: shape mismatch");
    const int G = a.dim(0), m = a.dim(1), n = a.dim(2), p = b.dim(2);
    Tensor<T> out({G, m, p});
    for (int g = 0; g < G; ++g) {
        const T* ag = a.data() + static_cast<int64_t>(g) * m * n;
        const T* bg = b.data() + static_cast<int64_t>(g) * n * p;
        T* og = out.data() + static_cast<int64_t>(g) * m * p;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < p; ++j) {
                T s = T(0);
                for (int l = 0; l < n; ++l) s += ag[i * n + l] * bg[l * p + j];
                og[i * p + j] = s;
            }
    }
    if (detail::recording<T>({&a, &b})) {
        detail::mark_recorded(out);
        auto an = a.node(), bn = b.node(), on = out.node();
        Tape<T>::current()->record("bmm", [an, bn, on, G, m, n, p]() {
            an->ensure_grad();
            bn->ensure_grad();
            for (int g = 0; g < G; ++g) {
                const int64_t ao = static_cast<int64_t>(g) * m * n;
                const int64_t bo = static_cast<int64_t>(g) * n * p;
                const int64_t oo = static_cast<int64_t>(g) * m * p;
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < p; ++j) {
                        const T gr = on->grad[static_cast<size_t>(oo + i * p + j)];
                        if (gr == T(0)) continue;
                        for (int l = 0; l < n; ++l) {
                            an->grad[static_cast<size_t>(ao + i * n + l)] += gr * bn->value[static_cast<size_t>(bo + l * p + j)];
                            bn->grad[static_cast<size_t>(bo + l * p + j)] += gr * an->value[static_cast<size_t>(ao + i * n + l)];
                        }
                    }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

// Channel-axis concatenation of {B,C1,T} and {B,C2,T}. Either side may have
// zero channels.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
        throw std::invalid_argument("concat_channels: length mismatch");
    const int B = a.dim(0), C1 = a.dim(1), C2 = b.dim(1), Tin = a.dim(2);
    Tensor<T> out({B, C1 + C2, Tin});
    for (int bi = 0; bi < B; ++bi) {
        std::copy_n(a.data() + static_cast<int64_t>(bi) * C1 * Tin, static_cast<int64_t>(C1) * Tin,
                    out.data() + static_cast<int64_t>(bi) * (C1 + C2) * Tin);
        std::copy_n(b.data() + static_cast<int64_t>(bi) * C2 * Tin, static_cast<int64_t>(C2) * Tin,
                    out.data() + static_cast<int64_t>(bi) * (C1 + C2) * Tin + static_cast<int64_t>(C1) * Tin);
    }
    if (detail::recording<T>({&a, &b})) {
        detail::mark_recorded(out);
        auto an = a.node(), bn = b.node(), on = out.node();
        Tape<T>::current()->record("concat_channels", [an, bn, on, B, C1, C2, Tin]() {
            an->ensure_grad();
            bn->ensure_grad();
            for (int bi = 0; bi < B; ++bi) {
                const T* g = on->grad.data() + static_cast<int64_t>(bi) * (C1 + C2) * Tin;
                T* ga = an->grad.data() + static_cast<int64_t>(bi) * C1 * Tin;
                T* gb = bn->grad.data() + static_cast<int64_t>(bi) * C2 * Tin;
                for (int64_t i = 0; i < static_cast<int64_t>(C1) * Tin; ++i) ga[i] += g[i];
                for (int64_t i = 0; i < static_cast<int64_t>(C2) * Tin; ++i) gb[i] += g[static_cast<int64_t>(C1) * Tin + i];
            }
        });
    }
    return out;
}

// Row-major metadata change; element order is untouched.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> new_shape) {
    Tensor<T> out(std::move(new_shape), x.value());
    if (out.numel() != x.numel()) throw std::invalid_argument("reshape: element count mismatch");
    if (detail::recording<T>({&x})) {
        detail::mark_recorded(out);
        auto xn = x.node(), on = out.node();
        Tape<T>::current()->record("reshape", [xn, on]() {
            xn->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
        });
    }
    return out;
}

// Swap the two trailing axes of a rank-3 tensor: {B,m,n} -> {B,n,m}.
template <typename T>
Tensor<T> transpose_12(const Tensor<T>& x) {
    if (x.rank() != 3) throw std::invalid_argument("transpose_12: expects rank-3");
    const int B = x.dim(0), m = x.dim(1), n = x.dim(2);
    Tensor<T> out({B, n, m});
    for (int bi = 0; bi < B; ++bi)
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                out.data()[(static_cast<int64_t>(bi) * n + j) * m + i] =
                    x.data()[(static_cast<int64_t>(bi) * m + i) * n + j];
    if (detail::recording<T>({&x})) {
        detail::mark_recorded(out);
        auto xn = x.node(), on = out.node();
        Tape<T>::current()->record("transpose_12", [xn, on, B, m, n]() {
            xn->ensure_grad();
            for (int bi = 0; bi < B; ++bi)
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        xn->grad[(static_cast<size_t>(bi) * m + i) * n + j] +=
                            on->grad[(static_cast<size_t>(bi) * n + j) * m + i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
    if (x.rank() != 2) throw std::invalid_argument("transpose2d: expects rank-2");
    const int m = x.dim(0), n = x.dim(1);
    Tensor<T> out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.data()[j * m + i] = x.data()[i * n + j];
    if (detail::recording<T>({&x})) {
        detail::mark_recorded(out);
        auto xn = x.node(), on = out.node();
        Tape<T>::current()->record("transpose2d", [xn, on, m, n]() {
            xn->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) xn->grad[static_cast<size_t>(i) * n + j] += on->grad[static_cast<size_t>(j) * m + i];
        });
    }
    return out;
}

// {B,T,D} -> {B*h, T, D/h}: head i of batch b lands in group b*h + i.
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, int heads) {
    if (x.rank() != 3) throw std::invalid_argument("split_heads: expects {B,T,D}");
    const int B = x.dim(0), Tin = x.dim(1), D = x.dim(2);
    if (heads < 1 || D % heads != 0) throw std::invalid_argument("split_heads: D not divisible by heads");
    const int dk = D / heads;
    Tensor<T> out({B * heads, Tin, dk});
    for (int bi = 0; bi < B; ++bi)
        for (int t = 0; t < Tin; ++t)
            for (int h = 0; h < heads; ++h)
                std::copy_n(x.data() + (static_cast<int64_t>(bi) * Tin + t) * D + static_cast<int64_t>(h) * dk, dk,
                            out.data() + ((static_cast<int64_t>(bi) * heads + h) * Tin + t) * dk);
    if (detail::recording<T>({&x})) {
        detail::mark_recorded(out);
        auto xn = x.node(), on = out.node();
        Tape<T>::current()->record("split_heads", [xn, on, B, Tin, D, heads, dk]() {
            xn->ensure_grad();
            for (int bi = 0; bi < B; ++bi)
                for (int t = 0; t < Tin; ++t)
                    for (int h = 0; h < heads; ++h)
                        for (int j = 0; j < dk; ++j)
                            xn->grad[(static_cast<size_t>(bi) * Tin + t) * D + static_cast<size_t>(h) * dk + j] +=
                                on->grad[((static_cast<size_t>(bi) * heads + h) * Tin + t) * dk + j];
        });
    }
    return out;
}

// Inverse of split_heads: {B*h, T, dk} -> {B, T, h*dk}.
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, int heads) {
    if (x.rank() != 3) throw std::invalid_argument("merge_heads: expects {B*h,T,dk}");
    const int G = x.dim(0), Tin = x.dim(1), dk = x.dim(2);
    if (heads < 1 || G % heads != 0) throw std::invalid_argument("merge_heads: group count not divisible by heads");
    const int B = G / heads, D = heads * dk;
    Tensor<T> out({B, Tin, D});
    for (int bi = 0; bi < B; ++bi)
        for (int t = 0; t < Tin; ++t)
            for (int h = 0; h < heads; ++h)
                std::copy_n(x.data() + ((static_cast<int64_t>(bi) * heads + h) * Tin + t) * dk, dk,
                            out.data() + (static_cast<int64_t>(bi) * Tin + t) * D + static_cast<int64_t>(h) * dk);
    if (detail::recording<T>({&x})) {
        detail::mark_recorded(out);
        auto xn = x.node(), on = out.node();
        Tape<T>::current()->record("merge_heads", [xn, on, B, Tin, dk, heads, D]() {
            xn->ensure_grad();
            for (int bi = 0; bi < B; ++bi)
                for (int t = 0; t < Tin; ++t)
                    for (int h = 0; h < heads; ++h)
                        for (int j = 0; j < dk; ++j)
                            xn->grad[((static_cast<size_t>(bi) * heads + h) * Tin + t) * dk + j] +=
                                on->grad[(static_cast<size_t>(bi) * Tin + t) * D + static_cast<size_t>(h) * dk + j];
        });
    }
    return out;
}

// Per-channel multiplicative gating: out[b,c,t] = x[b,c,t] * s[b,c].
template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& s) {
    if (x.rank() != 3 || s.rank() != 2 || s.dim(0) != x.dim(0) || s.dim(1) != x.dim(1))
        throw std::invalid_argument("scale_channels: shape mismatch");
    const int B = x.dim(0), C = x.dim(1), Tin = x.dim(2);
    Tensor<T> out(x.shape());
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c) {
            const T sv = s.data()[static_cast<int64_t>(bi) * C + c];
            const T* row = x.data() + (static_cast<int64_t>(bi) * C + c) * Tin;
            T* orow = out.data() + (static_cast<int64_t>(bi) * C + c) * Tin;
            for (int t = 0; t < Tin; ++t) orow[t] = row[t] * sv;
        }
    if (detail::recording<T>({&x, &s})) {
        detail::mark_recorded(out);
        auto xn = x.node(), sn = s.node(), on = out.node();
        Tape<T>::current()->record("scale_channels", [xn, sn, on, B, C, Tin]() {
            xn->ensure_grad();
            sn->ensure_grad();
            for (int bi = 0; bi < B; ++bi)
                for (int c = 0; c < C; ++c) {
                    const T sv = sn->value[static_cast<size_t>(bi) * C + c];
                    const int64_t base = (static_cast<int64_t>(bi) * C + c) * Tin;
                    T acc = T(0);
                    for (int t = 0; t < Tin; ++t) {
                        const T g = on->grad[static_cast<size_t>(base + t)];
                        xn->grad[static_cast<size_t>(base + t)] += g * sv;
                        acc += g * xn->value[static_cast<size_t>(base + t)];
                    }
                    sn->grad[static_cast<size_t>(bi) * C + c] += acc;
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Normalization over the trailing axis, softmax family
// ---------------------------------------------------------------------------

// Normalizes each trailing-axis row with biased variance, then applies the
// affine transform. gamma/beta have the row length.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
    const int d = x.shape().back();
    if (d < 1 || eps <= T(0)) throw std::invalid_argument("layer_norm: bad dimensions");
    if (gamma.numel() != d || beta.numel() != d) throw std::invalid_argument("layer_norm: affine length mismatch");
    const int64_t R = detail::checked_rows(x.numel(), d, "layer_norm");
    Tensor<T> out(x.shape());
    std::vector<T> mean(static_cast<size_t>(R)), inv_std(static_cast<size_t>(R));
    for (int64_t r = 0; r < R; ++r) {
        const T* row = x.data() + r * d;
        T m = T(0);
        for (int i = 0; i < d; ++i) m += row[i];
        m /= static_cast<T>(d);
        T v = T(0);
        for (int i = 0; i < d; ++i) {
            T dd = row[i] - m;
            v += dd * dd;
        }
        v /= static_cast<T>(d);
        const T is = T(1) / std::sqrt(v + eps);
        mean[static_cast<size_t>(r)] = m;
        inv_std[static_cast<size_t>(r)] = is;
        T* orow = out.data() + r * d;
        for (int i = 0; i < d; ++i) orow[i] = gamma.data()[i] * (row[i] - m) * is + beta.data()[i];
    }
    if (detail::recording<T>({&x, &gamma, &beta})) {
        detail::mark_recorded(out);
        auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
        Tape<T>::current()->record("layer_norm", [xn, gn, bn, on, mean, inv_std, R, d]() {
            xn->ensure_grad();
            gn->ensure_grad();
            bn->ensure_grad();
            for (int64_t r = 0; r < R; ++r) {
                const T m = mean[static_cast<size_t>(r)], is = inv_std[static_cast<size_t>(r)];
                const T* row = xn->value.data() + r * d;
                const T* gy = on->grad.data() + r * d;
                T sum_dyg = T(0), sum_dyg_xhat = T(0);
                for (int i = 0; i < d; ++i) {
                    const T xhat = (row[i] - m) * is;
                    const T dyg = gy[i] * gn->value[static_cast<size_t>(i)];
                    gn->grad[static_cast<size_t>(i)] += gy[i] * xhat;
                    bn->grad[static_cast<size_t>(i)] += gy[i];
                    sum_dyg += dyg;
                    sum_dyg_xhat += dyg * xhat;
                }
                T* gx = xn->grad.data() + r * d;
                for (int i = 0; i < d; ++i) {
                    const T xhat = (row[i] - m) * is;
                    const T dyg = gy[i] * gn->value[static_cast<size_t>(i)];
                    gx[i] += is * (dyg - sum_dyg / static_cast<T>(d) - xhat * sum_dyg_xhat / static_cast<T>(d));
                }
            }
        });
    }
    return out;
}

// Temperature softmax over the trailing axis, computed with max subtraction.
template <typename T>
Tensor<T> softmax_t(const Tensor<T>& z, T temperature = T(1)) {
    if (temperature <= T(0)) throw std::invalid_argument("softmax_t: temperature must be > 0");
    detail::check_finite(z, "softmax_t");
    const int K = z.shape().back();
    const int64_t R = detail::checked_rows(z.numel(), K, "softmax_t");
    Tensor<T> out(z.shape());
    for (int64_t r = 0; r < R; ++r) {
        const T* row = z.data() + r * K;
        T* orow = out.data() + r * K;
        T mx = row[0];
        for (int i = 1; i < K; ++i) mx = std::max(mx, row[i]);
        T sum = T(0);
        for (int i = 0; i < K; ++i) {
            orow[i] = std::exp((row[i] - mx) / temperature);
            sum += orow[i];
        }
        for (int i = 0; i < K; ++i) orow[i] /= sum;
    }
    if (detail::recording<T>({&z})) {
        detail::mark_recorded(out);
        auto zn = z.node(), on = out.node();
        Tape<T>::current()->record("softmax_t", [zn, on, R, K, temperature]() {
            zn->ensure_grad();
            for (int64_t r = 0; r < R; ++r) {
                const T* y = on->value.data() + r * K;
                const T* gy = on->grad.data() + r * K;
                T dot = T(0);
                for (int i = 0; i < K; ++i) dot += gy[i] * y[i];
                T* gz = zn->grad.data() + r * K;
                for (int i = 0; i < K; ++i) gz[i] += y[i] * (gy[i] - dot) / temperature;
            }
        });
    }
    return out;
}

// log softmax(z / temperature) over the trailing axis.
template <typename T>
Tensor<T> log_softmax_t(const Tensor<T>& z, T temperature = T(1)) {
    if (temperature <= T(0)) throw std::invalid_argument("log_softmax_t: temperature must be > 0");
    detail::check_finite(z, "log_softmax_t");
    const int K = z.shape().back();
    const int64_t R = detail::checked_rows(z.numel(), K, "log_softmax_t");
    Tensor<T> out(z.shape());
    for (int64_t r = 0; r < R; ++r) {
        const T* row = z.data() + r * K;
        T* orow = out.data() + r * K;
        T mx = row[0];
        for (int i = 1; i < K; ++i) mx = std::max(mx, row[i]);
        T sum = T(0);
        for (int i = 0; i < K; ++i) sum += std::exp((row[i] - mx) / temperature);
        const T lse = std::log(sum);
        for (int i = 0; i < K; ++i) orow[i] = (row[i] - mx) / temperature - lse;
    }
    if (detail::recording<T>({&z})) {
        detail::mark_recorded(out);
        auto zn = z.node(), on = out.node();
        Tape<T>::current()->record("log_softmax_t", [zn, on, R, K, temperature]() {
            zn->ensure_grad();
            for (int64_t r = 0; r < R; ++r) {
                const T* logp = on->value.data() + r * K;
                const T* gy = on->grad.data() + r * K;
                T gsum = T(0);
                for (int i = 0; i < K; ++i) gsum += gy[i];
                T* gz = zn->grad.data() + r * K;
                for (int i = 0; i < K; ++i) gz[i] += (gy[i] - std::exp(logp[i]) * gsum) / temperature;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scalar reductions used by the losses
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    Tensor<T> out({1});
    T s = T(0);
    for (int64_t i = 0, n = x.numel(); i < n; ++i) s += x.data()[i];
    out.data()[0] = s;
    if (detail::recording<T>({&x})) {
        detail::mark_recorded(out);
        auto xn = x.node(), on = out.node();
        Tape<T>::current()->record("sum_all", [xn, on]() {
            xn->ensure_grad();
            const T g = on->grad[0];
            for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    return scale(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

// Negative mean over rows of logp[row, label[row]]. logp is {B, K}.
template <typename T>
Tensor<T> nll_mean(const Tensor<T>& logp, const std::vector<int>& labels) {
    if (logp.rank() != 2) throw std::invalid_argument("nll_mean: expects {B,K}");
    const int B = logp.dim(0), K = logp.dim(1);
    if (static_cast<int>(labels.size()) != B) throw std::invalid_argument("nll_mean: label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= K) throw std::out_of_range("nll_mean: label out of range");
    Tensor<T> out({1});
    T s = T(0);
    for (int bi = 0; bi < B; ++bi) s -= logp.data()[static_cast<int64_t>(bi) * K + labels[static_cast<size_t>(bi)]];
    out.data()[0] = s / static_cast<T>(B);
    if (detail::recording<T>({&logp})) {
        detail::mark_recorded(out);
        auto ln = logp.node(), on = out.node();
        Tape<T>::current()->record("nll_mean", [ln, on, labels, B, K]() {
            ln->ensure_grad();
            const T g = on->grad[0] / static_cast<T>(B);
            for (int bi = 0; bi < B; ++bi)
                ln->grad[static_cast<size_t>(bi) * K + labels[static_cast<size_t>(bi)]] -= g;
        });
    }
    return out;
}

// Weighted sum with a constant weight buffer: sum_i weights[i] * x[i].
template <typename T>
Tensor<T> dot_const(const Tensor<T>& x, const std::vector<T>& weights) {
    if (static_cast<int64_t>(weights.size()) != x.numel())
        throw std::invalid_argument("dot_const: weight length mismatch");
    Tensor<T> out({1});
    T s = T(0);
    for (int64_t i = 0, n = x.numel(); i < n; ++i) s += weights[static_cast<size_t>(i)] * x.data()[i];
    out.data()[0] = s;
    if (detail::recording<T>({&x})) {
        detail::mark_recorded(out);
        auto xn = x.node(), on = out.node();
        Tape<T>::current()->record("dot_const", [xn, on, weights]() {
            xn->ensure_grad();
            const T g = on->grad[0];
            for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g * weights[i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Numerical gradient validation
// ---------------------------------------------------------------------------

// Compares tape gradients against central finite differences. 64-bit only:
// single-precision finite differences are dominated by rounding error.
// Returns max over elements of |analytic - numeric| / max(1e-8, |numeric|).
template <typename T>
double grad_check(const std::function<Tensor<T>(std::vector<Tensor<T>>&)>& f,
                  std::vector<Tensor<T>> x0, T h = T(1e-4)) {
    static_assert(std::is_same_v<T, double>, "grad_check requires 64-bit mode");
    for (auto& t : x0) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    std::vector<std::vector<T>> analytic;
    {
        Tape<T> tape;
        auto guard = tape.activate();
        Tensor<T> loss = f(x0);
        tape.backward(loss);
        for (auto& t : x0) analytic.push_back(t.grad());
    }
    double max_err = 0;
    for (size_t ti = 0; ti < x0.size(); ++ti) {
        Tensor<T>& t = x0[ti];
        for (int64_t i = 0; i < t.numel(); ++i) {
            const T orig = t.data()[i];
            t.data()[i] = orig + h;
            const T fp = f(x0).item();
            t.data()[i] = orig - h;
            const T fm = f(x0).item();
            t.data()[i] = orig;
            const double numeric = (fp - fm) / (2 * h);
            const double a = analytic[ti][static_cast<size_t>(i)];
            if (std::isnan(numeric) || std::isnan(a))
                throw std::domain_error("grad_check: NaN gradient");
            max_err = std::max(max_err, std::abs(a - numeric) / std::max(1e-8, std::abs(numeric)));
        }
    }
    return max_err;
}

}  // namespace liteinc
