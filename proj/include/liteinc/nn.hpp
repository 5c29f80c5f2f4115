#pragma once

// Inception-family model builders: multi-branch conv modules, residual
// backbones, SE channel gates and the detection-stage attention encoder.
// Builders are pure given a seed; built models are mutated only by training.

#include <liteinc/tensor.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace liteinc {

// Deterministic RNG with hand-rolled draws so weight init, shuffles and
// synthetic data are reproducible across standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    uint64_t next() {
        // splitmix64
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0;
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }
    int uniform_int(int n) { return static_cast<int>(next() % static_cast<uint64_t>(n)); }

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0;
};

enum class ParamCategory { ConvWeight, ConvBias, BnAffine, DenseWeight, DenseBias };

inline const char* param_category_name(ParamCategory c) {
    switch (c) {
        case ParamCategory::ConvWeight: return "conv_weight";
        case ParamCategory::ConvBias: return "conv_bias";
        case ParamCategory::BnAffine: return "bn_affine";
        case ParamCategory::DenseWeight: return "dense_weight";
        case ParamCategory::DenseBias: return "dense_bias";
    }
    return "?";
}

template <typename T>
struct ParamRef {
    std::string name;
    ParamCategory category;
    Tensor<T> tensor;
};

// Non-learned buffers that still belong in a checkpoint (BN running stats).
template <typename T>
struct StateRef {
    std::string name;
    std::vector<T>* data;
};

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

struct InceptionModuleSpec {
    std::vector<int> conv_kernels{3};  // up to 3 kernels
    bool use_maxpool_branch = true;
    int filters_per_branch = 128;  // output channels per branch
    int bottleneck_width = 64;     // shared 1x1 compression before the conv branches
    int input_channels = 15;

    int branch_count() const {
        return static_cast<int>(conv_kernels.size()) + (use_maxpool_branch ? 1 : 0);
    }
    int output_channels() const { return branch_count() * filters_per_branch; }
    void validate() const {
        if (conv_kernels.size() > 3) throw std::invalid_argument("module spec: at most 3 conv kernels");
        if (branch_count() < 1) throw std::invalid_argument("module spec: needs at least one branch");
        for (int k : conv_kernels)
            if (k < 1) throw std::invalid_argument("module spec: kernel size must be >= 1");
        if (filters_per_branch < 1 || bottleneck_width < 1 || input_channels < 1)
            throw std::invalid_argument("module spec: widths must be >= 1");
    }
};

struct BackboneSpec {
    int depth = 6;
    int residual_period = 3;
    int input_channels = 15;
    int classes = 19;
    InceptionModuleSpec module;  // template; input_channels is set per position

    void validate() const {
        if (depth < 1) throw std::invalid_argument("backbone spec: depth must be >= 1");
        if (residual_period < 1) throw std::invalid_argument("backbone spec: residual period must be >= 1");
        if (input_channels < 1 || classes < 2) throw std::invalid_argument("backbone spec: bad dims");
        module.validate();
    }
};

struct SEGateSpec {
    int channels = 15;   // gated channel count
    int reduction = 2;   // hidden width = ceil(channels / reduction)
    int hidden() const { return std::max(1, (channels + reduction - 1) / reduction); }
};

struct EncoderSpec {
    int d_model = 128;
    int heads = 4;
    int layers = 2;
    int ff_width = 256;
    double dropout = 0.1;
    int attn_downsample = 8;  // strided maxpool before projection

    void validate() const {
        if (d_model < 1 || heads < 1 || layers < 1 || ff_width < 1 || attn_downsample < 1)
            throw std::invalid_argument("encoder spec: bad dims");
        if (d_model % heads != 0) throw std::invalid_argument("encoder spec: d_model not divisible by heads");
        if (dropout < 0 || dropout >= 1) throw std::invalid_argument("encoder spec: dropout out of range");
    }
};

// Flat declarative description a whole model is built from (and serialized
// with; see the config module for the text format).
struct ModelSpec {
    std::string kind = "backbone";  // "backbone" or "hybrid"
    std::vector<int> conv_kernels{3};
    bool use_maxpool_branch = true;
    int filters_per_branch = 128;
    int bottleneck_width = 64;
    int depth = 6;
    int residual_period = 3;
    int input_channels = 15;
    int classes = 19;
    bool input_gate = false;
    int gate_reduction = 2;
    // encoder fields, used when kind == "hybrid"
    int d_model = 128;
    int heads = 4;
    int encoder_layers = 2;
    int ff_width = 256;
    double dropout = 0.1;
    int attn_downsample = 8;

    BackboneSpec backbone_spec() const {
        BackboneSpec b;
        b.depth = depth;
        b.residual_period = residual_period;
        b.input_channels = input_channels;
        b.classes = classes;
        b.module.conv_kernels = conv_kernels;
        b.module.use_maxpool_branch = use_maxpool_branch;
        b.module.filters_per_branch = filters_per_branch;
        b.module.bottleneck_width = bottleneck_width;
        b.module.input_channels = input_channels;
        return b;
    }
    EncoderSpec encoder_spec() const {
        EncoderSpec e;
        e.d_model = d_model;
        e.heads = heads;
        e.layers = encoder_layers;
        e.ff_width = ff_width;
        e.dropout = dropout;
        e.attn_downsample = attn_downsample;
        return e;
    }
    void validate() const {
        if (kind != "backbone" && kind != "hybrid")
            throw std::invalid_argument("model spec: unknown kind '" + kind + "'");
        backbone_spec().validate();
        if (kind == "hybrid") encoder_spec().validate();
        if (gate_reduction < 1) throw std::invalid_argument("model spec: gate reduction must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
Tensor<T> init_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor<T> t(std::move(shape));
    const double bound = std::sqrt(6.0 / std::max(1, fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    t.set_requires_grad(true);
    return t;
}

}  // namespace detail

template <typename T>
struct Conv1dLayer {
    Tensor<T> w, b;
    Padding pad = Padding::Same;
    int stride = 1;

    Conv1dLayer() = default;
    Conv1dLayer(int cin, int cout, int k, Rng& rng) {
        w = detail::init_uniform<T>({cout, cin, k}, cin * k, rng);
        b = Tensor<T>({cout}, T(0), true);
    }
    Tensor<T> forward(const Tensor<T>& x) const { return conv1d(x, w, b, pad, stride); }
    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".w", ParamCategory::ConvWeight, w});
        out.push_back({prefix + ".b", ParamCategory::ConvBias, b});
    }
};

template <typename T>
struct BatchNormLayer {
    Tensor<T> gamma, beta;
    std::vector<T> running_mean, running_var;

    BatchNormLayer() = default;
    explicit BatchNormLayer(int channels) {
        gamma = Tensor<T>({channels}, T(1), true);
        beta = Tensor<T>({channels}, T(0), true);
        running_mean.assign(static_cast<size_t>(channels), T(0));
        running_var.assign(static_cast<size_t>(channels), T(1));
    }
    Tensor<T> forward(const Tensor<T>& x, NormMode mode) {
        return batchnorm1d(x, gamma, beta, mode, running_mean, running_var);
    }
    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".gamma", ParamCategory::BnAffine, gamma});
        out.push_back({prefix + ".beta", ParamCategory::BnAffine, beta});
    }
    void collect_state(const std::string& prefix, std::vector<StateRef<T>>& out) {
        out.push_back({prefix + ".running_mean", &running_mean});
        out.push_back({prefix + ".running_var", &running_var});
    }
};

template <typename T>
struct DenseLayer {
    Tensor<T> w, b;  // {out, in}, {out}

    DenseLayer() = default;
    DenseLayer(int in, int out, Rng& rng) {
        w = detail::init_uniform<T>({out, in}, in, rng);
        b = Tensor<T>({out}, T(0), true);
    }
    Tensor<T> forward(const Tensor<T>& x) const { return dense(x, w, b); }
    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".w", ParamCategory::DenseWeight, w});
        out.push_back({prefix + ".b", ParamCategory::DenseBias, b});
    }
};

template <typename T>
struct LayerNormLayer {
    Tensor<T> gamma, beta;

    LayerNormLayer() = default;
    explicit LayerNormLayer(int d) {
        gamma = Tensor<T>({d}, T(1), true);
        beta = Tensor<T>({d}, T(0), true);
    }
    Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".gamma", ParamCategory::BnAffine, gamma});
        out.push_back({prefix + ".beta", ParamCategory::BnAffine, beta});
    }
};

// Squeeze-and-excitation channel gate. The second layer starts at zero so a
// freshly built gate is an exact identity (s = 0.5, shifted weight 1.0).
// Emitted weights always lie in (0.5, 1.5).
template <typename T>
struct SEGate {
    SEGateSpec spec;
    DenseLayer<T> fc1, fc2;
    std::vector<T> last_gate;  // {B*C} values of the most recent forward

    SEGate() = default;
    SEGate(const SEGateSpec& s, Rng& rng) : spec(s) {
        fc1 = DenseLayer<T>(s.channels, s.hidden(), rng);
        fc2 = DenseLayer<T>(s.hidden(), s.channels, rng);
        std::fill(fc2.w.value().begin(), fc2.w.value().end(), T(0));
    }
    Tensor<T> forward(const Tensor<T>& x) {
        auto z = gap(x);
        auto s = sigmoid(fc2.forward(relu(fc1.forward(z))));
        auto shifted = add_scalar(s, T(0.5));
        last_gate = shifted.value();
        return scale_channels(x, shifted);
    }
    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        fc1.collect(prefix + ".fc1", out);
        fc2.collect(prefix + ".fc2", out);
    }
};

// One inception module: a shared 1x1 bottleneck feeding the k-sized conv
// branches, plus a maxpool branch with its own 1x1 projection; branch outputs
// are concatenated, then BN, then ReLU. T is preserved.
template <typename T>
struct InceptionBlock {
    InceptionModuleSpec spec;
    Conv1dLayer<T> bottleneck;               // present iff conv branches exist
    std::vector<Conv1dLayer<T>> branches;    // one per kernel size
    Conv1dLayer<T> pool_proj;                // present iff maxpool branch
    BatchNormLayer<T> bn;

    InceptionBlock() = default;
    InceptionBlock(const InceptionModuleSpec& s, Rng& rng) : spec(s) {
        spec.validate();
        if (!spec.conv_kernels.empty()) {
            bottleneck = Conv1dLayer<T>(spec.input_channels, spec.bottleneck_width, 1, rng);
            for (int k : spec.conv_kernels)
                branches.emplace_back(spec.bottleneck_width, spec.filters_per_branch, k, rng);
        }
        if (spec.use_maxpool_branch)
            pool_proj = Conv1dLayer<T>(spec.input_channels, spec.filters_per_branch, 1, rng);
        bn = BatchNormLayer<T>(spec.output_channels());
    }

    // concat -> BN, before the activation (the backbone injects residuals here).
    Tensor<T> forward_preact(const Tensor<T>& x, NormMode mode) {
        Tensor<T> out;
        bool have = false;
        if (!spec.conv_kernels.empty()) {
            auto compressed = bottleneck.forward(x);
            for (auto& br : branches) {
                auto y = br.forward(compressed);
                out = have ? concat_channels(out, y) : y;
                have = true;
            }
        }
        if (spec.use_maxpool_branch) {
            auto y = pool_proj.forward(maxpool1d(x, 3, 1, Padding::Same));
            out = have ? concat_channels(out, y) : y;
        }
        return bn.forward(out, mode);
    }
    Tensor<T> forward(const Tensor<T>& x, NormMode mode) { return relu(forward_preact(x, mode)); }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        if (!spec.conv_kernels.empty()) {
            bottleneck.collect(prefix + ".bottleneck", out);
            for (size_t i = 0; i < branches.size(); ++i)
                branches[i].collect(prefix + ".branch" + std::to_string(i), out);
        }
        if (spec.use_maxpool_branch) pool_proj.collect(prefix + ".pool_proj", out);
        bn.collect(prefix + ".bn", out);
    }
    void collect_state(const std::string& prefix, std::vector<StateRef<T>>& out) {
        bn.collect_state(prefix + ".bn", out);
    }
};

// 1x1 conv + BN shortcut used at residual junctions with a channel mismatch.
template <typename T>
struct ShortcutProj {
    bool identity = true;
    Conv1dLayer<T> conv;
    BatchNormLayer<T> bn;

    ShortcutProj() = default;
    ShortcutProj(int cin, int cout, Rng& rng) {
        identity = cin == cout;
        if (!identity) {
            conv = Conv1dLayer<T>(cin, cout, 1, rng);
            bn = BatchNormLayer<T>(cout);
        }
    }
    Tensor<T> forward(const Tensor<T>& x, NormMode mode) {
        return identity ? x : bn.forward(conv.forward(x), mode);
    }
    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        if (!identity) {
            conv.collect(prefix + ".conv", out);
            bn.collect(prefix + ".bn", out);
        }
    }
    void collect_state(const std::string& prefix, std::vector<StateRef<T>>& out) {
        if (!identity) bn.collect_state(prefix + ".bn", out);
    }
};

template <typename T>
struct EncoderLayer {
    int heads = 1;
    DenseLayer<T> wq, wk, wv, wo, ff1, ff2;
    LayerNormLayer<T> ln1, ln2;

    EncoderLayer() = default;
    EncoderLayer(const EncoderSpec& s, Rng& rng) : heads(s.heads) {
        wq = DenseLayer<T>(s.d_model, s.d_model, rng);
        wk = DenseLayer<T>(s.d_model, s.d_model, rng);
        wv = DenseLayer<T>(s.d_model, s.d_model, rng);
        wo = DenseLayer<T>(s.d_model, s.d_model, rng);
        ff1 = DenseLayer<T>(s.d_model, s.ff_width, rng);
        ff2 = DenseLayer<T>(s.ff_width, s.d_model, rng);
        ln1 = LayerNormLayer<T>(s.d_model);
        ln2 = LayerNormLayer<T>(s.d_model);
    }

    Tensor<T> forward(const Tensor<T>& x, NormMode mode, double dropout, Rng* drop_rng,
                      std::vector<T>* attn_probs_out) {
        const int dk = x.dim(2) / heads;
        auto q = split_heads(wq.forward(x), heads);
        auto k = split_heads(wk.forward(x), heads);
        auto v = split_heads(wv.forward(x), heads);
        auto scores = scale(bmm(q, transpose_12(k)), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk))));
        auto probs = softmax_t(scores, T(1));
        if (attn_probs_out) *attn_probs_out = probs.value();
        auto ctx = dense(merge_heads(bmm(probs, v), heads), wo.w, wo.b);
        ctx = apply_dropout(ctx, mode, dropout, drop_rng);
        auto h = ln1.forward(add(x, ctx));
        auto f = ff2.forward(relu(ff1.forward(h)));
        f = apply_dropout(f, mode, dropout, drop_rng);
        return ln2.forward(add(h, f));
    }

    static Tensor<T> apply_dropout(const Tensor<T>& x, NormMode mode, double rate, Rng* rng) {
        if (mode != NormMode::Train || rate <= 0 || rng == nullptr) return x;
        Tensor<T> mask(x.shape());
        const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
        for (int64_t i = 0; i < mask.numel(); ++i)
            mask.data()[i] = rng->uniform() < rate ? T(0) : keep_scale;
        return mul(x, mask);
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        wq.collect(prefix + ".wq", out);
        wk.collect(prefix + ".wk", out);
        wv.collect(prefix + ".wv", out);
        wo.collect(prefix + ".wo", out);
        ff1.collect(prefix + ".ff1", out);
        ff2.collect(prefix + ".ff2", out);
        ln1.collect(prefix + ".ln1", out);
        ln2.collect(prefix + ".ln2", out);
    }
};

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

template <typename T>
struct ForwardProbe {
    Tensor<T> logits;
    Tensor<T> features;  // last inception module output (post-ReLU)
};

template <typename T>
class Model {
public:
    virtual ~Model() = default;
    virtual ForwardProbe<T> forward_probe(const Tensor<T>& x, NormMode mode) = 0;
    virtual std::vector<ParamRef<T>> named_params() = 0;
    virtual std::vector<StateRef<T>> named_state() = 0;
    virtual const ModelSpec& spec() const = 0;
    virtual int residual_junctions() const = 0;

    Tensor<T> forward(const Tensor<T>& x, NormMode mode = NormMode::Eval) {
        return forward_probe(x, mode).logits;
    }
    std::vector<Tensor<T>> params() {
        std::vector<Tensor<T>> out;
        for (auto& p : named_params()) out.push_back(p.tensor);
        return out;
    }
    // Per-sample SE gate values {B*C} from the most recent forward; empty when
    // the model has no input gate.
    virtual const std::vector<T>& last_gate() const {
        static const std::vector<T> empty;
        return empty;
    }
};

template <typename T>
struct BackboneCore {
    BackboneSpec spec;
    std::vector<InceptionBlock<T>> blocks;
    std::map<int, ShortcutProj<T>> shortcuts;  // keyed by junction block index

    BackboneCore() = default;
    BackboneCore(const BackboneSpec& s, Rng& rng) : spec(s) {
        spec.validate();
        int cin = spec.input_channels;
        int residual_cin = cin;
        for (int j = 0; j < spec.depth; ++j) {
            InceptionModuleSpec ms = spec.module;
            ms.input_channels = cin;
            blocks.emplace_back(ms, rng);
            const int cout = ms.output_channels();
            if ((j + 1) % spec.residual_period == 0) {
                shortcuts.emplace(j, ShortcutProj<T>(residual_cin, cout, rng));
                residual_cin = cout;
            }
            cin = cout;
        }
    }

    Tensor<T> features(const Tensor<T>& x, NormMode mode) {
        Tensor<T> cur = x;
        Tensor<T> residual_input = x;
        for (int j = 0; j < spec.depth; ++j) {
            auto it = shortcuts.find(j);
            if (it != shortcuts.end()) {
                auto pre = blocks[static_cast<size_t>(j)].forward_preact(cur, mode);
                cur = relu(add(pre, it->second.forward(residual_input, mode)));
                residual_input = cur;
            } else {
                cur = blocks[static_cast<size_t>(j)].forward(cur, mode);
            }
        }
        return cur;
    }
    int output_channels() const { return blocks.back().spec.output_channels(); }
    void collect(std::vector<ParamRef<T>>& out) {
        for (size_t j = 0; j < blocks.size(); ++j)
            blocks[j].collect("block" + std::to_string(j), out);
        for (auto& [j, sc] : shortcuts) sc.collect("shortcut" + std::to_string(j), out);
    }
    void collect_state(std::vector<StateRef<T>>& out) {
        for (size_t j = 0; j < blocks.size(); ++j)
            blocks[j].collect_state("block" + std::to_string(j), out);
        for (auto& [j, sc] : shortcuts) sc.collect_state("shortcut" + std::to_string(j), out);
    }
};

// Pure inception classifier: optional input SE gate, stacked modules with
// residual junctions, GAP and a dense head.
template <typename T>
class BackboneModel : public Model<T> {
public:
    BackboneModel(const ModelSpec& ms, uint64_t seed) : spec_(ms) {
        spec_.validate();
        Rng rng(seed);
        if (spec_.input_gate) gate_ = SEGate<T>({spec_.input_channels, spec_.gate_reduction}, rng);
        core_ = BackboneCore<T>(spec_.backbone_spec(), rng);
        head_ = DenseLayer<T>(core_.output_channels(), spec_.classes, rng);
    }

    ForwardProbe<T> forward_probe(const Tensor<T>& x, NormMode mode) override {
        Tensor<T> cur = x;
        if (spec_.input_gate) cur = gate_.forward(cur);
        auto feats = core_.features(cur, mode);
        ForwardProbe<T> out;
        out.features = feats;
        out.logits = head_.forward(gap(feats));
        return out;
    }
    std::vector<ParamRef<T>> named_params() override {
        std::vector<ParamRef<T>> out;
        if (spec_.input_gate) gate_.collect("gate", out);
        core_.collect(out);
        head_.collect("head", out);
        return out;
    }
    std::vector<StateRef<T>> named_state() override {
        std::vector<StateRef<T>> out;
        core_.collect_state(out);
        return out;
    }
    const ModelSpec& spec() const override { return spec_; }
    const std::vector<T>& last_gate() const override { return gate_.last_gate; }
    int residual_junctions() const override { return static_cast<int>(core_.shortcuts.size()); }

private:
    ModelSpec spec_;
    SEGate<T> gate_;
    BackboneCore<T> core_;
    DenseLayer<T> head_;
};

// Detection-stage hybrid: inception feature extractor, strided maxpool
// downsampling, linear projection with sinusoidal position encoding, a stack
// of self-attention encoder layers, mean pooling and a dense head.
template <typename T>
class HybridModel : public Model<T> {
public:
    HybridModel(const ModelSpec& ms, uint64_t seed) : spec_(ms), drop_rng_(seed ^ 0x5bf03635ULL) {
        spec_.validate();
        Rng rng(seed);
        if (spec_.input_gate) gate_ = SEGate<T>({spec_.input_channels, spec_.gate_reduction}, rng);
        core_ = BackboneCore<T>(spec_.backbone_spec(), rng);
        enc_spec_ = spec_.encoder_spec();
        proj_ = DenseLayer<T>(core_.output_channels(), enc_spec_.d_model, rng);
        for (int l = 0; l < enc_spec_.layers; ++l) layers_.emplace_back(enc_spec_, rng);
        head_ = DenseLayer<T>(enc_spec_.d_model, spec_.classes, rng);
    }

    ForwardProbe<T> forward_probe(const Tensor<T>& x, NormMode mode) override {
        Tensor<T> cur = x;
        if (spec_.input_gate) cur = gate_.forward(cur);
        auto feats = core_.features(cur, mode);
        Tensor<T> seq = feats;
        if (enc_spec_.attn_downsample > 1)
            seq = maxpool1d(seq, enc_spec_.attn_downsample, enc_spec_.attn_downsample, Padding::Same);
        seq = proj_.forward(transpose_12(seq));
        seq = add(seq, position_encoding(seq.dim(0), seq.dim(1), seq.dim(2)));
        last_attention_.clear();
        for (auto& layer : layers_) {
            std::vector<T> probs;
            seq = layer.forward(seq, mode, enc_spec_.dropout, &drop_rng_, &probs);
            last_attention_.push_back(std::move(probs));
        }
        ForwardProbe<T> out;
        out.features = feats;
        out.logits = head_.forward(seq_mean(seq));
        return out;
    }

    std::vector<ParamRef<T>> named_params() override {
        std::vector<ParamRef<T>> out;
        if (spec_.input_gate) gate_.collect("gate", out);
        core_.collect(out);
        proj_.collect("proj", out);
        for (size_t l = 0; l < layers_.size(); ++l)
            layers_[l].collect("enc" + std::to_string(l), out);
        head_.collect("head", out);
        return out;
    }
    std::vector<StateRef<T>> named_state() override {
        std::vector<StateRef<T>> out;
        core_.collect_state(out);
        return out;
    }
    const ModelSpec& spec() const override { return spec_; }
    const std::vector<T>& last_gate() const override { return gate_.last_gate; }
    int residual_junctions() const override { return static_cast<int>(core_.shortcuts.size()); }

    // Attention probabilities per layer from the most recent forward, each a
    // flat {B*heads, T', T'} buffer.
    const std::vector<std::vector<T>>& last_attention() const { return last_attention_; }

private:
    Tensor<T> position_encoding(int B, int Tlen, int D) const {
        Tensor<T> pe({B, Tlen, D});
        for (int t = 0; t < Tlen; ++t)
            for (int d = 0; d < D; ++d) {
                const double angle = t / std::pow(10000.0, 2.0 * (d / 2) / D);
                const double v = d % 2 == 0 ? std::sin(angle) : std::cos(angle);
                for (int bi = 0; bi < B; ++bi)
                    pe.data()[(static_cast<int64_t>(bi) * Tlen + t) * D + d] = static_cast<T>(v);
            }
        return pe;
    }

    ModelSpec spec_;
    Rng drop_rng_;
    SEGate<T> gate_;
    BackboneCore<T> core_;
    EncoderSpec enc_spec_;
    DenseLayer<T> proj_;
    std::vector<EncoderLayer<T>> layers_;
    DenseLayer<T> head_;
    std::vector<std::vector<T>> last_attention_;
};

template <typename T>
std::unique_ptr<Model<T>> build_model(const ModelSpec& spec, uint64_t seed) {
    spec.validate();
    if (spec.kind == "hybrid") return std::make_unique<HybridModel<T>>(spec, seed);
    return std::make_unique<BackboneModel<T>>(spec, seed);
}

}  // namespace liteinc
