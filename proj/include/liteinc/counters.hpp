#pragma once

// Analytic parameter / FLOP / receptive-field accounting.
//
// FLOP convention: one multiply-accumulate = 2 FLOPs. A same-padded stride-1
// conv costs 2*T*Cin*Cout*k, a dense layer 2*m*n, and pooling / activation /
// normalization / residual adds cost 1 FLOP per output element.

#include <liteinc/nn.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace liteinc {

// Input span influencing one output position of L stacked stride-1 convs.
inline int64_t receptive_field(int kernel, int layers) {
    if (kernel < 1 || layers < 1) throw std::invalid_argument("receptive_field: k and L must be >= 1");
    return 1 + static_cast<int64_t>(layers) * (kernel - 1);
}

// Weight count of one inception module's bottleneck + conv branches +
// pool-projection convs, biases and BN excluded:
//   in*bottleneck + bottleneck*filters*sum(k) + in*filters
// (the last term only when the maxpool branch is present, the first two only
// when conv branches are present).
inline int64_t analytic_module_weights(const InceptionModuleSpec& s) {
    s.validate();
    int64_t total = 0;
    if (!s.conv_kernels.empty()) {
        total += static_cast<int64_t>(s.input_channels) * s.bottleneck_width;
        int64_t ksum = 0;
        for (int k : s.conv_kernels) ksum += k;
        total += static_cast<int64_t>(s.bottleneck_width) * s.filters_per_branch * ksum;
    }
    if (s.use_maxpool_branch)
        total += static_cast<int64_t>(s.input_channels) * s.filters_per_branch;
    return total;
}

struct ModuleParamCheck {
    std::string name;
    int64_t analytic = 0;    // formula above
    int64_t enumerated = 0;  // conv weights actually held by the module's tensors
};

struct ParamCountReport {
    int64_t total = 0;
    std::vector<std::pair<std::string, int64_t>> per_layer;        // tensor name -> scalars
    std::vector<std::pair<std::string, int64_t>> per_category;     // category -> scalars
    std::vector<ModuleParamCheck> modules;                         // analytic vs enumerated, per module
};

// Exact enumeration of learnable scalars grouped by layer and category, plus
// the analytic module expression evaluated against the enumerated conv
// weights of each module (biases and BN affine reported separately, never
// folded in).
template <typename T>
ParamCountReport count_params(Model<T>& model) {
    ParamCountReport rep;
    std::map<std::string, int64_t> by_cat;
    std::map<std::string, int64_t> module_conv_weights;
    for (auto& p : model.named_params()) {
        const int64_t n = p.tensor.numel();
        rep.total += n;
        rep.per_layer.emplace_back(p.name, n);
        by_cat[param_category_name(p.category)] += n;
        if (p.category == ParamCategory::ConvWeight) {
            auto dot = p.name.find('.');
            const std::string owner = p.name.substr(0, dot);
            if (owner.rfind("block", 0) == 0) module_conv_weights[owner] += n;
        }
    }
    for (auto& [k, v] : by_cat) rep.per_category.emplace_back(k, v);

    const ModelSpec& spec = model.spec();
    BackboneSpec bs = spec.backbone_spec();
    int cin = bs.input_channels;
    for (int j = 0; j < bs.depth; ++j) {
        InceptionModuleSpec ms = bs.module;
        ms.input_channels = cin;
        ModuleParamCheck chk;
        chk.name = "block" + std::to_string(j);
        chk.analytic = analytic_module_weights(ms);
        auto it = module_conv_weights.find(chk.name);
        chk.enumerated = it == module_conv_weights.end() ? 0 : it->second;
        rep.modules.push_back(chk);
        cin = ms.output_channels();
    }
    return rep;
}

inline int64_t flops_conv1d_same(int64_t T, int64_t cin, int64_t cout, int64_t k) {
    return 2 * T * cin * cout * k;
}
inline int64_t flops_dense(int64_t m, int64_t n) { return 2 * m * n; }

struct FlopReport {
    int64_t total = 0;
    int64_t conv = 0;           // conv + dense multiply-accumulate work
    int64_t dense = 0;
    int64_t pointwise = 0;      // pooling, activations, normalization, residual adds
    std::vector<std::pair<std::string, int64_t>> per_layer;

    void add(const std::string& name, int64_t f, int64_t* bucket) {
        per_layer.emplace_back(name, f);
        total += f;
        *bucket += f;
    }
};

// Deterministic single-sample forward cost of a model at sequence length T
// under the stated convention.
inline FlopReport count_flops(const ModelSpec& spec, int64_t T) {
    spec.validate();
    FlopReport rep;
    BackboneSpec bs = spec.backbone_spec();

    if (spec.input_gate) {
        const SEGateSpec g{spec.input_channels, spec.gate_reduction};
        rep.add("gate.gap", spec.input_channels, &rep.pointwise);
        rep.add("gate.fc1", flops_dense(g.hidden(), g.channels), &rep.dense);
        rep.add("gate.fc2", flops_dense(g.channels, g.hidden()), &rep.dense);
        rep.add("gate.scale", T * spec.input_channels, &rep.pointwise);
    }

    int cin = bs.input_channels;
    int residual_cin = cin;
    for (int j = 0; j < bs.depth; ++j) {
        InceptionModuleSpec ms = bs.module;
        ms.input_channels = cin;
        const std::string p = "block" + std::to_string(j);
        const int cout = ms.output_channels();
        if (!ms.conv_kernels.empty()) {
            rep.add(p + ".bottleneck", flops_conv1d_same(T, cin, ms.bottleneck_width, 1), &rep.conv);
            for (size_t i = 0; i < ms.conv_kernels.size(); ++i)
                rep.add(p + ".branch" + std::to_string(i),
                        flops_conv1d_same(T, ms.bottleneck_width, ms.filters_per_branch,
                                          ms.conv_kernels[i]),
                        &rep.conv);
        }
        if (ms.use_maxpool_branch) {
            rep.add(p + ".maxpool", T * cin, &rep.pointwise);
            rep.add(p + ".pool_proj", flops_conv1d_same(T, cin, ms.filters_per_branch, 1), &rep.conv);
        }
        rep.add(p + ".bn", T * cout, &rep.pointwise);
        rep.add(p + ".relu", T * cout, &rep.pointwise);
        if ((j + 1) % bs.residual_period == 0) {
            if (residual_cin != cout) {
                rep.add(p + ".shortcut.conv", flops_conv1d_same(T, residual_cin, cout, 1), &rep.conv);
                rep.add(p + ".shortcut.bn", T * cout, &rep.pointwise);
            }
            rep.add(p + ".shortcut.add", T * cout, &rep.pointwise);
            residual_cin = cout;
        }
        cin = cout;
    }

    if (spec.kind == "hybrid") {
        const EncoderSpec es = spec.encoder_spec();
        int64_t Ts = T;
        if (es.attn_downsample > 1) {
            Ts = (T + es.attn_downsample - 1) / es.attn_downsample;
            rep.add("attn_downsample", Ts * cin, &rep.pointwise);
        }
        rep.add("proj", Ts * flops_dense(es.d_model, cin), &rep.dense);
        rep.add("posenc.add", Ts * es.d_model, &rep.pointwise);
        for (int l = 0; l < es.layers; ++l) {
            const std::string p = "enc" + std::to_string(l);
            rep.add(p + ".qkv", 3 * Ts * flops_dense(es.d_model, es.d_model), &rep.dense);
            rep.add(p + ".scores", 2 * Ts * Ts * es.d_model, &rep.conv);
            rep.add(p + ".softmax", static_cast<int64_t>(es.heads) * Ts * Ts, &rep.pointwise);
            rep.add(p + ".context", 2 * Ts * Ts * es.d_model, &rep.conv);
            rep.add(p + ".out_proj", Ts * flops_dense(es.d_model, es.d_model), &rep.dense);
            rep.add(p + ".ff", Ts * (flops_dense(es.ff_width, es.d_model) +
                                     flops_dense(es.d_model, es.ff_width)),
                    &rep.dense);
            rep.add(p + ".norms", 2 * Ts * es.d_model, &rep.pointwise);
            rep.add(p + ".residual_adds", 2 * Ts * es.d_model, &rep.pointwise);
        }
        rep.add("seq_mean", es.d_model, &rep.pointwise);
        rep.add("head", flops_dense(spec.classes, es.d_model), &rep.dense);
    } else {
        rep.add("gap", cin, &rep.pointwise);
        rep.add("head", flops_dense(spec.classes, cin), &rep.dense);
    }
    return rep;
}

}  // namespace liteinc
