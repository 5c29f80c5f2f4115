#pragma once

// JSON encodings of the report-bearing domain types. Object keys come out
// sorted, so every emission of the same content is byte-identical.

#include <liteinc/attribution.hpp>
#include <liteinc/cascade.hpp>
#include <liteinc/counters.hpp>
#include <liteinc/select.hpp>
#include <liteinc/train.hpp>

#include <json.hpp>

namespace liteinc {

inline nlohmann::json to_json(const ModelSpec& s) {
    nlohmann::json j;
    j["kind"] = s.kind;
    j["kernels"] = s.conv_kernels;
    j["maxpool_branch"] = s.use_maxpool_branch;
    j["filters"] = s.filters_per_branch;
    j["bottleneck"] = s.bottleneck_width;
    j["depth"] = s.depth;
    j["residual_period"] = s.residual_period;
    j["channels"] = s.input_channels;
    j["classes"] = s.classes;
    j["input_gate"] = s.input_gate;
    j["gate_reduction"] = s.gate_reduction;
    j["d_model"] = s.d_model;
    j["heads"] = s.heads;
    j["encoder_layers"] = s.encoder_layers;
    j["ff_width"] = s.ff_width;
    j["dropout"] = s.dropout;
    j["attn_downsample"] = s.attn_downsample;
    return j;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.kind = j.at("kind").get<std::string>();
    s.conv_kernels = j.at("kernels").get<std::vector<int>>();
    s.use_maxpool_branch = j.at("maxpool_branch").get<bool>();
    s.filters_per_branch = j.at("filters").get<int>();
    s.bottleneck_width = j.at("bottleneck").get<int>();
    s.depth = j.at("depth").get<int>();
    s.residual_period = j.at("residual_period").get<int>();
    s.input_channels = j.at("channels").get<int>();
    s.classes = j.at("classes").get<int>();
    s.input_gate = j.at("input_gate").get<bool>();
    s.gate_reduction = j.at("gate_reduction").get<int>();
    s.d_model = j.at("d_model").get<int>();
    s.heads = j.at("heads").get<int>();
    s.encoder_layers = j.at("encoder_layers").get<int>();
    s.ff_width = j.at("ff_width").get<int>();
    s.dropout = j.at("dropout").get<double>();
    s.attn_downsample = j.at("attn_downsample").get<int>();
    s.validate();
    return s;
}

inline nlohmann::json to_json(const MetricsReport& m) {
    nlohmann::json j;
    j["accuracy"] = m.accuracy;
    j["macro_precision"] = m.macro_precision;
    j["macro_recall"] = m.macro_recall;
    j["macro_f1"] = m.macro_f1;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    j["confusion"] = m.confusion;
    j["classes"] = m.classes;
    return j;
}

inline nlohmann::json to_json(const ParamCountReport& r) {
    nlohmann::json j;
    j["total"] = r.total;
    nlohmann::json per_layer = nlohmann::json::object();
    for (auto& [name, n] : r.per_layer) per_layer[name] = n;
    j["per_layer"] = per_layer;
    nlohmann::json per_cat = nlohmann::json::object();
    for (auto& [name, n] : r.per_category) per_cat[name] = n;
    j["per_category"] = per_cat;
    nlohmann::json mods = nlohmann::json::array();
    for (auto& m : r.modules)
        mods.push_back({{"name", m.name}, {"analytic", m.analytic}, {"enumerated", m.enumerated}});
    j["modules"] = mods;
    return j;
}

inline nlohmann::json to_json(const FlopReport& r) {
    nlohmann::json j;
    j["total"] = r.total;
    j["conv"] = r.conv;
    j["dense"] = r.dense;
    j["pointwise"] = r.pointwise;
    nlohmann::json per_layer = nlohmann::json::object();
    for (auto& [name, n] : r.per_layer) per_layer[name] = n;
    j["per_layer"] = per_layer;
    return j;
}

inline nlohmann::json to_json(const SelectionReport& r) {
    nlohmann::json j;
    j["channels"] = r.scores.channels;
    j["mi"] = r.scores.mi;
    j["gradient"] = r.scores.gradient;
    j["se_weight"] = r.scores.se_weight;
    j["mi_rank"] = r.scores.mi_rank;
    j["gradient_rank"] = r.scores.gradient_rank;
    j["se_rank"] = r.scores.se_rank;
    j["retained"] = r.retained;
    nlohmann::json verdicts = nlohmann::json::array();
    for (auto& v : r.verdicts)
        verdicts.push_back({{"channel", v.channel},
                            {"retained", v.retained},
                            {"criterion", v.criterion},
                            {"reason", v.reason},
                            {"mi_rank", v.mi_rank},
                            {"gradient_rank", v.gradient_rank},
                            {"se_rank", v.se_rank},
                            {"median_rank", v.median_rank}});
    j["verdicts"] = verdicts;
    return j;
}

inline nlohmann::json to_json(const Segment& s, int length) {
    return {{"begin", s.begin},
            {"end", s.end},
            {"begin_percent", s.begin_percent(length)},
            {"end_percent", s.end_percent(length)}};
}

inline nlohmann::json to_json(const EvidenceChain& chain) {
    nlohmann::json j;
    j["target_class"] = chain.target_class;
    j["samples_used"] = chain.samples_used;
    j["fewer_than_requested"] = chain.fewer_than_requested;
    j["consensus"] = chain.consensus;
    nlohmann::json methods = nlohmann::json::array();
    for (auto& m : chain.methods) {
        nlohmann::json mj;
        mj["method"] = m.method;
        mj["top5"] = m.top5;
        mj["channel_scores"] = m.channel_scores;
        nlohmann::json segs = nlohmann::json::array();
        for (auto& s : m.segments) segs.push_back(to_json(s, chain.length));
        mj["segments"] = segs;
        methods.push_back(mj);
    }
    j["methods"] = methods;
    return j;
}

inline nlohmann::json to_json(const NoiseStudyResult& r) {
    nlohmann::json j;
    j["sigma_levels"] = r.sigma_levels;
    j["confidence"] = r.confidence;
    nlohmann::json levels = nlohmann::json::array();
    for (size_t i = 0; i < r.entropy.size(); ++i) {
        nlohmann::json lj = nlohmann::json::object();
        for (auto& [method, h] : r.entropy[i]) {
            lj[method] = {{"normalized_entropy", h},
                          {"degenerate", r.degenerate[i].at(method)}};
        }
        levels.push_back(lj);
    }
    j["entropy"] = levels;
    return j;
}

inline nlohmann::json to_json(const std::vector<ThresholdPoint>& table) {
    nlohmann::json j = nlohmann::json::array();
    for (auto& p : table)
        j.push_back({{"threshold", p.threshold},
                     {"precision", p.precision},
                     {"recall", p.recall},
                     {"f1", p.f1},
                     {"flagged", p.flagged}});
    return j;
}

}  // namespace liteinc
