#pragma once

// Flat key-value configuration with [sections] mirroring the module names.
// Command-line flags override file values; the fully resolved config (defaults
// included) is echoed by every run.

#include <liteinc/data.hpp>
#include <liteinc/nn.hpp>
#include <liteinc/train.hpp>

#include <map>
#include <string>
#include <vector>

namespace liteinc {

class Config {
public:
    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text);

    void set(const std::string& dotted_key, const std::string& value);
    bool has(const std::string& dotted_key) const;

    std::string get(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    int64_t get_int64(const std::string& key, int64_t fallback) const;
    uint64_t get_uint64(const std::string& key, uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;

    // Stable section / key ordering; parse(serialize()) round-trips.
    std::string serialize() const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;  // "section.key" -> value
};

// Section mappings. The *_to_config writers record every field so the echoed
// config is fully resolved.
ModelSpec model_spec_from_config(const Config& cfg, const std::string& section = "model");
void model_spec_to_config(const ModelSpec& spec, Config& cfg, const std::string& section = "model");

TrainConfig train_config_from_config(const Config& cfg, const std::string& section = "train");
void train_config_to_config(const TrainConfig& tc, Config& cfg, const std::string& section = "train");

SynthSpec synth_spec_from_config(const Config& cfg, const std::string& section = "data");
void synth_spec_to_config(const SynthSpec& spec, Config& cfg, const std::string& section = "data");

}  // namespace liteinc
