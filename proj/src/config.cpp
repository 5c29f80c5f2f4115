#include <liteinc/config.hpp>

#include <fstream>
#include <sstream>

namespace liteinc {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
}

Config Config::parse_string(const std::string& text) {
    Config cfg;
    std::stringstream ss(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error("config line " + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
        cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
}

void Config::set(const std::string& dotted_key, const std::string& value) {
    values_[dotted_key] = value;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

int Config::get_int(const std::string& key, int fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : std::stoi(it->second);
}

int64_t Config::get_int64(const std::string& key, int64_t fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : std::stoll(it->second);
}

uint64_t Config::get_uint64(const std::string& key, uint64_t fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : std::stoull(it->second);
}

double Config::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : std::stod(it->second);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw std::runtime_error("config: bad boolean '" + it->second + "' for " + key);
}

std::vector<int> Config::get_int_list(const std::string& key, std::vector<int> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    std::stringstream ss(it->second);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cell = trim(cell);
        if (!cell.empty()) out.push_back(std::stoi(cell));
    }
    return out;
}

std::string Config::serialize() const {
    std::ostringstream out;
    std::string current_section;
    bool first = true;
    for (auto& [key, value] : values_) {
        const auto dot = key.find('.');
        const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
        const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
        if (section != current_section || first) {
            if (!first) out << "\n";
            if (!section.empty()) out << "[" << section << "]\n";
            current_section = section;
            first = false;
        }
        out << name << " = " << value << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------

ModelSpec model_spec_from_config(const Config& cfg, const std::string& s) {
    ModelSpec spec;
    spec.kind = cfg.get(s + ".kind", spec.kind);
    spec.conv_kernels = cfg.get_int_list(s + ".kernels", spec.conv_kernels);
    spec.use_maxpool_branch = cfg.get_bool(s + ".maxpool_branch", spec.use_maxpool_branch);
    spec.filters_per_branch = cfg.get_int(s + ".filters", spec.filters_per_branch);
    spec.bottleneck_width = cfg.get_int(s + ".bottleneck", spec.bottleneck_width);
    spec.depth = cfg.get_int(s + ".depth", spec.depth);
    spec.residual_period = cfg.get_int(s + ".residual_period", spec.residual_period);
    spec.input_channels = cfg.get_int(s + ".channels", spec.input_channels);
    spec.classes = cfg.get_int(s + ".classes", spec.classes);
    spec.input_gate = cfg.get_bool(s + ".input_gate", spec.input_gate);
    spec.gate_reduction = cfg.get_int(s + ".gate_reduction", spec.gate_reduction);
    spec.d_model = cfg.get_int(s + ".d_model", spec.d_model);
    spec.heads = cfg.get_int(s + ".heads", spec.heads);
    spec.encoder_layers = cfg.get_int(s + ".encoder_layers", spec.encoder_layers);
    spec.ff_width = cfg.get_int(s + ".ff_width", spec.ff_width);
    spec.dropout = cfg.get_double(s + ".dropout", spec.dropout);
    spec.attn_downsample = cfg.get_int(s + ".attn_downsample", spec.attn_downsample);
    spec.validate();
    return spec;
}

void model_spec_to_config(const ModelSpec& spec, Config& cfg, const std::string& s) {
    cfg.set(s + ".kind", spec.kind);
    std::string kernels;
    for (size_t i = 0; i < spec.conv_kernels.size(); ++i)
        kernels += (i ? "," : "") + std::to_string(spec.conv_kernels[i]);
    cfg.set(s + ".kernels", kernels);
    cfg.set(s + ".maxpool_branch", spec.use_maxpool_branch ? "true" : "false");
    cfg.set(s + ".filters", std::to_string(spec.filters_per_branch));
    cfg.set(s + ".bottleneck", std::to_string(spec.bottleneck_width));
    cfg.set(s + ".depth", std::to_string(spec.depth));
    cfg.set(s + ".residual_period", std::to_string(spec.residual_period));
    cfg.set(s + ".channels", std::to_string(spec.input_channels));
    cfg.set(s + ".classes", std::to_string(spec.classes));
    cfg.set(s + ".input_gate", spec.input_gate ? "true" : "false");
    cfg.set(s + ".gate_reduction", std::to_string(spec.gate_reduction));
    cfg.set(s + ".d_model", std::to_string(spec.d_model));
    cfg.set(s + ".heads", std::to_string(spec.heads));
    cfg.set(s + ".encoder_layers", std::to_string(spec.encoder_layers));
    cfg.set(s + ".ff_width", std::to_string(spec.ff_width));
    {
        std::ostringstream d;
        d << spec.dropout;
        cfg.set(s + ".dropout", d.str());
    }
    cfg.set(s + ".attn_downsample", std::to_string(spec.attn_downsample));
}

TrainConfig train_config_from_config(const Config& cfg, const std::string& s) {
    TrainConfig tc;
    tc.learning_rate = cfg.get_double(s + ".learning_rate", tc.learning_rate);
    tc.weight_decay = cfg.get_double(s + ".weight_decay", tc.weight_decay);
    tc.batch_size = cfg.get_int(s + ".batch_size", tc.batch_size);
    tc.max_epochs = cfg.get_int(s + ".epochs", tc.max_epochs);
    tc.clip_max_norm = cfg.get_double(s + ".clip_max_norm", tc.clip_max_norm);
    tc.plateau_factor = cfg.get_double(s + ".plateau_factor", tc.plateau_factor);
    tc.plateau_patience = cfg.get_int(s + ".plateau_patience", tc.plateau_patience);
    tc.seed = cfg.get_uint64(s + ".seed", tc.seed);
    tc.select_by = cfg.get(s + ".select_by", tc.select_by);
    tc.history_path = cfg.get(s + ".history_path", tc.history_path);
    tc.validate();
    return tc;
}

void train_config_to_config(const TrainConfig& tc, Config& cfg, const std::string& s) {
    auto num = [](double v) {
        std::ostringstream out;
        out.precision(17);
        out << v;
        return out.str();
    };
    cfg.set(s + ".learning_rate", num(tc.learning_rate));
    cfg.set(s + ".weight_decay", num(tc.weight_decay));
    cfg.set(s + ".batch_size", std::to_string(tc.batch_size));
    cfg.set(s + ".epochs", std::to_string(tc.max_epochs));
    cfg.set(s + ".clip_max_norm", num(tc.clip_max_norm));
    cfg.set(s + ".plateau_factor", num(tc.plateau_factor));
    cfg.set(s + ".plateau_patience", std::to_string(tc.plateau_patience));
    cfg.set(s + ".seed", std::to_string(tc.seed));
    cfg.set(s + ".select_by", tc.select_by);
    if (!tc.history_path.empty()) cfg.set(s + ".history_path", tc.history_path);
}

SynthSpec synth_spec_from_config(const Config& cfg, const std::string& s) {
    SynthSpec spec;
    spec.classes = cfg.get_int(s + ".classes", spec.classes);
    spec.channels = cfg.get_int(s + ".channels", spec.channels);
    spec.length = cfg.get_int(s + ".length", spec.length);
    spec.per_class = cfg.get_int(s + ".per_class", spec.per_class);
    spec.noise_sigma = cfg.get_double(s + ".noise_sigma", spec.noise_sigma);
    spec.distractor_channels = cfg.get_int(s + ".distractor_channels", spec.distractor_channels);
    spec.seed = cfg.get_uint64(s + ".seed", spec.seed);
    spec.validate();
    return spec;
}

void synth_spec_to_config(const SynthSpec& spec, Config& cfg, const std::string& s) {
    auto num = [](double v) {
        std::ostringstream out;
        out.precision(17);
        out << v;
        return out.str();
    };
    cfg.set(s + ".classes", std::to_string(spec.classes));
    cfg.set(s + ".channels", std::to_string(spec.channels));
    cfg.set(s + ".length", std::to_string(spec.length));
    cfg.set(s + ".per_class", std::to_string(spec.per_class));
    cfg.set(s + ".noise_sigma", num(spec.noise_sigma));
    cfg.set(s + ".distractor_channels", std::to_string(spec.distractor_channels));
    cfg.set(s + ".seed", std::to_string(spec.seed));
}

}  // namespace liteinc
