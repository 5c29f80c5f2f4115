#include <liteinc/data.hpp>

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "dataset container IO assumes a little-endian host");

namespace liteinc {

using nlohmann::json;

RawFlight read_flight_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open flight file: " + path);
    RawFlight flight;
    flight.source_id = std::filesystem::path(path).filename().string();
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty flight file: " + path);
    {
        std::stringstream header(line);
        std::string cell;
        while (std::getline(header, cell, ',')) flight.channel_names.push_back(cell);
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            if (cell.empty())
                row.push_back(std::numeric_limits<double>::quiet_NaN());
            else
                row.push_back(std::stod(cell));
        }
        // a trailing empty cell is not produced by getline; pad explicitly
        while (row.size() < flight.channel_names.size())
            row.push_back(std::numeric_limits<double>::quiet_NaN());
        if (row.size() != flight.channel_names.size())
            throw std::runtime_error("row width mismatch in " + path);
        flight.rows.push_back(std::move(row));
    }
    return flight;
}

namespace {

json manifest_to_json(const DatasetManifest& m, const std::vector<TimeSeriesSample>& samples) {
    json j;
    j["sample_count"] = m.sample_count;
    j["channels"] = m.channels;
    j["length"] = m.length;
    j["channel_names"] = m.channel_names;
    json counts = json::object();
    for (auto& [label, n] : m.class_counts) counts[std::to_string(label)] = n;
    j["class_counts"] = counts;
    j["dropped_missing"] = m.dropped_missing;
    j["dropped_short"] = m.dropped_short;
    j["interpolated_cells"] = m.interpolated_cells;
    j["seed"] = m.seed;
    j["notes"] = m.notes;
    json anns = json::array();
    for (auto& s : samples) {
        json a;
        a["source_id"] = s.source_id;
        if (!s.truth.empty()) {
            a["fault_channels"] = s.truth.channels;
            a["window_begin"] = s.truth.window_begin;
            a["window_end"] = s.truth.window_end;
        }
        anns.push_back(a);
    }
    j["samples"] = anns;
    return j;
}

void manifest_from_json(const json& j, DatasetManifest& m, std::vector<TimeSeriesSample>& samples) {
    m.sample_count = j.at("sample_count").get<int64_t>();
    m.channels = j.at("channels").get<int>();
    m.length = j.at("length").get<int>();
    m.channel_names = j.at("channel_names").get<std::vector<std::string>>();
    for (auto& [key, val] : j.at("class_counts").items())
        m.class_counts[std::stoi(key)] = val.get<int64_t>();
    m.dropped_missing = j.at("dropped_missing").get<int64_t>();
    m.dropped_short = j.at("dropped_short").get<int64_t>();
    m.interpolated_cells = j.at("interpolated_cells").get<int64_t>();
    m.seed = j.at("seed").get<uint64_t>();
    m.notes = j.at("notes").get<std::vector<std::string>>();
    const json& anns = j.at("samples");
    for (size_t i = 0; i < samples.size() && i < anns.size(); ++i) {
        const json& a = anns[i];
        samples[i].source_id = a.value("source_id", "");
        if (a.contains("fault_channels")) {
            samples[i].truth.channels = a.at("fault_channels").get<std::vector<int>>();
            samples[i].truth.window_begin = a.at("window_begin").get<double>();
            samples[i].truth.window_end = a.at("window_end").get<double>();
        }
    }
}

}  // namespace

void save_dataset(const std::string& dir, const std::vector<TimeSeriesSample>& samples,
                  const DatasetManifest& manifest) {
    if (samples.empty()) throw std::invalid_argument("save_dataset: empty sample set");
    std::filesystem::create_directories(dir);
    const int C = samples.front().channels;
    const int T = samples.front().length;
    for (auto& s : samples)
        if (s.channels != C || s.length != T)
            throw std::invalid_argument("save_dataset: inconsistent sample shapes");

    {
        std::ofstream out(dir + "/data.f32", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + dir + "/data.f32");
        for (auto& s : samples)
            out.write(reinterpret_cast<const char*>(s.grid.data()),
                      static_cast<std::streamsize>(s.grid.size() * sizeof(float)));
    }
    {
        std::ofstream out(dir + "/labels.i32", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + dir + "/labels.i32");
        for (auto& s : samples) {
            const int32_t label = s.label;
            out.write(reinterpret_cast<const char*>(&label), sizeof(int32_t));
        }
    }
    {
        std::ofstream out(dir + "/manifest.json");
        if (!out) throw std::runtime_error("cannot write " + dir + "/manifest.json");
        out << manifest_to_json(manifest, samples).dump(2) << "\n";
    }
}

std::pair<std::vector<TimeSeriesSample>, DatasetManifest> load_dataset(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw std::runtime_error("cannot open " + dir + "/manifest.json");
    json j = json::parse(mf);

    const int64_t N = j.at("sample_count").get<int64_t>();
    const int C = j.at("channels").get<int>();
    const int T = j.at("length").get<int>();

    std::vector<TimeSeriesSample> samples(static_cast<size_t>(N));
    {
        std::ifstream in(dir + "/data.f32", std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + dir + "/data.f32");
        for (auto& s : samples) {
            s.channels = C;
            s.length = T;
            s.grid.resize(static_cast<size_t>(C) * T);
            in.read(reinterpret_cast<char*>(s.grid.data()),
                    static_cast<std::streamsize>(s.grid.size() * sizeof(float)));
            if (!in) throw std::runtime_error("truncated data block in " + dir);
        }
    }
    {
        std::ifstream in(dir + "/labels.i32", std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + dir + "/labels.i32");
        for (auto& s : samples) {
            int32_t label = 0;
            in.read(reinterpret_cast<char*>(&label), sizeof(int32_t));
            if (!in) throw std::runtime_error("truncated label block in " + dir);
            s.label = label;
        }
    }
    DatasetManifest manifest;
    manifest_from_json(j, manifest, samples);
    return {std::move(samples), std::move(manifest)};
}

}  // namespace liteinc
