#pragma once

// Binary checkpoint format:
//   magic "LITN" | u32 version | u64 header length | header JSON | f32 blobs
// The header carries the model spec, the tensor manifest (name, shape, byte
// offset into the blob region, param/state kind), training provenance and the
// build seed. Parameter payloads are raw little-endian 32-bit floats;
// save -> load -> save is byte-identical and a loaded model reproduces the
// saved model's outputs bit-exactly in 32-bit mode.

#include <liteinc/nn.hpp>

#include <map>
#include <memory>
#include <string>

namespace liteinc {

struct CheckpointMeta {
    ModelSpec spec;
    uint64_t seed = 0;
    std::map<std::string, std::string> provenance;
};

void save_checkpoint(const std::string& path, Model<float>& model, uint64_t seed,
                     const std::map<std::string, std::string>& provenance = {});

std::pair<std::unique_ptr<Model<float>>, CheckpointMeta> load_checkpoint(const std::string& path);

// Precision bridges. Parameter payloads are 32-bit on disk regardless of the
// in-memory precision; a double model is narrowed on save and widened on load.
template <typename T>
void save_checkpoint_as(const std::string& path, Model<T>& model, uint64_t seed,
                        const std::map<std::string, std::string>& provenance = {}) {
    if constexpr (std::is_same_v<T, float>) {
        save_checkpoint(path, model, seed, provenance);
    } else {
        auto twin = build_model<float>(model.spec(), seed);
        auto src_params = model.named_params();
        auto dst_params = twin->named_params();
        for (size_t i = 0; i < src_params.size(); ++i)
            for (int64_t j = 0; j < src_params[i].tensor.numel(); ++j)
                dst_params[i].tensor.data()[j] = static_cast<float>(src_params[i].tensor.data()[j]);
        auto src_state = model.named_state();
        auto dst_state = twin->named_state();
        for (size_t i = 0; i < src_state.size(); ++i) {
            dst_state[i].data->resize(src_state[i].data->size());
            for (size_t j = 0; j < src_state[i].data->size(); ++j)
                (*dst_state[i].data)[j] = static_cast<float>((*src_state[i].data)[j]);
        }
        save_checkpoint(path, *twin, seed, provenance);
    }
}

template <typename T>
std::pair<std::unique_ptr<Model<T>>, CheckpointMeta> load_checkpoint_as(const std::string& path) {
    if constexpr (std::is_same_v<T, float>) {
        return load_checkpoint(path);
    } else {
        auto [flt, meta] = load_checkpoint(path);
        auto model = build_model<T>(meta.spec, meta.seed);
        auto src_params = flt->named_params();
        auto dst_params = model->named_params();
        for (size_t i = 0; i < src_params.size(); ++i)
            for (int64_t j = 0; j < src_params[i].tensor.numel(); ++j)
                dst_params[i].tensor.data()[j] = static_cast<T>(src_params[i].tensor.data()[j]);
        auto src_state = flt->named_state();
        auto dst_state = model->named_state();
        for (size_t i = 0; i < src_state.size(); ++i) {
            dst_state[i].data->resize(src_state[i].data->size());
            for (size_t j = 0; j < src_state[i].data->size(); ++j)
                (*dst_state[i].data)[j] = static_cast<T>((*src_state[i].data)[j]);
        }
        return {std::move(model), std::move(meta)};
    }
}

}  // namespace liteinc
