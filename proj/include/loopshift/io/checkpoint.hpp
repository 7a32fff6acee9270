#pragma once

#include "loopshift/io/tensor_dump.hpp"
#include "loopshift/toy_training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace loopshift::io {

// Checkpoint layout: "arch" (f64 header of architecture integers), "step",
// "adam_step", one f32 record per weight, then the Adam moments under
// "adam_m." / "adam_v." prefixes.
inline TensorDump checkpoint_dump(const TrainState& state) {
    const ToyArchitecture& a = state.params.arch;
    TensorDump dump;
    dump.add({"arch", {8},
              std::vector<double>{static_cast<double>(a.layers), static_cast<double>(a.width),
                                  static_cast<double>(a.heads), static_cast<double>(a.head_dim),
                                  static_cast<double>(a.latent_dim), static_cast<double>(a.classes),
                                  static_cast<double>(a.max_context), static_cast<double>(a.mlp_hidden)}});
    dump.add({"step", {1}, std::vector<double>{static_cast<double>(state.step)}});
    dump.add({"adam_step", {1}, std::vector<double>{static_cast<double>(state.adam.step)}});
    auto add_tensors = [&](const ToyTransformerParams<float>& params, const std::string& prefix) {
        for (const auto& [name, tensor] : params.tensors()) {
            dump.add({prefix + name,
                      {static_cast<std::uint32_t>(tensor->rows()), static_cast<std::uint32_t>(tensor->cols())},
                      std::vector<float>(tensor->data(), tensor->data() + tensor->size())});
        }
    };
    add_tensors(state.params, "");
    add_tensors(state.adam.first, "adam_m.");
    add_tensors(state.adam.second, "adam_v.");
    return dump;
}

inline TrainState checkpoint_state(const TensorDump& dump) {
    const std::vector<double> header = dump.at("arch").as_doubles();
    if (header.size() != 8) {
        throw FormatError("checkpoint: architecture header must have 8 entries");
    }
    for (double v : header) {
        if (!(v >= 1.0 && v <= 1e6) || v != std::floor(v)) {
            throw FormatError("checkpoint: architecture header holds a non-integer or out-of-range value");
        }
    }
    ToyArchitecture arch;
    arch.layers = static_cast<int>(header[0]);
    arch.width = static_cast<int>(header[1]);
    arch.heads = static_cast<int>(header[2]);
    arch.head_dim = static_cast<int>(header[3]);
    arch.latent_dim = static_cast<int>(header[4]);
    arch.classes = static_cast<int>(header[5]);
    arch.max_context = static_cast<int>(header[6]);
    arch.mlp_hidden = static_cast<int>(header[7]);
    try {
        arch.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: invalid architecture header: ") + e.what());
    }
    TrainState state{ToyTransformerParams<float>::zeros(arch), AdamState<float>::zeros(arch), 0};
    state.step = static_cast<long>(dump.at("step").as_doubles().at(0));
    state.adam.step = static_cast<long>(dump.at("adam_step").as_doubles().at(0));
    auto load_tensors = [&](ToyTransformerParams<float>& params, const std::string& prefix) {
        for (auto& [name, tensor] : params.tensors()) {
            const TensorRecord& r = dump.at(prefix + name);
            if (r.dtype() != DType::f32 || r.dims.size() != 2 || static_cast<long>(r.dims[0]) != tensor->rows() ||
                static_cast<long>(r.dims[1]) != tensor->cols()) {
                throw FormatError("checkpoint: tensor '" + prefix + name + "' has the wrong shape or dtype");
            }
            const auto& values = std::get<std::vector<float>>(r.values);
            std::copy(values.begin(), values.end(), tensor->data());
        }
    };
    load_tensors(state.params, "");
    load_tensors(state.adam.first, "adam_m.");
    load_tensors(state.adam.second, "adam_v.");
    return state;
}

inline void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
    write_dump(path, checkpoint_dump(state));
}

inline TrainState load_checkpoint(const std::filesystem::path& path) { return checkpoint_state(read_dump(path)); }

} // namespace loopshift::io
