#pragma once

// Text persistence for models.
//
//   memvi-model 1
//   decoder
//   layers=<L> dims=<d0,...,dL> activations=<a0,...,a(L-1)>
//   <weight of layer 0, row-major, one line>
//   <bias of layer 0>
//   ...                                   (layers 1 .. L-1)
//   encoder
//   layers=<K> dims=<e0,...,eK> activations=<...>
//   <weight/bias lines per layer, in application order>
//   precision_raw= <d values>             (optional)
//
// Decoder dims run from the observation (d0) to the latent (dL); layer l maps
// d(l+1) -> d(l). Encoder dims run in application order from the observation to
// 2 * latent. Every value is printed with 17 significant digits so a
// save/load cycle is exact.

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "memvi/generative.hpp"

namespace memvi {

struct ModelFile {
    std::optional<VaeModel> vae;
    std::optional<Vector> precision_raw;
};

void save_model(std::ostream& out, const ModelFile& model);
ModelFile load_model(std::istream& in);
void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace memvi
