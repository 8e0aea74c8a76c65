#pragma once

#include <memory>
#include <string>

#include "sparsevid/backbone.hpp"
#include "sparsevid/sparse_encoder.hpp"

namespace sparsevid {

// Named-parameter container with a shape manifest. Loading reconstructs the
// network from the stored architecture configuration and verifies every
// parameter name and shape against the manifest.

void save_backbone(const std::string& path, const Backbone& net);
std::unique_ptr<Backbone> load_backbone(const std::string& path);

void save_encoder(const std::string& path, const SparseEncoder& net);
std::unique_ptr<SparseEncoder> load_encoder(const std::string& path);

// SHA-256 hex digest of the canonical parameter serialization
// (names, shapes, raw values). Used to prove backbone immutability.
std::string params_digest(const ParamStore& params);

std::string file_digest(const std::string& path);

std::string sha256_hex(const void* data, size_t len);

}  // namespace sparsevid
