#pragma once

#include <stdexcept>
#include <string>

#include "json.hpp"
#include "nccr/model.hpp"

namespace nccr {

enum class ModelIoErrorKind { Io, BadMagic, VersionMismatch, Truncated, BadHeader };

class ModelIoError : public std::runtime_error {
 public:
  ModelIoError(ModelIoErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ModelIoErrorKind kind() const { return kind_; }

 private:
  ModelIoErrorKind kind_;
};

// File layout: "NCCRMDL" + version byte '1', little-endian uint32 header
// length, UTF-8 JSON header (layers, input shape, range, tag, seed), then
// float32 little-endian parameters in layer order, weights before biases.
void save_model(const Model& m, const std::string& path);

// Round-trips save_model bit-exactly. Malformed files raise ModelIoError
// with a kind telling bad magic, wrong version, truncation and header
// problems apart.
Model load_model(const std::string& path);

nlohmann::json layer_to_json(const LayerSpec& layer);
LayerSpec layer_from_json(const nlohmann::json& j);
nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

}  // namespace nccr
