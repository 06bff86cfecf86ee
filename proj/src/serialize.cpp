#include "nccr/serialize.hpp"

#include <cstring>

#include "bytes.hpp"
#include "nccr/version.hpp"

namespace nccr {

using nlohmann::json;

nlohmann::json layer_to_json(const LayerSpec& layer) {
  json j;
  j["kind"] = layer_kind_name(layer);
  if (const auto* d = std::get_if<DenseSpec>(&layer)) {
    j["in"] = d->in;
    j["out"] = d->out;
  } else if (const auto* c = std::get_if<Conv2DSpec>(&layer)) {
    j["in_ch"] = c->in_ch;
    j["out_ch"] = c->out_ch;
    j["kernel"] = c->kernel;
    j["stride"] = c->stride;
  } else if (const auto* p = std::get_if<MaxPool2DSpec>(&layer)) {
    j["kernel"] = p->kernel;
    j["stride"] = p->stride;
  }
  return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "dense") return DenseSpec{j.at("in").get<int>(), j.at("out").get<int>()};
  if (kind == "conv2d") {
    return Conv2DSpec{j.at("in_ch").get<int>(), j.at("out_ch").get<int>(),
                      j.at("kernel").get<int>(), j.at("stride").get<int>()};
  }
  if (kind == "maxpool2d") return MaxPool2DSpec{j.at("kernel").get<int>(), j.at("stride").get<int>()};
  if (kind == "relu") return ReluSpec{};
  if (kind == "flatten") return FlattenSpec{};
  throw std::invalid_argument("unknown layer kind '" + kind + "'");
}

nlohmann::json model_spec_to_json(const ModelSpec& spec) {
  json j;
  j["layers"] = json::array();
  for (const auto& layer : spec.layers) j["layers"].push_back(layer_to_json(layer));
  j["input_shape"] = spec.input_shape;
  j["range"] = {spec.range_lo, spec.range_hi};
  return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  for (const auto& lj : j.at("layers")) spec.layers.push_back(layer_from_json(lj));
  spec.input_shape = j.at("input_shape").get<std::vector<int>>();
  spec.range_lo = j.at("range").at(0).get<float>();
  spec.range_hi = j.at("range").at(1).get<float>();
  return spec;
}

namespace {

constexpr char kMagic[7] = {'N', 'C', 'C', 'R', 'M', 'D', 'L'};
constexpr unsigned char kVersion = '1';

}  // namespace

void save_model(const Model& m, const std::string& path) {
  const auto shapes = m.spec.layer_output_shapes();  // validates the spec
  (void)shapes;

  json header = model_spec_to_json(m.spec);
  header["tag"] = m.tag;
  header["init_seed"] = m.init_seed;
  header["tool_version"] = kToolVersion;
  const std::string header_text = header.dump();

  std::vector<unsigned char> out;
  out.insert(out.end(), kMagic, kMagic + sizeof(kMagic));
  out.push_back(kVersion);
  bytes::put_le32(out, static_cast<uint32_t>(header_text.size()));
  out.insert(out.end(), header_text.begin(), header_text.end());
  for (size_t li = 0; li < m.spec.layers.size(); ++li) {
    for (float v : m.weights[li].data) bytes::put_le_f32(out, v);
    for (float v : m.biases[li].data) bytes::put_le_f32(out, v);
  }
  if (!bytes::write_file(path, out)) {
    throw ModelIoError(ModelIoErrorKind::Io, "cannot write " + path);
  }
}

Model load_model(const std::string& path) {
  const auto raw_opt = bytes::read_file(path);
  if (!raw_opt) throw ModelIoError(ModelIoErrorKind::Io, "cannot read " + path);
  const auto& raw = *raw_opt;

  if (raw.size() < sizeof(kMagic)) {
    throw ModelIoError(ModelIoErrorKind::Truncated, path + ": shorter than the magic");
  }
  if (std::memcmp(raw.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ModelIoError(ModelIoErrorKind::BadMagic, path + ": not a model file");
  }
  if (raw.size() < sizeof(kMagic) + 1) {
    throw ModelIoError(ModelIoErrorKind::Truncated, path + ": missing version byte");
  }
  const unsigned char version = raw[sizeof(kMagic)];
  if (version != kVersion) {
    throw ModelIoError(ModelIoErrorKind::VersionMismatch,
                       path + ": format version '" + std::string(1, static_cast<char>(version)) +
                           "', expected '1'");
  }

  size_t pos = sizeof(kMagic) + 1;
  if (raw.size() < pos + 4) {
    throw ModelIoError(ModelIoErrorKind::Truncated, path + ": missing header length");
  }
  const uint32_t header_len = bytes::le32(raw.data() + pos);
  pos += 4;
  if (raw.size() < pos + header_len) {
    throw ModelIoError(ModelIoErrorKind::Truncated, path + ": header cut short");
  }

  Model m;
  try {
    const json header = json::parse(raw.begin() + static_cast<ptrdiff_t>(pos),
                                    raw.begin() + static_cast<ptrdiff_t>(pos + header_len));
    m.spec = model_spec_from_json(header);
    m.tag = header.at("tag").get<std::string>();
    m.init_seed = header.at("init_seed").get<uint64_t>();
  } catch (const json::exception& e) {
    throw ModelIoError(ModelIoErrorKind::BadHeader, path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ModelIoError(ModelIoErrorKind::BadHeader, path + ": " + e.what());
  }
  pos += header_len;

  try {
    m.spec.layer_output_shapes();
  } catch (const std::invalid_argument& e) {
    throw ModelIoError(ModelIoErrorKind::BadHeader, path + ": " + e.what());
  }

  m.weights.resize(m.spec.layers.size());
  m.biases.resize(m.spec.layers.size());
  for (size_t li = 0; li < m.spec.layers.size(); ++li) {
    std::vector<int> wshape, bshape;
    if (const auto* d = std::get_if<DenseSpec>(&m.spec.layers[li])) {
      wshape = {d->out, d->in};
      bshape = {d->out};
    } else if (const auto* c = std::get_if<Conv2DSpec>(&m.spec.layers[li])) {
      wshape = {c->out_ch, c->in_ch, c->kernel, c->kernel};
      bshape = {c->out_ch};
    } else {
      continue;
    }
    Tensor w(wshape), b(bshape);
    const size_t need = (w.data.size() + b.data.size()) * 4;
    if (raw.size() < pos + need) {
      throw ModelIoError(ModelIoErrorKind::Truncated,
                         path + ": parameter payload cut short at layer " + std::to_string(li));
    }
    for (auto& v : w.data) {
      v = bytes::le_f32(raw.data() + pos);
      pos += 4;
    }
    for (auto& v : b.data) {
      v = bytes::le_f32(raw.data() + pos);
      pos += 4;
    }
    m.weights[li] = std::move(w);
    m.biases[li] = std::move(b);
  }
  if (pos != raw.size()) {
    throw ModelIoError(ModelIoErrorKind::Truncated,
                       path + ": " + std::to_string(raw.size() - pos) + " trailing bytes");
  }
  return m;
}

}  // namespace nccr
