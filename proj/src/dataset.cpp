#include "nccr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bytes.hpp"
#include "digits_impl.hpp"
#include "nccr/rng.hpp"

namespace nccr {

void Dataset::validate() const {
  if (inputs.size() != labels.size()) {
    throw std::invalid_argument("dataset '" + name + "': " + std::to_string(inputs.size()) +
                                " inputs vs " + std::to_string(labels.size()) + " labels");
  }
  if (class_count <= 0) throw std::invalid_argument("dataset '" + name + "': no classes");
  if (!(range_lo < range_hi)) throw std::invalid_argument("dataset '" + name + "': empty range");
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= class_count) {
      throw std::invalid_argument("dataset '" + name + "': item " + std::to_string(i) +
                                  " has label " + std::to_string(labels[i]) + ", classes " +
                                  std::to_string(class_count));
    }
    for (float v : inputs[i].data) {
      if (!(v >= range_lo && v <= range_hi)) {
        throw std::invalid_argument("dataset '" + name + "': item " + std::to_string(i) +
                                    " has value " + std::to_string(v) + " outside [" +
                                    std::to_string(range_lo) + ", " + std::to_string(range_hi) +
                                    "]");
      }
    }
  }
}

Dataset Dataset::subset(const std::vector<size_t>& indices) const {
  Dataset out;
  out.class_count = class_count;
  out.name = name;
  out.range_lo = range_lo;
  out.range_hi = range_hi;
  out.inputs.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (size_t i : indices) {
    out.inputs.push_back(inputs.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

namespace {

constexpr uint32_t kMagicUbyteImages = 0x00000803;
constexpr uint32_t kMagicFloatImages = 0x00000D03;
constexpr uint32_t kMagicLabels = 0x00000801;

std::string hex32(uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

struct IdxImages {
  std::vector<Tensor> images;
};

IdxImages parse_idx_images(const std::vector<unsigned char>& raw, const std::string& path) {
  if (raw.size() < 4) throw IdxError(IdxErrorKind::Truncated, path + ": no magic");
  const uint32_t magic = bytes::be32(raw.data());
  if (magic != kMagicUbyteImages && magic != kMagicFloatImages) {
    throw IdxError(IdxErrorKind::BadMagic, path + ": image magic " + hex32(magic));
  }
  if (raw.size() < 16) throw IdxError(IdxErrorKind::Truncated, path + ": header cut short");
  const uint32_t count = bytes::be32(raw.data() + 4);
  const uint32_t rows = bytes::be32(raw.data() + 8);
  const uint32_t cols = bytes::be32(raw.data() + 12);
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) {
    throw IdxError(IdxErrorKind::BadValue, path + ": implausible image size " +
                                               std::to_string(rows) + "x" + std::to_string(cols));
  }
  const size_t pixel_bytes = magic == kMagicUbyteImages ? 1 : 4;
  const size_t need = 16 + static_cast<size_t>(count) * rows * cols * pixel_bytes;
  if (raw.size() < need) {
    throw IdxError(IdxErrorKind::Truncated, path + ": expected " + std::to_string(need) +
                                                " bytes, have " + std::to_string(raw.size()));
  }

  IdxImages out;
  out.images.reserve(count);
  const unsigned char* p = raw.data() + 16;
  for (uint32_t i = 0; i < count; ++i) {
    Tensor t({1, static_cast<int>(rows), static_cast<int>(cols)});
    for (size_t j = 0; j < rows * static_cast<size_t>(cols); ++j) {
      float v;
      if (magic == kMagicUbyteImages) {
        v = static_cast<float>(*p++) / 255.0f;
      } else {
        v = bytes::be_f32(p);
        p += 4;
        if (!(v >= 0.0f && v <= 1.0f)) {
          throw IdxError(IdxErrorKind::BadValue, path + ": image " + std::to_string(i) +
                                                     " pixel outside [0,1]: " + std::to_string(v));
        }
      }
      t[static_cast<int64_t>(j)] = v;
    }
    out.images.push_back(std::move(t));
  }
  return out;
}

std::vector<int> parse_idx_labels(const std::vector<unsigned char>& raw, const std::string& path) {
  if (raw.size() < 4) throw IdxError(IdxErrorKind::Truncated, path + ": no magic");
  const uint32_t magic = bytes::be32(raw.data());
  if (magic != kMagicLabels) {
    throw IdxError(IdxErrorKind::BadMagic, path + ": label magic " + hex32(magic));
  }
  if (raw.size() < 8) throw IdxError(IdxErrorKind::Truncated, path + ": header cut short");
  const uint32_t count = bytes::be32(raw.data() + 4);
  if (raw.size() < 8 + static_cast<size_t>(count)) {
    throw IdxError(IdxErrorKind::Truncated,
                   path + ": " + std::to_string(count) + " labels declared, payload short");
  }
  std::vector<int> labels(count);
  for (uint32_t i = 0; i < count; ++i) labels[i] = raw[8 + i];
  return labels;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img_raw = bytes::read_file(images_path);
  if (!img_raw) throw IdxError(IdxErrorKind::Io, "cannot read " + images_path);
  const auto lbl_raw = bytes::read_file(labels_path);
  if (!lbl_raw) throw IdxError(IdxErrorKind::Io, "cannot read " + labels_path);

  IdxImages images = parse_idx_images(*img_raw, images_path);
  std::vector<int> labels = parse_idx_labels(*lbl_raw, labels_path);
  if (images.images.size() != labels.size()) {
    throw IdxError(IdxErrorKind::CountMismatch,
                   images_path + " has " + std::to_string(images.images.size()) + " images, " +
                       labels_path + " has " + std::to_string(labels.size()) + " labels");
  }

  Dataset ds;
  ds.inputs = std::move(images.images);
  ds.labels = std::move(labels);
  int max_label = 0;
  for (int l : ds.labels) max_label = std::max(max_label, l);
  ds.class_count = max_label + 1;
  ds.name = images_path;
  return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path,
              IdxPixelFormat format) {
  ds.validate();
  if (ds.inputs.empty()) throw std::invalid_argument("save_idx: empty dataset");
  const auto& shape = ds.inputs.front().shape;
  if (shape.size() != 3 || shape[0] != 1) {
    throw std::invalid_argument("save_idx: items must be [1,rows,cols], got " + shape_str(shape));
  }
  for (const auto& t : ds.inputs) {
    if (t.shape != shape) {
      throw std::invalid_argument("save_idx: mixed item shapes " + shape_str(shape) + " vs " +
                                  shape_str(t.shape));
    }
  }
  std::vector<unsigned char> img;
  img.reserve(16 + ds.size() * ds.inputs.front().data.size() *
                       (format == IdxPixelFormat::Ubyte ? 1 : 4));
  bytes::put_be32(img, format == IdxPixelFormat::Ubyte ? kMagicUbyteImages : kMagicFloatImages);
  bytes::put_be32(img, static_cast<uint32_t>(ds.size()));
  bytes::put_be32(img, static_cast<uint32_t>(shape[1]));
  bytes::put_be32(img, static_cast<uint32_t>(shape[2]));
  for (const auto& t : ds.inputs) {
    for (float v : t.data) {
      if (format == IdxPixelFormat::Ubyte) {
        img.push_back(static_cast<unsigned char>(std::lround(v * 255.0f)));
      } else {
        bytes::put_be_f32(img, v);
      }
    }
  }
  if (!bytes::write_file(images_path, img)) {
    throw IdxError(IdxErrorKind::Io, "cannot write " + images_path);
  }

  std::vector<unsigned char> lbl;
  lbl.reserve(8 + ds.size());
  bytes::put_be32(lbl, kMagicLabels);
  bytes::put_be32(lbl, static_cast<uint32_t>(ds.size()));
  for (int l : ds.labels) {
    if (l > 255) throw std::invalid_argument("save_idx: label " + std::to_string(l) + " > 255");
    lbl.push_back(static_cast<unsigned char>(l));
  }
  if (!bytes::write_file(labels_path, lbl)) {
    throw IdxError(IdxErrorKind::Io, "cannot write " + labels_path);
  }
}

namespace {

Dataset make_blobs(int size, uint64_t seed, const SyntheticOptions& opt) {
  const int classes = opt.classes > 0 ? opt.classes : 2;
  if (classes > opt.dim) {
    throw std::invalid_argument("blobs: need classes <= dim, got " + std::to_string(classes) +
                                " > " + std::to_string(opt.dim));
  }
  const double bound = 4.0 * opt.spread;
  Dataset ds;
  ds.class_count = classes;
  ds.name = "blobs";
  ds.range_lo = static_cast<float>(-bound);
  ds.range_hi = static_cast<float>(opt.separation + bound);
  for (int i = 0; i < size; ++i) {
    const int label = i % classes;
    Rng rng(derive_seed(seed, "data", static_cast<uint64_t>(i)));
    Tensor x({opt.dim});
    for (int d = 0; d < opt.dim; ++d) {
      const double center = d == label ? opt.separation : 0.0;
      x[d] = static_cast<float>(center + rng.truncated_normal(opt.spread, bound));
    }
    ds.inputs.push_back(std::move(x));
    ds.labels.push_back(label);
  }
  return ds;
}

Dataset make_separable2d(int size, uint64_t seed) {
  Dataset ds;
  ds.class_count = 2;
  ds.name = "separable2d";
  for (int i = 0; i < size; ++i) {
    const int label = i % 2;
    Rng rng(derive_seed(seed, "data", static_cast<uint64_t>(i)));
    Tensor x({2});
    // vertical separator at x0 = 0.5 with a 0.1 margin on each side
    x[0] = static_cast<float>(label == 0 ? rng.uniform(0.0, 0.4) : rng.uniform(0.6, 1.0));
    x[1] = static_cast<float>(rng.uniform(0.0, 1.0));
    ds.inputs.push_back(std::move(x));
    ds.labels.push_back(label);
  }
  return ds;
}

Dataset make_mini_digits(int size, uint64_t seed) {
  Dataset ds;
  ds.class_count = 10;
  ds.name = "mini-digits";
  for (int i = 0; i < size; ++i) {
    const int label = i % 10;
    ds.inputs.push_back(render_mini_digit(label, derive_seed(seed, "data", static_cast<uint64_t>(i))));
    ds.labels.push_back(label);
  }
  return ds;
}

}  // namespace

Dataset synthetic_dataset(SyntheticKind kind, int size, uint64_t seed,
                          const SyntheticOptions& opt) {
  if (size < 1) throw std::invalid_argument("synthetic_dataset: size must be >= 1");
  switch (kind) {
    case SyntheticKind::Blobs:
      return make_blobs(size, seed, opt);
    case SyntheticKind::Separable2D:
      return make_separable2d(size, seed);
    default:
      return make_mini_digits(size, seed);
  }
}

Dataset digits28_dataset(int size, uint64_t seed, const std::string& name) {
  if (size < 1) throw std::invalid_argument("digits28_dataset: size must be >= 1");
  Dataset ds;
  ds.class_count = 10;
  ds.name = name;
  for (int i = 0; i < size; ++i) {
    const int label = i % 10;
    ds.inputs.push_back(render_digit28(label, derive_seed(seed, "data", static_cast<uint64_t>(i))));
    ds.labels.push_back(label);
  }
  return ds;
}

}  // namespace nccr
