#include "nccr/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "nccr/rng.hpp"

namespace nccr {

std::vector<std::vector<int>> ModelSpec::layer_output_shapes() const {
  if (layers.empty()) throw std::invalid_argument("model has no layers");
  if (!(range_lo < range_hi)) throw std::invalid_argument("model input range is empty");
  std::vector<std::vector<int>> shapes;
  shapes.reserve(layers.size());
  std::vector<int> cur = input_shape;
  shape_size(cur);  // validates
  for (size_t i = 0; i < layers.size(); ++i) {
    cur = infer_output_shape(layers[i], cur, static_cast<int>(i));
    shapes.push_back(cur);
  }
  if (shapes.back().size() != 1) {
    throw std::invalid_argument("final layer must produce a flat logits vector, got " +
                                shape_str(shapes.back()));
  }
  return shapes;
}

int ModelSpec::class_count() const { return layer_output_shapes().back()[0]; }

int64_t Model::parameter_count() const {
  int64_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

std::string Model::id() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    for (char c : layer_kind_name(spec.layers[i])) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    h = tensor_hash(weights[i], h);
    h = tensor_hash(biases[i], h);
  }
  std::ostringstream os;
  os << tag << "-" << std::hex << h;
  return os.str();
}

Model build_model(const ModelSpec& spec, uint64_t seed) {
  const auto shapes = spec.layer_output_shapes();
  Model m;
  m.spec = spec;
  m.init_seed = seed;
  m.weights.resize(spec.layers.size());
  m.biases.resize(spec.layers.size());
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    if (const auto* d = std::get_if<DenseSpec>(&spec.layers[i])) {
      Rng rng(derive_seed(seed, "init", i));
      const double limit = std::sqrt(6.0 / d->in);
      Tensor w({d->out, d->in});
      for (auto& v : w.data) v = static_cast<float>(rng.uniform(-limit, limit));
      m.weights[i] = std::move(w);
      m.biases[i] = Tensor({d->out}, 0.0f);
    } else if (const auto* c = std::get_if<Conv2DSpec>(&spec.layers[i])) {
      Rng rng(derive_seed(seed, "init", i));
      const double fan_in = static_cast<double>(c->in_ch) * c->kernel * c->kernel;
      const double limit = std::sqrt(6.0 / fan_in);
      Tensor w({c->out_ch, c->in_ch, c->kernel, c->kernel});
      for (auto& v : w.data) v = static_cast<float>(rng.uniform(-limit, limit));
      m.weights[i] = std::move(w);
      m.biases[i] = Tensor({c->out_ch}, 0.0f);
    }
  }
  return m;
}

namespace {

void dense_forward(const DenseSpec& d, const Tensor& w, const Tensor& b, const Tensor& in,
                   Tensor& out) {
  for (int o = 0; o < d.out; ++o) {
    double acc = b.data[o];
    const float* wrow = &w.data[static_cast<size_t>(o) * d.in];
    for (int i = 0; i < d.in; ++i) acc += static_cast<double>(wrow[i]) * in.data[i];
    out.data[o] = static_cast<float>(acc);
  }
}

void conv_forward(const Conv2DSpec& c, const Tensor& w, const Tensor& b, const Tensor& in,
                  Tensor& out) {
  const int h = in.shape[1], wd = in.shape[2];
  const int oh = out.shape[1], ow = out.shape[2];
  const int k = c.kernel, s = c.stride;
  for (int oc = 0; oc < c.out_ch; ++oc) {
    float* oplane = &out.data[static_cast<size_t>(oc) * oh * ow];
    const float bias = b.data[oc];
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias;
        for (int ic = 0; ic < c.in_ch; ++ic) {
          const float* iplane = &in.data[static_cast<size_t>(ic) * h * wd];
          const float* wbase = &w.data[((static_cast<size_t>(oc) * c.in_ch + ic) * k) * k];
          for (int ky = 0; ky < k; ++ky) {
            const float* irow = iplane + static_cast<size_t>(oy * s + ky) * wd + ox * s;
            const float* wrow = wbase + static_cast<size_t>(ky) * k;
            for (int kx = 0; kx < k; ++kx) acc += static_cast<double>(wrow[kx]) * irow[kx];
          }
        }
        oplane[static_cast<size_t>(oy) * ow + ox] = static_cast<float>(acc);
      }
    }
  }
}

void pool_forward(const MaxPool2DSpec& p, const Tensor& in, Tensor& out,
                  std::vector<int>& argmax) {
  const int ch = in.shape[0], h = in.shape[1], wd = in.shape[2];
  const int oh = out.shape[1], ow = out.shape[2];
  const int k = p.kernel, s = p.stride > 0 ? p.stride : p.kernel;
  argmax.assign(out.data.size(), 0);
  for (int c = 0; c < ch; ++c) {
    const float* iplane = &in.data[static_cast<size_t>(c) * h * wd];
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        int best_idx = 0;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const int iy = oy * s + ky, ix = ox * s + kx;
            const int idx = iy * wd + ix;
            if (iplane[idx] > best) {
              best = iplane[idx];
              best_idx = idx;
            }
          }
        }
        const size_t o = (static_cast<size_t>(c) * oh + oy) * ow + ox;
        out.data[o] = best;
        argmax[o] = c * h * wd + best_idx;
      }
    }
  }
}

}  // namespace

const Tensor& forward_ws(const Model& m, const Tensor& x, Workspace& ws) {
  if (x.shape != m.spec.input_shape) {
    throw std::invalid_argument("layer 0 (" + layer_kind_name(m.spec.layers.at(0)) +
                                "): model expects input " + shape_str(m.spec.input_shape) +
                                ", got " + shape_str(x.shape));
  }
  const size_t n = m.spec.layers.size();
  if (ws.outputs.size() != n || ws.bound != &m) {
    const auto shapes = m.spec.layer_output_shapes();
    ws.outputs.clear();
    ws.outputs.reserve(n);
    for (const auto& s : shapes) ws.outputs.emplace_back(s);
    ws.pool_argmax.assign(n, {});
    ws.bound = &m;
  }
  const Tensor* in = &x;
  for (size_t i = 0; i < n; ++i) {
    Tensor& out = ws.outputs[i];
    if (const auto* d = std::get_if<DenseSpec>(&m.spec.layers[i])) {
      dense_forward(*d, m.weights[i], m.biases[i], *in, out);
    } else if (const auto* c = std::get_if<Conv2DSpec>(&m.spec.layers[i])) {
      conv_forward(*c, m.weights[i], m.biases[i], *in, out);
    } else if (const auto* p = std::get_if<MaxPool2DSpec>(&m.spec.layers[i])) {
      pool_forward(*p, *in, out, ws.pool_argmax[i]);
    } else if (std::holds_alternative<ReluSpec>(m.spec.layers[i])) {
      for (size_t j = 0; j < in->data.size(); ++j) out.data[j] = std::max(0.0f, in->data[j]);
    } else {  // Flatten
      std::copy(in->data.begin(), in->data.end(), out.data.begin());
    }
    in = &out;
  }
  return ws.outputs.back();
}

ForwardOutput forward(const Model& m, const Tensor& x, std::optional<int> label) {
  Workspace ws;
  ForwardOutput out;
  out.logits = forward_ws(m, x, ws);
  check_finite(out.logits, "forward");
  if (label.has_value()) {
    out.loss = cross_entropy(out.logits, *label);
    out.has_loss = true;
  }
  return out;
}

std::vector<double> softmax(const Tensor& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  double mx = logits.data[0];
  for (float v : logits.data) mx = std::max(mx, static_cast<double>(v));
  std::vector<double> p(logits.data.size());
  double sum = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits.data[i]) - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

float cross_entropy(const Tensor& logits, int label) {
  if (label < 0 || label >= logits.size()) {
    throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(logits.size()) + " classes");
  }
  double mx = logits.data[0];
  for (float v : logits.data) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  for (float v : logits.data) sum += std::exp(static_cast<double>(v) - mx);
  const double loss = -(static_cast<double>(logits.data[label]) - mx - std::log(sum));
  return static_cast<float>(std::max(0.0, loss));
}

namespace {

// Shared reverse pass from a logits gradient. Parameter gradient tensors are
// accumulated into (callers zero or reuse them); the input gradient is
// written when requested.
void backprop(const Model& m, const Tensor& x, const Workspace& ws, std::vector<float> dlogits,
              GradientSet* grads, bool want_params, bool want_input) {
  const size_t n = m.spec.layers.size();
  std::vector<float> dout = std::move(dlogits);
  std::vector<float> din;
  for (size_t ri = n; ri-- > 0;) {
    const Tensor& in = ri == 0 ? x : ws.outputs[ri - 1];
    const bool need_din = ri > 0 || want_input;
    if (const auto* d = std::get_if<DenseSpec>(&m.spec.layers[ri])) {
      const Tensor& w = m.weights[ri];
      if (want_params) {
        Tensor& dw = grads->weight_grads[ri];
        Tensor& db = grads->bias_grads[ri];
        for (int o = 0; o < d->out; ++o) {
          const float g = dout[o];
          float* dwrow = &dw.data[static_cast<size_t>(o) * d->in];
          for (int i = 0; i < d->in; ++i) dwrow[i] += g * in.data[i];
          db.data[o] += g;
        }
      }
      if (need_din) {
        din.assign(in.data.size(), 0.0f);
        for (int i = 0; i < d->in; ++i) {
          double acc = 0.0;
          for (int o = 0; o < d->out; ++o) {
            acc += static_cast<double>(w.data[static_cast<size_t>(o) * d->in + i]) * dout[o];
          }
          din[i] = static_cast<float>(acc);
        }
      }
    } else if (const auto* c = std::get_if<Conv2DSpec>(&m.spec.layers[ri])) {
      const Tensor& w = m.weights[ri];
      const int h = in.shape[1], wd = in.shape[2];
      const auto& oshape = ws.outputs[ri].shape;
      const int oh = oshape[1], ow = oshape[2];
      const int k = c->kernel, s = c->stride;
      if (need_din) din.assign(in.data.size(), 0.0f);
      for (int oc = 0; oc < c->out_ch; ++oc) {
        const float* doplane = &dout[static_cast<size_t>(oc) * oh * ow];
        double dbias = 0.0;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            const float g = doplane[static_cast<size_t>(oy) * ow + ox];
            if (g == 0.0f) continue;
            dbias += g;
            for (int ic = 0; ic < c->in_ch; ++ic) {
              const float* iplane = &in.data[static_cast<size_t>(ic) * h * wd];
              const size_t wbase = ((static_cast<size_t>(oc) * c->in_ch + ic) * k) * k;
              for (int ky = 0; ky < k; ++ky) {
                const size_t irow = static_cast<size_t>(oy * s + ky) * wd + ox * s;
                for (int kx = 0; kx < k; ++kx) {
                  if (want_params) {
                    grads->weight_grads[ri].data[wbase + ky * k + kx] += g * iplane[irow + kx];
                  }
                  if (need_din) {
                    din[static_cast<size_t>(ic) * h * wd + irow + kx] +=
                        g * w.data[wbase + ky * k + kx];
                  }
                }
              }
            }
          }
        }
        if (want_params) {
          grads->bias_grads[ri].data[oc] += static_cast<float>(dbias);
        }
      }
    } else if (std::holds_alternative<MaxPool2DSpec>(m.spec.layers[ri])) {
      if (need_din) {
        din.assign(in.data.size(), 0.0f);
        const auto& amax = ws.pool_argmax[ri];
        for (size_t o = 0; o < dout.size(); ++o) din[amax[o]] += dout[o];
      }
    } else if (std::holds_alternative<ReluSpec>(m.spec.layers[ri])) {
      if (need_din) {
        din.resize(in.data.size());
        for (size_t j = 0; j < in.data.size(); ++j) {
          din[j] = in.data[j] > 0.0f ? dout[j] : 0.0f;
        }
      }
    } else {  // Flatten
      if (need_din) din = dout;
    }
    if (need_din) {
      dout = std::move(din);
      din.clear();
    } else {
      break;
    }
  }
  if (want_input) {
    grads->input_grad = Tensor(x.shape);
    std::copy(dout.begin(), dout.end(), grads->input_grad.data.begin());
  }
}

std::vector<float> loss_logit_grad(const Tensor& logits, int label) {
  const auto p = softmax(logits);
  std::vector<float> d(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    d[i] = static_cast<float>(p[i] - (static_cast<int>(i) == label ? 1.0 : 0.0));
  }
  return d;
}

GradientSet make_zero_grads(const Model& m) {
  GradientSet g;
  g.weight_grads.reserve(m.weights.size());
  g.bias_grads.reserve(m.biases.size());
  for (const auto& w : m.weights) {
    g.weight_grads.emplace_back(w.empty() ? Tensor{} : Tensor(w.shape));
  }
  for (const auto& b : m.biases) {
    g.bias_grads.emplace_back(b.empty() ? Tensor{} : Tensor(b.shape));
  }
  return g;
}

}  // namespace

GradientSet backward_ws(const Model& m, const Tensor& x, int label, const Workspace& ws) {
  const Tensor& logits = ws.outputs.back();
  GradientSet grads = make_zero_grads(m);
  backprop(m, x, ws, loss_logit_grad(logits, label), &grads, /*want_params=*/true,
           /*want_input=*/true);
  return grads;
}

GradientSet backward(const Model& m, const Tensor& x, int label) {
  Workspace ws;
  forward_ws(m, x, ws);
  return backward_ws(m, x, label, ws);
}

Tensor input_gradient_of_logit(const Model& m, const Tensor& x, int logit_index) {
  Workspace ws;
  const Tensor& logits = forward_ws(m, x, ws);
  if (logit_index < 0 || logit_index >= logits.size()) {
    throw std::invalid_argument("logit index out of range");
  }
  std::vector<float> d(logits.data.size(), 0.0f);
  d[logit_index] = 1.0f;
  GradientSet grads;
  backprop(m, x, ws, std::move(d), &grads, /*want_params=*/false, /*want_input=*/true);
  return std::move(grads.input_grad);
}

std::vector<Tensor> input_jacobian(const Model& m, const Tensor& x) {
  Workspace ws;
  const Tensor& logits = forward_ws(m, x, ws);
  std::vector<Tensor> rows;
  rows.reserve(logits.data.size());
  for (int c = 0; c < logits.size(); ++c) {
    std::vector<float> d(logits.data.size(), 0.0f);
    d[c] = 1.0f;
    GradientSet grads;
    backprop(m, x, ws, std::move(d), &grads, /*want_params=*/false, /*want_input=*/true);
    rows.push_back(std::move(grads.input_grad));
  }
  return rows;
}

int argmax_class(const Tensor& logits) {
  int best = 0;
  for (int i = 1; i < logits.size(); ++i) {
    if (logits.data[i] > logits.data[best]) best = i;
  }
  return best;
}

}  // namespace nccr
