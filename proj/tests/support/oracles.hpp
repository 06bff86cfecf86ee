#pragma once

// Reference implementations used to cross-check the library. Everything here
// is written straight from the definitions, naive loops in double precision,
// independent of the code under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <variant>
#include <vector>

#include "nccr/model.hpp"

namespace oracles {

struct KinkMargin {
  double relu = std::numeric_limits<double>::infinity();   // min |value feeding a relu|
  double pool = std::numeric_limits<double>::infinity();   // min gap between top two in a window
};

inline std::vector<double> forward_logits(const nccr::Model& m, const std::vector<double>& x,
                                          KinkMargin* margin = nullptr,
                                          std::vector<std::vector<double>>* layer_outputs = nullptr) {
  std::vector<double> cur = x;
  std::vector<int> shape = m.spec.input_shape;
  for (size_t li = 0; li < m.spec.layers.size(); ++li) {
    const auto& layer = m.spec.layers[li];
    if (const auto* d = std::get_if<nccr::DenseSpec>(&layer)) {
      std::vector<double> next(d->out);
      for (int o = 0; o < d->out; ++o) {
        double s = m.biases[li].data[o];
        for (int i = 0; i < d->in; ++i) {
          s += static_cast<double>(m.weights[li].data[o * d->in + i]) * cur[i];
        }
        next[o] = s;
      }
      cur = next;
      shape = {d->out};
    } else if (const auto* c = std::get_if<nccr::Conv2DSpec>(&layer)) {
      const int h = shape[1], w = shape[2];
      const int oh = (h - c->kernel) / c->stride + 1;
      const int ow = (w - c->kernel) / c->stride + 1;
      std::vector<double> next(static_cast<size_t>(c->out_ch) * oh * ow);
      for (int oc = 0; oc < c->out_ch; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            double s = m.biases[li].data[oc];
            for (int ic = 0; ic < c->in_ch; ++ic) {
              for (int ky = 0; ky < c->kernel; ++ky) {
                for (int kx = 0; kx < c->kernel; ++kx) {
                  const int iy = oy * c->stride + ky;
                  const int ix = ox * c->stride + kx;
                  const double wv =
                      m.weights[li].data[((oc * c->in_ch + ic) * c->kernel + ky) * c->kernel + kx];
                  s += wv * cur[(static_cast<size_t>(ic) * h + iy) * w + ix];
                }
              }
            }
            next[(static_cast<size_t>(oc) * oh + oy) * ow + ox] = s;
          }
        }
      }
      cur = next;
      shape = {c->out_ch, oh, ow};
    } else if (const auto* p = std::get_if<nccr::MaxPool2DSpec>(&layer)) {
      const int ch = shape[0], h = shape[1], w = shape[2];
      const int s = p->stride > 0 ? p->stride : p->kernel;
      const int oh = (h - p->kernel) / s + 1;
      const int ow = (w - p->kernel) / s + 1;
      std::vector<double> next(static_cast<size_t>(ch) * oh * ow);
      for (int c2 = 0; c2 < ch; ++c2) {
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            std::vector<double> window;
            for (int ky = 0; ky < p->kernel; ++ky) {
              for (int kx = 0; kx < p->kernel; ++kx) {
                window.push_back(
                    cur[(static_cast<size_t>(c2) * h + oy * s + ky) * w + ox * s + kx]);
              }
            }
            std::sort(window.begin(), window.end());
            next[(static_cast<size_t>(c2) * oh + oy) * ow + ox] = window.back();
            // a window whose top two are both exactly 0 (clamped relus) is
            // locally constant, so it does not threaten finite differences
            if (margin != nullptr && window.size() > 1 && window.back() != 0.0) {
              margin->pool = std::min(margin->pool, window.back() - window[window.size() - 2]);
            }
          }
        }
      }
      cur = next;
      shape = {ch, oh, ow};
    } else if (std::holds_alternative<nccr::ReluSpec>(layer)) {
      for (auto& v : cur) {
        if (margin != nullptr) margin->relu = std::min(margin->relu, std::abs(v));
        v = v > 0.0 ? v : 0.0;
      }
    } else {  // flatten
      int64_t total = 1;
      for (int dim : shape) total *= dim;
      shape = {static_cast<int>(total)};
    }
    if (layer_outputs != nullptr) layer_outputs->push_back(cur);
  }
  return cur;
}

// Post-activation output of every layer, same naive loops.
inline std::vector<std::vector<double>> forward_layers(const nccr::Model& m,
                                                       const std::vector<double>& x) {
  std::vector<std::vector<double>> outs;
  forward_logits(m, x, nullptr, &outs);
  return outs;
}

inline std::vector<double> softmax(const std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - mx);
    s += p[i];
  }
  for (auto& v : p) v /= s;
  return p;
}

inline double cross_entropy(const std::vector<double>& logits, int label) {
  return -std::log(softmax(logits)[label]);
}

inline std::vector<double> to_double(const nccr::Tensor& t) {
  return std::vector<double>(t.data.begin(), t.data.end());
}

inline double loss(const nccr::Model& m, const nccr::Tensor& x, int label,
                   KinkMargin* margin = nullptr) {
  return cross_entropy(forward_logits(m, to_double(x), margin), label);
}

// Central finite difference of f at a float parameter. The float is nudged by
// +-h, and the divisor is the gap actually realized after rounding to float,
// which keeps the estimate exact in the step size.
template <typename F>
double central_diff(float& slot, double h, F&& f) {
  const float saved = slot;
  const float hi = static_cast<float>(static_cast<double>(saved) + h);
  const float lo = static_cast<float>(static_cast<double>(saved) - h);
  slot = hi;
  const double fhi = f();
  slot = lo;
  const double flo = f();
  slot = saved;
  return (fhi - flo) / (static_cast<double>(hi) - static_cast<double>(lo));
}

inline bool grad_close(double got, double want, double rel_tol, double abs_tol) {
  const double diff = std::abs(got - want);
  return diff <= abs_tol || diff <= rel_tol * std::max(std::abs(got), std::abs(want));
}

// Classic perceptron rule over (features, +-1 labels). Converging to zero
// mistakes within the epoch budget certifies linear separability.
inline bool perceptron_separates(const std::vector<std::vector<double>>& x,
                                 const std::vector<int>& sign_labels, int max_epochs = 2000) {
  const size_t d = x.empty() ? 0 : x.front().size();
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    int mistakes = 0;
    for (size_t i = 0; i < x.size(); ++i) {
      double s = b;
      for (size_t j = 0; j < d; ++j) s += w[j] * x[i][j];
      if ((s > 0 ? 1 : -1) != sign_labels[i]) {
        for (size_t j = 0; j < d; ++j) w[j] += sign_labels[i] * x[i][j];
        b += sign_labels[i];
        mistakes++;
      }
    }
    if (mistakes == 0) return true;
  }
  return false;
}

}  // namespace oracles
