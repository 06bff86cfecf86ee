#include "digits_impl.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "nccr/rng.hpp"

namespace nccr {

namespace {

// 8x8 font bitmaps, one byte per row, MSB = leftmost pixel.
constexpr std::array<std::array<unsigned char, 8>, 10> kMiniGlyphs = {{
    {0x3C, 0x66, 0x6E, 0x76, 0x66, 0x66, 0x3C, 0x00},  // 0
    {0x18, 0x38, 0x18, 0x18, 0x18, 0x18, 0x7E, 0x00},  // 1
    {0x3C, 0x66, 0x06, 0x0C, 0x18, 0x30, 0x7E, 0x00},  // 2
    {0x3C, 0x66, 0x06, 0x1C, 0x06, 0x66, 0x3C, 0x00},  // 3
    {0x0C, 0x1C, 0x3C, 0x6C, 0x7E, 0x0C, 0x0C, 0x00},  // 4
    {0x7E, 0x60, 0x7C, 0x06, 0x06, 0x66, 0x3C, 0x00},  // 5
    {0x1C, 0x30, 0x60, 0x7C, 0x66, 0x66, 0x3C, 0x00},  // 6
    {0x7E, 0x06, 0x0C, 0x18, 0x30, 0x30, 0x30, 0x00},  // 7
    {0x3C, 0x66, 0x66, 0x3C, 0x66, 0x66, 0x3C, 0x00},  // 8
    {0x3C, 0x66, 0x66, 0x3E, 0x06, 0x0C, 0x38, 0x00},  // 9
}};

struct Pt {
  double x, y;
};

using Polyline = std::vector<Pt>;

Polyline arc(double cx, double cy, double rx, double ry, double deg0, double deg1, int n = 48) {
  Polyline p;
  p.reserve(n + 1);
  const double a0 = deg0 * M_PI / 180.0, a1 = deg1 * M_PI / 180.0;
  for (int i = 0; i <= n; ++i) {
    const double a = a0 + (a1 - a0) * i / n;
    p.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return p;
}

Polyline line(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y1}}; }

// Stroke sets in a 28x28 box, y growing downward.
std::vector<Polyline> digit_strokes(int digit) {
  switch (digit) {
    case 0:
      return {arc(14, 14, 6.2, 8.8, 0, 360)};
    case 1:
      return {line(14, 4.5, 14, 23), line(14, 4.5, 10.2, 8.2), line(10, 23, 18, 23)};
    case 2:
      return {arc(14, 10.5, 5.6, 5.0, 180, 390), line(18.8, 13.2, 8.5, 23), line(8.5, 23, 19.6, 23)};
    case 3:
      return {arc(13, 10, 5.5, 4.2, 210, 450), arc(13, 17.6, 5.8, 4.4, 270, 510)};
    case 4:
      return {line(16.5, 4.5, 7.5, 16.5), line(7.5, 16.5, 20.8, 16.5), line(16.5, 4.5, 16.5, 23.2)};
    case 5:
      return {line(18.6, 4.8, 9.6, 4.8), line(9.6, 4.8, 10.2, 12.2), arc(13.6, 16.6, 5.8, 5.2, 240, 510)};
    case 6:
      return {arc(19.5, 14.5, 9.6, 10.2, 196, 262), arc(13.8, 17.3, 5.0, 4.8, 0, 360)};
    case 7:
      return {line(8.4, 5.2, 19.6, 5.2), line(19.6, 5.2, 12.2, 23.2), line(12.6, 14, 17.8, 14)};
    case 8:
      return {arc(13.9, 9.6, 4.5, 4.0, 0, 360), arc(14, 18.2, 5.2, 4.7, 0, 360)};
    default:
      return {arc(14, 10.2, 5.0, 4.7, 0, 360), arc(10.8, 15, 8.1, 8.2, -12, 76)};
  }
}

double dist_to_segment(double px, double py, const Pt& a, const Pt& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = a.x + t * dx - px, qy = a.y + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

// Canonical 28x28 intensity image of a digit: soft-edged strokes.
std::vector<float> render_canonical28(int digit) {
  const auto strokes = digit_strokes(digit);
  const double thickness = 1.35, soft = 1.0;
  std::vector<float> img(28 * 28, 0.0f);
  for (int y = 0; y < 28; ++y) {
    for (int x = 0; x < 28; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double d = 1e9;
      for (const auto& poly : strokes) {
        for (size_t i = 0; i + 1 < poly.size(); ++i) {
          d = std::min(d, dist_to_segment(px, py, poly[i], poly[i + 1]));
        }
      }
      const double v = std::clamp((thickness + soft - d) / soft, 0.0, 1.0);
      img[static_cast<size_t>(y) * 28 + x] = static_cast<float>(v);
    }
  }
  return img;
}

const std::vector<float>& canonical28(int digit) {
  static const std::array<std::vector<float>, 10> cache = [] {
    std::array<std::vector<float>, 10> a;
    for (int d = 0; d < 10; ++d) a[d] = render_canonical28(d);
    return a;
  }();
  return cache[static_cast<size_t>(digit)];
}

float bilinear(const std::vector<float>& img, int w, int h, double x, double y) {
  if (x < 0 || y < 0 || x > w - 1 || y > h - 1) return 0.0f;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = img[static_cast<size_t>(y0) * w + x0] * (1 - fx) +
                     img[static_cast<size_t>(y0) * w + x1] * fx;
  const double bot = img[static_cast<size_t>(y1) * w + x0] * (1 - fx) +
                     img[static_cast<size_t>(y1) * w + x1] * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

}  // namespace

Tensor render_mini_digit(int digit, uint64_t item_seed) {
  Rng rng(item_seed);
  const int dx = static_cast<int>(rng.uniform_int(3)) - 1;
  const int dy = static_cast<int>(rng.uniform_int(3)) - 1;
  const double gain = rng.uniform(0.7, 1.0);

  Tensor t({1, 8, 8});
  const auto& glyph = kMiniGlyphs[static_cast<size_t>(digit)];
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const int sx = x - dx, sy = y - dy;
      bool on = false;
      if (sx >= 0 && sx < 8 && sy >= 0 && sy < 8) {
        on = (glyph[static_cast<size_t>(sy)] >> (7 - sx)) & 1;
      }
      double v = on ? gain * (1.0 - rng.uniform(0.0, 0.25)) : rng.uniform(0.0, 0.05);
      t[static_cast<int64_t>(y) * 8 + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return t;
}

Tensor render_digit28(int digit, uint64_t item_seed) {
  Rng rng(item_seed);
  const double theta = rng.uniform(-0.18, 0.18);
  const double sx = rng.uniform(0.85, 1.15);
  const double sy = rng.uniform(0.85, 1.15);
  const double shear = rng.uniform(-0.18, 0.18);
  const double tx = rng.uniform(-2.2, 2.2);
  const double ty = rng.uniform(-2.2, 2.2);
  const double gain = rng.uniform(0.75, 1.0);

  // forward map: p_out = R * Shear * S * (p - c) + c + t;  invert it
  const double c = 13.5;
  const double r00 = std::cos(theta), r01 = -std::sin(theta);
  const double r10 = std::sin(theta), r11 = std::cos(theta);
  // M = R * [[1, shear],[0,1]] * diag(sx, sy)
  const double m00 = r00 * sx, m01 = (r00 * shear + r01) * sy;
  const double m10 = r10 * sx, m11 = (r10 * shear + r11) * sy;
  const double det = m00 * m11 - m01 * m10;
  const double i00 = m11 / det, i01 = -m01 / det;
  const double i10 = -m10 / det, i11 = m00 / det;

  const auto& glyph = canonical28(digit);
  Tensor t({1, 28, 28});
  for (int y = 0; y < 28; ++y) {
    for (int x = 0; x < 28; ++x) {
      const double qx = x - c - tx, qy = y - c - ty;
      const double px = i00 * qx + i01 * qy + c;
      const double py = i10 * qx + i11 * qy + c;
      double v = gain * bilinear(glyph, 28, 28, px, py);
      v += rng.uniform(0.0, 0.04);                        // background haze
      if (rng.uniform() < 0.01) v += rng.uniform(0.2, 0.6);  // speckle
      t[static_cast<int64_t>(y) * 28 + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return t;
}

}  // namespace nccr
