#pragma once

// Convex polygon routines shared by the IoU family. Templated on the scalar so
// the same clipping topology can be evaluated with forward-mode derivatives.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

namespace ldr::detail {

inline double value_of(double x) { return x; }
template <typename S>
double value_of(const S& x) {
  return x.value();
}

template <typename T>
struct Pt {
  T x;
  T y;
};

template <typename T>
Pt<T> operator-(const Pt<T>& a, const Pt<T>& b) {
  return {a.x - b.x, a.y - b.y};
}

template <typename T>
T cross(const Pt<T>& a, const Pt<T>& b) {
  return a.x * b.y - a.y * b.x;
}

inline constexpr double kClipEps = 1e-9;

/// Fixed-capacity polygon; two convex quads never clip to more than 8 vertices
/// and a hull of 8 points has at most 8.
template <typename T>
struct Poly {
  static constexpr std::size_t kCapacity = 16;
  std::array<Pt<T>, kCapacity> pts;
  std::size_t n = 0;

  void push(const Pt<T>& p) {
    if (n < kCapacity) pts[n++] = p;
  }
};

/// Counter-clockwise rectangle footprint.
template <typename T>
Poly<T> rect(const T& cx, const T& cy, const T& l, const T& w, const T& yaw) {
  using std::cos;
  using std::sin;
  const T c = cos(yaw);
  const T s = sin(yaw);
  const T hl = l * 0.5;
  const T hw = w * 0.5;
  const double sx[4] = {1, -1, -1, 1};
  const double sy[4] = {1, 1, -1, -1};
  Poly<T> out;
  for (int i = 0; i < 4; ++i) {
    const T lx = hl * sx[i];
    const T ly = hw * sy[i];
    out.push({cx + lx * c - ly * s, cy + lx * s + ly * c});
  }
  return out;
}

template <typename T>
T signed_area(const Poly<T>& p) {
  T acc = T(0.0);
  if (p.n < 3) return acc;
  for (std::size_t i = 0; i < p.n; ++i) {
    const auto& a = p.pts[i];
    const auto& b = p.pts[(i + 1) % p.n];
    acc = acc + (a.x * b.y - b.x * a.y);
  }
  return acc * 0.5;
}

template <typename T>
T area(const Poly<T>& p) {
  T a = signed_area(p);
  return value_of(a) < 0 ? T(-a) : a;
}

/// Sutherland-Hodgman clip of convex `subject` by convex CCW `clip`.
template <typename T>
Poly<T> clip_convex(const Poly<T>& subject, const Poly<T>& clip) {
  Poly<T> out = subject;
  for (std::size_t e = 0; e < clip.n && out.n > 0; ++e) {
    const Pt<T>& a = clip.pts[e];
    const Pt<T>& b = clip.pts[(e + 1) % clip.n];
    const Pt<T> edge = b - a;
    Poly<T> in = out;
    out.n = 0;
    for (std::size_t i = 0; i < in.n; ++i) {
      const Pt<T>& p = in.pts[i];
      const Pt<T>& q = in.pts[(i + 1) % in.n];
      const T sp = cross(edge, p - a);
      const T sq = cross(edge, q - a);
      const bool p_in = value_of(sp) >= -kClipEps;
      const bool q_in = value_of(sq) >= -kClipEps;
      if (p_in && q_in) {
        out.push(q);
      } else if (p_in != q_in) {
        const T t = sp / (sp - sq);
        const Pt<T> x{p.x + (q.x - p.x) * t, p.y + (q.y - p.y) * t};
        out.push(x);
        if (q_in) out.push(q);
      }
    }
  }
  return out;
}

/// Andrew's monotone chain; returns a CCW hull without collinear points.
template <typename T>
Poly<T> convex_hull(std::array<Pt<T>, 8> pts) {
  std::sort(pts.begin(), pts.end(), [](const Pt<T>& a, const Pt<T>& b) {
    const double ax = value_of(a.x), bx = value_of(b.x);
    if (ax != bx) return ax < bx;
    return value_of(a.y) < value_of(b.y);
  });
  auto turn = [](const Pt<T>& o, const Pt<T>& a, const Pt<T>& b) {
    return value_of(cross(a - o, b - o));
  };
  std::array<Pt<T>, 17> h;
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && turn(h[k - 2], h[k - 1], pts[i]) <= kClipEps) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && turn(h[k - 2], h[k - 1], pts[i]) <= kClipEps) --k;
    h[k++] = pts[i];
  }
  Poly<T> out;
  for (std::size_t i = 0; i + 1 < k; ++i) out.push(h[i]);
  return out;
}

template <typename T>
T max_of(const T& a, const T& b) {
  return value_of(a) >= value_of(b) ? a : b;
}
template <typename T>
T min_of(const T& a, const T& b) {
  return value_of(a) <= value_of(b) ? a : b;
}

template <typename T>
struct OverlapTerms {
  T inter_area;
  T area_a;
  T area_b;
  T hull_area;
};

template <typename T>
OverlapTerms<T> bev_overlap(const Poly<T>& a, const Poly<T>& b, bool want_hull) {
  OverlapTerms<T> r{T(0.0), area(a), area(b), T(0.0)};
  r.inter_area = area(clip_convex(a, b));
  if (want_hull) {
    std::array<Pt<T>, 8> all{a.pts[0], a.pts[1], a.pts[2], a.pts[3],
                             b.pts[0], b.pts[1], b.pts[2], b.pts[3]};
    r.hull_area = area(convex_hull(all));
  }
  return r;
}

/// GIoU in 3D from box parameters (x, y, z, l, w, h, yaw).
template <typename T>
T giou_3d_generic(const std::array<T, 7>& a, const std::array<T, 7>& b) {
  const Poly<T> pa = rect(a[0], a[1], a[3], a[4], a[6]);
  const Poly<T> pb = rect(b[0], b[1], b[3], b[4], b[6]);
  const OverlapTerms<T> o = bev_overlap(pa, pb, true);
  const T a_bot = a[2] - a[5] * 0.5, a_top = a[2] + a[5] * 0.5;
  const T b_bot = b[2] - b[5] * 0.5, b_top = b[2] + b[5] * 0.5;
  T z_overlap = min_of(a_top, b_top) - max_of(a_bot, b_bot);
  if (value_of(z_overlap) < 0) z_overlap = T(0.0);
  const T z_span = max_of(a_top, b_top) - min_of(a_bot, b_bot);
  const T vol_a = o.area_a * a[5];
  const T vol_b = o.area_b * b[5];
  const T inter = o.inter_area * z_overlap;
  const T uni = vol_a + vol_b - inter;
  T hull = o.hull_area * z_span;
  if (value_of(hull) < value_of(uni)) hull = uni;
  const T iou = inter / uni;
  return iou - (hull - uni) / hull;
}

}  // namespace ldr::detail
