#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "rotatlas/circle.hpp"

namespace rotatlas {

/// d((t,x),(t',x')) = max(circle distance, |x - x'| / scale).
inline double product_distance(double t0, double x0, double t1, double x1, double scale) {
  return std::max(circle_distance(t0, t1), std::fabs(x0 - x1) / scale);
}

/// Nearest-neighbour index for the product metric: points bucketed by theta,
/// sorted by x inside each bucket.
class ProductIndex {
 public:
  ProductIndex(std::span<const double> theta, std::span<const double> x, double scale, std::size_t buckets = 1024)
      : scale_(scale), buckets_(std::max<std::size_t>(1, buckets)) {
    for (std::size_t i = 0; i < theta.size(); ++i) buckets_[bucket_of(theta[i])].push_back({x[i], frac(theta[i])});
    for (auto& b : buckets_) std::sort(b.begin(), b.end(), [](const P& a, const P& c) { return a.x < c.x; });
    size_ = theta.size();
  }

  std::size_t size() const { return size_; }

  double nearest(double t, double x) const {
    t = frac(t);
    const auto nb = static_cast<std::ptrdiff_t>(buckets_.size());
    const double w = 1.0 / static_cast<double>(nb);
    const auto b0 = static_cast<std::ptrdiff_t>(bucket_of(t));
    double best = std::numeric_limits<double>::infinity();
    for (std::ptrdiff_t r = 0; r <= nb / 2; ++r) {
      // Any point r buckets away is at least (r-1) widths away in theta.
      if (r >= 1 && static_cast<double>(r - 1) * w >= best) break;
      scan(static_cast<std::size_t>(((b0 + r) % nb + nb) % nb), t, x, best);
      if (r > 0 && nb - r != r) scan(static_cast<std::size_t>(((b0 - r) % nb + nb) % nb), t, x, best);
    }
    return best;
  }

 private:
  struct P {
    double x;
    double t;
  };

  std::size_t bucket_of(double t) const {
    return std::min(buckets_.size() - 1, static_cast<std::size_t>(frac(t) * static_cast<double>(buckets_.size())));
  }

  void scan(std::size_t b, double t, double x, double& best) const {
    const auto& v = buckets_[b];
    if (v.empty()) return;
    auto it = std::lower_bound(v.begin(), v.end(), x, [](const P& p, double val) { return p.x < val; });
    for (auto j = it; j != v.end(); ++j) {
      if ((j->x - x) / scale_ >= best) break;
      best = std::min(best, product_distance(t, x, j->t, j->x, scale_));
    }
    for (auto j = it; j != v.begin();) {
      --j;
      if ((x - j->x) / scale_ >= best) break;
      best = std::min(best, product_distance(t, x, j->t, j->x, scale_));
    }
  }

  double scale_;
  std::vector<std::vector<P>> buckets_;
  std::size_t size_ = 0;
};

/// sup over a in A of the distance from a to B.
inline double directed_hausdorff(std::span<const double> at, std::span<const double> ax, const ProductIndex& b) {
  double h = 0.0;
  for (std::size_t i = 0; i < at.size(); ++i) h = std::max(h, b.nearest(at[i], ax[i]));
  return h;
}

inline double hausdorff_distance(std::span<const double> at, std::span<const double> ax, std::span<const double> bt,
                                 std::span<const double> bx, double scale) {
  if (at.empty() || bt.empty()) return at.empty() && bt.empty() ? 0.0 : std::numeric_limits<double>::infinity();
  ProductIndex ia(at, ax, scale), ib(bt, bx, scale);
  return std::max(directed_hausdorff(at, ax, ib), directed_hausdorff(bt, bx, ia));
}

}  // namespace rotatlas
