#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "rotatlas/error.hpp"

namespace rotatlas {

enum class PrimitiveKind { Sin, Cos, AbsSin, AbsCos, Poly, TanhAffine, Const };

inline std::string_view primitive_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Sin: return "sin";
    case PrimitiveKind::Cos: return "cos";
    case PrimitiveKind::AbsSin: return "abs_sin";
    case PrimitiveKind::AbsCos: return "abs_cos";
    case PrimitiveKind::Poly: return "poly";
    case PrimitiveKind::TanhAffine: return "tanh_affine";
    case PrimitiveKind::Const: return "const";
  }
  return "?";
}

inline PrimitiveKind primitive_from_name(std::string_view s) {
  for (auto k : {PrimitiveKind::Sin, PrimitiveKind::Cos, PrimitiveKind::AbsSin, PrimitiveKind::AbsCos,
                 PrimitiveKind::Poly, PrimitiveKind::TanhAffine, PrimitiveKind::Const})
    if (primitive_name(k) == s) return k;
  throw Error(ErrorKind::ConfigError, "unknown primitive '" + std::string(s) + "'");
}

/// Trig kinds:   amp * trig(2 pi freq t + phase) + offset  (abs_* wrap the trig in |.|).
/// poly:         sum coeffs[k] t^k.
/// tanh_affine:  (tanh(in_scale t + in_shift) + add) * out_scale.
/// const:        offset.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Const;
  double amp = 1.0;
  double freq = 1.0;
  double phase = 0.0;
  double offset = 0.0;
  std::vector<double> coeffs;
  double in_scale = 1.0;
  double in_shift = 0.0;
  double add = 0.0;
  double out_scale = 1.0;

  double operator()(double t) const {
    constexpr double tau = 2.0 * std::numbers::pi;
    switch (kind) {
      case PrimitiveKind::Sin: return amp * std::sin(tau * freq * t + phase) + offset;
      case PrimitiveKind::Cos: return amp * std::cos(tau * freq * t + phase) + offset;
      case PrimitiveKind::AbsSin: return amp * std::fabs(std::sin(tau * freq * t + phase)) + offset;
      case PrimitiveKind::AbsCos: return amp * std::fabs(std::cos(tau * freq * t + phase)) + offset;
      case PrimitiveKind::Poly: {
        double r = 0.0;
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) r = r * t + *it;
        return r;
      }
      case PrimitiveKind::TanhAffine: return (std::tanh(in_scale * t + in_shift) + add) * out_scale;
      case PrimitiveKind::Const: return offset;
    }
    return 0.0;
  }

  /// Analytic derivative; abs_* use the one-sided value sign(trig) * trig'.
  double derivative(double t) const {
    constexpr double tau = 2.0 * std::numbers::pi;
    const double w = tau * freq;
    const double u = w * t + phase;
    switch (kind) {
      case PrimitiveKind::Sin: return amp * w * std::cos(u);
      case PrimitiveKind::Cos: return -amp * w * std::sin(u);
      case PrimitiveKind::AbsSin: return amp * w * std::cos(u) * (std::sin(u) < 0.0 ? -1.0 : 1.0);
      case PrimitiveKind::AbsCos: return -amp * w * std::sin(u) * (std::cos(u) < 0.0 ? -1.0 : 1.0);
      case PrimitiveKind::Poly: {
        double r = 0.0;
        for (std::size_t k = coeffs.size(); k-- > 1;) r = r * t + static_cast<double>(k) * coeffs[k];
        return r;
      }
      case PrimitiveKind::TanhAffine: {
        const double th = std::tanh(in_scale * t + in_shift);
        return out_scale * in_scale * (1.0 - th * th);
      }
      case PrimitiveKind::Const: return 0.0;
    }
    return 0.0;
  }

  static Primitive constant(double c) {
    Primitive p;
    p.offset = c;
    return p;
  }

  static Primitive poly(std::vector<double> c) {
    Primitive p;
    p.kind = PrimitiveKind::Poly;
    p.coeffs = std::move(c);
    return p;
  }

  static Primitive trig(PrimitiveKind k, double amp, double offset = 0.0) {
    Primitive p;
    p.kind = k;
    p.amp = amp;
    p.offset = offset;
    return p;
  }

  static Primitive tanh_affine(double in_scale, double in_shift, double add, double out_scale) {
    Primitive p;
    p.kind = PrimitiveKind::TanhAffine;
    p.in_scale = in_scale;
    p.in_shift = in_shift;
    p.add = add;
    p.out_scale = out_scale;
    return p;
  }
};

struct Branch {
  double from = -std::numeric_limits<double>::infinity();
  double to = std::numeric_limits<double>::infinity();  // half-open [from, to)
  Primitive expr;
};

/// A function given by primitives on half-open branches. Arguments outside every
/// branch fall back to the nearest one.
class PiecewiseFunction {
 public:
  PiecewiseFunction() = default;
  explicit PiecewiseFunction(std::vector<Branch> branches) : branches_(std::move(branches)) {
    if (branches_.empty()) throw Error(ErrorKind::ConfigError, "piecewise function needs at least one branch");
    for (const auto& b : branches_)
      if (!(b.from < b.to)) throw Error(ErrorKind::ConfigError, "branch with from >= to");
  }

  static PiecewiseFunction single(Primitive p) { return PiecewiseFunction({Branch{-kInf, kInf, std::move(p)}}); }

  double operator()(double t) const { return branch_at(t).expr(t); }
  double derivative(double t) const { return branch_at(t).expr.derivative(t); }

  const std::vector<Branch>& branches() const { return branches_; }

  const Branch& branch_at(double t) const {
    const Branch* best = &branches_.front();
    double best_d = kInf;
    for (const auto& b : branches_) {
      if (t >= b.from && t < b.to) return b;
      const double d = t < b.from ? b.from - t : t - b.to;
      if (d < best_d) {
        best_d = d;
        best = &b;
      }
    }
    return *best;
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<Branch> branches_;
};

}  // namespace rotatlas
