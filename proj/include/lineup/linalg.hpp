#pragma once

// Small dense least squares for the regression models used by the scans.

#include <cmath>
#include <span>
#include <vector>

namespace lineup {

// Orthonormal basis of the span of a few design columns, by twice-iterated
// modified Gram-Schmidt. Columns that are numerically dependent on earlier
// ones are dropped, which yields the same residuals as a pseudo-inverse fit.
class OrthoBasis {
 public:
  OrthoBasis(std::size_t n, const std::vector<std::vector<double>>& columns, double tol = 1e-10)
      : n_(n) {
    for (const auto& col : columns) {
      std::vector<double> v(col.begin(), col.end());
      const double norm0 = norm(v);
      if (norm0 == 0.0) {
        ++dropped_;
        continue;
      }
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& q : basis_) {
          const double c = dot(q, v);
          for (std::size_t i = 0; i < n_; ++i) v[i] -= c * q[i];
        }
      }
      const double nv = norm(v);
      if (nv <= tol * norm0) {
        ++dropped_;
        continue;
      }
      for (double& x : v) x /= nv;
      basis_.push_back(std::move(v));
    }
  }

  std::size_t rank() const { return basis_.size(); }
  std::size_t dropped() const { return dropped_; }

  // Residual sum of squares of y after projecting out the basis.
  double rss(std::span<const double> y) const {
    std::vector<double> r(y.begin(), y.end());
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : basis_) {
        const double c = dot(q, r);
        for (std::size_t i = 0; i < n_; ++i) r[i] -= c * q[i];
      }
    }
    double s = 0.0;
    for (double x : r) s += x * x;
    return s;
  }

 private:
  static double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }
  static double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

  std::size_t n_;
  std::vector<std::vector<double>> basis_;
  std::size_t dropped_ = 0;
};

}  // namespace lineup
