#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "okfeb/kernel.hpp"

namespace okfeb::detail {

// Explicit truncated Mercer expansion of the gaussian kernel for
// low-dimensional inputs:
//
//   exp(-|x-y|^2/g) = e(x) e(y) exp(2 x.y / g),  e(x) = exp(-|x|^2/g)
//   exp(2 x.y / g)  = sum_k (2/g)^k (x.y)^k / k!
//                   = sum_{|a|<=d} c_a x^a y^a + remainder
//
// With z := 2 max|x|^2 / g bounded, the degree-d remainder is
// e^z z^{d+1}/(d+1)!, so a modest d makes the factorization exact to double
// precision. Gram-times-matrix products then cost O(m n r) with m monomials
// instead of O(n^2 r), without streaming the stored Gram.
class TaylorFeatureMap {
 public:
  TaylorFeatureMap(double gamma, int dim, double z_cap, double tol = 1e-15)
      : gamma_(gamma), dim_(dim), z_cap_(z_cap) {
    degree_ = needed_degree(z_cap, tol);
    if (degree_ < 0) throw std::invalid_argument("taylor feature map: tolerance unreachable");
    enumerate(Eigen::VectorXi::Zero(dim), 0, degree_);
  }

  // Smallest d with e^z z^{d+1}/(d+1)! <= tol, or -1 if none below 64.
  static int needed_degree(double z, double tol) {
    double term = std::exp(z);
    for (int d = 0; d <= 64; ++d) {
      term *= z / (d + 1);
      if (term <= tol) return d;
    }
    return -1;
  }

  static std::int64_t monomial_count(int dim, int degree) {
    // C(degree + dim, dim)
    std::int64_t c = 1;
    for (int i = 1; i <= dim; ++i) c = c * (degree + i) / i;
    return c;
  }

  int size() const { return static_cast<int>(alphas_.size()); }
  double z_cap() const { return z_cap_; }
  int degree() const { return degree_; }

  // Column of features for one input; kernel_vector-compatible up to the
  // truncation remainder: f(x).f(y) == exp(-|x-y|^2/gamma).
  Vec features(const Vec& x) const {
    Vec f(size());
    const double e = std::exp(-x.squaredNorm() / gamma_);
    for (int j = 0; j < size(); ++j) {
      double v = coef_[static_cast<std::size_t>(j)];
      const auto& alpha = alphas_[static_cast<std::size_t>(j)];
      for (int d = 0; d < dim_; ++d)
        for (int p = 0; p < alpha[d]; ++p) v *= x[d];
      f[j] = v * e;
    }
    return f;
  }

 private:
  void enumerate(Eigen::VectorXi alpha, int pos, int budget) {
    if (pos == dim_) {
      const int k = alpha.sum();
      // sqrt((2/gamma)^k / k! * multinomial(k; alpha))
      double logc = k * std::log(2.0 / gamma_) - std::lgamma(k + 1.0) +
                    (std::lgamma(k + 1.0) - [&] {
                      double s = 0.0;
                      for (int d = 0; d < dim_; ++d) s += std::lgamma(alpha[d] + 1.0);
                      return s;
                    }());
      alphas_.push_back(alpha);
      coef_.push_back(std::exp(0.5 * logc));
      return;
    }
    for (int a = 0; a <= budget; ++a) {
      alpha[pos] = a;
      enumerate(alpha, pos + 1, budget - a);
    }
  }

  double gamma_;
  int dim_;
  double z_cap_;
  int degree_;
  std::vector<Eigen::VectorXi> alphas_;
  std::vector<double> coef_;
};

}  // namespace okfeb::detail
