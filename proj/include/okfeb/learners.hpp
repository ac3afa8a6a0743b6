#pragma once

#include <Eigen/Cholesky>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include "okfeb/kernel.hpp"

namespace okfeb {

/// Online hinge-loss classifier trained with Pegasos steps over extracted
/// features; C maps to the regularizer 1/C.
struct PegasosSvm {
  Vec w;
  std::int64_t t = 0;
  double C = 1.0;
};

inline void svm_step(PegasosSvm& m, const Vec& z, double y, double* margin_out = nullptr) {
  if (m.w.size() == 0) m.w = Vec::Zero(z.size());
  if (m.w.size() != z.size()) throw std::invalid_argument("svm_step: dimension mismatch");
  if (y != 1.0 && y != -1.0) throw std::invalid_argument("svm_step: label must be +/-1");
  ++m.t;
  const double lambda_p = 1.0 / m.C;
  const double eta = 1.0 / (lambda_p * static_cast<double>(m.t));
  const double margin = y * m.w.dot(z);
  if (margin_out) *margin_out = margin;
  m.w *= (1.0 - eta * lambda_p);
  if (margin < 1.0) m.w += (eta * y) * z;
}

/// Regularized LMS regressor; when mu is unset the step defaults to
/// 0.5 / (running max |z|^2 + lambda_reg).
struct LmsRegressor {
  Vec w;
  std::int64_t t = 0;
  double lambda_reg = 0.0;
  std::optional<double> mu;  // fixed step when set
  double max_znorm2 = 0.0;
};

inline void lms_step(LmsRegressor& m, const Vec& z, double y) {
  if (m.w.size() == 0) m.w = Vec::Zero(z.size());
  if (m.w.size() != z.size()) throw std::invalid_argument("lms_step: dimension mismatch");
  ++m.t;
  m.max_znorm2 = std::max(m.max_znorm2, z.squaredNorm());
  const double step = m.mu ? *m.mu : 0.5 / (m.max_znorm2 + m.lambda_reg);
  const double err = y - m.w.dot(z);
  m.w += step * (err * z - m.lambda_reg * m.w);
}

inline double predict(const Vec& w, const Vec& z) {
  if (w.size() != z.size()) throw std::invalid_argument("predict: dimension mismatch");
  return w.dot(z);
}

/// sign(w.z) with sign(0) := +1.
inline int classify(const Vec& w, const Vec& z) { return predict(w, z) >= 0.0 ? 1 : -1; }

inline double predict(const PegasosSvm& m, const Vec& z) { return m.w.size() ? predict(m.w, z) : 0.0; }
inline int classify(const PegasosSvm& m, const Vec& z) { return m.w.size() ? classify(m.w, z) : 1; }
inline double predict(const LmsRegressor& m, const Vec& z) { return m.w.size() ? predict(m.w, z) : 0.0; }

/// beta = (K + lambda N I)^-1 y.
inline Vec ridge_closed_form(const Mat& K, const Vec& y, double lambda) {
  if (K.rows() != K.cols() || K.rows() != y.size())
    throw std::invalid_argument("ridge_closed_form: shape mismatch");
  if (!(lambda > 0.0)) throw std::invalid_argument("ridge_closed_form requires lambda > 0");
  const double shift = lambda * static_cast<double>(K.rows());
  return Eigen::LLT<Mat>(K + shift * Mat::Identity(K.rows(), K.cols())).solve(y);
}

}  // namespace okfeb
