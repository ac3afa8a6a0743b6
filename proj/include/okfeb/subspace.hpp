#pragma once

#include <Eigen/Cholesky>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "okfeb/kernel.hpp"
#include "okfeb/taylor_features.hpp"

namespace okfeb {

using FeatureVector = Eigen::VectorXd;

enum class StepMode { harmonic, harmonic_sq, inv_feature_norm, constant };

/// Step-size rules: c/n, c/n^2, c/|q|_2, or the constant c.
struct StepSchedule {
  StepMode mode = StepMode::harmonic;
  double c = 1.0;

  double step(std::int64_t n, const FeatureVector& q) const {
    switch (mode) {
      case StepMode::harmonic: return c / static_cast<double>(n);
      case StepMode::harmonic_sq: return c / (static_cast<double>(n) * static_cast<double>(n));
      case StepMode::inv_feature_norm: return c / std::max(q.norm(), 1e-12);
      case StepMode::constant: return c;
    }
    throw std::logic_error("unreachable step mode");
  }
};

enum class InitKind { ones, random };

namespace detail {

// Row-growable matrix with doubling capacity; avoids quadratic copy traffic
// when the support is appended one vector at a time.
class GrowMat {
 public:
  GrowMat() = default;
  GrowMat(Eigen::Index rows, Eigen::Index cols) { reset(rows, cols); }

  void reset(Eigen::Index rows, Eigen::Index cols) {
    rows_ = rows;
    cols_ = cols;
    store_.setZero(std::max<Eigen::Index>(rows, 4), cols);
  }

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }

  auto view() { return store_.topLeftCorner(rows_, cols_); }
  auto view() const { return store_.topLeftCorner(rows_, cols_); }

  void append_row() {
    ensure_rows(rows_ + 1);
    store_.row(rows_).setZero();
    ++rows_;
  }

  // Grow/shrink the logical row count; new rows are left uninitialized.
  void resize_rows(Eigen::Index r) {
    ensure_rows(r);
    rows_ = r;
  }

  void remove_row(Eigen::Index i) {
    const Eigen::Index tail = rows_ - i - 1;
    if (tail > 0)
      store_.middleRows(i, tail) = store_.middleRows(i + 1, tail).eval();
    --rows_;
  }

 private:
  void ensure_rows(Eigen::Index need) {
    if (need <= store_.rows()) return;
    Eigen::Index cap = std::max<Eigen::Index>(store_.rows() * 2, need);
    Mat bigger(cap, cols_);
    bigger.topRows(rows_) = store_.topRows(rows_);
    store_.swap(bigger);
  }

  Mat store_;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
};

// Square version used for the support Gram.
class GrowSquare {
 public:
  void reset1(double k00) {
    n_ = 1;
    store_.setZero(8, 8);
    store_(0, 0) = k00;
  }

  Eigen::Index size() const { return n_; }
  auto view() { return store_.topLeftCorner(n_, n_); }
  auto view() const { return store_.topLeftCorner(n_, n_); }

  // Symmetric border: new row/col = k, corner = kxx.
  void border(const Vec& k, double kxx) {
    ensure(n_ + 1);
    store_.col(n_).head(n_) = k;
    store_.row(n_).head(n_) = k.transpose();
    store_(n_, n_) = kxx;
    ++n_;
  }

  void remove(Eigen::Index i) {
    const Eigen::Index tail = n_ - i - 1;
    if (tail > 0) {
      store_.middleRows(i, tail).leftCols(n_) = store_.middleRows(i + 1, tail).leftCols(n_).eval();
      store_.middleCols(i, tail).topRows(n_ - 1) = store_.middleCols(i + 1, tail).topRows(n_ - 1).eval();
    }
    --n_;
  }

 private:
  void ensure(Eigen::Index need) {
    if (need <= store_.rows()) return;
    Eigen::Index cap = std::max<Eigen::Index>(store_.rows() * 2, need);
    Mat bigger = Mat::Zero(cap, cap);
    bigger.topLeftCorner(n_, n_) = store_.topLeftCorner(n_, n_);
    store_.swap(bigger);
  }

  Mat store_;
  Eigen::Index n_ = 0;
};

}  // namespace detail

/// Budget-resident subspace model: support set S, factor A, cached Gram K_S,
/// and the virtual basis L = Phi_S A represented implicitly through them.
/// Single-writer; read snapshots may be copied freely at update boundaries.
class SubspaceModel {
 public:
  SubspaceModel(KernelSpec spec, const Vec& x0, int rank, double lambda,
                InitKind init = InitKind::random, std::uint64_t seed = 0)
      : spec_(spec), rank_(rank), lambda_(lambda) {
    spec_.validate();
    if (rank < 1) throw std::invalid_argument("rank must be >= 1");
    if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
    support_.push_back(x0);
    eta_.push_back(1.0);
    A_.reset(1, rank);
    if (init == InitKind::ones) {
      A_.view().setOnes();
    } else {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      for (int j = 0; j < rank; ++j) A_.view()(0, j) = 0.1 * unif(rng);
    }
    K_.reset1(self_kernel(spec_, x0));
    W_.reset(1, rank);
    W_.view() = K_.view() * A_.view();
    w_valid_ = true;
    C_ = A_.view().transpose() * W_.view();
    max_sqnorm_ = x0.squaredNorm();
    n_ = 1;
  }

  const KernelSpec& kernel_spec() const { return spec_; }
  int rank() const { return rank_; }
  double lambda() const { return lambda_; }
  std::int64_t sample_count() const { return n_; }
  Eigen::Index support_size() const { return static_cast<Eigen::Index>(support_.size()); }
  const std::vector<Vec>& support() const { return support_; }
  const std::vector<double>& etas() const { return eta_; }
  std::uint64_t revision() const { return revision_; }
  bool cache_valid() const { return m_valid_; }

  auto A() const { return A_.view(); }
  auto K_S() const { return K_.view(); }
  /// A^T K_S A, maintained across updates.
  const Mat& gram_factor() const { return C_; }

  /// (A^T K_S A + lambda I)^-1, recomputed on demand after updates.
  const Mat& gram_factor_inverse() const {
    refresh_inverse();
    return M_;
  }

  /// q = (A^T K_S A + lambda I)^-1 A^T k(x_S, x).
  FeatureVector extract_feature(const Vec& x) const {
    check_dim(x);
    refresh_inverse();
    const Vec k = kernel_vector(spec_, support_, x);
    const Vec u = A_.view().transpose() * k;
    return M_ * u;
  }

  /// Unscaled LS fit k(x,x) - 2 k^T A q + q^T A^T K_S A q, clamped at zero
  /// for negatives within -1e-9.
  double ls_fit(const Vec& x, const FeatureVector& q) const {
    check_dim(x);
    if (q.size() != rank_) throw std::invalid_argument("feature vector has wrong rank");
    const Vec k = kernel_vector(spec_, support_, x);
    const Vec u = A_.view().transpose() * k;
    double fit = self_kernel(spec_, x) - 2.0 * u.dot(q) + q.dot(C_ * q);
    if (fit < 0.0) {
      if (fit < -1e-9)
        throw std::runtime_error("ls_fit returned " + std::to_string(fit) +
                                 "; model state is inconsistent");
      fit = 0.0;
    }
    return fit;
  }

  /// Factor update A <- [A - mu A (q q^T + (lambda/n) I); mu q^T] with the
  /// sample appended to the support. O(|S| r + r^3) via an exact incremental
  /// update of A^T K_S A.
  void parametric_update(const Vec& x, const FeatureVector& q, double mu) {
    check_dim(x);
    if (q.size() != rank_) throw std::invalid_argument("feature vector has wrong rank");
    const std::int64_t n = n_ + 1;
    const Vec k = kernel_vector(spec_, support_, x);
    const double kxx = self_kernel(spec_, x);
    const Vec u = A_.view().transpose() * k;

    const Mat B = Mat::Identity(rank_, rank_) -
                  mu * (q * q.transpose() + (lambda_ / static_cast<double>(n)) * Mat::Identity(rank_, rank_));
    // C' = B^T C B + mu (B^T u q^T + q u^T B) + mu^2 kxx q q^T
    const Vec Bu = B.transpose() * u;
    Mat C_next = B.transpose() * C_ * B;
    C_next.noalias() += mu * (Bu * q.transpose());
    C_next.noalias() += mu * (q * Bu.transpose());
    C_next.noalias() += (mu * mu * kxx) * (q * q.transpose());

    A_.view() = (A_.view() * B).eval();
    A_.append_row();
    A_.view().row(A_.rows() - 1) = mu * q.transpose();

    admit(x, k, kxx);
    C_ = 0.5 * (C_next + C_next.transpose());
    w_valid_ = false;
    m_valid_ = false;
    n_ = n;
    ++revision_;
  }

  /// SGD step on the bordered factor:
  ///   G = K' [A;0] (q q^T + (lambda/n) I) - k'(x) q^T,  A <- [A;0] - mu G
  /// where K' and k' range over the support with x appended.
  void nonparametric_update(const Vec& x, const FeatureVector& q, double mu) {
    check_dim(x);
    if (q.size() != rank_) throw std::invalid_argument("feature vector has wrong rank");
    const std::int64_t n = n_ + 1;
    const Vec k = kernel_vector(spec_, support_, x);
    const double kxx = self_kernel(spec_, x);
    const Vec u = A_.view().transpose() * k;
    ensure_w();

    const Eigen::Index s = support_size();
    // K' [A;0] = [K_S A; k^T A] = [W; u^T]
    Mat P0(s + 1, rank_);
    P0.topRows(s) = W_.view();
    P0.row(s) = u.transpose();
    Vec kf(s + 1);
    kf.head(s) = k;
    kf[s] = kxx;

    // G = (P0 q - kf) q^T + (lambda/n) P0
    const Vec g = P0 * q - kf;
    Mat A_next = -mu * (lambda_ / static_cast<double>(n)) * P0;
    A_next.topRows(s) += A_.view();
    A_next.noalias() -= mu * (g * q.transpose());

    admit(x, k, kxx);
    A_.append_row();
    A_.view() = A_next;
    refresh_w_product();
    C_ = A_.view().transpose() * W_.view();
    C_ = 0.5 * (C_ + C_.transpose()).eval();
    m_valid_ = false;
    n_ = n;
    ++revision_;
  }

  /// Counts a censored sample: n advances, state otherwise untouched.
  void bump_counter() { ++n_; }

  void degrade_recency(double beta) {
    for (double& e : eta_) e *= beta;
  }

  void remove_support(Eigen::Index i) {
    if (i < 0 || i >= support_size()) throw std::out_of_range("support index out of range");
    if (support_size() == 1) throw std::invalid_argument("cannot remove the last support vector");
    ensure_w();
    const Vec a_i = A_.view().row(i).transpose();
    W_.view().noalias() -= K_.view().col(i) * a_i.transpose();
    W_.remove_row(i);
    A_.remove_row(i);
    K_.remove(i);
    support_.erase(support_.begin() + i);
    eta_.erase(eta_.begin() + i);
    if (lift_ && i < lift_cols_.rows()) {
      lift_cols_.remove_row(i);
      if (i < lift_synced_to_) --lift_synced_to_;
    }
    C_ = A_.view().transpose() * W_.view();
    C_ = 0.5 * (C_ + C_.transpose()).eval();
    m_valid_ = false;
    ++revision_;
  }

  /// K_S * X. Large gaussian supports on low-dimensional data use an exact
  /// truncated Mercer factorization of the kernel instead of streaming the
  /// stored Gram; everything else multiplies the Gram directly.
  Mat gram_times(const Mat& X) const {
    if (X.rows() != support_size()) throw std::invalid_argument("gram_times: row mismatch");
    if (lift_usable()) {
      sync_lift();
      if (lift_) {
        const auto F = lift_cols_.view();  // |S| x m, rows are feature vectors
        return F * (F.transpose() * X);
      }
    }
    return K_.view() * X;
  }

 private:
  void check_dim(const Vec& x) const {
    if (x.size() != support_.front().size())
      throw std::invalid_argument("sample dimension does not match the support");
  }

  void admit(const Vec& x, const Vec& k, double kxx) {
    K_.border(k, kxx);
    support_.push_back(x);
    eta_.push_back(1.0);
    max_sqnorm_ = std::max(max_sqnorm_, x.squaredNorm());
  }

  void refresh_inverse() const {
    if (m_valid_) return;
    Mat shifted = C_ + lambda_ * Mat::Identity(rank_, rank_);
    Eigen::LLT<Mat> llt(shifted);
    if (llt.info() != Eigen::Success) {
      const double jitter = 1e-12 * shifted.trace() / rank_;
      shifted.diagonal().array() += jitter;
      llt.compute(shifted);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("singular feature system; increase lambda");
    }
    M_ = llt.solve(Mat::Identity(rank_, rank_));
    m_valid_ = true;
  }

  void ensure_w() {
    if (w_valid_) return;
    refresh_w_product();
  }

  void refresh_w_product() {
    if (W_.rows() != support_size()) W_.resize_rows(support_size());
    W_.view() = gram_times(Mat(A_.view()));
    w_valid_ = true;
  }

  bool lift_usable() const {
    if (spec_.family != KernelFamily::gaussian) return false;
    const Eigen::Index dim = support_.front().size();
    if (dim > 6) return false;
    if (support_size() < 256) return false;
    const double z = 2.0 * max_sqnorm_ / spec_.gamma;
    std::int64_t m = 0;
    if (lift_ && z <= lift_->z_cap()) {
      m = lift_->size();
    } else {
      const int deg = detail::TaylorFeatureMap::needed_degree(1.5 * z, 1e-13);
      if (deg < 0) return false;
      m = detail::TaylorFeatureMap::monomial_count(static_cast<int>(dim), deg);
    }
    return m <= 1024 && 2 * m < support_size();
  }

  void sync_lift() const {
    const double z = 2.0 * max_sqnorm_ / spec_.gamma;
    if (!lift_ || z > lift_->z_cap()) {
      lift_.emplace(spec_.gamma, static_cast<int>(support_.front().size()), 1.5 * z);
      lift_cols_.reset(support_size(), lift_->size());
      lift_synced_to_ = 0;
    }
    while (lift_cols_.rows() < support_size()) lift_cols_.append_row();
    for (Eigen::Index i = lift_synced_to_; i < support_size(); ++i)
      lift_cols_.view().row(i) = lift_->features(support_[static_cast<std::size_t>(i)]).transpose();
    lift_synced_to_ = support_size();
  }

  KernelSpec spec_;
  int rank_;
  double lambda_;
  std::int64_t n_ = 0;
  std::uint64_t revision_ = 0;

  std::vector<Vec> support_;
  std::vector<double> eta_;
  detail::GrowMat A_;
  detail::GrowSquare K_;
  detail::GrowMat W_;  // K_S * A
  bool w_valid_ = false;
  Mat C_;              // A^T K_S A
  mutable Mat M_;      // (C + lambda I)^-1
  mutable bool m_valid_ = false;

  double max_sqnorm_ = 0.0;
  mutable std::optional<detail::TaylorFeatureMap> lift_;
  mutable detail::GrowMat lift_cols_;
  mutable Eigen::Index lift_synced_to_ = 0;
};

/// Eq. (5)-style objective evaluated from a precomputed Gram.
inline double objective_from_gram(const Mat& K, const Mat& A, const Mat& Q, double lambda) {
  const Eigen::Index n = K.rows();
  if (A.rows() != n || Q.cols() != n || A.cols() != Q.rows())
    throw std::invalid_argument("objective: inconsistent shapes");
  const Mat KA = K * A;
  const Mat C = A.transpose() * KA;
  const double fit = K.trace() - 2.0 * (KA.array() * Q.transpose().array()).sum() +
                     (C.array() * (Q * Q.transpose()).array()).sum();
  const double reg = C.trace() + Q.squaredNorm();
  return (fit + lambda * reg) / (2.0 * static_cast<double>(n));
}

inline double objective(const std::vector<Vec>& xs, const Mat& A, const Mat& Q,
                        const KernelSpec& spec, double lambda) {
  return objective_from_gram(kernel_matrix(spec, xs), A, Q, lambda);
}

struct BkfeResult {
  Mat A;                          // N x r subspace factor
  Mat Q;                          // r x N projection coefficients
  std::vector<double> objective_trace;
  bool converged = false;
  int iterations = 0;
};

/// Batch solver alternating the closed-form updates
///   Q = (A^T K A + lambda I)^-1 A^T K,  A = Q^T (Q Q^T + lambda I)^-1
/// until the objective changes by less than tol.
inline BkfeResult batch_bkfe(const std::vector<Vec>& xs, const KernelSpec& spec, int rank,
                             double lambda, int max_iter, double tol, std::uint64_t seed = 0) {
  if (xs.empty()) throw std::invalid_argument("batch_bkfe requires N >= 1");
  if (rank < 1 || max_iter < 1) throw std::invalid_argument("batch_bkfe requires rank >= 1, max_iter >= 1");
  if (!(lambda > 0.0)) throw std::invalid_argument("batch_bkfe requires lambda > 0");
  const Eigen::Index n = static_cast<Eigen::Index>(xs.size());
  const Mat K = kernel_matrix(spec, xs);

  BkfeResult res;
  res.A.resize(n, rank);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < rank; ++j) res.A(i, j) = 0.1 * unif(rng);

  const Mat I_r = Mat::Identity(rank, rank);
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iter; ++it) {
    const Mat KA = K * res.A;
    const Mat C = res.A.transpose() * KA;
    res.Q = Eigen::LLT<Mat>(C + lambda * I_r).solve(KA.transpose());
    res.A = Eigen::LLT<Mat>(res.Q * res.Q.transpose() + lambda * I_r).solve(res.Q).transpose();
    const double obj = objective_from_gram(K, res.A, res.Q, lambda);
    if (!std::isfinite(obj)) throw std::runtime_error("batch solver diverged");
    res.objective_trace.push_back(obj);
    res.iterations = it;
    if (std::abs(prev - obj) < tol) {
      res.converged = true;
      break;
    }
    prev = obj;
  }
  return res;
}

}  // namespace okfeb
