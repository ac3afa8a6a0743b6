#include <catch2/catch_amalgamated.hpp>

#include "okfeb/data.hpp"
#include "okfeb/subspace.hpp"
#include "oracles.hpp"

using namespace okfeb;

namespace {

std::vector<Vec> sphere_points(int n, double sigma, std::uint64_t seed) {
  std::vector<Vec> xs;
  for (const auto& s : gen_two_spheres(n, sigma, seed)) xs.push_back(s.x);
  return xs;
}

SubspaceModel random_model(std::mt19937_64& g, const KernelSpec& spec, int support, int rank,
                           double lambda, int dim = 3) {
  SubspaceModel model(spec, oracle::random_vec(g, dim), rank, lambda, InitKind::random, g());
  std::uniform_real_distribution<double> mu(0.01, 0.2);
  while (model.support_size() < support) {
    const Vec x = oracle::random_vec(g, dim);
    const Vec q = model.extract_feature(x);
    model.nonparametric_update(x, q, mu(g));
  }
  return model;
}

}  // namespace

TEST_CASE("extract_feature collapses to the scalar closed form") {
  KernelSpec spec{KernelFamily::gaussian, 100.0};
  Vec x0(3);
  x0 << 0.2, -1.0, 0.4;
  SubspaceModel model(spec, x0, 1, 0.5, InitKind::ones);
  const Vec q = model.extract_feature(x0);
  REQUIRE(q.size() == 1);
  REQUIRE(q[0] == Catch::Approx(1.0 / 1.5).epsilon(1e-12));
}

TEST_CASE("huge regularization crushes the feature") {
  KernelSpec spec{KernelFamily::gaussian, 2.0};
  auto g = oracle::rng(31);
  SubspaceModel model(spec, oracle::random_vec(g, 3), 3, 1e9, InitKind::ones);
  const Vec q = model.extract_feature(oracle::random_vec(g, 3));
  REQUIRE(q.norm() <= 1e-8);
}

TEST_CASE("extract_feature matches the dense-inverse oracle") {
  KernelSpec spec{KernelFamily::gaussian, 2.0};
  auto g = oracle::rng(32);
  const auto model = random_model(g, spec, 6, 3, 1e-3);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec x = oracle::random_vec(g, 3);
    const Vec got = model.extract_feature(x);
    const Vec want =
        oracle::extract_feature_dense(spec, model.support(), Mat(model.A()), model.lambda(), x);
    REQUIRE((got - want).norm() <= 1e-9);
  }
}

TEST_CASE("ls_fit of the zero feature is the self kernel") {
  KernelSpec spec{KernelFamily::gaussian, 100.0};
  auto g = oracle::rng(33);
  const auto model = random_model(g, spec, 4, 2, 1e-3);
  REQUIRE(model.ls_fit(oracle::random_vec(g, 3), Vec::Zero(2)) == Catch::Approx(1.0));
}

TEST_CASE("perfect fit has zero ls_fit") {
  KernelSpec spec{KernelFamily::gaussian, 100.0};
  Vec x0(3);
  x0 << 1.0, 0.0, -0.5;
  SubspaceModel model(spec, x0, 1, 0.5, InitKind::ones);
  Vec q(1);
  q << 1.0;
  REQUIRE(model.ls_fit(x0, q) == 0.0);
}

TEST_CASE("ls_fit matches the Gram-expansion oracle") {
  KernelSpec spec{KernelFamily::gaussian, 2.0};
  auto g = oracle::rng(34);
  const auto model = random_model(g, spec, 5, 2, 1e-2);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec x = oracle::random_vec(g, 3);
    const Vec q = model.extract_feature(x);
    const double want =
        oracle::ls_fit_gram_expansion(spec, model.support(), Mat(model.A()), q, x);
    REQUIRE(model.ls_fit(x, q) == Catch::Approx(want).margin(1e-10));
  }
}

TEST_CASE("feature is the regularized projection minimizer") {
  KernelSpec spec{KernelFamily::gaussian, 2.0};
  auto g = oracle::rng(35);
  const auto model = random_model(g, spec, 6, 3, 1e-2);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec x = oracle::random_vec(g, 3);
    const Vec q = model.extract_feature(x);
    const double base = model.ls_fit(x, q) + model.lambda() * q.squaredNorm();
    Vec delta(3);
    for (int d = 0; d < 3; ++d) delta[d] = normal(g);
    delta *= 1e-3 / delta.norm();
    const Vec qp = q + delta;
    const double perturbed = model.ls_fit(x, qp) + model.lambda() * qp.squaredNorm();
    REQUIRE(perturbed >= base - 1e-15);
  }
}

TEST_CASE("parametric update with zero step appends a zero row") {
  KernelSpec spec{KernelFamily::gaussian, 2.0};
  auto g = oracle::rng(36);
  SubspaceModel model(spec, oracle::random_vec(g, 3), 3, 0.0, InitKind::ones);
  const Mat before = model.A();
  const Vec x = oracle::random_vec(g, 3);
  const Vec q = model.extract_feature(x);
  model.parametric_update(x, q, 0.0);
  REQUIRE(model.A().rows() == 2);
  REQUIRE(model.A().cols() == 3);
  REQUIRE(model.A().topRows(1) == before);
  REQUIRE(model.A().row(1).isZero());
  REQUIRE(model.sample_count() == 2);
  REQUIRE(model.etas().back() == 1.0);
}

TEST_CASE("parametric update matches the hand-evaluated block formula") {
  KernelSpec spec{KernelFamily::gaussian, 2.0};
  auto g = oracle::rng(37);
  const int r = 4;
  const Vec x0 = oracle::random_vec(g, 3);
  SubspaceModel model(spec, x0, r, 1e-3, InitKind::ones);
  const Vec x = oracle::random_vec(g, 3);
  const Vec q = model.extract_feature(x);
  const double mu = 0.1;

  // Hand evaluation at n = 2: top block A(I - mu(q q^T + lambda/2 I)), bottom mu q^T.
  const Mat A_old = model.A();
  const Mat top =
      A_old - mu * A_old * (q * q.transpose() + (1e-3 / 2.0) * Mat::Identity(r, r));
  model.parametric_update(x, q, mu);
  REQUIRE(model.sample_count() == 2);
  REQUIRE((Mat(model.A().topRows(1)) - top).cwiseAbs().maxCoeff() <= 1e-12);
  REQUIRE((model.A().row(1).transpose() - mu * q).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("nonparametric update with zero step pads the factor") {
  KernelSpec spec{KernelFamily::gaussian, 2.0};
  auto g = oracle::rng(38);
  SubspaceModel model(spec, oracle::random_vec(g, 3), 2, 1e-3, InitKind::random, 1);
  const Mat before = model.A();
  const Vec x = oracle::random_vec(g, 3);
  const Vec q = model.extract_feature(x);
  model.nonparametric_update(x, q, 0.0);
  REQUIRE(model.A().topRows(1) == before);
  REQUIRE(model.A().row(1).isZero());
}

TEST_CASE("nonparametric step matches the dense gradient oracle") {
  KernelSpec spec{KernelFamily::gaussian, 2.0};
  auto g = oracle::rng(39);
  auto model = random_model(g, spec, 3, 2, 1e-2);
  const Vec x = oracle::random_vec(g, 3);
  const Vec q = model.extract_feature(x);
  const double mu = 0.05;
  const std::int64_t n = model.sample_count() + 1;

  // Oracle: build the bordered Gram and evaluate the update directly.
  std::vector<Vec> all = model.support();
  all.push_back(x);
  const Mat K_full = kernel_matrix(spec, all);
  const Vec k_full = kernel_vector(spec, all, x);
  Mat A0(model.A().rows() + 1, model.rank());
  A0.topRows(model.A().rows()) = model.A();
  A0.row(model.A().rows()).setZero();
  const Mat G = K_full * A0 * (q * q.transpose()) - k_full * q.transpose() +
                (model.lambda() / static_cast<double>(n)) * K_full * A0;
  const Mat want = A0 - mu * G;

  model.nonparametric_update(x, q, mu);
  REQUIRE((Mat(model.A()) - want).cwiseAbs().maxCoeff() <= 1e-12);
  REQUIRE(model.sample_count() == n);
}

TEST_CASE("nonparametric gradient equals lifted gradient under the linear kernel") {
  // With the linear kernel the lift is the identity, so G_n = Phi^T G_bar_n
  // can be checked explicitly, and the nonparametric step is the parametric
  // direction premultiplied by the Gram.
  KernelSpec spec{KernelFamily::linear};
  auto g = oracle::rng(40);
  const int dim = 4, r = 2;
  auto model = random_model(g, spec, 5, r, 1e-2, dim);
  const Vec x = oracle::random_vec(g, dim);
  const Vec q = model.extract_feature(x);
  const std::int64_t n = model.sample_count() + 1;

  std::vector<Vec> all = model.support();
  all.push_back(x);
  Mat A0(model.A().rows() + 1, r);
  A0.topRows(model.A().rows()) = model.A();
  A0.row(model.A().rows()).setZero();

  Mat Phi(dim, static_cast<Eigen::Index>(all.size()));
  for (std::size_t i = 0; i < all.size(); ++i) Phi.col(static_cast<Eigen::Index>(i)) = all[i];
  const Mat L_bar = Phi * A0;
  const Mat G_bar = -(x - L_bar * q) * q.transpose() +
                    (model.lambda() / static_cast<double>(n)) * L_bar;

  const Mat K_full = kernel_matrix(spec, all);
  const Vec k_full = kernel_vector(spec, all, x);
  const Mat G = K_full * A0 * (q * q.transpose()) - k_full * q.transpose() +
                (model.lambda() / static_cast<double>(n)) * K_full * A0;

  REQUIRE((G - Phi.transpose() * G_bar).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("gradient matches central finite differences under the linear kernel") {
  KernelSpec spec{KernelFamily::linear};
  auto g = oracle::rng(41);
  const int dim = 3, r = 2;
  auto model = random_model(g, spec, 4, r, 5e-2, dim);
  const Vec x = oracle::random_vec(g, dim);
  const Vec q = model.extract_feature(x);
  const std::int64_t n = model.sample_count() + 1;

  std::vector<Vec> all = model.support();
  all.push_back(x);
  const Mat K_full = kernel_matrix(spec, all);
  const Vec k_full = kernel_vector(spec, all, x);
  Mat A0(model.A().rows() + 1, r);
  A0.topRows(model.A().rows()) = model.A();
  A0.row(model.A().rows()).setZero();

  // Instantaneous cost 0.5|phi(x) - Phi A q|^2 + (lambda/2n) tr(A^T K A).
  const auto cost = [&](const Mat& A) {
    const double fit = k_full[k_full.size() - 1] - 2.0 * k_full.dot(A * q) +
                       q.dot(A.transpose() * K_full * A * q);
    return 0.5 * fit +
           (model.lambda() / (2.0 * static_cast<double>(n))) * (A.transpose() * K_full * A).trace();
  };
  const Mat G = K_full * A0 * (q * q.transpose()) - k_full * q.transpose() +
                (model.lambda() / static_cast<double>(n)) * K_full * A0;
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < A0.rows(); ++i)
    for (Eigen::Index j = 0; j < r; ++j) {
      Mat Ap = A0, Am = A0;
      Ap(i, j) += h;
      Am(i, j) -= h;
      const double fd = (cost(Ap) - cost(Am)) / (2.0 * h);
      REQUIRE(G(i, j) == Catch::Approx(fd).margin(1e-5));
    }
}

TEST_CASE("cache coherence after updates") {
  KernelSpec spec{KernelFamily::gaussian, 2.0};
  auto g = oracle::rng(42);
  auto model = random_model(g, spec, 8, 3, 1e-3);
  REQUIRE(model.cache_valid() == false);
  (void)model.extract_feature(oracle::random_vec(g, 3));
  REQUIRE(model.cache_valid());
  const Mat K = kernel_matrix(spec, model.support());
  const Mat C = Mat(model.A()).transpose() * K * Mat(model.A());
  const Mat M_scratch =
      (C + model.lambda() * Mat::Identity(model.rank(), model.rank())).inverse();
  REQUIRE((model.gram_factor_inverse() - M_scratch).cwiseAbs().maxCoeff() <= 1e-8);
  // K_S itself must match a from-scratch Gram exactly.
  REQUIRE(Mat(model.K_S()) == K);
}

TEST_CASE("objective of the zero factor is half the mean self kernel") {
  KernelSpec spec{KernelFamily::gaussian, 100.0};
  const auto xs = sphere_points(16, 0.1, 50);
  const Mat A = Mat::Zero(16, 3);
  const Mat Q = Mat::Zero(3, 16);
  REQUIRE(objective(xs, A, Q, spec, 0.5) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("objective vanishes for an exact representation") {
  KernelSpec spec{KernelFamily::linear};
  auto g = oracle::rng(51);
  const int n = 4;
  std::vector<Vec> xs;
  Mat X(n, n);
  do {
    xs = oracle::random_points(g, n, n);
    for (int i = 0; i < n; ++i) X.row(i) = xs[static_cast<std::size_t>(i)].transpose();
  } while (std::abs(X.determinant()) < 1e-3);
  // With A = X^-T (so Phi A = I in the lifted space) and Q = X^T, Phi A Q = Phi.
  const Mat A = X.inverse().transpose();
  const Mat Q = X.transpose();
  REQUIRE(objective(xs, A, Q, spec, 0.0) == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("objective matches the Gram-expansion oracle") {
  KernelSpec spec{KernelFamily::gaussian, 2.0};
  auto g = oracle::rng(52);
  const auto xs = oracle::random_points(g, 7, 3);
  const Mat A = oracle::random_mat(g, 7, 2);
  const Mat Q = oracle::random_mat(g, 2, 7);
  const double want = oracle::objective_gram_expansion(spec, xs, A, Q, 0.05);
  REQUIRE(objective(xs, A, Q, spec, 0.05) == Catch::Approx(want).margin(1e-10));
}

TEST_CASE("batch solver fits a single lifted point") {
  KernelSpec spec{KernelFamily::gaussian, 100.0};
  Vec x0(3);
  x0 << 0.5, 0.5, 0.0;
  const auto res = batch_bkfe({x0}, spec, 1, 1e-6, 200, 1e-14, 1);
  // The objective retains the (tiny) regularizer; the fit itself vanishes.
  REQUIRE(res.objective_trace.back() <= 1e-2);
  const double aq = res.A(0, 0) * res.Q(0, 0);
  const double fit = 1.0 - 2.0 * aq + aq * aq;
  REQUIRE(fit <= 1e-6);
}

TEST_CASE("full-rank batch fit is near exact") {
  KernelSpec spec{KernelFamily::gaussian, 100.0};
  const auto xs = sphere_points(8, 0.1, 53);
  const auto res = batch_bkfe(xs, spec, 8, 1e-6, 500, 1e-15, 2);
  double mean_fit = 0.0;
  const Mat K = kernel_matrix(spec, xs);
  for (int i = 0; i < 8; ++i) {
    const Vec q = res.Q.col(i);
    const Vec k = K.col(i);
    mean_fit += K(i, i) - 2.0 * k.dot(res.A * q) + q.dot(res.A.transpose() * K * res.A * q);
  }
  mean_fit /= 8.0;
  REQUIRE(mean_fit <= 1e-3);
}

TEST_CASE("batch solver on two-sphere data converges within the paper budget") {
  KernelSpec spec{KernelFamily::gaussian, 100.0};
  const auto xs = sphere_points(200, 0.1, 54);
  // 1% relative objective stagnation within the I_max = 50 budget.
  const auto res = batch_bkfe(xs, spec, 7, 1e-3, 50, 2e-5, 3);
  REQUIRE(res.converged);
  REQUIRE(res.iterations <= 50);
  for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
    REQUIRE(res.objective_trace[i] <= res.objective_trace[i - 1] + 1e-10);
}

TEST_CASE("batch objective trace is monotone on random instances") {
  auto g = oracle::rng(55);
  std::uniform_int_distribution<int> n_dist(3, 24);
  std::uniform_int_distribution<int> r_dist(1, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = n_dist(g);
    const auto xs = oracle::random_points(g, n, 3);
    KernelSpec spec = (trial % 2 == 0) ? KernelSpec{KernelFamily::gaussian, 2.0}
                                       : KernelSpec{KernelFamily::linear};
    const auto res = batch_bkfe(xs, spec, r_dist(g), 0.05, 60, 1e-12, g());
    for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
      REQUIRE(res.objective_trace[i] <= res.objective_trace[i - 1] + 1e-10);
  }
}

TEST_CASE("step schedules") {
  Vec q(2);
  q << 3.0, 4.0;
  REQUIRE(StepSchedule{StepMode::harmonic, 2.0}.step(4, q) == 0.5);
  REQUIRE(StepSchedule{StepMode::harmonic_sq, 8.0}.step(2, q) == 2.0);
  REQUIRE(StepSchedule{StepMode::inv_feature_norm, 1.0}.step(9, q) == Catch::Approx(0.2));
  REQUIRE(StepSchedule{StepMode::constant, 0.25}.step(100, q) == 0.25);
  REQUIRE(StepSchedule{StepMode::harmonic, 1.0}.step(1, Vec::Zero(2)) > 0.0);
}

TEST_CASE("incremental state stays coherent over long mixed runs") {
  KernelSpec spec{KernelFamily::gaussian, 100.0};
  const auto xs = sphere_points(400, 0.1, 56);
  SubspaceModel model(spec, xs[0], 5, 1e-3, InitKind::ones);
  StepSchedule sched{StepMode::harmonic, 1.0};
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const Vec q = model.extract_feature(xs[i]);
    const double mu = sched.step(model.sample_count() + 1, q);
    if (i % 2 == 0)
      model.parametric_update(xs[i], q, mu);
    else
      model.nonparametric_update(xs[i], q, mu);
  }
  const Mat K = kernel_matrix(spec, model.support());
  const Mat C_scratch = Mat(model.A()).transpose() * K * Mat(model.A());
  REQUIRE((model.gram_factor() - C_scratch).cwiseAbs().maxCoeff() <=
          1e-8 * std::max(1.0, C_scratch.cwiseAbs().maxCoeff()));
}
