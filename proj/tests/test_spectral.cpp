#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "test_util.hpp"

using namespace qdiff;

TEST_SUITE_BEGIN("spectral");

TEST_CASE("Schur complement annihilates the delta_0 direction") {
  test::R1System s = test::make_r1();
  SpectralAnalyzer an(s.model, s.h, s.v);
  for (double p : {0.0, 0.7, 1.9}) {
    Matrix G = an.schur_complement({p}, cplx(0, 0));
    CHECK(G.col(0).norm() < 1e-12);
    CHECK(G.row(0).norm() < 1e-12);
  }
}

TEST_CASE("coercivity of Re Gamma on the complement of delta_0") {
  test::R1System s = test::make_r1();
  SpectralAnalyzer an(s.model, s.h, s.v);
  const SystemConstants& c = an.constants();
  const double denom = 1.0 + c.T * (2 * c.hhat_sup + 2 * c.vtilde_norm);
  const double bound = (1.0 / c.T) * c.chi * c.chi / (denom * denom);
  for (double p : {0.0, 0.5, 1.2, 2.0}) {
    Matrix G = an.schur_complement({p}, cplx(0, 0));
    Matrix Re = 0.5 * (G + Matrix(G.adjoint()));
    Matrix sub = Re.bottomRightCorner(2, 2);
    Eigen::SelfAdjointEigenSolver<Matrix> es(sub);
    CHECK(es.eigenvalues().minCoeff() >= bound - 1e-12);
  }
}

TEST_CASE("degenerate potential gives a vanishing Schur complement") {
  MarkovModel m = build_cyclic_walk(LatticeConfig(1, 3), 1.0);
  PotentialAssignment v = potential_from_cell(CellFunction({3, 3, 3}), m);
  HoppingKernel h;
  h.set({1}, cplx(1, 0));
  h.set({-1}, cplx(1, 0));
  SpectralAnalyzer an(m, h, v);
  Matrix G = an.schur_complement({0.4}, cplx(0, 0));
  CHECK(G.cwiseAbs().maxCoeff() < 1e-14);
  // and the zero eigenvalue degenerates as the expected failure mode
  CHECK_THROWS_AS(an.spectrum_split({0.4}), DegenerateZero);
}

TEST_CASE("spectrum splits into the zero mode and a gapped rest") {
  test::R1System s = test::make_r1();
  SpectralAnalyzer an(s.model, s.h, s.v);
  auto split = an.spectrum_split({0.0});
  CHECK(split.zero_multiplicity == 1);
  CHECK(split.delta_numeric > an.gap_bound());
  // sweep: the p-independent bound holds across the grid
  for (const auto& p : p_grid(s.cfg, 64)) {
    auto sp = an.spectrum_split(p);
    CHECK(sp.zero_multiplicity == 1);
    CHECK(sp.delta_numeric >= an.gap_bound());
  }
}

TEST_CASE("eigen branch at k = 0 is the stationary state") {
  test::R1System s = test::make_r1();
  SpectralAnalyzer an(s.model, s.h, s.v);
  auto br = an.eigen_branch({0.0}, {0.9});
  CHECK(std::abs(br.E) < 1e-12);
  // right eigenvector is delta_0 x sqrt(mu) up to phase; the phase fix makes
  // the overlap real positive
  Vector d0 = Vector::Zero(9);
  for (int w = 0; w < 3; ++w) d0(w) = std::sqrt(1.0 / 3);
  CHECK((br.phi_right - d0).norm() < 1e-9);
  // Q is the orthogonal projector onto it
  CHECK((br.Q - d0 * d0.adjoint()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("eigen branch properties for small k") {
  test::R1System s = test::make_r1();
  SpectralAnalyzer an(s.model, s.h, s.v);
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> k{0.3 * (rng.uniform() - 0.5)};
    std::vector<double> p{2 * M_PI / 3 * rng.uniform()};
    auto br = an.eigen_branch(k, p);
    CHECK(br.E.real() >= -1e-12);
    CHECK((br.Q * br.Q - br.Q).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::JacobiSVD<Matrix> svd(br.Q);
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()(i) > 1e-8) ++rank;
    CHECK(rank == 1);
  }
}

TEST_CASE("branch eigenvalue follows the quadratic model to higher order") {
  test::R1System s = test::make_r1();
  SpectralAnalyzer an(s.model, s.h, s.v);
  std::vector<double> p{0.4};
  double H = an.hessian_closed_form(p).H(0, 0);
  auto residual = [&](double kk) {
    cplx E = an.eigen_branch({kk}, p).E;
    return std::abs(E - 0.5 * H * kk * kk);
  };
  double r1 = residual(0.1), r2 = residual(0.05), r3 = residual(0.025);
  // log-slope across the halvings: at least third order
  double slope = std::log(r1 / r3) / std::log(4.0);
  CHECK(slope > 2.8);
  CHECK(r2 < r1);
}

TEST_CASE("Riesz projection from the contour matches the eigenpair") {
  test::R1System s = test::make_r1();
  SpectralAnalyzer an(s.model, s.h, s.v);
  for (auto [kk, pp] : std::vector<std::pair<double, double>>{
           {0.0, 0.4}, {0.1, 0.4}, {0.15, 1.6}}) {
    auto br = an.eigen_branch({kk}, {pp});
    Matrix Qc = an.riesz_projection_contour({kk}, {pp});
    double diff = Eigen::JacobiSVD<Matrix>(Qc - br.Q).singularValues()(0);
    CHECK(diff < 1e-8);
  }
}

TEST_CASE("closed-form Hessian agrees with finite differences") {
  test::R1System s = test::make_r1();
  SpectralAnalyzer an(s.model, s.h, s.v);
  for (double p : {0.0, 0.3, 1.0, 1.8}) {
    auto cf = an.hessian_closed_form({p});
    auto fd = an.hessian_fd({p});
    double rel = std::abs(cf.H(0, 0) - fd.H(0, 0)) / std::abs(cf.H(0, 0));
    CHECK(rel < 1e-5);
    CHECK(fd.grad_norm < 1e-8);
    CHECK(cf.imag_residual < 1e-10);
    // both displayed forms agree when no hop folds to the origin
    CHECK(cf.route_diff < 1e-9);
  }
}

TEST_CASE("raw finite differences converge at second order") {
  test::R1System s = test::make_r1();
  SpectralAnalyzer an(s.model, s.h, s.v);
  std::vector<double> p{0.7};
  double exact = an.hessian_closed_form(p).H(0, 0);
  double e1 = std::abs(an.hessian_fd(p, 0.02, false).H(0, 0) - exact);
  double e2 = std::abs(an.hessian_fd(p, 0.01, false).H(0, 0) - exact);
  double ratio = e1 / e2;
  CHECK(ratio > 3.0);
  CHECK(ratio < 5.5);
}

TEST_CASE("fold-to-origin hopping shows up in the imaginary residual") {
  // d=1, N=2 with a range-2 hop: [2]_2 = 0 activates the diagonal
  // second-derivative term i sum z^2 h(z) e^{ipz}.  For Hermitian kernels
  // that term is purely imaginary, so the real parts of both routes still
  // agree; the branch curvature picks up a genuine imaginary component.
  LatticeConfig cfg(1, 2);
  MarkovModel m = build_cyclic_walk(cfg, 1.0);
  PotentialAssignment v = potential_from_cell(CellFunction({1.0, -1.0}), m);
  HoppingKernel h;
  h.set({1}, cplx(0, 1));
  h.set({-1}, cplx(0, -1));
  h.set({2}, cplx(0.3, 0));
  h.set({-2}, cplx(0.3, 0));
  SpectralAnalyzer an(m, h, v);
  std::vector<double> p{0.9};
  auto cf = an.hessian_closed_form(p);
  CHECK(cf.route_diff < 1e-12);      // real parts coincide
  CHECK(cf.imag_residual > 1e-2);    // the fold is flagged
  auto fd = an.hessian_fd(p);
  CHECK(std::abs(cf.H(0, 0) - fd.H(0, 0)) <
        1e-5 * std::max(1.0, std::abs(cf.H(0, 0))));
  // FD sees the same imaginary curvature
  CHECK(std::abs(cf.imag_residual - fd.imag_norm) <
        1e-4 * std::max(1.0, cf.imag_residual));
}

TEST_CASE("diffusion profile on the reference system") {
  test::R1System s = test::make_r1();
  SpectralAnalyzer an(s.model, s.h, s.v);
  auto prof = an.diffusion_profile(p_grid(s.cfg, 64));
  for (const auto& D : prof.D) {
    CHECK(D(0, 0) > 0.0);
  }
  for (double dn : prof.delta_numeric) CHECK(dn >= prof.delta_bound);
}

TEST_CASE("profile is continuous: trig interpolation matches refinement") {
  test::R1System s = test::make_r1();
  SpectralAnalyzer an(s.model, s.h, s.v);
  const int G = 32;
  auto coarse = an.diffusion_profile(p_grid(s.cfg, G));
  auto fine = an.diffusion_profile(p_grid(s.cfg, 2 * G));
  std::vector<double> samples(G);
  for (int i = 0; i < G; ++i) samples[i] = coarse.D[i](0, 0);
  double residual = 0.0;
  for (int i = 0; i < 2 * G; ++i) {
    double interp = trig_interp_1d(samples, fine.grid[i][0], 2 * M_PI / 3);
    residual = std::max(residual, std::abs(interp - fine.D[i](0, 0)));
  }
  CHECK(residual < 1e-6);
}

TEST_CASE("degenerate hopping surfaces as a singular diffusion matrix") {
  // axis-only hopping in d = 2: no transport along the second axis
  LatticeConfig cfg(2, 2);
  MarkovModel m = build_cyclic_walk(cfg, 1.0);
  PotentialAssignment v =
      potential_from_cell(CellFunction({1.0, 0.0, -1.0, 0.0}), m);
  HoppingKernel h;
  h.set({1, 0}, cplx(0, 1));
  h.set({-1, 0}, cplx(0, -1));
  SpectralAnalyzer an(m, h, v);
  CHECK_THROWS_AS(an.diffusion_profile({{0.3, 0.4}}), NotPositiveDefinite);
}

TEST_CASE("semigroup decay rate respects the measured gap") {
  test::R1System s = test::make_r1();
  SpectralAnalyzer an(s.model, s.h, s.v);
  auto chk = an.decay_rate_check({0.0}, {0.5}, {2.0, 4.0, 8.0});
  CHECK(chk.rate >= 0.95 * chk.delta_numeric);
  // at t = 0 the projected semigroup norm is ||1 - Q|| exactly
  auto br = an.eigen_branch({0.0}, {0.5});
  Matrix P = Matrix::Identity(9, 9) - br.Q;
  Matrix E0 = Matrix::Identity(9, 9);
  double n0 = Eigen::JacobiSVD<Matrix>(E0 * P).singularValues()(0);
  double np = Eigen::JacobiSVD<Matrix>(P).singularValues()(0);
  CHECK(n0 == doctest::Approx(np).epsilon(1e-12));
}

TEST_CASE("projected semigroup obeys the rank-one identity") {
  test::R1System s = test::make_r1();
  SpectralAnalyzer an(s.model, s.h, s.v);
  auto br = an.eigen_branch({0.12}, {0.8});
  Matrix Lh = an.L_hat({0.12}, {0.8});
  for (double t : {1.0, 3.0}) {
    Matrix M = br.Q * ((-t * Lh).exp()) * br.Q;
    double got = Eigen::JacobiSVD<Matrix>(M).singularValues()(0);
    double qn = Eigen::JacobiSVD<Matrix>(br.Q).singularValues()(0);
    double want = std::exp(-t * br.E.real()) * qn;
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("trigonometric interpolation is exact on band-limited data") {
  // samples of cos(3 theta) + 0.5 sin(theta) on 16 nodes
  const int G = 16;
  std::vector<double> samples(G);
  for (int j = 0; j < G; ++j) {
    double th = 2 * M_PI * j / G;
    samples[j] = std::cos(3 * th) + 0.5 * std::sin(th);
  }
  Rng rng(53);
  for (int trial = 0; trial < 40; ++trial) {
    double th = 2 * M_PI * rng.uniform();
    double want = std::cos(3 * th) + 0.5 * std::sin(th);
    CHECK(trig_interp_1d(samples, th) == doctest::Approx(want).epsilon(1e-12));
  }
  // tensor version reproduces a 2d band-limited field
  const int n = 8;
  std::vector<double> field(n * n);
  auto f2 = [](double a, double b) { return std::sin(a) * std::cos(2 * b) + 0.25; };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      field[i + n * j] = f2(2 * M_PI * i / n, 2 * M_PI * j / n);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> th{2 * M_PI * rng.uniform(), 2 * M_PI * rng.uniform()};
    CHECK(trig_interp(field, 2, n, th, 2 * M_PI) ==
          doctest::Approx(f2(th[0], th[1])).epsilon(1e-12));
  }
}

TEST_CASE("d2n2 kernel keeps the diffusion matrix positive definite") {
  test::D2System s = test::make_d2n2();
  SpectralAnalyzer an(s.model, s.h, s.v);
  for (const auto& p : p_grid(s.cfg, 8)) {
    auto split = an.spectrum_split(p);
    CHECK(split.zero_multiplicity == 1);
    RMatrix D = 0.5 * an.hessian_closed_form(p).H;
    Eigen::SelfAdjointEigenSolver<RMatrix> es(D);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    CHECK((D - D.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
  // Hessian cross-validation in d = 2
  auto cf = an.hessian_closed_form({0.6, 1.1});
  auto fd = an.hessian_fd({0.6, 1.1});
  CHECK((cf.H - fd.H).cwiseAbs().maxCoeff() <
        1e-5 * cf.H.cwiseAbs().maxCoeff());
  CHECK(cf.route_diff < 1e-9);
}

TEST_SUITE_END();
