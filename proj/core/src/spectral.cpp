#include "qdiff/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

namespace qdiff {

namespace {

RMatrix complement_basis(const RVector& u) {
  const int n = static_cast<int>(u.size());
  RVector w = u;
  w(0) += (u(0) >= 0.0 ? 1.0 : -1.0);
  w.normalize();
  RMatrix H = RMatrix::Identity(n, n) - 2.0 * w * w.transpose();
  return H.rightCols(n - 1);
}

double spectral_norm(const Matrix& A) {
  return Eigen::JacobiSVD<Matrix>(A).singularValues()(0);
}

// Composite-trapezoid ladder with Richardson (Romberg) extrapolation for a
// matrix-valued analytic integrand along a straight segment.  Reports
// whether the requested tolerance was met.
Matrix romberg_segment(const std::function<Matrix(cplx)>& f, cplx z0, cplx z1,
                       double tol, bool* converged, int max_level = 7) {
  const cplx dz = z1 - z0;
  std::vector<Matrix> row;
  Matrix f0 = f(z0), f1 = f(z1);
  Matrix T = 0.5 * (f0 + f1);
  long n = 1;
  row.push_back(T);
  Matrix prev = row[0];
  *converged = false;
  for (int level = 1; level <= max_level; ++level) {
    Matrix sum = Matrix::Zero(f0.rows(), f0.cols());
    for (long i = 0; i < n; ++i) {
      double s = (2.0 * i + 1.0) / (2.0 * n);
      sum += f(z0 + s * dz);
    }
    T = 0.5 * T + 0.5 / static_cast<double>(n) * sum;
    n *= 2;
    std::vector<Matrix> next;
    next.push_back(T);
    double factor = 4.0;
    for (const Matrix& r : row) {
      Matrix extrap = (factor * next.back() - r) / (factor - 1.0);
      next.push_back(extrap);
      factor *= 4.0;
    }
    row = std::move(next);
    if (level >= 3 &&
        (row.back() - prev).cwiseAbs().maxCoeff() < tol * std::abs(dz)) {
      *converged = true;
      return dz * row.back();
    }
    prev = row.back();
  }
  return dz * row.back();
}

// Adaptive bisection around the Romberg leaf; handles the resolvent's
// sharp features where the contour passes near the slow eigenvalue.
Matrix adaptive_segment(const std::function<Matrix(cplx)>& f, cplx z0, cplx z1,
                        double tol, int depth = 0) {
  bool ok = false;
  Matrix whole = romberg_segment(f, z0, z1, tol, &ok);
  if (ok || depth >= 12) return whole;
  cplx mid = 0.5 * (z0 + z1);
  return adaptive_segment(f, z0, mid, tol, depth + 1) +
         adaptive_segment(f, mid, z1, tol, depth + 1);
}

}  // namespace

std::vector<std::vector<double>> p_grid(const LatticeConfig& cfg, int n) {
  const double edge = 2.0 * M_PI / cfg.N;
  long total = 1;
  for (int i = 0; i < cfg.d; ++i) total *= n;
  std::vector<std::vector<double>> grid;
  grid.reserve(total);
  std::vector<int> idx(cfg.d, 0);
  for (long c = 0; c < total; ++c) {
    std::vector<double> p(cfg.d);
    for (int i = 0; i < cfg.d; ++i) p[i] = edge * idx[i] / n;
    grid.push_back(p);
    for (int i = 0; i < cfg.d; ++i) {
      if (++idx[i] < n) break;
      idx[i] = 0;
    }
  }
  return grid;
}

double trig_interp_1d(const std::vector<double>& samples, double theta,
                      double period) {
  const int G = static_cast<int>(samples.size());
  const double scale = 2.0 * M_PI / period;  // map to standard torus
  double acc = 0.0;
  for (int j = 0; j < G; ++j) {
    double u = scale * theta - 2.0 * M_PI * j / G;
    u -= 2.0 * M_PI * std::round(u / (2.0 * M_PI));
    double w;
    if (std::abs(u) < 1e-12) {
      w = 1.0;
    } else if (G % 2 == 0) {
      w = std::sin(0.5 * G * u) / (G * std::tan(0.5 * u));
    } else {
      w = std::sin(0.5 * G * u) / (G * std::sin(0.5 * u));
    }
    acc += samples[j] * w;
  }
  return acc;
}

double trig_interp(const std::vector<double>& samples, int d, int n,
                   const std::vector<double>& theta, double period) {
  if (d == 1) return trig_interp_1d(samples, theta[0], period);
  // collapse the last axis first: samples are flattened first-axis fastest
  long block = 1;
  for (int i = 0; i + 1 < d; ++i) block *= n;
  std::vector<double> line(n), reduced(block);
  for (long b = 0; b < block; ++b) {
    for (int j = 0; j < n; ++j) line[j] = samples[b + block * j];
    reduced[b] = trig_interp_1d(line, theta[d - 1], period);
  }
  std::vector<double> sub(theta.begin(), theta.end() - 1);
  return trig_interp(reduced, d - 1, n, sub, period);
}

SpectralAnalyzer::SpectralAnalyzer(const MarkovModel& model,
                                   const HoppingKernel& h,
                                   const PotentialAssignment& v)
    : model_(model), h_(h), v_(v), B_(backward_generator(model)) {
  vol_ = model.lattice.cell_volume();
  M_ = model.M;
  sqmu_ = model.mu.cwiseSqrt();
  Y_ = complement_basis(sqmu_);
  consts_.gamma = B_.gamma;
  consts_.T = B_.T();
  try {
    consts_.chi = chi_constant(model, B_, v);
  } catch (const DegeneratePotential&) {
    consts_.chi = 0.0;  // degenerate systems still expose Gamma = 0 etc.
  }
  consts_.vtilde_norm = v.vtilde_norm();
  consts_.hhat_sup = validate_hopping(h, model.lattice.d).hhat_sup_certified;
}

Vector SpectralAnalyzer::hat_of(const Vector& natural) const {
  Vector out(natural.size());
  for (int x = 0; x < vol_; ++x)
    for (int w = 0; w < M_; ++w)
      out(x * M_ + w) = natural(x * M_ + w) * sqmu_(w);
  return out;
}

Vector SpectralAnalyzer::delta0_hat() const {
  return hat_of(delta0_tensor_one(model_.lattice, M_));
}

Matrix SpectralAnalyzer::L_hat(const std::vector<double>& k,
                               const std::vector<double>& p) const {
  AugmentedGenerator L = assemble_L(k, p, h_, v_, model_);
  return L.hat(model_.mu);
}

Vector SpectralAnalyzer::hopping_moment(int j,
                                        const std::vector<double>& p) const {
  Vector b = Vector::Zero(vol_);
  for (const auto& [z, hz] : h_.entries) {
    if (std::abs(hz) == 0.0 || z[j] == 0) continue;
    double phase = 0.0;
    for (int i = 0; i < model_.lattice.d; ++i) phase += p[i] * z[i];
    b(model_.lattice.fold_index(z)) +=
        cplx(0.0, 1.0) * static_cast<double>(z[j]) * hz * std::polar(1.0, phase);
  }
  return b;
}

Matrix SpectralAnalyzer::schur_complement(const std::vector<double>& p,
                                          cplx z) const {
  if (z.real() >= 1.0 / consts_.T)
    throw std::invalid_argument("schur_complement: needs Re z < 1/T");
  const std::vector<double> k0(model_.lattice.d, 0.0);
  Matrix Lh = L_hat(k0, p);
  // bases of H0 (e_x ⊗ sqrt(mu)) and its complement (e_x ⊗ Y columns)
  Matrix U = Eigen::kroneckerProduct(RMatrix::Identity(vol_, vol_), sqmu_)
                 .eval()
                 .cast<cplx>();
  Matrix Z = Eigen::kroneckerProduct(RMatrix::Identity(vol_, vol_), Y_)
                 .eval()
                 .cast<cplx>();
  Matrix Vh = assemble_V(v_, model_.lattice, model_).cast<cplx>();  // diagonal, hat = natural
  Matrix Mperp = Z.adjoint() * Lh * Z -
                 z * Matrix::Identity(Z.cols(), Z.cols());
  Matrix A = Z.adjoint() * (Vh * U);
  Eigen::PartialPivLU<Matrix> lu(Mperp);
  double rcond = lu.rcond();
  if (!(rcond > 1e-14))
    throw SingularRestriction("schur_complement: restricted operator singular");
  return A.adjoint() * lu.solve(A);
}

SpectralAnalyzer::SpectrumSplit SpectralAnalyzer::spectrum_split(
    const std::vector<double>& p) const {
  std::vector<double> k0(model_.lattice.d, 0.0);
  Eigen::ComplexEigenSolver<Matrix> es(L_hat(k0, p));
  SpectrumSplit out;
  double min_re = std::numeric_limits<double>::infinity();
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    cplx lam = es.eigenvalues()(i);
    if (std::abs(lam) < 1e-10)
      ++out.zero_multiplicity;
    else
      min_re = std::min(min_re, lam.real());
  }
  if (out.zero_multiplicity != 1) {
    std::ostringstream os;
    os << "spectrum_split: zero eigenvalue multiplicity "
       << out.zero_multiplicity << " (assumptions violated)";
    throw DegenerateZero(os.str());
  }
  out.delta_numeric = min_re;
  if (out.delta_numeric < gap_bound() - 1e-12) {
    std::ostringstream os;
    os << "spectrum_split: measured gap " << out.delta_numeric
       << " below the explicit bound " << gap_bound();
    throw ToleranceFailure(os.str());
  }
  return out;
}

SpectralAnalyzer::EigenBranch SpectralAnalyzer::eigen_branch(
    const std::vector<double>& k, const std::vector<double>& p) const {
  Matrix Lh = L_hat(k, p);
  Eigen::ComplexEigenSolver<Matrix> es(Lh);
  const int n = static_cast<int>(Lh.rows());

  EigenBranch br;
  br.delta_numeric = spectrum_split(p).delta_numeric;

  int i0 = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    double a = std::abs(es.eigenvalues()(i));
    if (a < best) {
      best = a;
      i0 = i;
    }
  }
  // the tracked branch must be the only eigenvalue in |z| < delta/2
  for (int i = 0; i < n; ++i) {
    if (i == i0) continue;
    if (std::abs(es.eigenvalues()(i)) < 0.5 * br.delta_numeric)
      throw BranchCollision(
          "eigen_branch: second eigenvalue inside the tracking disk; |k| too large");
  }
  br.E = es.eigenvalues()(i0);
  br.phi_right = es.eigenvectors().col(i0).normalized();

  Eigen::ComplexEigenSolver<Matrix> esa(Lh.adjoint().eval());
  int j0 = 0;
  double bestl = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    double a = std::abs(esa.eigenvalues()(i) - std::conj(br.E));
    if (a < bestl) {
      bestl = a;
      j0 = i;
    }
  }
  br.phi_left = esa.eigenvectors().col(j0);

  // phase: <delta0, phi_right> real positive; pairing <phi_left, phi_right> = 1
  cplx overlap = delta0_hat().dot(br.phi_right);  // Eigen dot conjugates lhs
  if (std::abs(overlap) > 1e-14) {
    cplx ph = overlap / std::abs(overlap);
    br.phi_right /= ph;
    br.phi_left /= ph;
  }
  cplx pairing = br.phi_left.dot(br.phi_right);
  if (std::abs(pairing) < 1e-12)
    throw BranchCollision("eigen_branch: defective pairing of left/right vectors");
  br.phi_left /= std::conj(pairing);
  br.Q = br.phi_right * br.phi_left.adjoint();
  return br;
}

Matrix SpectralAnalyzer::riesz_projection_contour(const std::vector<double>& k,
                                                  const std::vector<double>& p,
                                                  double tol) const {
  Matrix Lh = L_hat(k, p);
  double delta = spectrum_split(p).delta_numeric;
  // rectangle [-a, b] x [-R, R]: eigenvalues with Re <= b all lie inside
  // the numerical-range sector, so R above its height catches only the
  // slow eigenvalue
  const double a = 0.5 * delta;
  const double b = 0.5 * delta;
  const double C = 2.0 * consts_.hhat_sup + 2.0 * consts_.vtilde_norm;
  const double R = C + consts_.gamma * b + 1.0;
  auto resolvent = [&](cplx z) -> Matrix {
    Matrix A = z * Matrix::Identity(Lh.rows(), Lh.cols()) - Lh;
    return A.partialPivLu().solve(Matrix::Identity(Lh.rows(), Lh.cols()));
  };
  const cplx c1(b, -R), c2(b, R), c3(-a, R), c4(-a, -R);
  Matrix I = adaptive_segment(resolvent, c1, c2, tol) +
             adaptive_segment(resolvent, c2, c3, tol) +
             adaptive_segment(resolvent, c3, c4, tol) +
             adaptive_segment(resolvent, c4, c1, tol);
  return I / cplx(0.0, 2.0 * M_PI);
}

SpectralAnalyzer::Hessian SpectralAnalyzer::hessian_closed_form(
    const std::vector<double>& p) const {
  const int d = model_.lattice.d;
  std::vector<double> k0(d, 0.0);
  Matrix Lh = L_hat(k0, p);
  Vector d0 = delta0_hat();
  Matrix Q0 = d0 * d0.adjoint();  // orthogonal at k = 0

  // b_j in H0 coordinates and as hat vectors
  std::vector<Vector> b(d), bh(d), w(d);
  Matrix shifted = Lh + Q0;
  Eigen::PartialPivLU<Matrix> lu(shifted);
  if (!(lu.rcond() > 1e-8))
    throw GapTooSmall("hessian_closed_form: reduced solve ill-conditioned");
  for (int j = 0; j < d; ++j) {
    b[j] = hopping_moment(j, p);
    Vector nat = Vector::Zero(vol_ * M_);
    for (int x = 0; x < vol_; ++x)
      for (int a = 0; a < M_; ++a) nat(x * M_ + a) = b[j](x);
    bh[j] = hat_of(nat);
    Vector rhs = bh[j] - d0 * (d0.dot(bh[j]));
    w[j] = lu.solve(rhs);
  }

  // second-derivative (diagonal) term i <delta0 ⊗ 1, d_i d_j K delta0 ⊗ 1>;
  // nonzero only when a hopping vector folds to 0 in the cell
  Matrix S0 = Matrix::Zero(d, d);
  for (const auto& [z, hz] : h_.entries) {
    if (std::abs(hz) == 0.0) continue;
    if (model_.lattice.fold_index(z) != 0) continue;
    double phase = 0.0;
    for (int i = 0; i < d; ++i) phase += p[i] * z[i];
    cplx c = cplx(0.0, 1.0) * hz * std::polar(1.0, phase);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        S0(i, j) += c * static_cast<double>(z[i]) * static_cast<double>(z[j]);
  }

  Hessian out;
  out.H = RMatrix::Zero(d, d);
  Matrix Hc(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) Hc(i, j) = bh[i].dot(w[j]);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      cplx sym = S0(i, j) + Hc(i, j) + Hc(j, i);
      out.H(i, j) = sym.real();
      out.imag_residual = std::max(out.imag_residual, std::abs(sym.imag()));
    }
  }

  // Schur-complement route: 2 Re <b_i, Gamma_p(0)^+ b_j> with the
  // pseudo-inverse taken on the complement of delta_0 in C^Lambda
  Matrix G = schur_complement(p, cplx(0.0, 0.0));
  Matrix Gsub = G.bottomRightCorner(vol_ - 1, vol_ - 1);
  Eigen::PartialPivLU<Matrix> glu(Gsub);
  if (!(glu.rcond() > 1e-14))
    throw SingularRestriction("hessian_closed_form: Gamma singular on delta0-perp");
  out.H_schur = RMatrix::Zero(d, d);
  std::vector<Vector> gw(d);
  for (int j = 0; j < d; ++j) {
    Vector rhs = b[j].tail(vol_ - 1);
    gw[j] = glu.solve(rhs);
  }
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      cplx sym = b[i].tail(vol_ - 1).dot(gw[j]) + b[j].tail(vol_ - 1).dot(gw[i]);
      out.H_schur(i, j) = sym.real();
    }
  out.route_diff = (out.H - out.H_schur).cwiseAbs().maxCoeff();
  return out;
}

SpectralAnalyzer::HessianFD SpectralAnalyzer::hessian_fd(
    const std::vector<double>& p, double step, bool richardson) const {
  const int d = model_.lattice.d;
  if (step <= 0.0) {
    // stay well inside the perturbative radius, which scales like the gap
    // over the size of the k derivative of the generator
    double dnorm = 1e-12;
    for (const auto& [z, hz] : h_.entries) {
      int l1 = 0;
      for (int c : z) l1 += std::abs(c);
      dnorm += l1 * std::abs(hz);
    }
    step = std::min(2e-3, 0.02 * spectrum_split(p).delta_numeric / dnorm);
  }
  auto E_at = [&](const std::vector<double>& k) {
    return eigen_branch(k, p).E;
  };
  auto hess_at_step = [&](double s) {
    Matrix H(d, d);
    for (int i = 0; i < d; ++i) {
      std::vector<double> kp(d, 0.0), km(d, 0.0);
      kp[i] = s;
      km[i] = -s;
      H(i, i) = (E_at(kp) + E_at(km)) / (s * s);  // E(0) = 0
      for (int j = i + 1; j < d; ++j) {
        std::vector<double> kpp(d, 0.0), kpm(d, 0.0), kmp(d, 0.0), kmm(d, 0.0);
        kpp[i] = s;
        kpp[j] = s;
        kpm[i] = s;
        kpm[j] = -s;
        kmp[i] = -s;
        kmp[j] = s;
        kmm[i] = -s;
        kmm[j] = -s;
        H(i, j) = (E_at(kpp) + E_at(kmm) - E_at(kpm) - E_at(kmp)) /
                  (4.0 * s * s);
        H(j, i) = H(i, j);
      }
    }
    return H;
  };

  Matrix Hr;
  if (richardson) {
    Matrix H1 = hess_at_step(step);
    Matrix H2 = hess_at_step(0.5 * step);
    Hr = (4.0 * H2 - H1) / 3.0;
  } else {
    Hr = hess_at_step(step);
  }

  HessianFD out;
  out.H = Hr.real();
  out.imag_norm = Hr.imag().cwiseAbs().maxCoeff();

  // FD gradient at 0, Richardson extrapolated
  double gnorm = 0.0;
  for (int i = 0; i < d; ++i) {
    auto grad_at = [&](double s) {
      std::vector<double> kp(d, 0.0), km(d, 0.0);
      kp[i] = s;
      km[i] = -s;
      return (E_at(kp) - E_at(km)) / (2.0 * s);
    };
    cplx g = (4.0 * grad_at(0.5 * step) - grad_at(step)) / 3.0;
    gnorm = std::max(gnorm, std::abs(g));
  }
  out.grad_norm = gnorm;
  return out;
}

SpectralAnalyzer::DiffusionProfile SpectralAnalyzer::diffusion_profile(
    const std::vector<std::vector<double>>& grid) const {
  DiffusionProfile prof;
  prof.grid = grid;
  prof.delta_bound = gap_bound();
  for (const auto& p : grid) {
    prof.delta_numeric.push_back(spectrum_split(p).delta_numeric);
    RMatrix D = 0.5 * hessian_closed_form(p).H;
    Eigen::SelfAdjointEigenSolver<RMatrix> es(D);
    if (es.eigenvalues().minCoeff() <= 0.0) {
      std::ostringstream os;
      os << "diffusion_profile: D(p) not positive definite at p = (";
      for (std::size_t i = 0; i < p.size(); ++i)
        os << (i ? ", " : "") << p[i];
      os << ")";
      throw NotPositiveDefinite(os.str());
    }
    prof.D.push_back(D);
  }
  return prof;
}

SpectralAnalyzer::DecayCheck SpectralAnalyzer::decay_rate_check(
    const std::vector<double>& k, const std::vector<double>& p,
    const std::vector<double>& times) const {
  if (times.size() < 2)
    throw std::invalid_argument("decay_rate_check: need at least two times");
  EigenBranch br = eigen_branch(k, p);
  Matrix Lh = L_hat(k, p);
  Matrix P = Matrix::Identity(Lh.rows(), Lh.cols()) - br.Q;

  DecayCheck out;
  out.delta_numeric = br.delta_numeric;
  std::vector<double> logs;
  for (double t : times) {
    Matrix E = (-t * Lh).exp();
    double nrm = spectral_norm(E * P);
    out.norms.push_back(nrm);
    logs.push_back(std::log(nrm));
  }
  for (std::size_t i = 1; i < logs.size(); ++i)
    if (logs[i] >= logs[i - 1])
      throw FitUnstable("decay_rate_check: non-monotone norm tail; increase times");

  // least-squares slope of log norm against t
  double st = 0, sl = 0, stt = 0, stl = 0;
  const double n = static_cast<double>(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    st += times[i];
    sl += logs[i];
    stt += times[i] * times[i];
    stl += times[i] * logs[i];
  }
  double slope = (n * stl - st * sl) / (n * stt - st * st);
  out.rate = -slope;
  return out;
}

}  // namespace qdiff
