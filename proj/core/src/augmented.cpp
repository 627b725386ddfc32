#include "qdiff/augmented.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

namespace qdiff {

namespace {

double dot(const std::vector<double>& k, const ivec& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += k[i] * x[i];
  return s;
}

}  // namespace

Matrix AugmentedGenerator::hat(const RVector& mu) const {
  const int vol = lattice.cell_volume();
  Vector d(vol * M);
  for (int x = 0; x < vol; ++x)
    for (int w = 0; w < M; ++w) d(index(x, w)) = std::sqrt(mu(w));
  return d.asDiagonal() * matrix * d.cwiseInverse().asDiagonal();
}

Matrix assemble_K(const std::vector<double>& k, const std::vector<double>& p,
                  const HoppingKernel& h, const LatticeConfig& cfg,
                  const MarkovModel& model) {
  const int vol = cfg.cell_volume();
  const int M = model.M;
  Matrix K = Matrix::Zero(vol * M, vol * M);
  for (const auto& [z, hz] : h.entries) {
    if (std::abs(hz) == 0.0) continue;
    const cplx cp = hz * std::polar(1.0, dot(p, z));
    const cplx ck = std::polar(1.0, -dot(k, z));
    const int zi = cfg.fold_index(z);
    for (int xi = 0; xi < vol; ++xi) {
      // source site [x - z]_N
      ivec x = cfg.cell_point(xi);
      ivec src(cfg.d);
      for (int i = 0; i < cfg.d; ++i) src[i] = x[i] - z[i];
      const int si = cfg.fold_index(src);
      for (int w = 0; w < M; ++w) {
        K(xi * M + w, si * M + w) += cp;
        K(xi * M + w, si * M + model.shift[zi][w]) -= cp * ck;
      }
    }
  }
  return K;
}

Matrix assemble_K_derivative(int j, const std::vector<double>& p,
                             const HoppingKernel& h, const LatticeConfig& cfg,
                             const MarkovModel& model) {
  const int vol = cfg.cell_volume();
  const int M = model.M;
  Matrix dK = Matrix::Zero(vol * M, vol * M);
  for (const auto& [z, hz] : h.entries) {
    if (std::abs(hz) == 0.0 || z[j] == 0) continue;
    const cplx c = cplx(0.0, 1.0) * static_cast<double>(z[j]) * hz *
                   std::polar(1.0, dot(p, z));
    const int zi = cfg.fold_index(z);
    for (int xi = 0; xi < vol; ++xi) {
      ivec x = cfg.cell_point(xi);
      ivec src(cfg.d);
      for (int i = 0; i < cfg.d; ++i) src[i] = x[i] - z[i];
      const int si = cfg.fold_index(src);
      for (int w = 0; w < M; ++w) dK(xi * M + w, si * M + model.shift[zi][w]) += c;
    }
  }
  return dK;
}

Matrix assemble_V(const PotentialAssignment& v, const LatticeConfig& cfg,
                  const MarkovModel& model) {
  const int vol = cfg.cell_volume();
  const int M = model.M;
  Matrix V = Matrix::Zero(vol * M, vol * M);
  for (int xi = 0; xi < vol; ++xi)
    for (int w = 0; w < M; ++w)
      V(xi * M + w, xi * M + w) = v.v(xi, w) - v.v(0, w);
  return V;
}

AugmentedGenerator assemble_L(const std::vector<double>& k,
                              const std::vector<double>& p,
                              const HoppingKernel& h,
                              const PotentialAssignment& v,
                              const MarkovModel& model) {
  const LatticeConfig& cfg = model.lattice;
  const int vol = cfg.cell_volume();
  const int M = model.M;
  AugmentedGenerator g;
  g.lattice = cfg;
  g.M = M;
  g.k = k;
  g.p = p;
  const cplx iu(0.0, 1.0);
  g.matrix = iu * assemble_K(k, p, h, cfg, model) +
             iu * assemble_V(v, cfg, model);
  BackwardGenerator B = backward_generator(model);
  for (int xi = 0; xi < vol; ++xi)
    for (int a = 0; a < M; ++a)
      for (int b = 0; b < M; ++b) g.matrix(xi * M + a, xi * M + b) += B.B(a, b);
  return g;
}

Vector delta0_tensor_one(const LatticeConfig& cfg, int M) {
  Vector v = Vector::Zero(cfg.cell_volume() * M);
  for (int w = 0; w < M; ++w) v(w) = 1.0;  // cell index 0 is the origin
  return v;
}

TransformedInitial transform_initial(const DensityMatrixInit& rho0,
                                     const std::vector<double>& k,
                                     const std::vector<double>& p,
                                     const LatticeConfig& cfg) {
  TransformedInitial out;
  out.rho = Vector::Zero(cfg.cell_volume());
  for (const auto& [w, psi] : rho0.terms) {
    for (const auto& [a, va] : psi.amp) {
      for (const auto& [b, vb] : psi.amp) {
        const cplx r = w * va * std::conj(vb);
        ivec diff(cfg.d);
        for (int i = 0; i < cfg.d; ++i) diff[i] = a[i] - b[i];
        out.rho(cfg.fold_index(diff)) +=
            r * std::polar(1.0, dot(p, diff) + dot(k, b));
      }
    }
  }
  return out;
}

double initial_profile_m(const DensityMatrixInit& rho0,
                         const std::vector<double>& p,
                         const LatticeConfig& cfg) {
  const double two_pi = 2.0 * M_PI;
  double norm = 1.0;
  for (int i = 0; i < cfg.d; ++i) norm /= two_pi;
  double m = 0.0;
  const int vol = cfg.cell_volume();
  for (const auto& [w, psi] : rho0.terms) {
    double s = 0.0;
    for (int zi = 0; zi < vol; ++zi) {
      ivec zeta = cfg.cell_point(zi);
      std::vector<double> q(cfg.d);
      for (int i = 0; i < cfg.d; ++i) q[i] = p[i] + two_pi * zeta[i] / cfg.N;
      cplx amp(0.0);
      for (const auto& [x, a] : psi.amp) amp += a * std::polar(1.0, dot(q, x));
      s += std::norm(amp);
    }
    m += w * s;
  }
  return norm * m;
}

cplx fiber_bracket(const AugmentedGenerator& L, const Vector& w, double t,
                   const RVector& mu) {
  Matrix E = (-t * L.matrix).exp();
  Vector evolved = E * w;
  cplx out(0.0);
  for (int a = 0; a < L.M; ++a) out += mu(a) * evolved(a);
  return out;
}

namespace {

// p-grid sum of weight(p) * <delta_0 ⊗ 1, e^{-tL_{k,p}} rho~_{k,p} ⊗ 1>
// over the uniform grid with Mp nodes per axis, normalized so that the
// weights integrate dp over [0, 2 pi/N)^d; includes the N^d/(2 pi)^d
// prefactor of the inversion formula.
cplx fiber_quadrature(const std::vector<double>& k, double t,
                      const DensityMatrixInit& rho0, int Mp,
                      const FiberSystem& sys,
                      const std::function<cplx(const std::vector<double>&)>&
                          extra_weight) {
  const LatticeConfig& cfg = sys.model.lattice;
  const int d = cfg.d;
  const int M = sys.model.M;
  const double cell_k = 2.0 * M_PI / cfg.N;  // p-torus edge length

  long nodes = 1;
  for (int i = 0; i < d; ++i) nodes *= Mp;

  // N^d/(2pi)^d * (2pi/N / Mp)^d = 1 / Mp^d
  double weight = 1.0;
  for (int i = 0; i < d; ++i) weight /= Mp;

  cplx acc(0.0);
  std::vector<int> idx(d, 0);
  for (long n = 0; n < nodes; ++n) {
    std::vector<double> p(d);
    for (int i = 0; i < d; ++i) p[i] = cell_k * idx[i] / Mp;
    AugmentedGenerator L = assemble_L(k, p, sys.h, sys.v, sys.model);
    TransformedInitial init = transform_initial(rho0, k, p, cfg);
    Vector w0 = Vector::Zero(L.dim());
    for (int x = 0; x < cfg.cell_volume(); ++x)
      for (int a = 0; a < M; ++a) w0(L.index(x, a)) = init.rho(x);
    cplx val = fiber_bracket(L, w0, t, sys.model.mu);
    if (extra_weight) val *= extra_weight(p);
    acc += weight * val;
    for (int i = 0; i < d; ++i) {
      if (++idx[i] < Mp) break;
      idx[i] = 0;
    }
  }
  return acc;
}

}  // namespace

cplx exact_fourier_density(const std::vector<double>& k, double t,
                           const DensityMatrixInit& rho0, int Mp,
                           const FiberSystem& sys, double tol, bool certify) {
  if (Mp < 4) throw std::invalid_argument("exact_fourier_density: Mp < 4");
  // The fibered formula reproduces sum_x e^{-i k.x} E rho_t(x,x) with the
  // sign of k flipped inside the fibers (inversion of the generalized
  // Fourier transform); evaluate at -k.
  std::vector<double> kneg(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) kneg[i] = -k[i];

  cplx coarse = fiber_quadrature(kneg, t, rho0, Mp, sys, nullptr);
  if (!certify) return coarse;
  cplx fine = fiber_quadrature(kneg, t, rho0, 2 * Mp, sys, nullptr);
  if (std::abs(fine - coarse) > tol) {
    std::ostringstream os;
    os << "exact_fourier_density: doubling the p grid moved the result by "
       << std::scientific << std::abs(fine - coarse);
    throw QuadratureNotConverged(os.str());
  }
  return fine;
}

cplx quasimomentum_charge_exact(const ivec& y, double t,
                                const DensityMatrixInit& rho0, int Mp,
                                const FiberSystem& sys) {
  const LatticeConfig& cfg = sys.model.lattice;
  std::vector<double> k0(cfg.d, 0.0);
  auto weight = [&](const std::vector<double>& p) {
    return std::polar(1.0, -static_cast<double>(cfg.N) * dot(p, y));
  };
  return fiber_quadrature(k0, t, rho0, Mp, sys, weight);
}

}  // namespace qdiff
