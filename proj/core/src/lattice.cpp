#include "qdiff/lattice.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace qdiff {

LatticeConfig::LatticeConfig(int d_, int N_) : d(d_), N(N_) {
  if (d < 1) throw std::invalid_argument("LatticeConfig: d must be >= 1");
  if (N < 2) throw std::invalid_argument("LatticeConfig: N must be >= 2");
}

int LatticeConfig::cell_volume() const {
  int v = 1;
  for (int i = 0; i < d; ++i) v *= N;
  return v;
}

ivec LatticeConfig::fold(const ivec& x) const {
  if (static_cast<int>(x.size()) != d)
    throw std::invalid_argument("fold: vector dimension mismatch");
  ivec r(d);
  for (int i = 0; i < d; ++i) {
    int m = x[i] % N;
    r[i] = m < 0 ? m + N : m;
  }
  return r;
}

int LatticeConfig::cell_index(const ivec& folded) const {
  int idx = 0;
  for (int i = d - 1; i >= 0; --i) idx = idx * N + folded[i];
  return idx;
}

ivec LatticeConfig::cell_point(int index) const {
  ivec x(d);
  for (int i = 0; i < d; ++i) {
    x[i] = index % N;
    index /= N;
  }
  return x;
}

ivec fold(const ivec& x, const LatticeConfig& cfg) { return cfg.fold(x); }

cplx HoppingKernel::at(const ivec& x) const {
  auto it = entries.find(x);
  return it == entries.end() ? cplx(0.0) : it->second;
}

int HoppingKernel::support_radius() const {
  int r = 0;
  for (const auto& [x, v] : entries) {
    if (std::abs(v) == 0.0) continue;
    for (int c : x) r = std::max(r, std::abs(c));
  }
  return r;
}

double HoppingKernel::hop_speed() const {
  double s = 0.0;
  for (const auto& [x, v] : entries) {
    int m = 0;
    for (int c : x) m = std::max(m, std::abs(c));
    s += m * std::abs(v);
  }
  return s;
}

void HoppingValidation::require() const {
  if (!hermitian)
    throw SymmetryViolation("hopping kernel violates h(-x) = conj h(x)");
  if (!nondegenerate)
    throw DegenerateHopping("hopping support does not span R^d");
}

cplx hopping_symbol(const HoppingKernel& h, const std::vector<double>& k) {
  cplx s(0.0);
  for (const auto& [x, v] : h.entries) {
    double phase = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) phase += x[i] * k[i];
    s += v * std::polar(1.0, phase);
  }
  return s;
}

namespace {

// max_k |h^(k)| over the uniform grid with n points per axis, walking the
// grid with running per-entry phases (cost |support| per node).
double symbol_sup_on_grid(const HoppingKernel& h, int d, int n) {
  std::vector<ivec> xs;
  std::vector<cplx> hs;
  for (const auto& [x, v] : h.entries) {
    if (std::abs(v) == 0.0) continue;
    xs.push_back(x);
    hs.push_back(v);
  }
  const std::size_t m = xs.size();
  if (m == 0) return 0.0;

  const double dk = 2.0 * M_PI / n;
  // phase steps e^{i x_j dk} per entry and axis
  std::vector<std::vector<cplx>> step(m, std::vector<cplx>(d));
  for (std::size_t e = 0; e < m; ++e)
    for (int j = 0; j < d; ++j) step[e][j] = std::polar(1.0, xs[e][j] * dk);

  std::vector<cplx> phase(m, cplx(1.0, 0.0));  // e^{i x.k} at current node
  std::vector<int> idx(d, 0);
  double best = 0.0;
  const long total = static_cast<long>(std::pow(static_cast<double>(n), d));
  for (long count = 0;; ++count) {
    cplx s(0.0);
    for (std::size_t e = 0; e < m; ++e) s += hs[e] * phase[e];
    best = std::max(best, std::abs(s));
    if (count + 1 >= total) break;
    // advance mixed-radix counter, updating the running phases
    int j = 0;
    while (true) {
      ++idx[j];
      if (idx[j] < n) {
        for (std::size_t e = 0; e < m; ++e) phase[e] *= step[e][j];
        break;
      }
      idx[j] = 0;
      // reset this axis: recompute phase from scratch is avoided by
      // multiplying the inverse of n-1 steps; cheaper to rebuild axis phase
      for (std::size_t e = 0; e < m; ++e)
        phase[e] *= std::polar(1.0, -xs[e][j] * dk * (n - 1));
      ++j;
    }
  }
  return best;
}

}  // namespace

HoppingValidation validate_hopping(const HoppingKernel& h, int d,
                                   int grid_points) {
  HoppingValidation rep;

  rep.hermitian = true;
  for (const auto& [x, v] : h.entries) {
    ivec neg(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
    cplx other = h.at(neg);
    if (std::abs(other - std::conj(v)) > 1e-12 * (1.0 + std::abs(v))) {
      rep.hermitian = false;
      rep.violations.push_back("hopping symmetry violated at a support point");
      break;
    }
  }

  // rank of the support-vector matrix; tolerance 1e-12 on singular values
  std::vector<ivec> support;
  for (const auto& [x, v] : h.entries)
    if (std::abs(v) != 0.0) support.push_back(x);
  if (support.empty()) {
    rep.nondegenerate = false;
    rep.violations.push_back("hopping kernel is empty");
  } else {
    RMatrix S(static_cast<int>(support.size()), d);
    for (std::size_t r = 0; r < support.size(); ++r)
      for (int c = 0; c < d; ++c) S(static_cast<int>(r), c) = support[r][c];
    Eigen::JacobiSVD<RMatrix> svd(S);
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()(i) > 1e-12) ++rank;
    rep.nondegenerate = (rank == d);
    if (!rep.nondegenerate)
      rep.violations.push_back("hopping support lies in a hyperplane through 0");
  }

  rep.hhat_sup = symbol_sup_on_grid(h, d, grid_points);
  double lip = 0.0;  // sum_x |x|_1 |h(x)|, Lipschitz constant wrt |k|_inf
  for (const auto& [x, v] : h.entries) {
    int l1 = 0;
    for (int c : x) l1 += std::abs(c);
    lip += l1 * std::abs(v);
  }
  rep.hhat_sup_certified = rep.hhat_sup + lip * (M_PI / grid_points);
  return rep;
}

bool check_no_smaller_period(const CellFunction& U, const LatticeConfig& cfg) {
  const int vol = cfg.cell_volume();
  if (static_cast<int>(U.values.size()) != vol)
    throw std::invalid_argument("check_no_smaller_period: U has wrong length");
  for (int xi = 1; xi < vol; ++xi) {
    const ivec x = cfg.cell_point(xi);
    double total = 0.0;
    for (int yi = 0; yi < vol; ++yi) {
      ivec y = cfg.cell_point(yi);
      ivec xy(cfg.d);
      for (int i = 0; i < cfg.d; ++i) xy[i] = x[i] + y[i];
      total += std::abs(U.at(cfg.fold_index(xy)) - U.at(yi));
    }
    if (total == 0.0) return false;
  }
  return true;
}

double WavePacket::norm() const {
  double s = 0.0;
  for (const auto& [x, v] : amp) s += std::norm(v);
  return std::sqrt(s);
}

WavePacket WavePacket::normalized() const {
  WavePacket r = *this;
  double n = norm();
  if (n == 0.0) throw std::invalid_argument("WavePacket: zero vector");
  for (auto& [x, v] : r.amp) v /= n;
  return r;
}

int WavePacket::support_radius() const {
  int r = 0;
  for (const auto& [x, v] : amp) {
    if (std::abs(v) == 0.0) continue;
    for (int c : x) r = std::max(r, std::abs(c));
  }
  return r;
}

WavePacket WavePacket::delta(const ivec& x) {
  WavePacket p;
  p.set(x, cplx(1.0, 0.0));
  return p;
}

DensityMatrixInit DensityMatrixInit::pure(const WavePacket& psi) {
  DensityMatrixInit r;
  r.terms.emplace_back(1.0, psi.normalized());
  return r;
}

DensityMatrixInit DensityMatrixInit::mixture(
    std::vector<std::pair<double, WavePacket>> t) {
  DensityMatrixInit r;
  for (auto& [w, psi] : t) {
    if (w < 0.0) throw std::invalid_argument("DensityMatrixInit: negative weight");
    r.terms.emplace_back(w, psi.normalized());
  }
  return r;
}

DensityMatrixInit DensityMatrixInit::from_entries(
    const std::map<std::pair<ivec, ivec>, cplx>& entries, double tol) {
  // collect the support
  std::vector<ivec> sites;
  std::map<ivec, int> index;
  auto touch = [&](const ivec& x) {
    if (index.emplace(x, static_cast<int>(sites.size())).second)
      sites.push_back(x);
  };
  for (const auto& [xy, v] : entries) {
    touch(xy.first);
    touch(xy.second);
  }
  const int n = static_cast<int>(sites.size());
  Matrix R = Matrix::Zero(n, n);
  for (const auto& [xy, v] : entries)
    R(index.at(xy.first), index.at(xy.second)) = v;
  if ((R - R.adjoint()).cwiseAbs().maxCoeff() > tol)
    throw std::invalid_argument("DensityMatrixInit: kernel is not Hermitian");

  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (R + Matrix(R.adjoint())));
  DensityMatrixInit r;
  for (int j = 0; j < n; ++j) {
    double lam = es.eigenvalues()(j);
    if (lam < -tol)
      throw std::invalid_argument("DensityMatrixInit: kernel is not non-negative");
    if (lam <= tol) continue;
    WavePacket psi;
    for (int i = 0; i < n; ++i) {
      cplx a = es.eigenvectors()(i, j);
      if (std::abs(a) > 0.0) psi.set(sites[i], a);
    }
    r.terms.emplace_back(lam, psi);
  }
  return r;
}

double DensityMatrixInit::trace() const {
  double t = 0.0;
  for (const auto& [w, psi] : terms) t += w;  // psi normalized
  return t;
}

std::map<std::pair<ivec, ivec>, cplx> DensityMatrixInit::entries() const {
  std::map<std::pair<ivec, ivec>, cplx> e;
  for (const auto& [w, psi] : terms)
    for (const auto& [x, a] : psi.amp)
      for (const auto& [y, b] : psi.amp) e[{x, y}] += w * a * std::conj(b);
  return e;
}

int DensityMatrixInit::support_radius() const {
  int r = 0;
  for (const auto& [w, psi] : terms) r = std::max(r, psi.support_radius());
  return r;
}

}  // namespace qdiff
