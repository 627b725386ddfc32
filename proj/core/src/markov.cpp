#include "qdiff/markov.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace qdiff {

namespace {

constexpr double kTol = 1e-10;

bool strongly_connected(const RMatrix& Q) {
  const int n = static_cast<int>(Q.rows());
  auto reach = [&](bool transpose) {
    std::vector<char> seen(n, 0);
    std::queue<int> bfs;
    bfs.push(0);
    seen[0] = 1;
    while (!bfs.empty()) {
      int a = bfs.front();
      bfs.pop();
      for (int b = 0; b < n; ++b) {
        double r = transpose ? Q(b, a) : Q(a, b);
        if (a != b && r > 0.0 && !seen[b]) {
          seen[b] = 1;
          bfs.push(b);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  return reach(false) && reach(true);
}

// Orthonormal basis of the orthogonal complement of a unit vector u,
// as the last n-1 columns of the Householder reflection mapping e_0 to u.
RMatrix complement_basis(const RVector& u) {
  const int n = static_cast<int>(u.size());
  RVector w = u;
  w(0) += (u(0) >= 0.0 ? 1.0 : -1.0);
  w.normalize();
  RMatrix H = RMatrix::Identity(n, n) - 2.0 * w * w.transpose();
  // H e_0 = -sign(u0) u; columns 1..n-1 span u-perp either way
  return H.rightCols(n - 1);
}

}  // namespace

MarkovModel build_cyclic_walk(const LatticeConfig& cfg, double rate) {
  if (rate <= 0.0) throw std::invalid_argument("build_cyclic_walk: rate <= 0");
  const int M = cfg.cell_volume();
  MarkovModel m;
  m.lattice = cfg;
  m.M = M;
  m.rates = RMatrix::Zero(M, M);
  const double r = rate / (2.0 * cfg.d);
  for (int w = 0; w < M; ++w) {
    ivec pt = cfg.cell_point(w);
    for (int j = 0; j < cfg.d; ++j) {
      for (int s : {+1, -1}) {
        ivec nb = pt;
        nb[j] += s;
        m.rates(w, cfg.fold_index(nb)) += r;
      }
    }
  }
  for (int w = 0; w < M; ++w) m.rates(w, w) = -m.rates.row(w).sum() + m.rates(w, w);
  m.mu = RVector::Constant(M, 1.0 / M);
  // sigma_x(w) = [w - x]_N
  m.shift.assign(M, std::vector<int>(M, 0));
  for (int xi = 0; xi < M; ++xi) {
    ivec x = cfg.cell_point(xi);
    for (int w = 0; w < M; ++w) {
      ivec pt = cfg.cell_point(w);
      ivec shifted(cfg.d);
      for (int i = 0; i < cfg.d; ++i) shifted[i] = pt[i] - x[i];
      m.shift[xi][w] = cfg.fold_index(shifted);
    }
  }
  return m;
}

MarkovModel build_explicit(const LatticeConfig& cfg, RMatrix rates,
                           std::vector<std::vector<int>> shift,
                           std::optional<RVector> mu) {
  MarkovModel m;
  m.lattice = cfg;
  m.M = static_cast<int>(rates.rows());
  m.rates = std::move(rates);
  m.shift = std::move(shift);
  if (static_cast<int>(m.shift.size()) != cfg.cell_volume())
    throw std::invalid_argument("build_explicit: shift table must cover the cell");
  if (mu) {
    m.mu = *mu;
  } else {
    // invariant measure: null vector of Q^T
    Eigen::FullPivLU<RMatrix> lu(m.rates.transpose());
    lu.setThreshold(1e-10);
    RMatrix ker = lu.kernel();
    if (ker.cols() < 1)
      throw NotErgodic("build_explicit: no invariant measure found");
    RVector v = ker.col(0);
    if (v.sum() < 0) v = -v;
    if (v.minCoeff() < -1e-10)
      throw NotErgodic("build_explicit: invariant measure not positive");
    m.mu = v.cwiseMax(0.0) / v.sum();
  }
  return m;
}

RVector BackwardGenerator::solve_mean_zero(const RVector& f,
                                           const RVector& mu) const {
  RVector sqmu = mu.cwiseSqrt();
  RMatrix W = complement_basis(sqmu);
  // hat coordinates: B^ = D B D^{-1}, D = diag(sqrt(mu))
  RMatrix Bh = sqmu.asDiagonal() * B * sqmu.cwiseInverse().asDiagonal();
  RVector fh = sqmu.asDiagonal() * f;
  RVector gh = W * (W.transpose() * Bh * W).lu().solve(W.transpose() * fh);
  return RVector(sqmu.cwiseInverse().asDiagonal() * gh);
}

BackwardGenerator backward_generator(const MarkovModel& model) {
  const int n = model.M;
  if (n < 2) throw NotErgodic("backward_generator: need at least two states");
  BackwardGenerator g;
  // B = -Q* = -diag(mu)^{-1} Q^T diag(mu)
  g.B = -(model.mu.cwiseInverse().asDiagonal() * model.rates.transpose() *
          model.mu.asDiagonal());

  RVector sqmu = model.mu.cwiseSqrt();
  RMatrix Bh = sqmu.asDiagonal() * g.B * sqmu.cwiseInverse().asDiagonal();
  RMatrix W = complement_basis(sqmu);
  RMatrix A = W.transpose() * Bh * W;  // B on the complement of constants
  RMatrix Are = 0.5 * (A + A.transpose());

  Eigen::SelfAdjointEigenSolver<RMatrix> es(Are);
  g.invT = es.eigenvalues().minCoeff();
  if (g.invT <= kTol)
    throw NotErgodic("backward_generator: spectral gap below tolerance");

  // gamma = || (Re B)^{-1/2} (Im B) (Re B)^{-1/2} || on the complement;
  // Im B is Hermitian as i * (antisymmetric part of A).
  RMatrix isqrt = es.operatorInverseSqrt();
  RMatrix Aim = 0.5 * (A - A.transpose());  // Im part = Aim / i, norm equal
  RMatrix G = isqrt * Aim * isqrt;
  // Hermitian i*G: eigenvalues of the real antisymmetric G are +-i s_j
  Eigen::JacobiSVD<RMatrix> svd(G);
  g.gamma = (n > 1 && svd.singularValues().size() > 0)
                ? svd.singularValues().maxCoeff()
                : 0.0;
  if (g.gamma < 1e-13) g.gamma = 0.0;
  return g;
}

PotentialAssignment potential_from_cell(const CellFunction& U,
                                        const MarkovModel& model) {
  const LatticeConfig& cfg = model.lattice;
  const int vol = cfg.cell_volume();
  if (model.M != vol)
    throw std::invalid_argument("potential_from_cell: requires Omega = Lambda");
  if (static_cast<int>(U.values.size()) != vol)
    throw std::invalid_argument("potential_from_cell: U has wrong length");
  PotentialAssignment pa;
  pa.v = RMatrix::Zero(vol, model.M);
  for (int xi = 0; xi < vol; ++xi) {
    ivec x = cfg.cell_point(xi);
    for (int w = 0; w < model.M; ++w) {
      ivec wp = cfg.cell_point(w);
      ivec diff(cfg.d);
      for (int i = 0; i < cfg.d; ++i) diff[i] = x[i] - wp[i];
      pa.v(xi, w) = U.at(cfg.fold_index(diff));
    }
  }
  // covariance against the model's shift table: v_x = v_0 ∘ sigma_x
  for (int xi = 0; xi < vol; ++xi)
    for (int w = 0; w < model.M; ++w)
      if (std::abs(pa.v(xi, w) - pa.v(0, model.shift[xi][w])) > 1e-12)
        throw std::invalid_argument(
            "potential_from_cell: covariance v_x = v_0 ∘ sigma_x fails; "
            "shift table inconsistent with the jiggling convention");
  return pa;
}

PotentialAssignment potential_from_v0(const RVector& v0,
                                      const MarkovModel& model) {
  if (static_cast<int>(v0.size()) != model.M)
    throw std::invalid_argument("potential_from_v0: v0 has wrong length");
  PotentialAssignment pa;
  const int vol = model.lattice.cell_volume();
  pa.v = RMatrix::Zero(vol, model.M);
  for (int xi = 0; xi < vol; ++xi)
    for (int w = 0; w < model.M; ++w) pa.v(xi, w) = v0(model.shift[xi][w]);
  return pa;
}

double PotentialAssignment::vtilde_norm() const {
  double m = 0.0;
  for (int x = 0; x < v.rows(); ++x)
    for (int w = 0; w < v.cols(); ++w) m = std::max(m, std::abs(v(x, w) - v(0, w)));
  return m;
}

double chi_constant(const MarkovModel& model, const BackwardGenerator& B,
                    const PotentialAssignment& v) {
  const int vol = model.lattice.cell_volume();
  double chi = std::numeric_limits<double>::infinity();
  for (int x = 0; x < vol; ++x) {
    for (int y = 0; y < vol; ++y) {
      if (x == y) continue;
      RVector f = (v.v.row(x) - v.v.row(y)).transpose();
      if (f.cwiseAbs().maxCoeff() <= 1e-14)
        throw DegeneratePotential("chi_constant: v_x - v_y vanishes identically");
      // v_x - v_y is mu-mean-zero by shift invariance; enforce exactly
      f.array() -= model.mu.dot(f);
      RVector g = B.solve_mean_zero(f, model.mu);
      double nrm = std::sqrt(model.mu.dot(g.cwiseAbs2()));
      chi = std::min(chi, nrm);
    }
  }
  return chi;
}

int PotentialPath::state_at(double t) const {
  // right continuous: state_at(jump time) is the post-jump state
  auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
  std::size_t idx = static_cast<std::size_t>(it - jump_times.begin());
  return states[idx == 0 ? 0 : idx - 1];
}

PotentialPath sample_path(const MarkovModel& model, double t_max,
                          std::uint64_t seed) {
  if (t_max <= 0.0) throw std::invalid_argument("sample_path: t_max <= 0");
  Rng rng(seed);
  PotentialPath path;
  path.t_max = t_max;

  std::vector<double> mu(model.mu.data(), model.mu.data() + model.M);
  int state = rng.discrete(mu);
  double t = 0.0;
  path.jump_times.push_back(0.0);
  path.states.push_back(state);
  while (true) {
    double out_rate = -model.rates(state, state);
    if (out_rate <= 0.0) break;  // absorbing state: no further jumps
    t += rng.exponential(out_rate);
    if (t > t_max) break;
    std::vector<double> w(model.M, 0.0);
    for (int b = 0; b < model.M; ++b)
      if (b != state) w[b] = std::max(model.rates(state, b), 0.0);
    state = rng.discrete(w);
    path.jump_times.push_back(t);
    path.states.push_back(state);
  }
  return path;
}

double gap_lower_bound(const SystemConstants& c) {
  const double a = 2.0 + c.gamma + 4.0 * c.T * c.hhat_sup + 4.0 * c.T * c.vtilde_norm;
  return (1.0 / c.T) * c.chi * c.chi /
         (a * a + c.vtilde_norm * c.vtilde_norm * c.chi * c.chi);
}

AssumptionReport verify_assumptions(const MarkovModel& model,
                                    const HoppingKernel& h,
                                    const PotentialAssignment& v) {
  AssumptionReport rep;
  const LatticeConfig& cfg = model.lattice;
  const int vol = cfg.cell_volume();
  auto fail = [&rep](const std::string& s) { rep.violations.push_back(s); };

  // --- Assumption 1: generator validity, invariant measure, shift invariance
  for (int a = 0; a < model.M; ++a) {
    double row = model.rates.row(a).sum();
    if (std::abs(row) > 1e-9) {
      fail("A1: rate matrix rows do not sum to zero");
      break;
    }
  }
  {
    bool offdiag_ok = true;
    for (int a = 0; a < model.M && offdiag_ok; ++a)
      for (int b = 0; b < model.M; ++b)
        if (a != b && model.rates(a, b) < -1e-14) {
          offdiag_ok = false;
          break;
        }
    if (!offdiag_ok) fail("A1: negative off-diagonal jump rate");
  }
  if (model.mu.minCoeff() <= 0.0) fail("A1: invariant measure not strictly positive");
  if ((model.rates.transpose() * model.mu).cwiseAbs().maxCoeff() > 1e-9)
    fail("A1: mu is not invariant (mu^T Q != 0)");
  if (!strongly_connected(model.rates)) fail("A1: rate matrix not irreducible");
  {
    bool shift_ok = true, measure_ok = true;
    for (int xi = 0; xi < vol && (shift_ok || measure_ok); ++xi) {
      const auto& s = model.shift[xi];
      for (int a = 0; a < model.M; ++a) {
        if (std::abs(model.mu(s[a]) - model.mu(a)) > 1e-12) measure_ok = false;
        for (int b = 0; b < model.M; ++b)
          if (std::abs(model.rates(s[a], s[b]) - model.rates(a, b)) > 1e-10)
            shift_ok = false;
      }
    }
    if (!measure_ok) fail("A1: sigma_x does not preserve mu");
    if (!shift_ok) fail("A1: rates not invariant under sigma_x (Q(sx,sy) != Q(x,y))");
  }

  // --- Assumption 4 (shift part): sigma is a group action factoring
  // through the cell, so sigma_0 = Id and sigma_x sigma_y = sigma_{[x+y]_N}
  // (which forces sigma_{N e_j} = Id).
  {
    bool action_ok = true;
    for (int w = 0; w < model.M; ++w)
      if (model.shift[0][w] != w) action_ok = false;
    for (int xi = 0; xi < vol && action_ok; ++xi) {
      ivec x = cfg.cell_point(xi);
      for (int yi = 0; yi < vol && action_ok; ++yi) {
        ivec y = cfg.cell_point(yi);
        ivec xy(cfg.d);
        for (int i = 0; i < cfg.d; ++i) xy[i] = x[i] + y[i];
        int zi = cfg.fold_index(xy);
        for (int w = 0; w < model.M; ++w)
          if (model.shift[xi][model.shift[yi][w]] != model.shift[zi][w]) {
            action_ok = false;
            break;
          }
      }
    }
    if (!action_ok)
      fail("A4: shift table is not a group action of the cell (sigma_{Nx} != Id)");
  }

  // --- Assumption 3: hopping symmetry and non-degeneracy
  HoppingValidation hv = validate_hopping(h, cfg.d);
  if (!hv.hermitian) fail("A3: hopping symmetry h(-x) = conj h(x) violated");
  if (!hv.nondegenerate) fail("A3: degenerate hopping (support spans a hyperplane)");

  // --- Assumption 3: covariance of the potential table
  {
    bool cov_ok = true;
    for (int xi = 0; xi < vol && cov_ok; ++xi)
      for (int w = 0; w < model.M; ++w)
        if (std::abs(v.v(xi, w) - v.v(0, model.shift[xi][w])) > 1e-12) {
          cov_ok = false;
          break;
        }
    if (!cov_ok) fail("A3: potential covariance v_x = v_0 ∘ sigma_x violated");
  }

  // --- Assumption 4 (non-degeneracy): ||v_x - v_0||_inf > 0 for x != 0
  for (int xi = 1; xi < vol; ++xi) {
    if ((v.v.row(xi) - v.v.row(0)).cwiseAbs().maxCoeff() <= 1e-14) {
      std::ostringstream os;
      os << "A4: degenerate potential, v_x = v_0 for cell site " << xi;
      fail(os.str());
    }
  }

  // --- Assumption 2 and the constants
  rep.constants.hhat_sup = hv.hhat_sup_certified;
  rep.constants.vtilde_norm = v.vtilde_norm();
  try {
    BackwardGenerator B = backward_generator(model);
    rep.constants.gamma = B.gamma;
    rep.constants.T = B.T();
    try {
      rep.constants.chi = chi_constant(model, B, v);
    } catch (const DegeneratePotential&) {
      rep.constants.chi = 0.0;  // already reported under A4
    }
  } catch (const NotErgodic&) {
    fail("A2: no spectral gap (process not ergodic)");
  }

  if (rep.constants.chi > 0.0 && rep.constants.T > 0.0)
    rep.delta_bound = gap_lower_bound(rep.constants);
  rep.pass = rep.violations.empty();
  return rep;
}

}  // namespace qdiff
