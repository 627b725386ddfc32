#include "qdiff/dynamics.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include <Eigen/Eigenvalues>

namespace qdiff {

long SimulationBox::n() const {
  long n = 1;
  for (int i = 0; i < d; ++i) n *= 2 * radius + 1;
  return n;
}

long SimulationBox::index_of(const ivec& x) const {
  long idx = 0;
  long stride = 1;
  for (int i = 0; i < d; ++i) {
    if (std::abs(x[i]) > radius) return -1;
    idx += (x[i] + radius) * stride;
    stride *= 2 * radius + 1;
  }
  return idx;
}

ivec SimulationBox::point(long index) const {
  ivec x(d);
  for (int i = 0; i < d; ++i) {
    x[i] = static_cast<int>(index % (2 * radius + 1)) - radius;
    index /= 2 * radius + 1;
  }
  return x;
}

bool SimulationBox::in_margin(long index, int shell) const {
  ivec x = point(index);
  for (int c : x)
    if (std::abs(c) > radius - shell) return true;
  return false;
}

SimulationBox make_box(int d, int radius) {
  SimulationBox b;
  b.d = d;
  b.radius = radius;
  return b;
}

int default_box_radius(int support_radius, const HoppingKernel& h, double t) {
  double vh = 2.0 * h.hop_speed();
  return support_radius + static_cast<int>(std::ceil(vh * t)) + 8;
}

PathPropagator::PathPropagator(const SimulationBox& box,
                               const HoppingKernel& h,
                               const PotentialAssignment& v,
                               const LatticeConfig& cfg, int M,
                               long dense_threshold)
    : box_(box), v_(&v.v) {
  const long n = box.n();
  fold_index_.resize(n);
  for (long s = 0; s < n; ++s) fold_index_[s] = cfg.fold_index(box.point(s));

  // per-hop source maps (no wraparound: hard truncation)
  for (const auto& [z, hz] : h.entries) {
    if (std::abs(hz) == 0.0) continue;
    Hop hop;
    hop.amp = hz;
    hop.src.resize(n);
    for (long s = 0; s < n; ++s) {
      ivec x = box.point(s);
      ivec src(box.d);
      for (int i = 0; i < box.d; ++i) src[i] = x[i] - z[i];
      hop.src[s] = box.index_of(src);
    }
    hops_.push_back(std::move(hop));
  }

  double habs = 0.0;
  for (const auto& [z, hz] : h.entries) habs += std::abs(hz);
  bound_lo_ = v.v.minCoeff() - habs;
  bound_hi_ = v.v.maxCoeff() + habs;

  dense_ = n <= dense_threshold;
  if (dense_) {
    evec_.resize(M);
    eval_.resize(M);
    for (int w = 0; w < M; ++w) {
      Matrix H = Matrix::Zero(n, n);
      for (const auto& hop : hops_)
        for (long s = 0; s < n; ++s)
          if (hop.src[s] >= 0) H(s, hop.src[s]) += hop.amp;
      for (long s = 0; s < n; ++s) H(s, s) += (*v_)(fold_index_[s], w);
      Eigen::SelfAdjointEigenSolver<Matrix> es(H);
      evec_[w] = es.eigenvectors();
      eval_[w] = es.eigenvalues();
    }
  }
}

void PathPropagator::apply_H(const Vector& in, Vector& out, int omega) const {
  const long n = box_.n();
  for (long s = 0; s < n; ++s) out(s) = (*v_)(fold_index_[s], omega) * in(s);
  for (const auto& hop : hops_)
    for (long s = 0; s < n; ++s)
      if (hop.src[s] >= 0) out(s) += hop.amp * in(hop.src[s]);
}

void PathPropagator::apply_chebyshev(Vector& psi, int omega, double dt) const {
  // e^{-i dt H} = e^{-i dt c} sum_k (2 - delta_{k0}) (-i)^k J_k(dt r) T_k(H')
  // with H' = (H - c)/r scaled into [-1, 1] by the Gershgorin bounds.
  // J_k(-z) = (-1)^k J_k(z) folds negative intervals into the phase base.
  const double c = 0.5 * (bound_hi_ + bound_lo_);
  const double r = 0.5 * (bound_hi_ - bound_lo_) + 1e-12;
  const double z = dt * r;
  const double az = std::abs(z);
  const cplx base = z >= 0.0 ? cplx(0.0, -1.0) : cplx(0.0, 1.0);

  Vector t0 = psi;
  Vector t1(psi.size()), tmp(psi.size());
  // T_1 = H' psi
  apply_H(t0, t1, omega);
  t1 = (t1 - c * t0) / r;

  Vector acc = std::cyl_bessel_j(0, az) * t0;
  cplx ik = base;
  int k = 1;
  while (true) {
    double jk = std::cyl_bessel_j(k, az);
    acc += 2.0 * jk * ik * t1;
    if (k > az + 10.0 && std::abs(jk) < 1e-15) break;
    if (k > 100000) break;
    // T_{k+1} = 2 H' T_k - T_{k-1}
    apply_H(t1, tmp, omega);
    tmp = (tmp - c * t1) / r;
    Vector t2 = 2.0 * tmp - t0;
    t0.swap(t1);
    t1.swap(t2);
    ik *= base;
    ++k;
  }
  psi = std::polar(1.0, -dt * c) * acc;
}

void PathPropagator::apply(Vector& psi, int omega, double dt) const {
  if (dt == 0.0) return;
  if (dense_) {
    Vector coeffs = evec_[omega].adjoint() * psi;
    for (long i = 0; i < coeffs.size(); ++i)
      coeffs(i) *= std::polar(1.0, -eval_[omega](i) * dt);
    psi = evec_[omega] * coeffs;
  } else {
    apply_chebyshev(psi, omega, dt);
  }
}

namespace {

Vector load_packet(const WavePacket& psi0, const SimulationBox& box) {
  Vector psi = Vector::Zero(box.n());
  for (const auto& [x, a] : psi0.amp) {
    long idx = box.index_of(x);
    if (idx < 0)
      throw std::invalid_argument("initial state not supported inside the box");
    psi(idx) = a;
  }
  return psi;
}

void check_leakage(const Vector& psi, const SimulationBox& box,
                   double leak_tol) {
  double margin_mass = 0.0;
  for (long s = 0; s < box.n(); ++s)
    if (box.in_margin(s)) margin_mass += std::norm(psi(s));
  if (margin_mass > leak_tol)
    throw BoxLeakage("mass " + std::to_string(margin_mass) +
                     " in the outer shells; enlarge the box radius");
}

// segments of [0, t] on which the path is constant
std::vector<std::pair<int, double>> path_segments(const PotentialPath& path,
                                                  double t) {
  std::vector<std::pair<int, double>> seg;
  for (std::size_t i = 0; i < path.jump_times.size(); ++i) {
    double a = path.jump_times[i];
    if (a >= t) break;
    double b = (i + 1 < path.jump_times.size()) ? path.jump_times[i + 1] : t;
    seg.emplace_back(path.states[i], std::min(b, t) - a);
  }
  return seg;
}

}  // namespace

WaveState evolve_path(const WavePacket& psi0, const PotentialPath& path,
                      const HoppingKernel& h, const PotentialAssignment& v,
                      const LatticeConfig& cfg, double t, double tol,
                      double leak_tol, const PathPropagator* prop) {
  if (t > path.t_max + 1e-12)
    throw std::invalid_argument("evolve_path: t beyond the sampled path");
  std::unique_ptr<PathPropagator> own;
  if (!prop) {
    SimulationBox box = make_box(
        cfg.d, default_box_radius(psi0.support_radius(), h, std::abs(t)));
    own = std::make_unique<PathPropagator>(box, h, v, cfg,
                                           static_cast<int>(v.v.cols()));
    prop = own.get();
  }
  WaveState st;
  st.box = prop->box();
  st.amp = load_packet(psi0.normalized(), st.box);
  st.time = t;

  if (t >= 0.0) {
    for (const auto& [w, dt] : path_segments(path, t)) prop->apply(st.amp, w, dt);
  } else {
    // reverse evolution through the same frozen segments
    auto seg = path_segments(path, -t);
    for (auto it = seg.rbegin(); it != seg.rend(); ++it)
      prop->apply(st.amp, it->first, -it->second);
  }

  if (std::abs(st.amp.norm() - 1.0) > tol)
    throw NormDrift("evolve_path: norm drifted by " +
                    std::to_string(std::abs(st.amp.norm() - 1.0)));
  check_leakage(st.amp, st.box, leak_tol);
  return st;
}

DensityState evolve_density_path(const DensityMatrixInit& rho0,
                                 const PotentialPath& path,
                                 const HoppingKernel& h,
                                 const PotentialAssignment& v,
                                 const LatticeConfig& cfg, double t,
                                 DensityMode mode, double leak_tol) {
  SimulationBox box =
      make_box(cfg.d, default_box_radius(rho0.support_radius(), h, t));
  PathPropagator prop(box, h, v, cfg, static_cast<int>(v.v.cols()));
  const long n = box.n();

  const long rank = static_cast<long>(rho0.terms.size());
  bool rank_route = mode == DensityMode::RankRoute ||
                    (mode == DensityMode::Auto && rank * n < n * n);

  DensityState st;
  st.box = box;
  st.time = t;
  auto seg = path_segments(path, t);

  if (rank_route) {
    st.rho = Matrix::Zero(n, n);
    for (const auto& [w, psi] : rho0.terms) {
      Vector a = load_packet(psi, box);
      for (const auto& [om, dt] : seg) prop.apply(a, om, dt);
      st.rho.noalias() += w * a * a.adjoint();
    }
  } else {
    Matrix rho = Matrix::Zero(n, n);
    for (const auto& [xy, val] : rho0.entries()) {
      long i = box.index_of(xy.first), j = box.index_of(xy.second);
      if (i < 0 || j < 0)
        throw std::invalid_argument("density support not inside the box");
      rho(i, j) = val;
    }
    // rho <- U rho U^dagger per constant interval
    for (const auto& [om, dt] : seg) {
      for (long col = 0; col < n; ++col) {
        Vector c = rho.col(col);
        prop.apply(c, om, dt);
        rho.col(col) = c;
      }
      rho.adjointInPlace();
      for (long col = 0; col < n; ++col) {
        Vector c = rho.col(col);
        prop.apply(c, om, dt);
        rho.col(col) = c;
      }
      rho.adjointInPlace();
    }
    st.rho = std::move(rho);
  }

  // leakage on the diagonal
  double margin_mass = 0.0;
  for (long s = 0; s < n; ++s)
    if (box.in_margin(s)) margin_mass += std::abs(st.rho(s, s));
  if (margin_mass > leak_tol)
    throw BoxLeakage("density mass in the outer shells; enlarge the box");
  return st;
}

cplx quasimomentum_charge(const Matrix& rho, const SimulationBox& box,
                          const ivec& y, int N) {
  cplx acc(0.0);
  for (long s = 0; s < box.n(); ++s) {
    ivec x = box.point(s);
    ivec xs(box.d);
    for (int i = 0; i < box.d; ++i) xs[i] = x[i] + N * y[i];
    long idx = box.index_of(xs);
    if (idx >= 0) acc += rho(idx, s);
  }
  return acc;
}

namespace {

struct BlockStats {
  RVector sum, sum_sq;
  std::vector<cplx> f_sum;
  std::vector<double> f_sum_re2, f_sum_im2;
  std::vector<cplx> c_sum;
  std::vector<double> c_sum_re2, c_sum_im2;
};

}  // namespace

EnsembleDensity ensemble_mean_density(const WavePacket& psi0,
                                      const MarkovModel& model,
                                      const HoppingKernel& h,
                                      const PotentialAssignment& v, double t,
                                      long samples, std::uint64_t seed,
                                      const EnsembleOptions& opts) {
  if (samples < 2)
    throw std::invalid_argument("ensemble_mean_density: need S >= 2 samples");
  const LatticeConfig& cfg = model.lattice;
  int radius = opts.box_radius > 0
                   ? opts.box_radius
                   : default_box_radius(psi0.support_radius(), h, t);
  SimulationBox box = make_box(cfg.d, radius);
  PathPropagator prop(box, h, v, cfg, model.M);
  const long n = box.n();
  const WavePacket psi0n = psi0.normalized();
  const Vector initial = load_packet(psi0n, box);

  // precomputed Fourier phases per k
  const std::size_t nk = opts.k_list.size();
  std::vector<Vector> phases(nk);
  for (std::size_t kk = 0; kk < nk; ++kk) {
    phases[kk].resize(n);
    for (long s = 0; s < n; ++s) {
      ivec x = box.point(s);
      double ph = 0.0;
      for (int i = 0; i < cfg.d; ++i) ph -= opts.k_list[kk][i] * x[i];
      phases[kk](s) = std::polar(1.0, ph);
    }
  }

  std::vector<long> margin_sites;
  for (long s = 0; s < n; ++s)
    if (box.in_margin(s)) margin_sites.push_back(s);

  const long block_size = 256;  // fixed: reduction independent of workers
  const long n_blocks = (samples + block_size - 1) / block_size;
  std::vector<BlockStats> blocks(n_blocks);

  auto run_block = [&](long bi) {
    BlockStats bs;
    bs.sum = RVector::Zero(n);
    bs.sum_sq = RVector::Zero(n);
    bs.f_sum.assign(nk, cplx(0.0));
    bs.f_sum_re2.assign(nk, 0.0);
    bs.f_sum_im2.assign(nk, 0.0);
    bs.c_sum.assign(opts.y_list.size(), cplx(0.0));
    bs.c_sum_re2.assign(opts.y_list.size(), 0.0);
    bs.c_sum_im2.assign(opts.y_list.size(), 0.0);
    const long lo = bi * block_size;
    const long hi = std::min(samples, lo + block_size);
    for (long s = lo; s < hi; ++s) {
      PotentialPath path = sample_path(model, t, derive_seed(seed, s));
      Vector psi = initial;
      for (const auto& [om, dt] : path_segments(path, t)) prop.apply(psi, om, dt);
      if (std::abs(psi.norm() - 1.0) > opts.norm_tol)
        throw NormDrift("ensemble_mean_density: per-path norm drift");
      double margin_mass = 0.0;
      for (long ms : margin_sites) margin_mass += std::norm(psi(ms));
      if (margin_mass > opts.leak_tol)
        throw BoxLeakage("ensemble_mean_density: per-path leakage " +
                         std::to_string(margin_mass));
      for (long i = 0; i < n; ++i) {
        double w = std::norm(psi(i));
        bs.sum(i) += w;
        bs.sum_sq(i) += w * w;
      }
      for (std::size_t kk = 0; kk < nk; ++kk) {
        cplx F(0.0);
        for (long i = 0; i < n; ++i) F += phases[kk](i) * std::norm(psi(i));
        bs.f_sum[kk] += F;
        bs.f_sum_re2[kk] += F.real() * F.real();
        bs.f_sum_im2[kk] += F.imag() * F.imag();
      }
      for (std::size_t yy = 0; yy < opts.y_list.size(); ++yy) {
        cplx C(0.0);
        for (long i = 0; i < n; ++i) {
          ivec x = box.point(i);
          ivec xs(cfg.d);
          for (int j = 0; j < cfg.d; ++j)
            xs[j] = x[j] + cfg.N * opts.y_list[yy][j];
          long idx = box.index_of(xs);
          if (idx >= 0) C += psi(idx) * std::conj(psi(i));
        }
        bs.c_sum[yy] += C;
        bs.c_sum_re2[yy] += C.real() * C.real();
        bs.c_sum_im2[yy] += C.imag() * C.imag();
      }
    }
    blocks[bi] = std::move(bs);
  };

  long n_threads = opts.threads > 0
                       ? opts.threads
                       : static_cast<long>(std::thread::hardware_concurrency());
  n_threads = std::max<long>(1, std::min<long>(n_threads, n_blocks));
  if (n_threads == 1) {
    for (long bi = 0; bi < n_blocks; ++bi) run_block(bi);
  } else {
    std::atomic<long> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_threads);
    for (long th = 0; th < n_threads; ++th) {
      pool.emplace_back([&, th]() {
        try {
          while (true) {
            long bi = next.fetch_add(1);
            if (bi >= n_blocks) break;
            run_block(bi);
          }
        } catch (...) {
          errors[th] = std::current_exception();
        }
      });
    }
    for (auto& t_ : pool) t_.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // in-order reduction over blocks
  EnsembleDensity out;
  out.box = box;
  out.samples = samples;
  out.time = t;
  RVector sum = RVector::Zero(n), sum_sq = RVector::Zero(n);
  std::vector<cplx> f_sum(nk, cplx(0.0));
  std::vector<double> f_re2(nk, 0.0), f_im2(nk, 0.0);
  std::vector<cplx> c_sum(opts.y_list.size(), cplx(0.0));
  std::vector<double> c_re2(opts.y_list.size(), 0.0),
      c_im2(opts.y_list.size(), 0.0);
  for (const auto& bs : blocks) {
    sum += bs.sum;
    sum_sq += bs.sum_sq;
    for (std::size_t kk = 0; kk < nk; ++kk) {
      f_sum[kk] += bs.f_sum[kk];
      f_re2[kk] += bs.f_sum_re2[kk];
      f_im2[kk] += bs.f_sum_im2[kk];
    }
    for (std::size_t yy = 0; yy < opts.y_list.size(); ++yy) {
      c_sum[yy] += bs.c_sum[yy];
      c_re2[yy] += bs.c_sum_re2[yy];
      c_im2[yy] += bs.c_sum_im2[yy];
    }
  }
  const double S = static_cast<double>(samples);
  out.mean = sum / S;
  out.stderr_ = RVector::Zero(n);
  for (long i = 0; i < n; ++i) {
    double var = std::max(0.0, (sum_sq(i) - S * out.mean(i) * out.mean(i)) /
                                   (S - 1.0));
    out.stderr_(i) = std::sqrt(var / S);
  }
  auto finish = [&](const cplx& total, double re2, double im2) {
    EnsembleDensity::ComplexStat st;
    st.mean = total / S;
    double var_re =
        std::max(0.0, (re2 - S * st.mean.real() * st.mean.real()) / (S - 1.0));
    double var_im =
        std::max(0.0, (im2 - S * st.mean.imag() * st.mean.imag()) / (S - 1.0));
    st.se_re = std::sqrt(var_re / S);
    st.se_im = std::sqrt(var_im / S);
    return st;
  };
  for (std::size_t kk = 0; kk < nk; ++kk)
    out.fourier.push_back(finish(f_sum[kk], f_re2[kk], f_im2[kk]));
  for (std::size_t yy = 0; yy < opts.y_list.size(); ++yy)
    out.charges.push_back(finish(c_sum[yy], c_re2[yy], c_im2[yy]));

  // ensemble-level leakage: mean mass in the outer shells
  double margin_mass = 0.0;
  for (long s = 0; s < n; ++s)
    if (box.in_margin(s)) margin_mass += out.mean(s);
  if (margin_mass > opts.leak_tol)
    throw BoxLeakage("ensemble_mean_density: mean mass " +
                     std::to_string(margin_mass) +
                     " in the outer shells; enlarge the box");
  return out;
}

EnsembleDensity::ComplexStat fourier_diagonal(const EnsembleDensity& density,
                                              const std::vector<double>& k) {
  EnsembleDensity::ComplexStat st;
  double var_re = 0.0, var_im = 0.0;
  cplx acc(0.0);
  for (long s = 0; s < density.box.n(); ++s) {
    ivec x = density.box.point(s);
    double ph = 0.0;
    for (int i = 0; i < density.box.d; ++i) ph -= k[i] * x[i];
    cplx w = std::polar(1.0, ph);
    acc += w * density.mean(s);
    var_re += std::pow(w.real() * density.stderr_(s), 2);
    var_im += std::pow(w.imag() * density.stderr_(s), 2);
  }
  st.mean = acc;
  st.se_re = std::sqrt(var_re);
  st.se_im = std::sqrt(var_im);
  return st;
}

}  // namespace qdiff
