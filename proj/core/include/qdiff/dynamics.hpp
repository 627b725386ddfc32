#ifndef QDIFF_DYNAMICS_HPP
#define QDIFF_DYNAMICS_HPP

#include <memory>

#include "qdiff/markov.hpp"

namespace qdiff {

struct BoxLeakage : ToleranceFailure {
  using ToleranceFailure::ToleranceFailure;
};
struct NormDrift : ToleranceFailure {
  using ToleranceFailure::ToleranceFailure;
};

// Hard-truncated cube |x|_inf <= radius, sites indexed mixed-radix with the
// first coordinate fastest.
struct SimulationBox {
  int d = 1;
  int radius = 0;

  long n() const;
  long index_of(const ivec& x) const;  // -1 outside
  ivec point(long index) const;
  bool in_margin(long index, int shell = 2) const;  // outermost `shell` layers
};

SimulationBox make_box(int d, int radius);

// Default radius: support radius of psi_0 plus the ballistic bound
// ceil(v_h t) with v_h = 2 sum_x |x|_inf |h(x)|, plus an 8-site margin.
// Leakage is still checked a posteriori.
int default_box_radius(int support_radius, const HoppingKernel& h, double t);

struct WaveState {
  SimulationBox box;
  Vector amp;
  double time = 0.0;

  double norm() const { return amp.norm(); }
};

// Exact interval propagator for the frozen Hamiltonians H_w = L + diag(v_w):
// dense eigendecompositions per Markov state up to dense_threshold box
// sites, Chebyshev polynomial action (matrix free) beyond.
class PathPropagator {
 public:
  PathPropagator(const SimulationBox& box, const HoppingKernel& h,
                 const PotentialAssignment& v, const LatticeConfig& cfg,
                 int M, long dense_threshold = 4096);

  void apply(Vector& psi, int omega, double dt) const;
  const SimulationBox& box() const { return box_; }
  double potential(long site, int omega) const {
    return (*v_)(fold_index_[site], omega);
  }

 private:
  SimulationBox box_;
  const RMatrix* v_ = nullptr;  // cell potential table
  std::vector<long> fold_index_;  // box site -> cell index
  bool dense_ = true;
  // dense route
  std::vector<Matrix> evec_;
  std::vector<RVector> eval_;
  // matrix-free route
  struct Hop {
    cplx amp;
    std::vector<long> src;  // per-site source index, -1 outside the box
  };
  std::vector<Hop> hops_;
  double bound_lo_ = 0.0, bound_hi_ = 0.0;  // Gershgorin spectral bounds

  void apply_H(const Vector& in, Vector& out, int omega) const;
  void apply_chebyshev(Vector& psi, int omega, double dt) const;
};

// Integrates the Schrodinger equation along one potential path by exact
// propagation over each constant interval.  Norm drift beyond tol raises
// NormDrift; mass above leak_tol in the outermost two shells raises
// BoxLeakage.
WaveState evolve_path(const WavePacket& psi0, const PotentialPath& path,
                      const HoppingKernel& h, const PotentialAssignment& v,
                      const LatticeConfig& cfg, double t, double tol = 1e-9,
                      double leak_tol = 1e-10,
                      const PathPropagator* prop = nullptr);

enum class DensityMode { Auto, FullMatrix, RankRoute };

// Density-matrix evolution along one path (per-path von Neumann equation
// with the frozen Hamiltonians); for rank-deficient initial data the rank
// route evolves the eigenvectors instead of the full kernel.
struct DensityState {
  SimulationBox box;
  Matrix rho;
  double time = 0.0;
};

DensityState evolve_density_path(const DensityMatrixInit& rho0,
                                 const PotentialPath& path,
                                 const HoppingKernel& h,
                                 const PotentialAssignment& v,
                                 const LatticeConfig& cfg, double t,
                                 DensityMode mode = DensityMode::Auto,
                                 double leak_tol = 1e-10);

// sum_x rho(x + N y, x) over box pairs
cplx quasimomentum_charge(const Matrix& rho, const SimulationBox& box,
                          const ivec& y, int N);

struct EnsembleOptions {
  std::vector<std::vector<double>> k_list;  // per-sample Fourier statistics
  std::vector<ivec> y_list;                 // per-sample charge statistics
  int threads = 0;                          // 0: hardware concurrency
  int box_radius = -1;                      // -1: default formula
  double leak_tol = 1e-10;
  double norm_tol = 1e-9;
};

struct EnsembleDensity {
  SimulationBox box;
  RVector mean;     // estimate of E |psi_t(x)|^2
  RVector stderr_;  // sample standard deviation / sqrt(S)
  long samples = 0;
  double time = 0.0;

  struct ComplexStat {
    cplx mean;
    double se_re = 0.0, se_im = 0.0;
  };
  std::vector<ComplexStat> fourier;  // one per k in options
  std::vector<ComplexStat> charges;  // one per y in options

  double mass_defect() const { return std::abs(mean.sum() - 1.0); }
};

// Monte Carlo mean of |psi_t(x)|^2 over S independent paths with
// counter-derived per-sample seeds.  Samples are processed in fixed blocks
// and reduced in block order, so the result is independent of the worker
// count.  Requires S >= 2.
EnsembleDensity ensemble_mean_density(const WavePacket& psi0,
                                      const MarkovModel& model,
                                      const HoppingKernel& h,
                                      const PotentialAssignment& v, double t,
                                      long samples, std::uint64_t seed,
                                      const EnsembleOptions& opts = {});

// sum_x e^{-i k.x} mean(x) with independently propagated per-site errors
// (conservative at small k where mass conservation correlates sites).
EnsembleDensity::ComplexStat fourier_diagonal(const EnsembleDensity& density,
                                              const std::vector<double>& k);

}  // namespace qdiff

#endif  // QDIFF_DYNAMICS_HPP
