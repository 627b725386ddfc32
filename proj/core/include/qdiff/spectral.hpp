#ifndef QDIFF_SPECTRAL_HPP
#define QDIFF_SPECTRAL_HPP

#include "qdiff/augmented.hpp"

namespace qdiff {

struct SingularRestriction : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateZero : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BranchCollision : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GapTooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FitUnstable : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotPositiveDefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// uniform quasi-momentum grid on [0, 2 pi / N)^d with n nodes per axis
std::vector<std::vector<double>> p_grid(const LatticeConfig& cfg, int n);

// Trigonometric interpolation of samples on the uniform periodic grid
// theta_j = period * j / G; spectrally accurate for smooth periodic data.
double trig_interp_1d(const std::vector<double>& samples, double theta,
                      double period = 2.0 * M_PI);
// tensor-product version; samples flattened with the first axis fastest,
// n nodes per axis, d axes
double trig_interp(const std::vector<double>& samples, int d, int n,
                   const std::vector<double>& theta, double period);

// Spectral analysis of the fibered generator at fixed p: gap, perturbed
// eigenvalue branch E_p(k), Riesz projection, diffusion matrix
// D(p) = (1/2) Hess_k E_p(0).  All internal linear algebra runs in hat
// coordinates (unitary image of the mu-weighted space), so plain inner
// products and singular values carry the right geometry.
class SpectralAnalyzer {
 public:
  SpectralAnalyzer(const MarkovModel& model, const HoppingKernel& h,
                   const PotentialAssignment& v);

  const SystemConstants& constants() const { return consts_; }
  double gap_bound() const { return gap_lower_bound(consts_); }

  // hat-coordinate generator
  Matrix L_hat(const std::vector<double>& k, const std::vector<double>& p) const;

  // Gamma_p(z) = P0 V (P0perp L P0perp - z)^{-1} V P0 on C^Lambda
  // (basis e_x ⊗ sqrt(mu)).  Requires Re z < 1/T for the restriction to be
  // safely invertible; throws SingularRestriction otherwise.
  Matrix schur_complement(const std::vector<double>& p, cplx z) const;

  struct SpectrumSplit {
    int zero_multiplicity = 0;
    double delta_numeric = 0.0;
  };
  // Full eigendecomposition of L_{0,p}: exactly one eigenvalue below 1e-10
  // in modulus (else DegenerateZero), and the smallest real part of the
  // rest, checked against the explicit lower bound.
  SpectrumSplit spectrum_split(const std::vector<double>& p) const;

  struct EigenBranch {
    cplx E;
    Vector phi_right;  // unit norm, <delta0, phi_right> real positive
    Vector phi_left;   // scaled so <phi_left, phi_right> = 1
    Matrix Q;          // rank-one Riesz projection phi_right phi_left^H
    double delta_numeric = 0.0;
  };
  // Eigenvalue of L_{k,p} nearest 0 with its left/right pair; requires the
  // branch to stay isolated (second eigenvalue outside |z| < delta/2),
  // else BranchCollision.
  EigenBranch eigen_branch(const std::vector<double>& k,
                           const std::vector<double>& p) const;

  // Riesz projection by quadrature of the resolvent over the rectangle
  // contour enclosing the slow eigenvalue only (trapezoid ladders with
  // Richardson extrapolation per side).
  Matrix riesz_projection_contour(const std::vector<double>& k,
                                  const std::vector<double>& p,
                                  double tol = 1e-11) const;

  struct Hessian {
    RMatrix H;            // Hess_k E_p(0), reduced-resolvent route
    RMatrix H_schur;      // Gamma-form route
    double route_diff = 0.0;  // max abs difference of the two routes
    double imag_residual = 0.0;
  };
  // Closed-form Hessian 2 Re <dK_i delta0 ⊗ 1, L^{-1} dK_j delta0 ⊗ 1>,
  // with L^{-1} the reduced resolvent on the complement of the zero mode,
  // and the equivalent Schur-complement form through Gamma_p(0)^+.
  Hessian hessian_closed_form(const std::vector<double>& p) const;

  struct HessianFD {
    RMatrix H;              // Richardson-extrapolated central differences
    double imag_norm = 0.0;  // size of the imaginary part of the FD Hessian
    double grad_norm = 0.0;  // FD gradient at k = 0 (should vanish)
  };
  // step <= 0 picks a step well inside the perturbative radius
  HessianFD hessian_fd(const std::vector<double>& p, double step = 0.0,
                       bool richardson = true) const;

  struct DiffusionProfile {
    std::vector<std::vector<double>> grid;
    std::vector<RMatrix> D;  // d x d, positive definite
    std::vector<double> delta_numeric;
    double delta_bound = 0.0;
  };
  // D(p) = (1/2) hessian over the given grid; throws NotPositiveDefinite
  // naming the offending p.
  DiffusionProfile diffusion_profile(
      const std::vector<std::vector<double>>& grid) const;

  struct DecayCheck {
    double rate = 0.0;  // fitted decay rate of ||e^{-tL}(1-Q)||
    double delta_numeric = 0.0;
    std::vector<double> norms;
  };
  // Fits the tail slope of log ||e^{-tL_{k,p}}(1-Q)|| over the given times;
  // non-monotone tails raise FitUnstable.
  DecayCheck decay_rate_check(const std::vector<double>& k,
                              const std::vector<double>& p,
                              const std::vector<double>& times) const;

  const MarkovModel& model() const { return model_; }
  const BackwardGenerator& backward() const { return B_; }

 private:
  const MarkovModel& model_;
  const HoppingKernel& h_;
  const PotentialAssignment& v_;
  BackwardGenerator B_;
  SystemConstants consts_;
  RVector sqmu_;
  RMatrix Y_;  // orthonormal basis of sqrt(mu)-perp in C^M
  int vol_, M_;

  Vector hat_of(const Vector& natural) const;
  Vector delta0_hat() const;
  // hat of dK_j (delta0 ⊗ 1) as a vector in C^{Lambda}, i.e. the H0
  // components b_j(x) = i sum_{[z]_N = x} z_j h(z) e^{i p.z}
  Vector hopping_moment(int j, const std::vector<double>& p) const;
};

}  // namespace qdiff

#endif  // QDIFF_SPECTRAL_HPP
