#ifndef QDIFF_AUGMENTED_HPP
#define QDIFF_AUGMENTED_HPP

#include "qdiff/markov.hpp"

namespace qdiff {

struct QuadratureNotConverged : ToleranceFailure {
  using ToleranceFailure::ToleranceFailure;
};

// Fibered generator L~_{k,p} = i K~_{k,p} + i V~ + B on C^{Lambda x Omega}.
//
// Index order is cell site major, Markov state minor: (x, w) -> x*M + w,
// so the Markov part is block diagonal I ⊗ B.  The natural-coordinate
// matrix acts on function values; inner products there carry the mu
// weight.  hat() conjugates by diag over (x,w) of sqrt(mu(w)), the unitary
// identification of L^2(Lambda x Omega, mu) with plain C^{n}.
struct AugmentedGenerator {
  LatticeConfig lattice;
  int M = 0;
  std::vector<double> k, p;
  Matrix matrix;  // natural coordinates

  int dim() const { return static_cast<int>(matrix.rows()); }
  int index(int cell_index, int omega) const { return cell_index * M + omega; }
  Matrix hat(const RVector& mu) const;
};

// (K~ psi)(x,w) = sum_z h(z) e^{i p.z} [ psi([x-z]_N, w)
//                                        - e^{-i k.z} psi([x-z]_N, s_z w) ]
Matrix assemble_K(const std::vector<double>& k, const std::vector<double>& p,
                  const HoppingKernel& h, const LatticeConfig& cfg,
                  const MarkovModel& model);

// derivative of K~ with respect to k_j at k = 0:
// (dK~_j psi)(x,w) = i sum_z z_j h(z) e^{i p.z} psi([x-z]_N, s_z w)
Matrix assemble_K_derivative(int j, const std::vector<double>& p,
                             const HoppingKernel& h, const LatticeConfig& cfg,
                             const MarkovModel& model);

// diagonal matrix of v_x(w) - v_0(w); the x = 0 block vanishes
Matrix assemble_V(const PotentialAssignment& v, const LatticeConfig& cfg,
                  const MarkovModel& model);

AugmentedGenerator assemble_L(const std::vector<double>& k,
                              const std::vector<double>& p,
                              const HoppingKernel& h,
                              const PotentialAssignment& v,
                              const MarkovModel& model);

// The vector delta_0 ⊗ 1 (1 at (x=0, every w)); unit norm in L^2(mu).
Vector delta0_tensor_one(const LatticeConfig& cfg, int M);

// rho~_{0;k,p}(x) = sum_{eta,y} rho_0(x - N eta - y, -y)
//                     e^{i p.(x - N eta) - i k.y},
// evaluated over the finite support: the entry rho_0(a,b) contributes
// rho_0(a,b) e^{i p.(a-b) + i k.b} to the component x = [a-b]_N.
struct TransformedInitial {
  Vector rho;  // over Lambda
};

TransformedInitial transform_initial(const DensityMatrixInit& rho0,
                                     const std::vector<double>& k,
                                     const std::vector<double>& p,
                                     const LatticeConfig& cfg);

// m(p) = (1/(2 pi)^d) sum_j lambda_j sum_{zeta in Lambda}
//                         |psi_j^(p + 2 pi zeta / N)|^2,
// the quasi-momentum amplitude profile of the initial state; agrees with
// (N^d/(2 pi)^d) rho~_{0;0,p}(0).
double initial_profile_m(const DensityMatrixInit& rho0,
                         const std::vector<double>& p,
                         const LatticeConfig& cfg);

// <delta_0 ⊗ 1, e^{-t L} w>_mu, i.e. the mu average of the x = 0 block of
// the evolved vector.
cplx fiber_bracket(const AugmentedGenerator& L, const Vector& w, double t,
                   const RVector& mu);

// Everything the fiber evaluations need; bundles the system objects and
// caches nothing heavier than references.
struct FiberSystem {
  const HoppingKernel& h;
  const PotentialAssignment& v;
  const MarkovModel& model;
};

// Exact mean-density Fourier transform
//   sum_x e^{-i k.x} E rho_t(x,x)
// from the transformed Feynman-Kac formula: the p integral over
// [0, 2 pi / N)^d of fiber brackets, with Mp^d uniform quadrature nodes
// (trapezoidal weights; the integrand is smooth and periodic in p).
// When certify is true the grid is doubled once and the results must agree
// within tol, else QuadratureNotConverged; the refined value is returned.
cplx exact_fourier_density(const std::vector<double>& k, double t,
                           const DensityMatrixInit& rho0, int Mp,
                           const FiberSystem& sys, double tol = 1e-9,
                           bool certify = true);

// Quasi-momentum charge sum_x E rho_t(x + N y, x) through the fibered
// route (exactly conserved in t); the k = 0 fiber with an extra
// e^{-i N p.y} weight in the p quadrature.
cplx quasimomentum_charge_exact(const ivec& y, double t,
                                const DensityMatrixInit& rho0, int Mp,
                                const FiberSystem& sys);

}  // namespace qdiff

#endif  // QDIFF_AUGMENTED_HPP
