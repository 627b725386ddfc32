#ifndef QDIFF_MARKOV_HPP
#define QDIFF_MARKOV_HPP

#include "qdiff/lattice.hpp"
#include "qdiff/types.hpp"

namespace qdiff {

struct NotErgodic : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegeneratePotential : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Finite-state stationary Markov process driving the potential, together
// with the shift action of the period cell on the state space.
//
// rates is the generator Q: Q(a,b) >= 0 is the jump rate a -> b for a != b
// and rows sum to zero.  mu is the invariant probability (mu^T Q = 0).
// shift[x][w] = sigma_x(w) for x indexed by the period cell; sigma extends
// to all of Z^d through sigma_x = sigma_{[x]_N}.
struct MarkovModel {
  LatticeConfig lattice;
  int M = 0;  // |Omega|
  RMatrix rates;
  RVector mu;
  std::vector<std::vector<int>> shift;

  int sigma(const ivec& x, int omega) const {
    return shift[lattice.fold_index(x)][omega];
  }
};

// Continuous time random walk on Omega = Lambda with periodic boundaries:
// jumps to each of the 2d cyclic neighbors at rate rate/(2d) (coinciding
// neighbors accumulate), uniform mu, and sigma_x(w) = [w - x]_N so that
// v_x = v_0 ∘ sigma_x holds for the jiggling potential v_x(w) = U([x-w]_N).
MarkovModel build_cyclic_walk(const LatticeConfig& cfg, double rate);

// Explicit model from a rate matrix and a shift table for the cell
// generators; mu is computed as the null vector of Q^T unless provided.
MarkovModel build_explicit(const LatticeConfig& cfg, RMatrix rates,
                           std::vector<std::vector<int>> shift,
                           std::optional<RVector> mu = std::nullopt);

// Generator B of the backward semigroup S_t f(a) = E(f(w(0)) | w(t) = a),
// i.e. B = -Q* with Q* the adjoint of Q on L^2(Omega, mu); for reversible
// models B = -Q.  gamma and invT are the sectoriality and spectral gap
// constants of B on the mu-orthogonal complement of constants:
//   |Im <f,Bf>| <= gamma Re <f,Bf>,   Re <f,Bf> >= invT Var(f).
struct BackwardGenerator {
  RMatrix B;
  double gamma = 0.0;
  double invT = 0.0;

  double T() const { return 1.0 / invT; }
  // solves B g = f on mean-zero functions; f must be mu-mean-zero
  RVector solve_mean_zero(const RVector& f, const RVector& mu) const;
};

BackwardGenerator backward_generator(const MarkovModel& model);

// Site potentials v : Lambda x Omega -> R with v_x = v_0 ∘ sigma_x.
struct PotentialAssignment {
  RMatrix v;  // (N^d) x M, row x = v_x(.)

  RVector v0() const { return v.row(0).transpose(); }
  // ||V~|| = max_{x,w} |v_x(w) - v_0(w)|
  double vtilde_norm() const;
};

// Jiggling potential from a cell function: v_x(w) = U([x - w]_N); requires
// Omega = Lambda.  The covariance identity v_x = v_0 ∘ sigma_x is asserted
// against the model's shift table.
PotentialAssignment potential_from_cell(const CellFunction& U,
                                        const MarkovModel& model);

// General covariant potential generated from v0 through the shift action.
PotentialAssignment potential_from_v0(const RVector& v0,
                                      const MarkovModel& model);

// chi = min_{x != y in Lambda} ||B^{-1}(v_x - v_y)||_{L^2(mu)}.
// Throws DegeneratePotential when some v_x - v_y vanishes identically.
double chi_constant(const MarkovModel& model, const BackwardGenerator& B,
                    const PotentialAssignment& v);

// One realization of the driving process: right continuous, piecewise
// constant, jump times strictly increasing.  states[i] holds on
// [jump_times[i], jump_times[i+1]).
struct PotentialPath {
  std::vector<double> jump_times;  // starts with 0
  std::vector<int> states;
  double t_max = 0.0;

  int state_at(double t) const;
};

// Gillespie sampling: initial state from mu, exponential holding times,
// next state proportional to the off-diagonal rates.  Deterministic given
// the seed.
PotentialPath sample_path(const MarkovModel& model, double t_max,
                          std::uint64_t seed);

// Constants consumed by the explicit spectral gap bound.
struct SystemConstants {
  double gamma = 0.0;
  double T = 0.0;  // inverse spectral gap of B
  double chi = 0.0;
  double vtilde_norm = 0.0;
  double hhat_sup = 0.0;
};

// delta >= (1/T) chi^2 / [ (2 + gamma + 4 T ||h^|| + 4 T ||V~||)^2
//                          + ||V~||^2 chi^2 ]
double gap_lower_bound(const SystemConstants& c);

struct AssumptionReport {
  bool pass = false;
  std::vector<std::string> violations;
  SystemConstants constants;
  double delta_bound = 0.0;
};

// Executable form of the model assumptions: stationarity and shift
// invariance of the process, ergodicity, the group-action laws of sigma,
// hopping symmetry/non-degeneracy, potential covariance, and
// ||v_x - v_0||_inf > 0 for x != 0.  Collects every violated assumption
// by name and emits the constants for the gap bound.
AssumptionReport verify_assumptions(const MarkovModel& model,
                                    const HoppingKernel& h,
                                    const PotentialAssignment& v);

}  // namespace qdiff

#endif  // QDIFF_MARKOV_HPP
