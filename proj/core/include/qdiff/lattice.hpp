#ifndef QDIFF_LATTICE_HPP
#define QDIFF_LATTICE_HPP

#include <map>
#include <optional>
#include <utility>

#include "qdiff/types.hpp"

namespace qdiff {

// Period cell geometry: dimension d and period N.  The cell is
// Lambda = [0,N)^d ∩ Z^d, enumerated with the first coordinate fastest,
// and the quasi-momentum torus is [0, 2*pi/N)^d.
struct LatticeConfig {
  int d = 1;
  int N = 2;

  LatticeConfig() = default;
  LatticeConfig(int d_, int N_);

  int cell_volume() const;  // N^d

  // [x]_N with every coordinate reduced into [0, N)
  ivec fold(const ivec& x) const;

  // mixed-radix index of a folded point, first coordinate fastest
  int cell_index(const ivec& folded) const;
  ivec cell_point(int index) const;

  int fold_index(const ivec& x) const { return cell_index(fold(x)); }
};

ivec fold(const ivec& x, const LatticeConfig& cfg);

// Finitely supported hopping amplitudes h : Z^d -> C with Hermitian
// symmetry h(-x) = conj h(x).
struct HoppingKernel {
  std::map<ivec, cplx> entries;

  void set(const ivec& x, cplx value) { entries[x] = value; }
  cplx at(const ivec& x) const;

  // sup_x |x|_inf over the support (0 for empty kernels)
  int support_radius() const;
  // sum_x |x|_inf * |h(x)|, a ballistic speed scale
  double hop_speed() const;
};

struct SymmetryViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateHopping : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct HoppingValidation {
  bool hermitian = false;
  bool nondegenerate = false;     // support spans R^d
  double hhat_sup = 0.0;          // max over the sample grid of |h^(k)|
  double hhat_sup_certified = 0.0;  // sampled max + Lipschitz grid correction
  std::vector<std::string> violations;

  bool pass() const { return hermitian && nondegenerate; }
  // throws SymmetryViolation / DegenerateHopping on failure
  void require() const;
};

// Checks Hermitian symmetry and that the support spans R^d, and estimates
// the symbol sup norm ||h^||_inf = sup_k |sum_x e^{i x.k} h(x)| on a dense
// grid.  The certified value adds the modulus-of-continuity correction
// (sum_x |x|_1 |h(x)|) * (spacing / 2), so it upper-bounds the true sup;
// the gap lower bound stays valid when fed the certified value.
HoppingValidation validate_hopping(const HoppingKernel& h, int d,
                                   int grid_points = 4096);

// symbol h^(k) = sum_x e^{i x.k} h(x)
cplx hopping_symbol(const HoppingKernel& h, const std::vector<double>& k);

// Real function on the period cell (the deterministic potential U, indexed
// by LatticeConfig::cell_index).
struct CellFunction {
  std::vector<double> values;

  CellFunction() = default;
  explicit CellFunction(std::vector<double> v) : values(std::move(v)) {}
  double at(int cell_index) const { return values.at(cell_index); }
};

// True iff for every x in Lambda, x != 0:
//   sum_{y in Lambda} |U([x+y]_N) - U(y)| > 0,
// i.e. U has no period smaller than N.
bool check_no_smaller_period(const CellFunction& U, const LatticeConfig& cfg);

// Finitely supported wave packet on Z^d.
struct WavePacket {
  std::map<ivec, cplx> amp;

  void set(const ivec& x, cplx value) { amp[x] = value; }
  double norm() const;
  WavePacket normalized() const;
  int support_radius() const;

  static WavePacket delta(const ivec& x);
};

// Initial density matrix rho_0 = sum_j lambda_j |psi_j><psi_j| with
// finitely supported, normalized psi_j and lambda_j >= 0.  This
// eigendecomposed form is canonical; a kernel given entrywise is
// diagonalized on its support first.
struct DensityMatrixInit {
  std::vector<std::pair<double, WavePacket>> terms;

  static DensityMatrixInit pure(const WavePacket& psi);
  static DensityMatrixInit mixture(std::vector<std::pair<double, WavePacket>> t);
  // Diagonalizes a Hermitian non-negative kernel given by its entries.
  // Throws std::invalid_argument if the kernel is not Hermitian or has an
  // eigenvalue below -tol.
  static DensityMatrixInit from_entries(
      const std::map<std::pair<ivec, ivec>, cplx>& entries, double tol = 1e-10);

  double trace() const;
  // kernel entries rho_0(x,y) over the joint support
  std::map<std::pair<ivec, ivec>, cplx> entries() const;
  int support_radius() const;
};

}  // namespace qdiff

#endif  // QDIFF_LATTICE_HPP
