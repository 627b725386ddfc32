#ifndef QDIFF_HARNESS_HPP
#define QDIFF_HARNESS_HPP

#include <filesystem>
#include <iosfwd>

#include "qdiff/dynamics.hpp"
#include "qdiff/spectral.hpp"

namespace qdiff {

struct AssumptionFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MarkovSpec {
  std::string type;  // "cyclic_walk" or "explicit"
  double rate = 1.0;
  RMatrix rates;
  std::vector<std::vector<int>> shift;
  std::optional<RVector> mu;
};

// One experiment: lattice, hopping, potential, Markov driver, initial
// state, observables and numerical knobs.  Everything is dimensionless
// (hbar = 1, lattice spacing 1, time in inverse hopping units).
struct ExperimentConfig {
  std::string name = "experiment";
  LatticeConfig lattice;
  HoppingKernel hopping;
  std::optional<CellFunction> U;   // jiggling potential on the cell
  std::optional<RVector> v0;       // or a general covariant potential
  MarkovSpec markov;
  DensityMatrixInit initial;
  std::vector<std::vector<double>> k_values;
  double time = 1.0;
  std::vector<double> tau_values{16.0, 64.0, 256.0, 1024.0};
  long samples = 1000;
  std::uint64_t seed = 1;
  int p_grid = 16;        // quadrature nodes per axis for exact fibers
  int profile_grid = 64;  // D(p) grid per axis
  int threads = 0;
  std::string source_text;  // raw config text, hashed into the manifest

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_json_file(const std::filesystem::path& file);
};

struct BuiltSystem {
  MarkovModel model;
  PotentialAssignment v;

  FiberSystem fibers(const HoppingKernel& h) const { return {h, v, model}; }
};

BuiltSystem build_system(const ExperimentConfig& cfg);

// Runs the executable assumptions (including the no-smaller-period check
// when a cell potential is given) and prints the constants and the
// explicit gap bound.  Does not throw on violations; callers inspect the
// report.
AssumptionReport run_assumptions(const ExperimentConfig& cfg,
                                 std::ostream* log = nullptr);

struct ScalingRow {
  double tau = 0.0;
  cplx lhs;              // exact fibered value at k/sqrt(tau), tau t
  double rhs = 0.0;      // limit integral of e^{-t k.D(p) k} m(p)
  double abs_err = 0.0;  // |lhs - rhs|
  cplx leading;          // rank-one (Riesz) part of lhs
  double remainder_abs = 0.0;
  double taylor_gap = 0.0;  // max_p |e^{-tau t E} - e^{-t k.D k}|
  double quad_err = 0.0;    // change under doubling the p grid
  bool aux = false;         // small-tau rows used only for the rate fit
};

struct ScalingReport {
  std::vector<double> k;
  double t = 0.0;
  double rhs = 0.0;
  std::vector<ScalingRow> rows;
  double fitted_rate = 0.0;   // decay rate of the remainder in tau t
  double delta_min = 0.0;     // min over the p grid of the measured gap
  int fit_points = 0;         // rows above the noise floor used in the fit
  // per-row per-p Taylor gaps for the taylor.csv table
  std::vector<std::vector<double>> taylor_table;
  std::vector<std::vector<double>> pgrid;
};

// Theorem-level verification: compares the exact fibered evolution at
// k/sqrt(tau), tau t against the tau-independent superposition of
// diffusions, decomposes each row into the slow-branch part and the
// remainder, and fits the remainder decay rate.
ScalingReport run_verify_scaling(const ExperimentConfig& cfg,
                                 std::ostream* log = nullptr);

struct CrossCheckRow {
  std::vector<double> k;
  EnsembleDensity::ComplexStat mc;
  cplx exact;
  double z = 0.0;  // max of per-component |mc - exact| / stderr
};

struct SimulateResult {
  EnsembleDensity density;
  std::vector<CrossCheckRow> cross;  // filled when cross_check is set
  double max_z = 0.0;
};

SimulateResult run_simulate(const ExperimentConfig& cfg, bool cross_check,
                            std::ostream* log = nullptr);

struct DiffusionResult {
  SpectralAnalyzer::DiffusionProfile profile;
  double min_eigenvalue = 0.0;       // min over p of lambda_min(D(p))
  double max_imag_residual = 0.0;    // Hessian realness residual
  double max_route_diff = 0.0;       // reduced-resolvent vs Schur route
  double delta_numeric_min = 0.0;
};

DiffusionResult run_diffusion(const ExperimentConfig& cfg,
                              std::ostream* log = nullptr);

// --- output files ---------------------------------------------------------

void write_density_csv(const std::filesystem::path& file,
                       const EnsembleDensity& density);
void write_fourier_csv(const std::filesystem::path& file,
                       const std::vector<CrossCheckRow>& rows, bool with_exact);
void write_profile_csv(const std::filesystem::path& file,
                       const SpectralAnalyzer::DiffusionProfile& profile);
void write_scaling_csv(const std::filesystem::path& file,
                       const ScalingReport& report);
void write_taylor_csv(const std::filesystem::path& file,
                      const ScalingReport& report);
void write_manifest(const std::filesystem::path& file,
                    const ExperimentConfig& cfg, const std::string& command);

std::uint64_t fnv1a64(std::string_view text);

}  // namespace qdiff

#endif  // QDIFF_HARNESS_HPP
