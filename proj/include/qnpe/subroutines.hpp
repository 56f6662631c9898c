// Quantum estimation and linear-algebra subroutines with two fidelity tiers:
//   Circuit  — explicit registers and operators on the statevector;
//   Spectral — exact matrix decompositions plus quantized estimation
//              registers emulating phase/amplitude-estimation outcomes.
// Every subroutine meters abstract query counts against its stated cost
// model; randomness is injected only through explicit Rng streams.
#pragma once

#include <Eigen/Dense>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "qnpe/sim_state.hpp"
#include "qnpe/tree_store.hpp"

namespace qnpe {

inline constexpr double kPi = std::numbers::pi;

enum class Tier { Circuit, Spectral };

std::string_view to_string(Tier t);
Tier tier_from_string(std::string_view s);

// Uniform per-subroutine report: queries consumed, the a-priori error bound,
// and the measured deviation when ground truth is available.
struct EstimateReport {
    std::string name;
    std::map<std::string, double> params;
    uint64_t queries = 0;
    double error_bound = 0.0;
    double measured_error = std::numeric_limits<double>::quiet_NaN();
    std::string to_json() const;
};

// A unitary preparation: layout plus program whose action on |0...0> is the
// preparation. prepare() materializes the state.
struct Preparation {
    std::vector<std::pair<std::string, int>> layout;
    Program program;
    SimState prepare() const;
};

// Preparation of an explicit (real or complex) state on a single register.
Preparation preparation_from_state(const std::string& reg, const Eigen::VectorXcd& psi);

// ---------------------------------------------------------------------------
// Amplitude estimation / amplification

// Probability that `oracle`'s flipped subspace is observed in `state`.
double good_probability(const SimState& state, const Op& oracle);

// Grover iterate (2|psi><psi| - I) . S_chi as a program.
Program grover_operator(const Preparation& prep, const Op& good_oracle);

// Quantum Fourier transform over single-bit registers (MSB first):
// |x> -> (1/sqrt M) sum_y exp(2 pi i x y / M) |y>.
Program qft_program(const std::vector<std::string>& regs);

// Analytic outcome distribution of t-bit amplitude estimation at amplitude a.
Eigen::VectorXd qae_pmf(double a, int t_bits);

// A-priori estimation error bound at amplitude a with t grid bits.
double qae_error_bound(double a, int t_bits);

inline constexpr double kQaeConfidence = 8.0 / (kPi * kPi);

struct QaeResult {
    double estimate = 0.0;   // sin^2(pi y / 2^t), exactly on the grid
    uint64_t label = 0;      // measured grid label y
    int grid_bits = 0;
    double confidence = kQaeConfidence;
    uint64_t queries = 0;    // Grover applications, 2^t - 1
    EstimateReport report;
};

QaeResult amplitude_estimation(const Preparation& prep, const Op& good_oracle, int t_bits,
                               Tier tier, Rng& rng);

// Median of 2*ceil(ln(1/delta))+1 independent estimates; lifts the success
// floor from 8/pi^2 to at least 1 - delta.
QaeResult amplitude_estimation_boosted(const Preparation& prep, const Op& good_oracle,
                                       int t_bits, double delta, Tier tier, Rng& rng);

struct AmplifyResult {
    SimState state;
    double initial_probability = 0.0;
    double good_probability = 0.0;  // sin^2((2t+1) theta)
    uint64_t iterations = 0;
    uint64_t queries = 0;
};

AmplifyResult amplitude_amplify(const Preparation& prep, const Op& good_oracle, uint64_t t,
                                Tier tier);

// Largest expected success probability over iteration counts 0..t_max given
// an amplitude estimate; used to guard against rotation overshoot.
uint64_t best_iteration_count(double a_estimate, uint64_t t_max);

// ---------------------------------------------------------------------------
// Fixed-point amplitude amplification

struct FixedPointSchedule {
    uint64_t l_requested = 0;  // iteration budget before odd rounding
    uint64_t l_effective = 0;  // odd query count actually used
    double delta_prime = 0.0;
    double gamma_inv = 0.0;    // T_{1/L}(1/delta')
    std::vector<double> alpha;  // generalized-iteration angles, k = 1..(L-1)/2
    std::vector<double> beta;   // beta[l-k] = -alpha[k-1]; applied as exp(-i beta)
};

// Chebyshev polynomial T_n(x) for real x (trigonometric/hyperbolic branches).
double chebyshev_t(double n, double x);

FixedPointSchedule make_fixed_point_schedule(uint64_t l_budget, double delta_prime);

struct FixedPointResult {
    SimState state;
    double initial_probability = 0.0;
    double good_probability = 0.0;
    uint64_t queries = 0;  // oracle uses = l_effective
};

// Yoder-Low-Chuang sequence driving the good-subspace probability to
// >= 1 - delta'^2 whenever the initial overlap meets the schedule's floor.
FixedPointResult fixed_point_search(const Preparation& prep, const Op& good_oracle,
                                    const FixedPointSchedule& schedule, Tier tier);

// Per-branch fixed-point amplification across a branch register: estimates
// each branch overlap (t-bit QAE on the branch-conditional amplitude), builds
// per-branch schedules from the lower confidence bound max(estimate / 1.5,
// overlap_floor), and applies the sequences branch-controlled. Good subspace:
// flag register == good_value.
struct ParallelHandlingResult {
    SimState state;
    std::vector<double> branch_overlap_estimates;  // |sin psi| estimates
    std::vector<FixedPointSchedule> schedules;
    std::vector<double> branch_probabilities;      // per-branch good probability
    uint64_t queries = 0;
    EstimateReport report;
};

ParallelHandlingResult parallel_amplitude_handling(const SimState& joint,
                                                   const std::string& branch_reg,
                                                   const std::string& flag_reg,
                                                   uint64_t good_value, double delta_prime,
                                                   int qae_bits, double overlap_floor, Tier tier,
                                                   Rng& rng);

// ---------------------------------------------------------------------------
// Distance oracle

struct DistanceOracle {
    int value_bits = 16;
    int frac_bits = 12;
    double eps1 = 0.0;
    double delta = 0.0;
    double norm_product = 0.0;      // max_i |x_i| * max_j |y_j|
    uint64_t cost_per_query = 0;    // metered oracle-model cost per invocation
    Eigen::MatrixXd quantized;      // d~^2(i,j), fixed-point squared distances
    EstimateReport report;

    double value(Eigen::Index i, Eigen::Index j) const { return quantized(i, j); }
    // Bit oracle |i>|j>|v> -> |i>|j>|v xor code(d~^2)> for the circuit tier.
    Op make_bit_oracle(const std::string& i_reg, const std::string& j_reg,
                       const std::string& value_reg, int i_bits, int j_bits) const;
};

// Squared-distance oracle between rows of two stores, accurate within eps1
// (per-branch success probability >= 1 - 2 delta enters the cost model).
DistanceOracle distance_oracle(const TreeStore& x, const TreeStore& y, double eps1,
                               double delta);

// ---------------------------------------------------------------------------
// Difference-state preparation

struct DifferenceBranch {
    Eigen::Index i = 0;
    Eigen::Index j = 0;
    double weight = 0.0;  // p_ij, summing to 1 across branches
};

struct DifferenceStateResult {
    SimState state;  // registers (i, j, vec); flag already discarded
    double fidelity_vs_ideal = 0.0;
    double flag_success_probability = 0.0;
    std::vector<double> branch_fidelities;
    uint64_t queries = 0;
    EstimateReport report;
};

// Prepares sum_ij sqrt(p_ij) |i>|j>|x_i - y_j> within fidelity 1 - O(eps),
// via the rotation/interference construction plus per-branch fixed-point
// amplification. eps0 lower-bounds every |x_i - y_j|.
DifferenceStateResult difference_state_prep(const TreeStore& x, const TreeStore& y,
                                            const std::vector<DifferenceBranch>& branches,
                                            double eps0, double delta_prime, int qae_bits,
                                            Tier tier, Rng& rng);

// ---------------------------------------------------------------------------
// Purification of the neighborhood correlation density operator

struct PurificationResult {
    SimState state;  // registers (row, nbr, vec)
    double fidelity_vs_ideal = 0.0;
    double acceptance_probability = 0.0;  // controlled-rotation flag success
    double trace_norm = 0.0;              // c^(i): sum of squared neighbor distances
    uint64_t queries = 0;
    EstimateReport report;
};

PurificationResult purification_prep(const TreeStore& x, Eigen::Index i,
                                     const std::vector<Eigen::Index>& q, double r, double eps0,
                                     double delta_prime, int qae_bits, Tier tier, Rng& rng);

// ---------------------------------------------------------------------------
// Block encodings

struct BlockEncoding {
    double alpha = 1.0;
    int ancilla_bits = 0;
    double epsilon = 0.0;
    std::vector<std::pair<std::string, int>> layout;  // ancilla registers first
    Program op;
    std::string block_reg;  // register carrying the encoded operator

    // Dense encoded block <0|U|0> * alpha (desk scale only).
    Eigen::MatrixXcd extract_block() const;
};

// (1, ancilla, 0) block encoding of the reduced density operator of
// `system_reg` inside the purification prepared by `prep`:
// (G^+ (x) I) (I (x) SWAP) (G (x) I).
BlockEncoding block_encoding_from_purification(const Preparation& prep,
                                               const std::string& system_reg);

// One-ancilla dilation of a Hermitian contraction ||a|| <= 1.
BlockEncoding dense_block_encoding(const Eigen::MatrixXd& a);

// Checks |target - alpha * block| <= epsilon + tol densely.
void verify_block_encoding(const BlockEncoding& be, const Eigen::MatrixXcd& target,
                           double tol = 1e-8);

// ---------------------------------------------------------------------------
// Block-encoded pseudo-inversion

struct InversionResult {
    Eigen::VectorXcd state;        // normalized A^+ b direction
    double success_probability = 0.0;
    int grid_bits = 0;
    uint64_t queries = 0;
    EstimateReport report;
};

// |b> -> A^+|b> / |A^+|b>| on the nonzero eigenspace; eigenvalues are
// quantized to grid_bits (default from kappa and eps). Circuit tier runs a
// phase-estimation inversion circuit (dimension <= 4).
InversionResult invert_block_encoded(const BlockEncoding& be, const Eigen::VectorXcd& b,
                                     double kappa, double eps, Tier tier,
                                     std::optional<int> grid_bits = std::nullopt);

// Spectral-tier entry point for a dense Hermitian operator (the pipeline
// obtains rho directly from the purification's partial trace). With
// project_onto_span, input weight in the dropped eigenspace is discarded by
// post-selection (pseudo-inverse semantics) instead of raising a span error.
InversionResult invert_dense(const Eigen::MatrixXcd& a, const Eigen::VectorXcd& b, double kappa,
                             double eps, std::optional<int> grid_bits = std::nullopt,
                             bool project_onto_span = false);

// ---------------------------------------------------------------------------
// Real-amplitude state tomography

struct TomographyResult {
    Eigen::VectorXd estimate;  // unit vector
    uint64_t samples = 0;      // N per phase (magnitude + sign)
    uint64_t queries = 0;      // 2N preparations
    EstimateReport report;
};

// ell_2 tomography with sign recovery by interference against the estimated
// magnitude state; N = ceil(36 d ln d / delta^2) samples per phase.
TomographyResult tomography(const Eigen::VectorXcd& state, double delta, Rng& rng);

// ---------------------------------------------------------------------------
// Quantum singular value estimation

struct QsveResult {
    SimState state;            // input layout plus trailing "sv" label register
    int grid_bits = 0;
    double frobenius = 0.0;
    Eigen::VectorXd sigma_exact;      // per right-singular index, exact
    Eigen::VectorXd sigma_grid;       // quantized onto |D|_F cos(pi y / 2^t)
    std::vector<uint64_t> labels;     // grid labels per singular index
    Eigen::MatrixXd v;                // right singular vectors (deterministic signs)
    uint64_t queries = 0;
    EstimateReport report;

    double sigma_of_label(uint64_t y) const;
};

// Appends a singular-value label register entangled with the right-singular
// decomposition of the trailing register of `input`: sum beta_j |v_j>|0> ->
// sum beta_j |v_j>|sigma~_j>, with |sigma~ - sigma| <= delta |D|_F.
QsveResult qsve(const TreeStore& d_store, const SimState& input, double delta, Tier tier);

// ---------------------------------------------------------------------------
// Quantum minimum finding over a labeled superposition

struct MinFindResult {
    uint64_t label = 0;
    double sigma = 0.0;
    Eigen::MatrixXd vectors;  // orthonormal basis of the tied right-singular subspace
    uint64_t queries = 0;     // oracle calls across all repetitions
    uint64_t attempts = 0;
    EstimateReport report;
};

// Returns the smallest quantized singular value strictly above
// `exclude_threshold` whose label is not already in `already_found`, with
// success probability > 1/2 per attempt, amplified by `rho` repetitions.
// Operates on a QSVE-labeled state.
MinFindResult find_minimum(const QsveResult& labeled, double exclude_threshold,
                           const std::vector<uint64_t>& already_found, int rho, Tier tier,
                           Rng& rng);

// ---------------------------------------------------------------------------
// Phase estimation over the extended (off-diagonal block) matrix

struct ExtendedPeResult {
    Eigen::VectorXd gamma_exact;   // singular values of the padded matrix
    Eigen::VectorXd gamma_grid;    // quantized magnitudes per singular index
    Eigen::VectorXd beta;          // input coefficients on the left-singular basis
    Eigen::MatrixXd u, v;          // singular bases (deterministic signs)
    double tau = 0.0;              // evolution time, pi / (2 gamma_max)
    int grid_bits = 0;
    uint64_t queries = 0;
    EstimateReport report;
};

// Eigen-decomposes [[0, X],[X^T, 0]] via the SVD of padded X; the labels
// quantize +-gamma_i tau / 2pi onto the t-bit phase grid. `b` is the
// embedding |0, v^n> of a spectral coordinate vector.
ExtendedPeResult extended_matrix_phase_estimation(const TreeStore& x_store,
                                                  const Eigen::VectorXd& b, int t_bits,
                                                  Tier tier);

}  // namespace qnpe
