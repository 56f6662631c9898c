// End-to-end quantum embedding pipeline: radius-neighbor discovery by
// counting and amplified sampling, reconstruction weights by purified
// correlation inversion plus tomography, and embedding directions by
// singular-value search plus spectral ridge regression. Every stage meters
// oracle queries and reports measured error against its a-priori bound.
#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qnpe/classical_npe.hpp"
#include "qnpe/subroutines.hpp"
#include "qnpe/tree_store.hpp"

namespace qnpe {

struct QnpeConfig {
    double r = 1.0;               // neighbor radius
    Eigen::Index d = 2;           // embedding dimension
    std::optional<double> alpha;  // ridge parameter; empty = 0.01 * mean(diag(X^T X))
    double eps = 0.05;            // global accuracy budget
    double eps0 = 0.0;            // smallest pair distance; 0 = measured from data
    double eps1 = 0.0;            // distance-write accuracy; 0 = eps^2 * eps0^2
    double delta_prime = 0.05;    // fixed-point amplification tuning
    // Per-subroutine grid-width overrides: "count" (pair-count estimation
    // bits, 0 = adaptive), "pur" (purification flag estimation), "ridge"
    // (design-matrix phase estimation).
    std::map<std::string, int> t_bits;
    Tier tier = Tier::Spectral;
    uint64_t seed = 1;

    void validate() const;  // throws a parameter error on any bad field
    int bits(const std::string& name, int fallback) const;

    // Derived accuracy splits (documented contract):
    //   distance-write error   eps1 (or eps^2 * eps0^2 when unset)
    //   inversion + tomography eps
    //   singular values        eps / 2
    //   ridge phase            eps / 2
    double eps1_effective(double measured_eps0) const;
};

// Per-stage and per-subroutine query accounting.
struct StageLedger {
    std::map<std::string, uint64_t> stages;   // "neighbors", "weights", "transform"
    std::map<std::string, uint64_t> details;  // subroutine-level breakdown
    uint64_t total() const;
    void add(const std::string& stage, const std::string& detail, uint64_t queries);
};

// Measured errors against their a-priori bounds, plus non-fatal warnings.
struct ErrorReport {
    std::map<std::string, double> measured;
    std::map<std::string, double> bounds;
    std::vector<std::string> warnings;
};

struct NeighborFindResult {
    NeighborSets neighbors;
    double k_estimate = 0.0;           // estimated pair count
    int count_bits = 0;                // estimation grid actually used
    uint64_t grover_iterations = 0;    // amplification iterations applied
    double amplified_probability = 0.0;
    uint64_t samples = 0;              // measurement draws consumed
    uint64_t queries = 0;              // = counting + sampling
    uint64_t queries_counting = 0;     // pair-count estimation
    uint64_t queries_sampling = 0;     // amplified preparation + verification
    std::vector<std::string> warnings;
};

struct WeightRowResult {
    Eigen::Index point = 0;
    Eigen::VectorXd row;                 // dense length-m row, sums to 1
    std::vector<Eigen::Index> support;   // equals the discovered neighbor set
    double kappa = 0.0;                  // correlation condition number used
    double deviation = 0.0;              // l2 gap vs the exact solve on this support
    int retries = 0;
    uint64_t queries = 0;                // total = purification + readout costs
    uint64_t queries_purification = 0;
    uint64_t queries_inversion = 0;      // per-preparation inversion cost
    uint64_t queries_tomography = 0;     // samples drawn (each one preparation)
};

struct TransformResult {
    Eigen::VectorXd sigma;  // ascending singular-value estimates, one per direction
    Eigen::MatrixXd z;      // m x d right-singular directions recovered
    Eigen::MatrixXd a;      // n x d unit embedding directions, sign-fixed
    uint64_t queries = 0;   // = qsve + search + ridge
    uint64_t queries_qsve = 0;    // singular-value labeling
    uint64_t queries_search = 0;  // minimum finding (two labelings + one oracle each)
    uint64_t queries_ridge = 0;   // design-matrix phase estimation, repeated
    std::vector<std::string> warnings;
};

struct QnpeResult {
    QnpeConfig config;
    NeighborSets neighbors;
    double k_estimate = 0.0;
    WeightMatrix w_quantum;
    Eigen::VectorXd sigma_list;  // ascending
    Eigen::MatrixXd a_states;    // n x d, unit columns within 1e-9
    StageLedger query_ledger;
    ErrorReport error_report;
};

// Stage one: estimate the within-radius pair count on the pair grid, amplify
// the neighbor-pair state with the count-derived iteration number (guarded
// against overshoot), then sample ceil(3 K ln K) times and de-duplicate.
// `data` supplies the true row count and the classical margin check.
NeighborFindResult find_neighbors_quantum(const DataMatrix& data, const TreeStore& store_x,
                                          const QnpeConfig& config);

// Stage two, one row: purify the neighborhood correlation over the row's
// indicator support, pseudo-invert it against the uniform neighbor state,
// read the result out by tomography, and renormalize to a unit row sum.
// Row seeds derive from the point and neighbor coordinates, so relabeling
// points permutes rows without changing them.
WeightRowResult weight_row_quantum(const DataMatrix& data, const TreeStore& store_x,
                                   const TreeStore& store_b, Eigen::Index i,
                                   const QnpeConfig& config);

// Stage two, all rows (parallel over rows; content-derived per-row seeds).
WeightMatrix weight_matrix_quantum(const DataMatrix& data, const TreeStore& store_x,
                                   const TreeStore& store_b, const QnpeConfig& config,
                                   StageLedger* ledger = nullptr,
                                   ErrorReport* report = nullptr);

// Stage three: label the shifted-weight operator's singular values on the
// correlated double register, find the d smallest above the zero threshold,
// and ridge-regress each recovered direction through design-matrix phase
// estimation with the controlled gamma/(gamma^2+alpha) rotation.
TransformResult transformation_quantum(const TreeStore& store_d, const TreeStore& store_x,
                                       const DataMatrix& data, const QnpeConfig& config);

// Full pipeline, steps in order: neighbor discovery, indicator store,
// weight rows, shifted-weight store, singular-value search, ridge readout.
// Errors are tagged with the step number at which they occurred.
QnpeResult run_quantum_npe(const DataMatrix& data, const QnpeConfig& config);

}  // namespace qnpe
