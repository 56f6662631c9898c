// Exact classical reference pipeline: neighbor search, locally optimal
// reconstruction weights via neighborhood correlation pseudo-inverses, the
// shifted-weight eigenproblem, and the ridge-regression map from spectral
// coordinates to linear embedding directions.
#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <vector>

#include "qnpe/data_matrix.hpp"

namespace qnpe {

// Relative eigenvalue cutoff used by every pseudo-inverse in the project.
inline constexpr double kPinvRelTol = 1e-10;

struct NeighborSets {
    std::vector<std::vector<Eigen::Index>> sets;  // Q_i, each sorted ascending
    Eigen::Index total = 0;                       // K = sum of set sizes
    double radius = 0.0;                          // r when radius-built, else 0
    Eigen::Index k = 0;                           // per-point count when knn-built, else 0

    Eigen::Index count(Eigen::Index i) const { return Eigen::Index(sets[size_t(i)].size()); }
    Eigen::Index max_count() const;
    // Ratio between the largest and smallest neighborhood size.
    double balance_ratio() const;
};

struct CorrelationMatrix {
    Eigen::Index point = 0;
    Eigen::MatrixXd c;            // k x k, C(j,l) = (x_i - x_j) . (x_i - x_l)
    Eigen::VectorXd eigenvalues;  // ascending
    double cond = 0.0;            // largest over smallest nonzero eigenvalue
    double trace_norm = 0.0;      // sum of squared neighbor distances
};

struct WeightMatrix {
    Eigen::MatrixXd w;                                  // m x m, rows sum to 1, zero diagonal
    std::vector<std::vector<Eigen::Index>> supports;    // per-row support sets
    double reconstruction_residual = 0.0;               // sum_i |x_i - sum_j w_ij x_j|^2
};

struct SpectralResult {
    Eigen::MatrixXd m_matrix;      // (I-W)^T (I-W)
    Eigen::VectorXd eigenvalues;   // all, ascending
    Eigen::VectorXd sigma;         // singular values of I-W, ascending (kernel first)
    Eigen::MatrixXd z;             // m x d: bottom-d eigenvectors above the zero threshold
    Eigen::VectorXd z_eigenvalues; // their eigenvalues
    double zero_threshold = 0.0;
    Eigen::Index rank = 0;         // count of eigenvalues above the threshold
};

struct EmbeddingResult {
    Eigen::MatrixXd a;     // n x d embedding directions (ridge solutions, unnormalized)
    double alpha = 0.0;    // regularization actually used
    Eigen::VectorXd fit_residuals;  // |X a_j - z_j| per direction
};

enum class NeighborRule { Radius, Knn };

struct ClassicalParams {
    NeighborRule rule = NeighborRule::Knn;
    double r = 0.0;          // radius when rule == Radius
    Eigen::Index k = 4;      // neighbor count when rule == Knn
    Eigen::Index d = 2;      // embedding dimension
    std::optional<double> alpha;  // ridge parameter; default 0.01 * mean(diag(X^T X))
};

struct ClassicalResult {
    NeighborSets neighbors;
    WeightMatrix weights;
    SpectralResult spectral;
    EmbeddingResult embedding;
    double alpha = 0.0;
    std::map<std::string, double> timings_sec;
    double cost_model = 0.0;  // m*n*k^3 + d*m^2 reference operation count
};

// Ball neighbors: Q_i = { j != i : |x_i - x_j|^2 <= r^2 }. A point with an
// empty set aborts with a structured error naming the point.
NeighborSets radius_neighbors(const DataMatrix& data, double r);

// k nearest neighbors with ties broken toward the smaller index.
NeighborSets knn_neighbors(const DataMatrix& data, Eigen::Index k);

CorrelationMatrix neighborhood_correlation(const DataMatrix& data, Eigen::Index i,
                                           const std::vector<Eigen::Index>& q);

// w = C^+ 1 / (1^T C^+ 1) with the relative eigenvalue threshold above.
Eigen::VectorXd solve_weights_row(const CorrelationMatrix& corr);

WeightMatrix assemble_weight_matrix(const DataMatrix& data, const NeighborSets& neighbors);

SpectralResult spectral_problem(const Eigen::MatrixXd& w, Eigen::Index d);

// a = (X^T X + alpha I)^{-1} X^T z; alpha = 0 falls back to the least-squares
// pseudo-inverse solution.
Eigen::VectorXd ridge_regress(const Eigen::MatrixXd& x, const Eigen::VectorXd& z, double alpha);

double default_alpha(const Eigen::MatrixXd& x);

ClassicalResult run_classical_npe(const DataMatrix& data, const ClassicalParams& params);

// Reconstruction objective sum_i |x_i - sum_j w_ij x_j|^2.
double reconstruction_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w);

// Hermitian pseudo-inverse with relative eigenvalue cutoff.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& sym, double rel_tol = kPinvRelTol);

// Principal angles (radians, ascending) between the column spaces of a and b.
Eigen::VectorXd principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace qnpe
