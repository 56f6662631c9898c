// Binary-tree store over a data matrix: per-row trees of partial squared
// sums plus a row-norm tree. Supports the three access mappings used by the
// quantum pipeline (element, row state, norm state) with per-mapping query
// counters, so query complexity can be metered instead of timed.
#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <string>
#include <vector>

#include "qnpe/common.hpp"
#include "qnpe/data_matrix.hpp"

namespace qnpe {

enum class StoreKind { Data, NeighborIndicator, ShiftedWeight };

std::string_view to_string(StoreKind k);

enum class StoreMapping { Element, RowState, NormState };

struct QueryCounters {
    std::atomic<uint64_t> element{0};
    std::atomic<uint64_t> row_state{0};
    std::atomic<uint64_t> norm_state{0};

    QueryCounters() = default;
    QueryCounters(const QueryCounters& o)
        : element(o.element.load()), row_state(o.row_state.load()),
          norm_state(o.norm_state.load()) {}
    QueryCounters& operator=(const QueryCounters& o) {
        element.store(o.element.load());
        row_state.store(o.row_state.load());
        norm_state.store(o.norm_state.load());
        return *this;
    }
    uint64_t total() const { return element.load() + row_state.load() + norm_state.load(); }
};

// Immutable after construction except for the query counters.
class TreeStore {
public:
    TreeStore() = default;

    StoreKind kind() const { return kind_; }
    Eigen::Index rows() const { return matrix_.rows(); }
    Eigen::Index cols() const { return matrix_.cols(); }
    const Eigen::MatrixXd& matrix() const { return matrix_; }
    const Eigen::VectorXd& row_norms() const { return row_norms_; }
    double frobenius_norm() const { return frobenius_norm_; }
    double max_row_norm() const { return max_row_norm_; }
    uint64_t build_ops() const { return build_ops_; }

    // --- access mappings (each invocation increments exactly one counter) ---

    // Stored entry M(i,j), exact.
    double element(Eigen::Index i, Eigen::Index j) const;

    // Amplitudes of row i normalized by its norm (length = padded cols).
    Eigen::VectorXd row_state(Eigen::Index i) const;

    // Amplitudes row_norm(i)/frobenius over rows (length = padded rows).
    Eigen::VectorXd norm_state() const;

    // Dispatcher over the three mappings; unused indices are ignored.
    Eigen::VectorXd access(StoreMapping mapping, Eigen::Index i = 0, Eigen::Index j = 0) const;

    const QueryCounters& queries() const { return counters_; }
    void reset_queries() const;

    // Tree internals (exposed for invariant checks): per-row array heaps of
    // partial squared sums, leaf level holds squared entries; signed leaf
    // values are kept alongside so signs survive reconstruction.
    const std::vector<Eigen::VectorXd>& row_trees() const { return row_trees_; }
    const Eigen::VectorXd& norm_tree() const { return norm_tree_; }

    std::string dump_json() const;

    friend TreeStore build_store(const DataMatrix& data, StoreKind kind);

private:
    StoreKind kind_ = StoreKind::Data;
    Eigen::MatrixXd matrix_;
    Eigen::VectorXd row_norms_;
    double frobenius_norm_ = 0.0;
    double max_row_norm_ = 0.0;
    std::vector<Eigen::VectorXd> row_trees_;  // heap layout, size 2P-1, P = padded cols
    Eigen::VectorXd norm_tree_;               // heap layout over padded rows
    uint64_t build_ops_ = 0;
    mutable QueryCounters counters_;
};

// Builds the store, validating kind-specific invariants:
//  - NeighborIndicator: entries in {0,1}, zero diagonal, at least one 1.
//  - ShiftedWeight: unit diagonal (rows of I minus a zero-diagonal matrix).
TreeStore build_store(const DataMatrix& data, StoreKind kind);

// Convenience wrapper for raw matrices.
TreeStore build_store(const Eigen::MatrixXd& m, StoreKind kind,
                      const std::string& provenance = "inline");

}  // namespace qnpe
