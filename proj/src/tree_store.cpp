#include "qnpe/tree_store.hpp"

#include <cmath>
#include <sstream>

namespace qnpe {

std::string_view to_string(StoreKind k) {
    switch (k) {
        case StoreKind::Data: return "data";
        case StoreKind::NeighborIndicator: return "neighbor_indicator";
        case StoreKind::ShiftedWeight: return "shifted_weight";
    }
    return "unknown";
}

namespace {

// Array-heap tree over `leaves` squared values: node v at index t has
// children at 2t+1, 2t+2; leaf block starts at P-1 for P leaves.
Eigen::VectorXd build_tree(const Eigen::VectorXd& squared_leaves, uint64_t& ops) {
    const Eigen::Index p = squared_leaves.size();
    Eigen::VectorXd tree = Eigen::VectorXd::Zero(2 * p - 1);
    tree.tail(p) = squared_leaves;
    ops += uint64_t(p);
    for (Eigen::Index t = p - 2; t >= 0; --t) {
        tree[t] = tree[2 * t + 1] + tree[2 * t + 2];
        ++ops;
    }
    return tree;
}

}  // namespace

TreeStore build_store(const DataMatrix& data, StoreKind kind) {
    const Eigen::MatrixXd& m = data.entries;
    if (!m.allFinite()) throw Error(ErrKind::Value, "store input contains NaN or infinity");

    if (kind == StoreKind::NeighborIndicator) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            bool any = false;
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                const double v = m(i, j);
                if (v != 0.0 && v != 1.0)
                    throw Error(ErrKind::Invariant,
                                "neighbor indicator entries must be 0 or 1, found " +
                                    format_double(v) + " at (" + std::to_string(i) + "," +
                                    std::to_string(j) + ")");
                if (i == j && v != 0.0)
                    throw Error(ErrKind::Invariant, "neighbor indicator diagonal must be zero at " +
                                                        std::to_string(i));
                any = any || v != 0.0;
            }
            if (!any)
                throw Error(ErrKind::NoNeighbors,
                            "point " + std::to_string(i) + " has an empty neighbor row");
        }
    }
    if (kind == StoreKind::ShiftedWeight) {
        for (Eigen::Index i = 0; i < std::min(m.rows(), m.cols()); ++i)
            if (std::abs(m(i, i) - 1.0) > 1e-9)
                throw Error(ErrKind::Invariant,
                            "shifted weight matrix must have unit diagonal, found " +
                                format_double(m(i, i)) + " at " + std::to_string(i));
    }

    const Eigen::Index pr = Eigen::Index(next_pow2(uint64_t(m.rows())));
    const Eigen::Index pc = Eigen::Index(next_pow2(uint64_t(m.cols())));
    Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(pr, pc);
    padded.topLeftCorner(m.rows(), m.cols()) = m;

    TreeStore store;
    store.kind_ = kind;
    store.matrix_ = std::move(padded);
    store.row_norms_ = store.matrix_.rowwise().norm();
    store.frobenius_norm_ = store.matrix_.norm();
    store.max_row_norm_ = store.row_norms_.maxCoeff();
    if (store.frobenius_norm_ == 0.0)
        throw Error(ErrKind::ZeroNorm, "store input matrix is identically zero");

    uint64_t ops = 0;
    store.row_trees_.reserve(size_t(pr));
    for (Eigen::Index i = 0; i < pr; ++i) {
        Eigen::VectorXd sq = store.matrix_.row(i).array().square();
        store.row_trees_.push_back(build_tree(sq, ops));
    }
    Eigen::VectorXd row_sq = store.row_norms_.array().square();
    store.norm_tree_ = build_tree(row_sq, ops);
    store.build_ops_ = ops;
    return store;
}

TreeStore build_store(const Eigen::MatrixXd& m, StoreKind kind, const std::string& provenance) {
    return build_store(make_data_matrix(m, provenance), kind);
}

double TreeStore::element(Eigen::Index i, Eigen::Index j) const {
    if (i < 0 || i >= rows() || j < 0 || j >= cols())
        throw Error(ErrKind::Bounds, "element access out of range: (" + std::to_string(i) + "," +
                                         std::to_string(j) + ") for " + std::to_string(rows()) +
                                         "x" + std::to_string(cols()));
    counters_.element.fetch_add(1);
    return matrix_(i, j);
}

Eigen::VectorXd TreeStore::row_state(Eigen::Index i) const {
    if (i < 0 || i >= rows())
        throw Error(ErrKind::Bounds,
                    "row state index out of range: " + std::to_string(i) + " for " +
                        std::to_string(rows()) + " rows");
    if (row_norms_[i] == 0.0)
        throw Error(ErrKind::ZeroNorm, "row " + std::to_string(i) + " has zero norm");
    counters_.row_state.fetch_add(1);
    return matrix_.row(i).transpose() / row_norms_[i];
}

Eigen::VectorXd TreeStore::norm_state() const {
    counters_.norm_state.fetch_add(1);
    return row_norms_ / frobenius_norm_;
}

Eigen::VectorXd TreeStore::access(StoreMapping mapping, Eigen::Index i, Eigen::Index j) const {
    switch (mapping) {
        case StoreMapping::Element: {
            Eigen::VectorXd v(1);
            v[0] = element(i, j);
            return v;
        }
        case StoreMapping::RowState: return row_state(i);
        case StoreMapping::NormState: return norm_state();
    }
    throw Error(ErrKind::Parameter, "unknown store mapping");
}

void TreeStore::reset_queries() const {
    counters_.element.store(0);
    counters_.row_state.store(0);
    counters_.norm_state.store(0);
}

std::string TreeStore::dump_json() const {
    std::ostringstream os;
    os << "{\"kind\":\"" << to_string(kind_) << "\",\"m\":" << rows() << ",\"n\":" << cols()
       << ",\"frobenius_norm\":" << format_double(frobenius_norm_)
       << ",\"query_counts\":{\"element\":" << counters_.element.load()
       << ",\"row_state\":" << counters_.row_state.load()
       << ",\"norm_state\":" << counters_.norm_state.load() << "}}";
    return os.str();
}

}  // namespace qnpe
