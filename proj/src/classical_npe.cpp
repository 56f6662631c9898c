#include "qnpe/classical_npe.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace qnpe {

namespace {

double now_sec() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// Orient a vector deterministically: first component with magnitude above
// tolerance is made positive.
void orient(Eigen::Ref<Eigen::VectorXd> v, double tol = 1e-9) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > tol) {
            if (v[i] < 0.0) v = -v;
            return;
        }
    }
}

}  // namespace

Eigen::Index NeighborSets::max_count() const {
    Eigen::Index best = 0;
    for (const auto& q : sets) best = std::max(best, Eigen::Index(q.size()));
    return best;
}

double NeighborSets::balance_ratio() const {
    Eigen::Index lo = std::numeric_limits<Eigen::Index>::max(), hi = 0;
    for (const auto& q : sets) {
        lo = std::min(lo, Eigen::Index(q.size()));
        hi = std::max(hi, Eigen::Index(q.size()));
    }
    if (lo <= 0) return std::numeric_limits<double>::infinity();
    return double(hi) / double(lo);
}

NeighborSets radius_neighbors(const DataMatrix& data, double r) {
    if (!(r > 0.0)) throw Error(ErrKind::Parameter, "neighbor radius must be positive");
    const Eigen::Index m = data.rows();
    if (m < 2) throw Error(ErrKind::Parameter, "need at least two points for neighbor search");
    const double r2 = r * r;
    NeighborSets out;
    out.sets.resize(size_t(m));
    out.radius = r;
    for (Eigen::Index i = 0; i < m; ++i) {
        auto& q = out.sets[size_t(i)];
        for (Eigen::Index j = 0; j < m; ++j) {
            if (j == i) continue;
            const double d2 = (data.entries.row(i) - data.entries.row(j)).squaredNorm();
            if (d2 <= r2) q.push_back(j);
        }
        if (q.empty())
            throw Error(ErrKind::IsolatedPoint,
                        "point " + std::to_string(i) + " has no neighbors within radius " +
                            format_double(r));
        out.total += Eigen::Index(q.size());
    }
    return out;
}

NeighborSets knn_neighbors(const DataMatrix& data, Eigen::Index k) {
    const Eigen::Index m = data.rows();
    if (m < 2) throw Error(ErrKind::Parameter, "need at least two points for neighbor search");
    if (k < 1 || k >= m)
        throw Error(ErrKind::Parameter, "neighbor count k must satisfy 1 <= k <= m-1, got " +
                                            std::to_string(k) + " for m = " + std::to_string(m));
    NeighborSets out;
    out.sets.resize(size_t(m));
    out.k = k;
    std::vector<std::pair<double, Eigen::Index>> dist;
    dist.reserve(size_t(m - 1));
    for (Eigen::Index i = 0; i < m; ++i) {
        dist.clear();
        for (Eigen::Index j = 0; j < m; ++j) {
            if (j == i) continue;
            dist.emplace_back((data.entries.row(i) - data.entries.row(j)).squaredNorm(), j);
        }
        // Ties resolve toward the smaller index via the pair ordering.
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        auto& q = out.sets[size_t(i)];
        for (Eigen::Index t = 0; t < k; ++t) q.push_back(dist[size_t(t)].second);
        std::sort(q.begin(), q.end());
        out.total += k;
    }
    return out;
}

CorrelationMatrix neighborhood_correlation(const DataMatrix& data, Eigen::Index i,
                                           const std::vector<Eigen::Index>& q) {
    if (q.empty())
        throw Error(ErrKind::NoNeighbors, "empty neighbor set for point " + std::to_string(i));
    if (i < 0 || i >= data.rows())
        throw Error(ErrKind::Bounds, "point index out of range: " + std::to_string(i));
    for (Eigen::Index j : q)
        if (j < 0 || j >= data.rows() || j == i)
            throw Error(ErrKind::Bounds, "invalid neighbor index " + std::to_string(j) +
                                             " for point " + std::to_string(i));

    const Eigen::Index k = Eigen::Index(q.size());
    Eigen::MatrixXd diffs(k, data.cols());
    for (Eigen::Index t = 0; t < k; ++t)
        diffs.row(t) = data.entries.row(i) - data.entries.row(q[size_t(t)]);

    CorrelationMatrix corr;
    corr.point = i;
    corr.c = diffs * diffs.transpose();
    corr.trace_norm = corr.c.trace();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr.c);
    corr.eigenvalues = es.eigenvalues();
    const double lmax = corr.eigenvalues.size() ? corr.eigenvalues.maxCoeff() : 0.0;
    const double cut = lmax * kPinvRelTol;
    double lmin_nonzero = lmax;
    for (Eigen::Index t = 0; t < corr.eigenvalues.size(); ++t)
        if (corr.eigenvalues[t] > cut) lmin_nonzero = std::min(lmin_nonzero, corr.eigenvalues[t]);
    corr.cond = (lmax > 0.0 && lmin_nonzero > 0.0) ? lmax / lmin_nonzero : 0.0;
    return corr;
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& sym, double rel_tol) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    const Eigen::VectorXd& lam = es.eigenvalues();
    const double cut = lam.cwiseAbs().maxCoeff() * rel_tol;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i)
        if (std::abs(lam[i]) > cut) inv[i] = 1.0 / lam[i];
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::VectorXd solve_weights_row(const CorrelationMatrix& corr) {
    const Eigen::Index k = corr.c.rows();
    if (k == 0) throw Error(ErrKind::NoNeighbors, "correlation matrix is empty");
    if (corr.trace_norm <= 0.0)
        throw Error(ErrKind::ZeroDifference,
                    "all neighbor differences vanish for point " + std::to_string(corr.point));
    const Eigen::MatrixXd cpinv = pseudo_inverse(corr.c);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
    const Eigen::VectorXd numer = cpinv * ones;
    const double denom = ones.dot(numer);
    if (std::abs(denom) < 1e-12 * cpinv.cwiseAbs().maxCoeff() * double(k) ||
        !std::isfinite(denom) || denom == 0.0)
        throw Error(ErrKind::DegenerateRow,
                    "normalization 1^T C^+ 1 vanishes for point " + std::to_string(corr.point));
    return numer / denom;
}

double reconstruction_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w) {
    return (x - w * x).squaredNorm();
}

WeightMatrix assemble_weight_matrix(const DataMatrix& data, const NeighborSets& neighbors) {
    const Eigen::Index m = data.rows();
    if (Eigen::Index(neighbors.sets.size()) != m)
        throw Error(ErrKind::Parameter, "neighbor sets do not match the point count");
    WeightMatrix out;
    out.w = Eigen::MatrixXd::Zero(m, m);
    out.supports = neighbors.sets;
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& q = neighbors.sets[size_t(i)];
        const CorrelationMatrix corr = neighborhood_correlation(data, i, q);
        const Eigen::VectorXd wi = solve_weights_row(corr);
        for (Eigen::Index t = 0; t < Eigen::Index(q.size()); ++t)
            out.w(i, q[size_t(t)]) = wi[t];
    }
    out.reconstruction_residual = reconstruction_objective(data.entries, out.w);
    return out;
}

SpectralResult spectral_problem(const Eigen::MatrixXd& w, Eigen::Index d) {
    const Eigen::Index m = w.rows();
    if (w.cols() != m) throw Error(ErrKind::Parameter, "weight matrix must be square");
    if (d < 1) throw Error(ErrKind::Parameter, "embedding dimension must be positive");

    SpectralResult out;
    const Eigen::MatrixXd shifted = Eigen::MatrixXd::Identity(m, m) - w;
    out.m_matrix = shifted.transpose() * shifted;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.m_matrix);
    out.eigenvalues = es.eigenvalues();  // ascending
    out.zero_threshold = std::max(out.eigenvalues.cwiseAbs().maxCoeff() * kPinvRelTol, 0.0);

    Eigen::Index first_nonzero = 0;
    while (first_nonzero < m && out.eigenvalues[first_nonzero] <= out.zero_threshold)
        ++first_nonzero;
    out.rank = m - first_nonzero;
    if (d > out.rank)
        throw Error(ErrKind::Parameter,
                    "embedding dimension " + std::to_string(d) +
                        " exceeds the nonzero spectrum count " + std::to_string(out.rank));

    out.z.resize(m, d);
    out.z_eigenvalues.resize(d);
    for (Eigen::Index t = 0; t < d; ++t) {
        Eigen::VectorXd v = es.eigenvectors().col(first_nonzero + t);
        orient(v);
        out.z.col(t) = v;
        out.z_eigenvalues[t] = out.eigenvalues[first_nonzero + t];
    }
    // Eigenvalues of M are squared singular values of I - W (clamp fp noise).
    out.sigma = out.eigenvalues.cwiseMax(0.0).cwiseSqrt();
    return out;
}

double default_alpha(const Eigen::MatrixXd& x) {
    return 0.01 * (x.transpose() * x).trace() / double(x.cols());
}

Eigen::VectorXd ridge_regress(const Eigen::MatrixXd& x, const Eigen::VectorXd& z, double alpha) {
    if (z.size() != x.rows())
        throw Error(ErrKind::Parameter, "spectral coordinate length " + std::to_string(z.size()) +
                                            " does not match point count " +
                                            std::to_string(x.rows()));
    if (alpha < 0.0) throw Error(ErrKind::Parameter, "ridge parameter must be nonnegative");
    if (alpha == 0.0) {
        // Minimum-norm least squares via SVD.
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
        svd.setThreshold(kPinvRelTol);
        return svd.solve(z);
    }
    const Eigen::Index n = x.cols();
    Eigen::MatrixXd gram = x.transpose() * x;
    gram.diagonal().array() += alpha;
    return gram.ldlt().solve(x.transpose() * z);
}

ClassicalResult run_classical_npe(const DataMatrix& data, const ClassicalParams& params) {
    ClassicalResult res;
    double t0 = now_sec();
    res.neighbors = params.rule == NeighborRule::Radius
                        ? radius_neighbors(data, params.r)
                        : knn_neighbors(data, params.k);
    double t1 = now_sec();
    res.timings_sec["neighbors"] = t1 - t0;

    res.weights = assemble_weight_matrix(data, res.neighbors);
    double t2 = now_sec();
    res.timings_sec["weights"] = t2 - t1;

    res.spectral = spectral_problem(res.weights.w, params.d);
    double t3 = now_sec();
    res.timings_sec["spectral"] = t3 - t2;

    res.alpha = params.alpha.value_or(default_alpha(data.entries));
    res.embedding.alpha = res.alpha;
    res.embedding.a.resize(data.cols(), params.d);
    res.embedding.fit_residuals.resize(params.d);
    for (Eigen::Index j = 0; j < params.d; ++j) {
        const Eigen::VectorXd aj = ridge_regress(data.entries, res.spectral.z.col(j), res.alpha);
        res.embedding.a.col(j) = aj;
        res.embedding.fit_residuals[j] = (data.entries * aj - res.spectral.z.col(j)).norm();
    }
    double t4 = now_sec();
    res.timings_sec["embedding"] = t4 - t3;
    res.timings_sec["total"] = t4 - t0;

    const double m = double(data.rows()), n = double(data.cols());
    const double kmax = double(res.neighbors.max_count());
    res.cost_model = m * n * kmax * kmax * kmax + double(params.d) * m * m;
    return res;
}

Eigen::VectorXd principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows())
        throw Error(ErrKind::Parameter, "subspace dimension mismatch for principal angles");
    const auto orth = [](const Eigen::MatrixXd& m) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
        return q;
    };
    const Eigen::MatrixXd qa = orth(a), qb = orth(b);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(qa.transpose() * qb);
    Eigen::VectorXd cosines = svd.singularValues().cwiseMin(1.0).cwiseMax(-1.0);
    Eigen::VectorXd angles(cosines.size());
    // Singular values come out descending, so acos of them is already ascending.
    for (Eigen::Index i = 0; i < cosines.size(); ++i)
        angles[i] = std::acos(cosines[i]);
    return angles;  // ascending
}

}  // namespace qnpe
