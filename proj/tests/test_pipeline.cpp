// End-to-end pipeline: neighbor discovery against the classical radius scan,
// weight rows against the exact constrained solve, spectral search and ridge
// readout against dense decompositions, plus determinism, equivariance, and
// ledger-accounting contracts.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "doctest.h"
#include "qnpe/pipeline.hpp"

using namespace qnpe;

namespace {

DataMatrix data_of(const Eigen::MatrixXd& m) { return make_data_matrix(m); }

TreeStore indicator_store(const std::vector<std::vector<Eigen::Index>>& sets, Eigen::Index m) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < Eigen::Index(sets.size()); ++i)
        for (const Eigen::Index j : sets[size_t(i)]) b(i, j) = 1.0;
    return build_store(b, StoreKind::NeighborIndicator);
}

// Two well-separated clusters of four points; within-cluster distances stay
// below 0.8 r and across-cluster distances above 1.2 r for r = 1.
Eigen::MatrixXd cluster_cloud(uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd x(8, 2);
    for (int c = 0; c < 2; ++c) {
        const double cx = c == 0 ? 0.0 : 10.0;
        for (int p = 0; p < 4; ++p) {
            const double ang = 2.0 * kPi * rng.uniform();
            const double rad = 0.28 * rng.uniform();
            x(4 * c + p, 0) = cx + rad * std::cos(ang);
            x(4 * c + p, 1) = rad * std::sin(ang);
        }
    }
    return x;
}

// Blob with every pair distance distinct; r picked so each point keeps at
// least two neighbors.
Eigen::MatrixXd blob_cloud(Eigen::Index m, uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd x(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) {
        x(i, 0) = 2.0 * rng.uniform() - 1.0;
        x(i, 1) = 2.0 * rng.uniform() - 1.0;
    }
    return x;
}

double radius_for_min_degree(const Eigen::MatrixXd& x, Eigen::Index degree) {
    double r = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        std::vector<double> d;
        for (Eigen::Index j = 0; j < x.rows(); ++j)
            if (j != i) d.push_back((x.row(i) - x.row(j)).norm());
        std::sort(d.begin(), d.end());
        r = std::max(r, d[size_t(degree - 1)]);
    }
    return r * 1.0001;
}

Eigen::MatrixXd classical_weights(const DataMatrix& data, const NeighborSets& sets) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(data.rows(), data.rows());
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        const CorrelationMatrix corr =
            neighborhood_correlation(data, i, sets.sets[size_t(i)]);
        const Eigen::VectorXd row = solve_weights_row(corr);
        for (Eigen::Index p = 0; p < row.size(); ++p)
            w(i, sets.sets[size_t(i)][size_t(p)]) = row[p];
    }
    return w;
}

// Ring-coupled weight matrix: each point leans half on each cyclic neighbor.
// I - W is a symmetric circulant with a doubly degenerate smallest nonzero
// singular value, exercising the tie path of the spectral search.
Eigen::MatrixXd ring_weights(Eigen::Index m) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        w(i, (i + 1) % m) = 0.5;
        w(i, (i + m - 1) % m) = 0.5;
    }
    return w;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ranks = [](const std::vector<double>& v) {
        std::vector<size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), size_t(0));
        std::sort(idx.begin(), idx.end(), [&](size_t p, size_t q) { return v[p] < v[q]; });
        std::vector<double> r(v.size());
        size_t s = 0;
        while (s < idx.size()) {
            size_t e = s;
            while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[s]]) ++e;
            const double avg = 0.5 * (double(s) + double(e)) + 1.0;
            for (size_t p = s; p <= e; ++p) r[idx[p]] = avg;
            s = e + 1;
        }
        return r;
    };
    const std::vector<double> ra = ranks(a), rb = ranks(b);
    const double n = double(a.size());
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double num = 0.0, va = 0.0, vb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    return num / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("two points within radius recover each other exactly") {
    Eigen::MatrixXd x(2, 2);
    x << 0.0, 0.0, 0.5, 0.0;
    const DataMatrix data = data_of(x);
    const TreeStore sx = build_store(data, StoreKind::Data);
    QnpeConfig config;
    config.r = 1.0;
    config.seed = 3;
    const NeighborFindResult nf = find_neighbors_quantum(data, sx, config);
    CHECK(nf.k_estimate == doctest::Approx(2.0).epsilon(1e-12));
    REQUIRE(nf.neighbors.sets.size() == 2);
    CHECK(nf.neighbors.sets[0] == std::vector<Eigen::Index>{1});
    CHECK(nf.neighbors.sets[1] == std::vector<Eigen::Index>{0});
    CHECK(nf.neighbors.total == 2);
    // Half of all index pairs qualify, so the best amplification is idle and
    // the sampler works at success probability exactly one half.
    CHECK(nf.amplified_probability == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(nf.queries == nf.queries_counting + nf.queries_sampling);
}

TEST_CASE("mutually neighboring square leaves amplification nearly idle") {
    Eigen::MatrixXd x(4, 2);
    x << 0.0, 0.0, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5;
    const DataMatrix data = data_of(x);
    const TreeStore sx = build_store(data, StoreKind::Data);
    QnpeConfig config;
    config.r = 1.0;
    config.seed = 1;
    const NeighborFindResult nf = find_neighbors_quantum(data, sx, config);
    // True pair count is 12 = m^2 - m out of 16 codes; the estimate must sit
    // within half of it and the iteration guard must refuse to overshoot.
    CHECK(std::abs(nf.k_estimate - 12.0) <= 6.0);
    CHECK(nf.grover_iterations == 0);
    CHECK(nf.amplified_probability == doctest::Approx(0.75).epsilon(1e-12));
    const double k = std::max(2.0, nf.k_estimate);
    CHECK(nf.samples == uint64_t(std::ceil(3.0 * k * std::log(k))));
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(nf.neighbors.count(i) == 3);
}

TEST_CASE("planted clusters match the classical radius scan across seeds") {
    int exact_sets = 0;
    int count_within_half = 0;
    const int trials = 30;
    for (int t = 0; t < trials; ++t) {
        const DataMatrix data = data_of(cluster_cloud(100 + uint64_t(t)));
        const TreeStore sx = build_store(data, StoreKind::Data);
        QnpeConfig config;
        config.r = 1.0;
        config.seed = 500 + uint64_t(t);
        const NeighborFindResult nf = find_neighbors_quantum(data, sx, config);
        const NeighborSets ref = radius_neighbors(data, config.r);
        bool same = true;
        for (Eigen::Index i = 0; i < 8; ++i)
            same = same && nf.neighbors.sets[size_t(i)] == ref.sets[size_t(i)];
        exact_sets += same ? 1 : 0;
        count_within_half +=
            std::abs(nf.k_estimate - double(ref.total)) <= 0.5 * double(ref.total) ? 1 : 0;
        // Soundness: every reported pair obeys the one-sided distance slack.
        const double slack = config.eps1_effective(1e-12);
        for (Eigen::Index i = 0; i < 8; ++i)
            for (const Eigen::Index j : nf.neighbors.sets[size_t(i)])
                CHECK((data.entries.row(i) - data.entries.row(j)).squaredNorm() <=
                      config.r * config.r + slack);
    }
    CHECK(exact_sets >= 27);
    CHECK(count_within_half >= 29);
}

TEST_CASE("coarse distance writes raise a margin warning") {
    Eigen::MatrixXd x(2, 2);
    x << 0.0, 0.0, 0.5, 0.0;
    const DataMatrix data = data_of(x);
    const TreeStore sx = build_store(data, StoreKind::Data);
    QnpeConfig config;
    config.r = 1.0;
    config.seed = 3;
    config.eps1 = 0.8;  // exceeds the margin |0.25 - 1| = 0.75
    const NeighborFindResult nf = find_neighbors_quantum(data, sx, config);
    REQUIRE(!nf.warnings.empty());
    CHECK(nf.warnings[0].find("margin") != std::string::npos);
}

TEST_CASE("symmetric neighbor pair splits the weight row evenly") {
    Eigen::MatrixXd x(3, 2);
    x << 0.0, 0.0, 1.0, 0.0, 0.0, 1.0;
    const DataMatrix data = data_of(x);
    const TreeStore sx = build_store(data, StoreKind::Data);
    const TreeStore sb = indicator_store({{1, 2}, {0}, {0}}, 3);
    QnpeConfig config;
    config.r = 1.0;
    config.eps = 0.05;
    const WeightRowResult row = weight_row_quantum(data, sx, sb, 0, config);
    CHECK(row.support == std::vector<Eigen::Index>{1, 2});
    CHECK(row.row[0] == 0.0);
    CHECK(row.row[1] == doctest::Approx(0.5).epsilon(0.1));
    CHECK(row.row[2] == doctest::Approx(0.5).epsilon(0.1));
    CHECK(row.row.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(row.queries == row.queries_purification +
                             row.queries_tomography * (1 + row.queries_inversion));
}

TEST_CASE("collinear neighbors recover the pseudo-inverse split") {
    Eigen::MatrixXd x(3, 2);
    x << 0.0, 0.0, 1.0, 0.0, 2.0, 0.0;
    const DataMatrix data = data_of(x);
    const TreeStore sx = build_store(data, StoreKind::Data);
    const TreeStore sb = indicator_store({{1, 2}, {0, 2}, {0, 1}}, 3);
    QnpeConfig config;
    config.r = 2.0;
    config.eps = 0.05;
    const WeightRowResult row = weight_row_quantum(data, sx, sb, 0, config);
    // The rank-one correlation forces the minimum-norm simplex solution.
    CHECK(std::abs(row.row[1] - 1.0 / 3.0) <= 0.05);
    CHECK(std::abs(row.row[2] - 2.0 / 3.0) <= 0.05);
    CHECK(row.row.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(row.deviation <= 0.05);
}

TEST_CASE("full weight matrix tracks the exact rows on a small blob") {
    const DataMatrix data = data_of(blob_cloud(8, 77));
    const double r = radius_for_min_degree(data.entries, 2);
    const NeighborSets sets = radius_neighbors(data, r);
    const TreeStore sx = build_store(data, StoreKind::Data);
    const TreeStore sb = indicator_store(sets.sets, 8);
    QnpeConfig config;
    config.r = r;
    config.eps = 0.03;
    config.seed = 11;
    StageLedger ledger;
    ErrorReport report;
    const WeightMatrix wq = weight_matrix_quantum(data, sx, sb, config, &ledger, &report);
    const Eigen::MatrixXd wc = classical_weights(data, sets);
    for (Eigen::Index i = 0; i < 8; ++i) {
        CHECK((wq.w.row(i) - wc.row(i)).norm() <= 0.05);
        CHECK(wq.w.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(wq.supports[size_t(i)] == sets.sets[size_t(i)]);
        CHECK(wq.w(i, i) == 0.0);
    }
    // Ledger: the stage total equals the sum of its detail entries.
    uint64_t detail_sum = 0;
    for (const auto& [name, q] : ledger.details) detail_sum += q;
    CHECK(ledger.stages.at("weights") == detail_sum);
    CHECK(ledger.total() > 0);
    CHECK(report.measured.at("weights_row_deviation") <=
          report.bounds.at("weights_row_deviation"));
}

TEST_CASE("relabeling points permutes the weight matrix rows identically") {
    const Eigen::MatrixXd x = blob_cloud(8, 77);
    const std::vector<Eigen::Index> perm = {5, 2, 7, 0, 3, 6, 1, 4};
    Eigen::MatrixXd xp(8, 2);
    for (Eigen::Index i = 0; i < 8; ++i) xp.row(i) = x.row(perm[size_t(i)]);

    const DataMatrix data = data_of(x);
    const DataMatrix datap = data_of(xp);
    const double r = radius_for_min_degree(x, 2);
    const NeighborSets sets = radius_neighbors(data, r);
    const NeighborSets setsp = radius_neighbors(datap, r);
    QnpeConfig config;
    config.r = r;
    config.eps = 0.05;
    config.seed = 11;
    const WeightMatrix w = weight_matrix_quantum(data, build_store(data, StoreKind::Data),
                                                 indicator_store(sets.sets, 8), config);
    const WeightMatrix wp = weight_matrix_quantum(datap, build_store(datap, StoreKind::Data),
                                                  indicator_store(setsp.sets, 8), config);
    // Row seeds derive from coordinates, so the permuted run reproduces each
    // row bit for bit in its new position.
    std::vector<Eigen::Index> inv(8);
    for (Eigen::Index i = 0; i < 8; ++i) inv[size_t(perm[size_t(i)])] = i;
    for (Eigen::Index i = 0; i < 8; ++i)
        for (Eigen::Index j = 0; j < 8; ++j)
            CHECK(wp.w(inv[size_t(i)], inv[size_t(j)]) == w.w(i, j));
}

TEST_CASE("row readout cost follows neighborhood size times conditioning") {
    // Five clumped points (four neighbors each) plus two separated pairs
    // (one neighbor each) give contrasting per-row budgets.
    Eigen::MatrixXd x(9, 2);
    x << 0.00, 0.00, 0.21, 0.05, 0.07, 0.23, -0.18, 0.11, -0.05, -0.20,
        5.0, 0.0, 5.0, 0.7, 10.0, 0.0, 10.0, 0.8;
    const DataMatrix data = data_of(x);
    const double r = 0.9;
    const NeighborSets sets = radius_neighbors(data, r);
    const TreeStore sx = build_store(data, StoreKind::Data);
    const TreeStore sb = indicator_store(sets.sets, 9);
    QnpeConfig config;
    config.r = r;
    config.eps = 0.05;
    config.seed = 4;
    std::vector<double> cost, predicted;
    for (Eigen::Index i = 0; i < 9; ++i) {
        const WeightRowResult row = weight_row_quantum(data, sx, sb, i, config);
        cost.push_back(double(row.queries));
        predicted.push_back(double(sets.count(i)) * row.kappa);
    }
    CHECK(spearman(cost, predicted) > 0.8);
}

TEST_CASE("identity design passes tied ring directions through ridge unchanged") {
    const Eigen::Index m = 8;
    const Eigen::MatrixXd w = ring_weights(m);
    const Eigen::MatrixXd d_mat = Eigen::MatrixXd::Identity(m, m) - w;
    const TreeStore sd = build_store(d_mat, StoreKind::ShiftedWeight);
    const DataMatrix data = data_of(Eigen::MatrixXd::Identity(m, m));
    const TreeStore sx = build_store(data, StoreKind::Data);
    QnpeConfig config;
    config.d = 2;
    config.alpha = 0.0;
    config.eps = 0.05;
    config.seed = 9;
    const TransformResult tr = transformation_quantum(sd, sx, data, config);

    // The circulant's smallest nonzero singular value 1 - cos(pi/4) is doubly
    // degenerate: one search round returns the tied pair with equal labels.
    // Quantization keeps the estimate within half the accuracy budget.
    const double sigma_true = 1.0 - std::cos(kPi / 4.0);
    CHECK(tr.sigma[0] == tr.sigma[1]);
    CHECK(std::abs(tr.sigma[0] - sigma_true) <= 0.5 * config.eps + 1e-12);
    CHECK(std::abs(tr.z.col(0).norm() - 1.0) <= 1e-9);
    CHECK(std::abs(tr.z.col(1).norm() - 1.0) <= 1e-9);
    CHECK(std::abs(tr.z.col(0).dot(tr.z.col(1))) <= 1e-9);

    // Identity design with alpha = 0: the readout is the direction itself.
    for (Eigen::Index j = 0; j < 2; ++j)
        CHECK(std::abs(std::abs(tr.a.col(j).dot(tr.z.col(j))) - 1.0) <= 1e-9);

    // The tied subspace matches the exact one (plane of the two exact
    // eigenvectors for that circulant eigenvalue).
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(d_mat, Eigen::ComputeFullV);
    Eigen::MatrixXd exact(m, 2);
    int got = 0;
    for (Eigen::Index c = 0; c < m && got < 2; ++c)
        if (std::abs(svd.singularValues()[c] - sigma_true) < 1e-9)
            exact.col(got++) = svd.matrixV().col(c);
    REQUIRE(got == 2);
    const Eigen::VectorXd angles = principal_angles(tr.z, exact);
    CHECK(angles.maxCoeff() <= 1e-8);

    // Isotropic ridge shrinks magnitudes only, never directions.
    QnpeConfig cfg1 = config;
    cfg1.alpha = 1.0;
    const TransformResult tr1 = transformation_quantum(sd, sx, data, cfg1);
    for (Eigen::Index j = 0; j < 2; ++j)
        CHECK(std::abs(std::abs(tr1.a.col(j).dot(tr.a.col(j))) - 1.0) <= 1e-9);
    CHECK(tr.queries == tr.queries_qsve + tr.queries_search + tr.queries_ridge);
}

TEST_CASE("random design recovers classical ridge directions") {
    const Eigen::Index m = 8;
    Rng rng(2024);
    Eigen::MatrixXd xm(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) xm(i, j) = 2.0 * rng.uniform() - 1.0;
    const DataMatrix data = data_of(xm);
    const TreeStore sx = build_store(data, StoreKind::Data);
    const Eigen::MatrixXd d_mat = Eigen::MatrixXd::Identity(m, m) - ring_weights(m);
    const TreeStore sd = build_store(d_mat, StoreKind::ShiftedWeight);
    QnpeConfig config;
    config.d = 2;
    config.alpha = 0.3;
    config.eps = 0.05;
    config.seed = 21;
    const TransformResult tr = transformation_quantum(sd, sx, data, config);
    for (Eigen::Index j = 0; j < 2; ++j) {
        const Eigen::VectorXd ref = ridge_regress(xm, tr.z.col(j), 0.3).normalized();
        const double cosine = std::abs(ref.dot(tr.a.col(j)));
        CHECK(cosine >= 0.98);
        CHECK(std::abs(tr.a.col(j).norm() - 1.0) <= 1e-9);
    }
}

TEST_CASE("planted manifold embedding matches the classical pipeline subspace") {
    // Points on a jittered 4 x 2 grid, rotated isometrically into four
    // features: the radius graph and weights live on a rank-2 sheet.
    Eigen::MatrixXd g(8, 2);
    g << 0.0, 0.03, 1.02, -0.04, 2.01, 0.05, 3.04, -0.02,
        0.03, 1.01, 0.98, 1.04, 2.05, 0.97, 2.99, 1.03;
    Rng rng(5);
    Eigen::MatrixXd seed_mat(4, 4);
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j) seed_mat(i, j) = 2.0 * rng.uniform() - 1.0;
    const Eigen::MatrixXd q_rot =
        Eigen::HouseholderQR<Eigen::MatrixXd>(seed_mat).householderQ();
    const Eigen::MatrixXd x = g * q_rot.topRows(2);
    const DataMatrix data = data_of(x);

    QnpeConfig config;
    config.r = 1.1;
    config.d = 2;
    config.eps = 0.05;
    config.seed = 6;
    const QnpeResult res = run_quantum_npe(data, config);

    ClassicalParams params;
    params.rule = NeighborRule::Radius;
    params.r = 1.1;
    params.d = 2;
    const ClassicalResult ref = run_classical_npe(data, params);

    const Eigen::VectorXd angles =
        principal_angles(res.a_states, ref.embedding.a.colwise().normalized());
    CHECK(angles.maxCoeff() <= 5.0 * kPi / 180.0);

    // Result invariants: ascending spectrum, unit directions, simplex rows.
    CHECK(res.sigma_list[0] <= res.sigma_list[1]);
    for (Eigen::Index i = 0; i < 8; ++i)
        CHECK(res.w_quantum.w.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.error_report.measured.at("neighbors_count_error") <=
          res.error_report.bounds.at("neighbors_count_error"));
    CHECK(res.error_report.measured.at("transform_sigma_error") <=
          res.error_report.bounds.at("transform_sigma_error"));

    // Ledger completeness: stage sums equal detail sums equal the total.
    uint64_t stage_sum = 0, detail_sum = 0;
    for (const auto& [name, q] : res.query_ledger.stages) stage_sum += q;
    for (const auto& [name, q] : res.query_ledger.details) detail_sum += q;
    CHECK(stage_sum == res.query_ledger.total());
    CHECK(detail_sum == stage_sum);
    CHECK(res.query_ledger.stages.count("neighbors") == 1);
    CHECK(res.query_ledger.stages.count("weights") == 1);
    CHECK(res.query_ledger.stages.count("transform") == 1);
}

TEST_CASE("unbalanced neighborhoods raise the balance warning") {
    // Six clumped points (five neighbors each) and one far pair (one each):
    // the size ratio exceeds the documented threshold of four.
    Eigen::MatrixXd x(8, 2);
    x << 0.00, 0.00, 0.20, 0.04, 0.06, 0.21, -0.17, 0.10, -0.04, -0.19, 0.11, -0.14,
        9.0, 0.0, 9.0, 0.6;
    const DataMatrix data = data_of(x);
    QnpeConfig config;
    config.r = 0.9;
    config.d = 1;
    config.eps = 0.05;
    config.seed = 14;
    const QnpeResult res = run_quantum_npe(data, config);
    bool warned = false;
    for (const auto& w : res.error_report.warnings)
        warned = warned || w.find("unbalanced") != std::string::npos;
    CHECK(warned);
}

TEST_CASE("one seed yields bit-identical results") {
    const DataMatrix data = data_of(blob_cloud(8, 31));
    QnpeConfig config;
    config.r = radius_for_min_degree(data.entries, 2);
    config.d = 2;
    config.eps = 0.08;
    config.seed = 42;
    const QnpeResult a = run_quantum_npe(data, config);
    const QnpeResult b = run_quantum_npe(data, config);
    CHECK(a.k_estimate == b.k_estimate);
    for (Eigen::Index i = 0; i < 8; ++i)
        CHECK(a.neighbors.sets[size_t(i)] == b.neighbors.sets[size_t(i)]);
    CHECK((a.w_quantum.w.array() == b.w_quantum.w.array()).all());
    CHECK((a.sigma_list.array() == b.sigma_list.array()).all());
    CHECK((a.a_states.array() == b.a_states.array()).all());
    CHECK(a.query_ledger.stages == b.query_ledger.stages);
    CHECK(a.query_ledger.details == b.query_ledger.details);
}

TEST_CASE("tolerance schedule tightens the weight error monotonically") {
    const DataMatrix data = data_of(blob_cloud(8, 77));
    const double r = radius_for_min_degree(data.entries, 2);
    const NeighborSets sets = radius_neighbors(data, r);
    const TreeStore sx = build_store(data, StoreKind::Data);
    const TreeStore sb = indicator_store(sets.sets, 8);
    const Eigen::MatrixXd wc = classical_weights(data, sets);
    double prev = std::numeric_limits<double>::infinity();
    for (const double eps : {0.24, 0.12, 0.06, 0.03}) {
        QnpeConfig config;
        config.r = r;
        config.eps = eps;
        config.seed = 1;
        const WeightMatrix wq = weight_matrix_quantum(data, sx, sb, config);
        const double err = (wq.w - wc).norm();
        CHECK(err <= prev);
        prev = err;
    }
}

TEST_CASE("configuration validation rejects out-of-range fields") {
    const auto bad = [](auto&& mutate) {
        QnpeConfig c;
        mutate(c);
        CHECK_THROWS_AS(c.validate(), Error);
    };
    bad([](QnpeConfig& c) { c.r = 0.0; });
    bad([](QnpeConfig& c) { c.r = -1.0; });
    bad([](QnpeConfig& c) { c.d = 0; });
    bad([](QnpeConfig& c) { c.eps = 0.0; });
    bad([](QnpeConfig& c) { c.eps = 0.6; });
    bad([](QnpeConfig& c) { c.eps1 = 1.0; });
    bad([](QnpeConfig& c) { c.delta_prime = 0.5; });
    bad([](QnpeConfig& c) { c.alpha = -1.0; });
    bad([](QnpeConfig& c) { c.t_bits["bogus"] = 3; });
    bad([](QnpeConfig& c) { c.t_bits["count"] = -1; });
    bad([](QnpeConfig& c) { c.t_bits["count"] = 21; });
    QnpeConfig good;
    CHECK_NOTHROW(good.validate());
}

TEST_CASE("failures carry their stage step number") {
    SUBCASE("empty radius ball fails the counting step") {
        Eigen::MatrixXd x(2, 2);
        x << 0.0, 0.0, 5.0, 0.0;
        const DataMatrix data = data_of(x);
        const TreeStore sx = build_store(data, StoreKind::Data);
        QnpeConfig config;
        config.r = 0.1;
        try {
            (void)find_neighbors_quantum(data, sx, config);
            FAIL("expected a no-neighbors error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrKind::NoNeighbors);
            CHECK(e.step() == 1);
        }
    }
    SUBCASE("coincident neighbor fails the purification step") {
        Eigen::MatrixXd x(3, 2);
        x << 0.0, 0.0, 0.0, 0.0, 1.0, 0.0;
        const DataMatrix data = data_of(x);
        const TreeStore sx = build_store(data, StoreKind::Data);
        const TreeStore sb = indicator_store({{1, 2}, {0, 2}, {0, 1}}, 3);
        QnpeConfig config;
        config.r = 2.0;
        try {
            (void)weight_row_quantum(data, sx, sb, 0, config);
            FAIL("expected a zero-difference error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrKind::ZeroDifference);
            CHECK(e.step() == 5);
        }
    }
    SUBCASE("overlarge embedding dimension fails the search step") {
        const Eigen::Index m = 4;
        const Eigen::MatrixXd d_mat = Eigen::MatrixXd::Identity(m, m) - ring_weights(m);
        const TreeStore sd = build_store(d_mat, StoreKind::ShiftedWeight);
        const DataMatrix data = data_of(Eigen::MatrixXd::Identity(m, m));
        const TreeStore sx = build_store(data, StoreKind::Data);
        QnpeConfig config;
        config.d = 4;  // spectrum above the zero threshold only holds 3
        config.alpha = 0.0;
        try {
            (void)transformation_quantum(sd, sx, data, config);
            FAIL("expected a parameter error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrKind::Parameter);
            CHECK(e.step() == 9);
        }
    }
}
