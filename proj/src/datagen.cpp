#include "qnpe/datagen.hpp"

#include <cmath>
#include <numbers>

namespace qnpe {

namespace {

constexpr double kPi = std::numbers::pi;

double gauss(Rng& rng) {
    // Box-Muller on the deterministic stream; guard the log away from zero.
    const double u1 = std::max(rng.uniform(), 1e-300);
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

Eigen::MatrixXd random_orthonormal_rows(Eigen::Index rows, Eigen::Index n, Rng& rng) {
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) g(i, j) = gauss(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    return q.topRows(rows);
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw Error(ErrKind::Parameter, msg);
}

}  // namespace

DatasetKind dataset_kind_from(const std::string& name) {
    if (name == "swiss-roll") return DatasetKind::SwissRoll;
    if (name == "plane") return DatasetKind::Plane;
    if (name == "clusters") return DatasetKind::Clusters;
    if (name == "s-curve") return DatasetKind::SCurve;
    throw Error(ErrKind::Value, "unknown dataset kind '" + name +
                                    "' (expected swiss-roll, plane, clusters, or s-curve)");
}

std::string to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::SwissRoll: return "swiss-roll";
        case DatasetKind::Plane: return "plane";
        case DatasetKind::Clusters: return "clusters";
        case DatasetKind::SCurve: return "s-curve";
    }
    return "?";
}

DataMatrix generate_dataset(DatasetKind kind, Eigen::Index m, Eigen::Index n, double noise,
                            uint64_t seed) {
    require(m >= 2, "dataset needs at least two points");
    require(noise >= 0.0 && std::isfinite(noise), "noise must be non-negative and finite");
    Rng rng(derive_seed(seed, "datagen", uint64_t(kind)));
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(m, n);

    switch (kind) {
        case DatasetKind::SwissRoll: {
            require(n >= 3, "swiss-roll needs at least three features");
            for (Eigen::Index i = 0; i < m; ++i) {
                const double t = 1.5 * kPi * (1.0 + 2.0 * rng.uniform());
                const double h = 10.0 * rng.uniform();
                x(i, 0) = t * std::cos(t) / 5.0;
                x(i, 1) = h / 5.0;
                x(i, 2) = t * std::sin(t) / 5.0;
            }
            break;
        }
        case DatasetKind::Plane: {
            require(n >= 2, "plane needs at least two features");
            Eigen::MatrixXd g(m, 2);
            for (Eigen::Index i = 0; i < m; ++i) {
                g(i, 0) = 2.0 * rng.uniform() - 1.0;
                g(i, 1) = 2.0 * rng.uniform() - 1.0;
            }
            x = g * random_orthonormal_rows(2, n, rng);
            break;
        }
        case DatasetKind::Clusters: {
            require(n >= 1, "clusters need at least one feature");
            const Eigen::Index first = (m + 1) / 2;
            for (Eigen::Index i = 0; i < m; ++i) {
                Eigen::VectorXd dir(n);
                for (Eigen::Index c = 0; c < n; ++c) dir[c] = gauss(rng);
                dir /= std::max(dir.norm(), 1e-300);
                const double rad = 0.28 * rng.uniform();
                x.row(i) = (rad * dir).transpose();
                x(i, 0) += i < first ? -5.0 : 5.0;
            }
            break;
        }
        case DatasetKind::SCurve: {
            require(n >= 3, "s-curve needs at least three features");
            for (Eigen::Index i = 0; i < m; ++i) {
                const double t = 1.5 * kPi * (2.0 * rng.uniform() - 1.0);
                x(i, 0) = std::sin(t);
                x(i, 1) = 2.0 * rng.uniform();
                x(i, 2) = (t >= 0.0 ? 1.0 : -1.0) * (std::cos(t) - 1.0);
            }
            break;
        }
    }

    if (noise > 0.0)
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < n; ++j) x(i, j) += noise * gauss(rng);

    return make_data_matrix(std::move(x),
                            to_string(kind) + "(m=" + std::to_string(m) +
                                ",n=" + std::to_string(n) + ",noise=" + format_double(noise) +
                                ",seed=" + std::to_string(seed) + ")");
}

}  // namespace qnpe
