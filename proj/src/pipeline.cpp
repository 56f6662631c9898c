#include "qnpe/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <mutex>
#include <set>

#include "qnpe/sim_state.hpp"

namespace qnpe {

namespace {

// Step numbers used to tag structured errors with where a staged run failed.
constexpr int kStepCount = 1;
constexpr int kStepAmplify = 2;
constexpr int kStepSample = 3;
constexpr int kStepIndicator = 4;
constexpr int kStepPurify = 5;
constexpr int kStepInvert = 6;
constexpr int kStepTomography = 7;
constexpr int kStepLabel = 8;
constexpr int kStepMinimum = 9;
constexpr int kStepRidge = 10;

int index_bits(Eigen::Index padded) { return std::max(1, ceil_log2(uint64_t(padded))); }

struct PairScan {
    double eps0 = 0.0;    // smallest nonzero pair distance (0 if none)
    double margin = std::numeric_limits<double>::infinity();  // min |dist^2 - r^2|
    uint64_t within = 0;  // exact pair count under the true distances
};

PairScan scan_pairs(const DataMatrix& data, double r) {
    PairScan s;
    const double r2 = r * r;
    double min_d2 = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        for (Eigen::Index j = 0; j < data.rows(); ++j) {
            if (i == j) continue;
            const double d2 = (data.entries.row(i) - data.entries.row(j)).squaredNorm();
            if (d2 > 0.0) min_d2 = std::min(min_d2, d2);
            s.margin = std::min(s.margin, std::abs(d2 - r2));
            if (d2 <= r2) ++s.within;
        }
    }
    s.eps0 = std::isfinite(min_d2) ? std::sqrt(min_d2) : 0.0;
    return s;
}

// Deterministic, relabeling-invariant stream seed for one weight row: hashes
// the point's coordinates and its neighbors' coordinates in canonical order.
uint64_t row_content_seed(uint64_t master, const DataMatrix& data, Eigen::Index i,
                          const std::vector<Eigen::Index>& order) {
    std::string buf;
    buf.reserve(size_t(data.cols()) * (order.size() + 1) * sizeof(double));
    const auto append_row = [&](Eigen::Index r) {
        for (Eigen::Index c = 0; c < data.cols(); ++c) {
            const double v = data.entries(r, c);
            char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof(double));
            buf.append(bytes, sizeof(double));
        }
    };
    append_row(i);
    for (const Eigen::Index j : order) append_row(j);
    return derive_seed(master, "weight-row", fnv1a64(buf));
}

// Neighbor processing order keyed on coordinates (ties by index), so that
// relabeling the dataset permutes rows without changing their content.
std::vector<Eigen::Index> canonical_neighbor_order(const DataMatrix& data,
                                                   std::vector<Eigen::Index> q) {
    std::sort(q.begin(), q.end(), [&](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index c = 0; c < data.cols(); ++c) {
            if (data.entries(a, c) != data.entries(b, c))
                return data.entries(a, c) < data.entries(b, c);
        }
        return a < b;
    });
    return q;
}

double transform_grid_delta(double eps, double frobenius) {
    return std::clamp(0.5 * eps / std::max(frobenius, 1e-12), 1e-6, 0.5);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void QnpeConfig::validate() const {
    if (!(r > 0.0) || !std::isfinite(r))
        throw Error(ErrKind::Parameter, "neighbor radius must be positive and finite");
    if (d < 1) throw Error(ErrKind::Parameter, "embedding dimension must be at least 1");
    if (!(eps > 0.0 && eps <= 0.5))
        throw Error(ErrKind::Parameter, "accuracy budget eps must lie in (0, 1/2]");
    if (eps0 < 0.0 || !std::isfinite(eps0))
        throw Error(ErrKind::Parameter, "distance floor eps0 must be non-negative");
    if (eps1 < 0.0 || eps1 >= 1.0)
        throw Error(ErrKind::Parameter, "distance-write accuracy eps1 must lie in [0, 1)");
    if (!(delta_prime > 0.0 && delta_prime < 0.5))
        throw Error(ErrKind::Parameter, "fixed-point parameter delta' must lie in (0, 1/2)");
    if (alpha && (*alpha < 0.0 || !std::isfinite(*alpha)))
        throw Error(ErrKind::Parameter, "ridge parameter alpha must be non-negative");
    for (const auto& [key, value] : t_bits) {
        if (key != "count" && key != "pur" && key != "ridge")
            throw Error(ErrKind::Parameter, "unknown grid override '" + key + "'");
        if (value < 0 || value > 20)
            throw Error(ErrKind::Parameter, "grid override '" + key + "' must lie in [0, 20]");
    }
}

int QnpeConfig::bits(const std::string& name, int fallback) const {
    const auto it = t_bits.find(name);
    if (it == t_bits.end() || it->second == 0) return fallback;
    return it->second;
}

double QnpeConfig::eps1_effective(double measured_eps0) const {
    if (eps1 > 0.0) return eps1;
    const double e0 = eps0 > 0.0 ? eps0 : measured_eps0;
    return std::max(eps * eps * e0 * e0, 1e-12);
}

uint64_t StageLedger::total() const {
    uint64_t t = 0;
    for (const auto& [name, q] : stages) t += q;
    return t;
}

void StageLedger::add(const std::string& stage, const std::string& detail, uint64_t queries) {
    stages[stage] += queries;
    details[detail] += queries;
}

// ---------------------------------------------------------------------------
// Stage one: neighbor discovery

NeighborFindResult find_neighbors_quantum(const DataMatrix& data, const TreeStore& store_x,
                                          const QnpeConfig& config) {
    config.validate();
    const Eigen::Index m = data.rows();
    if (m < 2)
        throw Error(ErrKind::EmptyInput, "neighbor discovery needs at least two points",
                    kStepCount);

    NeighborFindResult out;
    const double r2 = config.r * config.r;
    const PairScan scan = scan_pairs(data, config.r);
    const double eps0_eff = config.eps0 > 0.0 ? config.eps0 : std::max(scan.eps0, 1e-12);
    const double eps1_eff = config.eps1_effective(eps0_eff);
    if (eps1_eff >= scan.margin)
        out.warnings.push_back(
            "distance-write accuracy " + format_double(eps1_eff) +
            " is not below the classical radius margin " + format_double(scan.margin) +
            "; pairs near the boundary may be misclassified");

    const double delta_dist = std::clamp(config.eps * eps0_eff, 1e-9, 0.49);
    DistanceOracle dist = distance_oracle(store_x, store_x, eps1_eff, delta_dist);

    const int b = index_bits(store_x.rows());
    const uint64_t mask = (uint64_t(1) << b) - 1;
    const auto is_good = [&, m](uint64_t code) {
        const uint64_t i = code >> b;
        const uint64_t j = code & mask;
        return i < uint64_t(m) && j < uint64_t(m) && i != j &&
               dist.quantized(Eigen::Index(i), Eigen::Index(j)) <= r2;
    };

    Eigen::VectorXcd uniform_m = Eigen::VectorXcd::Zero(Eigen::Index(1) << b);
    uniform_m.head(m).setConstant(cd(1.0 / std::sqrt(double(m)), 0.0));
    Preparation prep;
    prep.layout = {{"pi", b}, {"pj", b}};
    prep.program = {Op{state_prep_unitary(uniform_m), {"pi"}, {}},
                    Op{state_prep_unitary(uniform_m), {"pj"}, {}}};
    const Op good = phase_oracle({"pi", "pj"}, 2 * b, is_good);

    // Pair counting: median-boosted estimation on an adaptive grid. The grid
    // grows until the a-priori error bound sits safely inside the half-count
    // target that stage two's iteration formula needs.
    Rng rng(derive_seed(config.seed, "neighbor-count"));
    const int fixed_bits = config.bits("count", 0);
    const bool adaptive = fixed_bits == 0;
    const int t_cap = config.tier == Tier::Circuit ? 9 : 14;
    int t = adaptive ? std::min(t_cap, std::max(5, b + 2)) : fixed_bits;
    QaeResult est;
    uint64_t count_queries = 0;
    for (;;) {
        est = amplitude_estimation_boosted(prep, good, t, 0.02, config.tier, rng);
        count_queries += est.queries;
        if (!adaptive || t >= t_cap) break;
        if (est.estimate > 0.0 && qae_error_bound(est.estimate, t) <= 0.45 * est.estimate)
            break;
        ++t;
    }
    out.count_bits = t;
    if (est.estimate <= 0.0)
        throw Error(ErrKind::NoNeighbors,
                    "no within-radius pairs detected at radius " + format_double(config.r),
                    kStepCount);
    const double k_hat = est.estimate * double(m) * double(m);
    out.k_estimate = k_hat;

    // Amplification with the count-derived iteration number. The nominal
    // ceil((pi/4) sqrt(m^2/K)) overshoots when the pair density is high, so
    // the applied count maximizes the expected success over 0..nominal.
    const uint64_t t_nominal =
        uint64_t(std::ceil(kPi / 4.0 * double(m) / std::sqrt(std::max(k_hat, 1.0))));
    const uint64_t t_star = best_iteration_count(est.estimate, t_nominal);
    const AmplifyResult amp = amplitude_amplify(prep, good, t_star, config.tier);
    out.grover_iterations = t_star;
    out.amplified_probability = amp.good_probability;
    // Closed threshold: when half of all pairs qualify (a = 1/2 exactly) no
    // iteration count can push the success strictly past one half, yet
    // sampling at one half is sound, so equality passes.
    if (amp.good_probability < 0.5 - 1e-9)
        throw Error(ErrKind::Precision,
                    "post-amplification success probability " +
                        format_double(amp.good_probability) +
                        " is below one half; increase the pair-count grid bits",
                    kStepAmplify);

    // Coupon-collector sampling with verification of every draw.
    const double k_round = std::max(2.0, k_hat);
    const uint64_t n_samp = uint64_t(std::ceil(3.0 * k_round * std::log(k_round)));
    out.samples = n_samp;
    const std::vector<uint64_t> draws =
        measure(amp.state, std::vector<std::string>{"pi", "pj"}, size_t(n_samp), rng);
    std::vector<std::set<Eigen::Index>> sets{size_t(m)};
    for (const uint64_t code : draws) {
        if (!is_good(code)) continue;  // verification discards off-support draws
        sets[size_t(code >> b)].insert(Eigen::Index(code & mask));
    }

    out.neighbors.sets.resize(size_t(m));
    out.neighbors.total = 0;
    out.neighbors.radius = config.r;
    for (Eigen::Index i = 0; i < m; ++i) {
        out.neighbors.sets[size_t(i)].assign(sets[size_t(i)].begin(), sets[size_t(i)].end());
        out.neighbors.total += Eigen::Index(sets[size_t(i)].size());
    }

    // Meter: counting, then one amplified preparation plus one verification
    // per sample (each measurement consumes a fresh preparation).
    out.queries_counting = count_queries;
    out.queries_sampling = n_samp * (t_star + 1) + n_samp;
    out.queries = out.queries_counting + out.queries_sampling;
    return out;
}

// ---------------------------------------------------------------------------
// Stage two: weight rows

WeightRowResult weight_row_quantum(const DataMatrix& data, const TreeStore& store_x,
                                   const TreeStore& store_b, Eigen::Index i,
                                   const QnpeConfig& config) {
    config.validate();
    const Eigen::Index m = data.rows();
    if (i < 0 || i >= m)
        throw Error(ErrKind::Bounds, "weight row index out of range", kStepPurify);
    if (store_b.kind() != StoreKind::NeighborIndicator)
        throw Error(ErrKind::Parameter, "weight rows need a neighbor-indicator store",
                    kStepPurify);

    // One indicator-row access realizes the neighbor-state tap; the support
    // indices are read off the stored row.
    std::vector<Eigen::Index> q;
    try {
        (void)store_b.row_state(i);
    } catch (const Error&) {
        throw Error(ErrKind::NoNeighbors,
                    "point " + std::to_string(i) + " has no discovered neighbors",
                    kStepPurify);
    }
    for (Eigen::Index j = 0; j < m; ++j)
        if (store_b.matrix()(i, j) >= 0.5) q.push_back(j);
    if (q.empty())
        throw Error(ErrKind::NoNeighbors,
                    "point " + std::to_string(i) + " has no discovered neighbors",
                    kStepPurify);

    const std::vector<Eigen::Index> order = canonical_neighbor_order(data, q);
    const Eigen::Index k = Eigen::Index(order.size());

    double d_min = std::numeric_limits<double>::infinity();
    double d_max = 0.0;
    for (const Eigen::Index j : order) {
        const double d = (data.entries.row(i) - data.entries.row(j)).norm();
        d_min = std::min(d_min, d);
        d_max = std::max(d_max, d);
    }
    if (d_min <= 0.0)
        throw Error(ErrKind::ZeroDifference,
                    "a neighbor of point " + std::to_string(i) + " coincides with it",
                    kStepPurify);

    WeightRowResult out;
    out.point = i;
    out.support = q;  // ascending indices
    Rng rng(row_content_seed(config.seed, data, i, order));

    // Purification of the neighborhood correlation. The radius passed down
    // covers the one-sided slack of quantized neighbor membership.
    const double r_eff = std::max(config.r, d_max * (1.0 + 1e-9));
    const double eps0_row = d_min * (1.0 - 1e-9);
    PurificationResult pur;
    try {
        pur = purification_prep(store_x, i, order, r_eff, eps0_row, config.delta_prime,
                                config.bits("pur", 7), config.tier, rng);
    } catch (const Error& e) {
        throw e.with_step(kStepPurify);
    }

    // The neighbor register carries global point indices, so the correlation
    // density operator lives on the neighborhood's index block.
    const DensityOp rho = partial_trace(pur.state, {"nbr"});
    Eigen::VectorXcd b_vec = Eigen::VectorXcd::Zero(rho.rho.rows());
    for (const Eigen::Index j : order) b_vec[j] = cd(1.0 / std::sqrt(double(k)), 0.0);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho.rho);
    const double lam_max = es.eigenvalues().cwiseAbs().maxCoeff();
    double lam_min = lam_max;
    for (Eigen::Index idx = 0; idx < es.eigenvalues().size(); ++idx) {
        const double lam = std::abs(es.eigenvalues()[idx]);
        if (lam >= kPinvRelTol * lam_max) lam_min = std::min(lam_min, lam);
    }
    out.kappa = std::clamp(lam_max / std::max(lam_min, 1e-300), 2.0, 1e8);

    InversionResult inv;
    try {
        inv = invert_dense(rho.rho, b_vec, out.kappa, config.eps, std::nullopt, true);
    } catch (const Error& e) {
        throw e.with_step(kStepInvert);
    }

    // Compact onto the classically known support: permute the k populated
    // index slots to the front so the readout state has log2(k) width.
    Eigen::VectorXcd compact = Eigen::VectorXcd::Zero(Eigen::Index(next_pow2(uint64_t(k))));
    for (Eigen::Index p = 0; p < k; ++p) compact[p] = inv.state[order[size_t(p)]];
    const double kept = compact.norm();
    if (kept < 1.0 - 1e-6)
        throw Error(ErrKind::Internal,
                    "inverted state leaks outside the neighborhood support", kStepInvert);
    compact /= kept;

    // Tomography readout with a bounded retry loop: a run whose support sum
    // collapses cannot be renormalized and is redrawn.
    TomographyResult tomo;
    double support_sum = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt < 3; ++attempt) {
        out.retries = attempt;
        try {
            tomo = tomography(compact, config.eps, rng);
        } catch (const Error& e) {
            throw e.with_step(kStepTomography);
        }
        support_sum = tomo.estimate.head(k).sum();
        if (std::abs(support_sum) > 1e-6 * std::sqrt(double(k))) {
            ok = true;
            break;
        }
    }
    if (!ok)
        throw Error(ErrKind::Precision,
                    "tomography readout for row " + std::to_string(i) +
                        " stayed degenerate after 3 attempts",
                    kStepTomography);

    // Renormalize onto the unit row sum and scatter back to dense columns.
    out.row = Eigen::VectorXd::Zero(m);
    for (Eigen::Index p = 0; p < k; ++p)
        out.row[order[size_t(p)]] = tomo.estimate[p] / support_sum;

    // Exact solve on the same support as the per-row deviation reference.
    const CorrelationMatrix corr = neighborhood_correlation(data, i, order);
    const Eigen::VectorXd exact = solve_weights_row(corr);
    double dev2 = 0.0;
    for (Eigen::Index p = 0; p < k; ++p) {
        const double diff = out.row[order[size_t(p)]] - exact[p];
        dev2 += diff * diff;
    }
    out.deviation = std::sqrt(dev2);

    out.queries_purification = pur.queries;
    out.queries_inversion = inv.queries;
    out.queries_tomography = tomo.queries;
    // Every tomography sample consumes one fresh inverted preparation.
    out.queries = pur.queries + tomo.queries * (1 + inv.queries);
    return out;
}

WeightMatrix weight_matrix_quantum(const DataMatrix& data, const TreeStore& store_x,
                                   const TreeStore& store_b, const QnpeConfig& config,
                                   StageLedger* ledger, ErrorReport* report) {
    config.validate();
    const Eigen::Index m = data.rows();
    std::vector<WeightRowResult> rows{size_t(m)};
    std::vector<std::optional<Error>> failures{size_t(m)};

    parallel_for(size_t(m), [&](size_t i) {
        try {
            rows[i] = weight_row_quantum(data, store_x, store_b, Eigen::Index(i), config);
        } catch (const Error& e) {
            failures[i] = e;
        } catch (const std::exception& e) {
            failures[i] = Error(ErrKind::Internal, e.what());
        }
    });
    for (size_t i = 0; i < failures.size(); ++i) {
        if (!failures[i]) continue;
        const Error& e = *failures[i];
        throw Error(e.kind(),
                    std::string(e.what()) + " (weight row " + std::to_string(i) + ")",
                    e.step().value_or(kStepInvert));
    }

    WeightMatrix w;
    w.w = Eigen::MatrixXd::Zero(m, m);
    w.supports.resize(size_t(m));
    double max_dev = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const WeightRowResult& row = rows[size_t(i)];
        w.w.row(i) = row.row.transpose();
        w.supports[size_t(i)] = row.support;
        max_dev = std::max(max_dev, row.deviation);
        if (ledger) {
            ledger->add("weights", "correlation_purification", row.queries_purification);
            ledger->add("weights", "inversion_and_tomography",
                        row.queries_tomography * (1 + row.queries_inversion));
        }
    }
    w.reconstruction_residual = reconstruction_objective(data.entries, w.w);
    if (report) {
        report->measured["weights_row_deviation"] = max_dev;
        // l2 tomography bound plus the inversion's infidelity allowance.
        report->bounds["weights_row_deviation"] = std::sqrt(7.0) * config.eps + 2.0 * config.eps;
    }
    return w;
}

// ---------------------------------------------------------------------------
// Stage three: spectral search and ridge readout

TransformResult transformation_quantum(const TreeStore& store_d, const TreeStore& store_x,
                                       const DataMatrix& data, const QnpeConfig& config) {
    config.validate();
    const Eigen::Index m = data.rows();
    const Eigen::Index n = data.cols();
    if (store_d.kind() != StoreKind::ShiftedWeight)
        throw Error(ErrKind::Parameter, "spectral search needs a shifted-weight store",
                    kStepLabel);

    // Correlated double register: sum_j |j>|j> / sqrt(m). Labeling the second
    // register tags each branch with its singular value while the first
    // register keeps a copy of the singular direction, so every branch
    // carries mass exactly 1/m.
    const int b = index_bits(store_d.rows());
    const Eigen::Index reg = Eigen::Index(1) << b;
    Eigen::VectorXcd amp = Eigen::VectorXcd::Zero(reg * reg);
    for (Eigen::Index j = 0; j < m; ++j)
        amp[(j << b) | j] = cd(1.0 / std::sqrt(double(m)), 0.0);
    const SimState psi0 = init_state({{"copy", b}, {"vec", b}}, amp);

    const double delta_rel = transform_grid_delta(config.eps, store_d.frobenius_norm());
    QsveResult labeled;
    try {
        labeled = qsve(store_d, psi0, delta_rel, config.tier);
    } catch (const Error& e) {
        throw e.with_step(kStepLabel);
    }

    TransformResult out;
    const double v_threshold = 3.0 * delta_rel * labeled.frobenius;
    // One search query = two labeling passes plus one exclusion oracle.
    const uint64_t per_query = 2 * labeled.queries + 1;
    uint64_t search_queries = 0;

    Rng rng(derive_seed(config.seed, "transform"));
    std::vector<uint64_t> found;
    std::vector<Eigen::VectorXd> z_cols;
    std::vector<double> sigmas;
    while (Eigen::Index(z_cols.size()) < config.d) {
        MinFindResult mf;
        try {
            mf = find_minimum(labeled, v_threshold, found, 7, config.tier, rng);
        } catch (const Error& e) {
            if (e.kind() == ErrKind::Exhausted)
                throw Error(ErrKind::Parameter,
                            "embedding dimension " + std::to_string(config.d) +
                                " exceeds the spectrum above the zero threshold " +
                                format_double(v_threshold),
                            kStepMinimum);
            throw e.with_step(kStepMinimum);
        }
        found.push_back(mf.label);
        search_queries += mf.queries * per_query;
        for (Eigen::Index c = 0;
             c < mf.vectors.cols() && Eigen::Index(z_cols.size()) < config.d; ++c) {
            Eigen::VectorXd z = mf.vectors.col(c).head(m);
            const double zn = z.norm();
            if (zn < 1.0 - 1e-8)
                throw Error(ErrKind::Internal,
                            "recovered singular direction leaks into padding",
                            kStepMinimum);
            z_cols.push_back(z / zn);
            sigmas.push_back(mf.sigma);
        }
    }

    // Ridge readout per direction through the symmetrized design matrix.
    const double alpha = config.alpha ? *config.alpha : default_alpha(data.entries);
    const int t_ridge = config.bits("ridge", 8);
    out.sigma = Eigen::VectorXd::Zero(config.d);
    out.z = Eigen::MatrixXd::Zero(m, config.d);
    out.a = Eigen::MatrixXd::Zero(n, config.d);
    uint64_t ridge_queries = 0;

    for (Eigen::Index j = 0; j < config.d; ++j) {
        out.sigma[j] = sigmas[size_t(j)];
        out.z.col(j) = z_cols[size_t(j)];

        Eigen::VectorXd b_pad = Eigen::VectorXd::Zero(store_x.rows());
        b_pad.head(m) = z_cols[size_t(j)];
        ExtendedPeResult pe;
        try {
            pe = extended_matrix_phase_estimation(store_x, b_pad, t_ridge, config.tier);
        } catch (const Error& e) {
            throw e.with_step(kStepRidge);
        }

        double c1 = std::numeric_limits<double>::infinity();
        double success = 0.0;
        Eigen::VectorXd a_full = Eigen::VectorXd::Zero(pe.v.rows());
        for (Eigen::Index idx = 0; idx < pe.gamma_grid.size(); ++idx) {
            const double g = pe.gamma_grid[idx];
            if (g <= 1e-12) continue;
            const double gain = g / (g * g + alpha);
            c1 = std::min(c1, 1.0 / gain);
            a_full += pe.beta[idx] * gain * pe.v.col(idx);
        }
        if (!std::isfinite(c1))
            throw Error(ErrKind::Precision,
                        "design matrix has no singular values above the grid floor",
                        kStepRidge);
        for (Eigen::Index idx = 0; idx < pe.gamma_grid.size(); ++idx) {
            const double g = pe.gamma_grid[idx];
            if (g <= 1e-12) continue;
            const double rot = c1 * g / (g * g + alpha);
            success += 0.5 * pe.beta[idx] * pe.beta[idx] * rot * rot;
        }
        if (success < 1e-12)
            throw Error(ErrKind::Precision,
                        "ridge post-selection probability fell below the floor",
                        kStepRidge);

        Eigen::VectorXd a = a_full.head(n);
        const double an = a.norm();
        if (an < 1e-12)
            throw Error(ErrKind::Precision, "ridge readout annihilated the direction",
                        kStepRidge);
        a /= an;
        Eigen::Index peak = 0;
        a.cwiseAbs().maxCoeff(&peak);
        if (a[peak] < 0.0) a = -a;
        out.a.col(j) = a;

        const uint64_t reps =
            uint64_t(std::ceil(kPi / (4.0 * std::asin(std::sqrt(std::min(1.0, success)))))) + 1;
        ridge_queries += pe.queries * reps;
    }

    out.queries_qsve = labeled.queries;
    out.queries_search = search_queries;
    out.queries_ridge = ridge_queries;
    out.queries = out.queries_qsve + out.queries_search + out.queries_ridge;
    return out;
}

// ---------------------------------------------------------------------------
// Full pipeline

QnpeResult run_quantum_npe(const DataMatrix& data, const QnpeConfig& config) {
    config.validate();
    QnpeResult out;
    out.config = config;

    const TreeStore store_x = build_store(data, StoreKind::Data);

    // Steps 1-3: pair counting, amplification, sampled discovery.
    const NeighborFindResult nf = find_neighbors_quantum(data, store_x, config);
    out.neighbors = nf.neighbors;
    out.k_estimate = nf.k_estimate;
    out.query_ledger.add("neighbors", "pair_counting", nf.queries_counting);
    out.query_ledger.add("neighbors", "amplified_sampling", nf.queries_sampling);
    for (const auto& w : nf.warnings) out.error_report.warnings.push_back(w);
    {
        const PairScan scan = scan_pairs(data, config.r);
        out.error_report.measured["neighbors_count_error"] =
            std::abs(nf.k_estimate - double(scan.within));
        out.error_report.bounds["neighbors_count_error"] = 0.5 * double(scan.within);
    }
    const double balance = out.neighbors.balance_ratio();
    if (balance > 4.0)
        out.error_report.warnings.push_back(
            "neighborhood sizes are unbalanced (max/min = " + format_double(balance) +
            "); stage costs assume balanced neighborhoods");

    // Step 4: indicator store.
    const Eigen::Index m = data.rows();
    Eigen::MatrixXd b_mat = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (const Eigen::Index j : out.neighbors.sets[size_t(i)]) b_mat(i, j) = 1.0;
    TreeStore store_b;
    try {
        store_b = build_store(b_mat, StoreKind::NeighborIndicator);
    } catch (const Error& e) {
        throw e.with_step(kStepIndicator);
    }

    // Steps 5-7: weight rows.
    out.w_quantum = weight_matrix_quantum(data, store_x, store_b, config, &out.query_ledger,
                                          &out.error_report);

    // Step 8 store: shifted weights.
    const Eigen::MatrixXd d_mat = Eigen::MatrixXd::Identity(m, m) - out.w_quantum.w;
    TreeStore store_d;
    try {
        store_d = build_store(d_mat, StoreKind::ShiftedWeight);
    } catch (const Error& e) {
        throw e.with_step(kStepLabel);
    }

    // Steps 8-10: spectral search and ridge readout.
    const TransformResult tr = transformation_quantum(store_d, store_x, data, config);
    out.sigma_list = tr.sigma;
    out.a_states = tr.a;
    out.query_ledger.add("transform", "singular_value_labeling", tr.queries_qsve);
    out.query_ledger.add("transform", "minimum_search", tr.queries_search);
    out.query_ledger.add("transform", "ridge_readout", tr.queries_ridge);
    for (const auto& w : tr.warnings) out.error_report.warnings.push_back(w);

    // Transform errors: measured grid deviation against the exact spectrum.
    {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(d_mat);
        std::vector<double> sv(svd.singularValues().data(),
                               svd.singularValues().data() + svd.singularValues().size());
        double worst = 0.0;
        for (Eigen::Index j = 0; j < out.sigma_list.size(); ++j) {
            double best = std::numeric_limits<double>::infinity();
            for (const double s : sv) best = std::min(best, std::abs(s - out.sigma_list[j]));
            worst = std::max(worst, best);
        }
        const double delta_rel = transform_grid_delta(config.eps, store_d.frobenius_norm());
        out.error_report.measured["transform_sigma_error"] = worst;
        out.error_report.bounds["transform_sigma_error"] =
            delta_rel * store_d.frobenius_norm();
    }

    for (Eigen::Index j = 0; j < out.a_states.cols(); ++j) {
        if (std::abs(out.a_states.col(j).norm() - 1.0) > 1e-9)
            throw Error(ErrKind::Internal, "embedding direction is not unit norm",
                        kStepRidge);
    }
    if (nf.queries + out.query_ledger.stages.at("weights") +
            out.query_ledger.stages.at("transform") !=
        out.query_ledger.total())
        throw Error(ErrKind::Internal, "query ledger does not balance", kStepRidge);

    return out;
}

}  // namespace qnpe
