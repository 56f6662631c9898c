// Linear-algebra subroutines: pseudo-inversion of a block-encoded Hermitian
// operator with eigenvalue grid quantization, real-amplitude tomography with
// interference sign recovery, singular-value estimation onto a cosine grid,
// minimum finding over a labeled superposition, and phase estimation over the
// extended (off-diagonal block) matrix.
#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "qnpe/subroutines.hpp"

namespace qnpe {

namespace {

// Signed value rounded onto the grid {k / 2^t}.
double quantize_signed(double v, int t_bits) {
    const double scale = std::ldexp(1.0, t_bits);
    return std::nearbyint(v * scale) / scale;
}

// Deterministic sign convention: flip a real vector so its largest-magnitude
// component is positive.
void canonical_sign(Eigen::Ref<Eigen::VectorXd> v) {
    Eigen::Index at = 0;
    v.cwiseAbs().maxCoeff(&at);
    if (v[at] < 0.0) v = -v;
}

struct SpectralInversion {
    Eigen::VectorXcd state;            // normalized pseudo-inverse direction
    Eigen::VectorXcd exact_state;      // same with unquantized eigenvalues
    double success_probability = 0.0;  // post-selection probability
    double min_kept = 0.0;             // smallest |quantized eigenvalue| kept
    bool kappa_violated = false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es;
};

// Shared spectral engine: pseudo-invert on the kept eigenspace (|lambda|
// above 1/(2 kappa)) with eigenvalues quantized to grid_bits. When
// project_onto_span is set, input weight in the dropped eigenspace is
// discarded by post-selection (lowering the success probability) instead of
// raising a span error.
SpectralInversion spectral_invert(const Eigen::MatrixXcd& a, const Eigen::VectorXcd& b,
                                  double kappa, int grid_bits, bool project_onto_span = false) {
    SpectralInversion out;
    out.es.compute(a);
    if (out.es.info() != Eigen::Success)
        throw Error(ErrKind::Internal, "eigendecomposition failed during inversion");
    if (out.es.eigenvalues().cwiseAbs().maxCoeff() > 1.0 + 1e-9)
        throw Error(ErrKind::Parameter, "operator to invert must be a contraction");

    const double cut = 1.0 / (2.0 * kappa);
    Eigen::VectorXcd x = Eigen::VectorXcd::Zero(b.size());
    Eigen::VectorXcd x_exact = Eigen::VectorXcd::Zero(b.size());
    Eigen::VectorXcd kept_b = Eigen::VectorXcd::Zero(b.size());
    double min_kept = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < out.es.eigenvalues().size(); ++k) {
        const double lam = out.es.eigenvalues()[k];
        if (std::abs(lam) < cut) continue;
        if (std::abs(lam) < 1.0 / kappa - 1e-12) out.kappa_violated = true;
        const double bar = quantize_signed(lam, grid_bits);
        if (bar == 0.0)
            throw Error(ErrKind::Precision,
                        "eigenvalue grid too coarse for " + format_double(lam));
        const Eigen::VectorXcd u = out.es.eigenvectors().col(k);
        const cd beta = u.dot(b);
        x += (beta / bar) * u;
        x_exact += (beta / lam) * u;
        kept_b += beta * u;
        min_kept = std::min(min_kept, std::abs(bar));
    }

    const double outside = (b - kept_b).norm();
    if (!std::isfinite(min_kept) || kept_b.norm() <= 1e-12 * b.norm() ||
        (!project_onto_span && outside > 1e-8 * b.norm()))
        throw Error(ErrKind::Span,
                    "input lies outside the invertible eigenspace by " + format_double(outside));

    out.min_kept = min_kept;
    out.success_probability = min_kept * min_kept * x.squaredNorm() / b.squaredNorm();
    out.state = x / x.norm();
    out.exact_state = x_exact / x_exact.norm();
    return out;
}

uint64_t inversion_query_cost(double kappa, double eps, double alpha, int ancilla_bits) {
    const double l2 = std::log2(std::max(2.0, kappa / eps));
    return uint64_t(std::ceil(kappa * (alpha * (1.0 + double(ancilla_bits)) * l2 * l2 + 1.0) *
                              std::log2(std::max(2.0, kappa))));
}

InversionResult finish_inversion(const SpectralInversion& sp, double kappa, double eps,
                                 int grid_bits, double alpha, int ancilla_bits,
                                 std::string_view name) {
    InversionResult res;
    res.state = sp.state;
    res.success_probability = sp.success_probability;
    res.grid_bits = grid_bits;
    res.queries = inversion_query_cost(kappa, eps, alpha, ancilla_bits);
    res.report.name = std::string(name);
    res.report.params = {{"kappa", kappa},
                         {"eps", eps},
                         {"grid_bits", double(grid_bits)},
                         {"min_kept", sp.min_kept},
                         {"kappa_violated", sp.kappa_violated ? 1.0 : 0.0},
                         {"success_probability", sp.success_probability}};
    res.report.queries = res.queries;
    res.report.error_bound = eps;
    res.report.measured_error = 1.0 - fidelity(sp.state, sp.exact_state);
    return res;
}

int default_grid_bits(double kappa, double eps, const std::optional<int>& grid_bits) {
    if (grid_bits) {
        if (*grid_bits < 1 || *grid_bits > 50)
            throw Error(ErrKind::Parameter, "eigenvalue grid width must lie in [1, 50]");
        return *grid_bits;
    }
    return std::min(50, int(std::ceil(std::log2(kappa / eps))) + 1);
}

void check_inversion_params(double kappa, double eps) {
    if (!(kappa >= 2.0))
        throw Error(ErrKind::Parameter, "condition bound kappa must be at least 2");
    if (!(eps > 0.0 && eps < 1.0))
        throw Error(ErrKind::Parameter, "inversion accuracy eps must lie in (0, 1)");
}

}  // namespace

// ---------------------------------------------------------------------------
// Pseudo-inversion

InversionResult invert_dense(const Eigen::MatrixXcd& a, const Eigen::VectorXcd& b, double kappa,
                             double eps, std::optional<int> grid_bits,
                             bool project_onto_span) {
    check_inversion_params(kappa, eps);
    if (a.rows() != a.cols() || a.rows() != b.size())
        throw Error(ErrKind::Parameter, "inversion shape mismatch");
    if ((a - a.adjoint()).cwiseAbs().maxCoeff() > 1e-9)
        throw Error(ErrKind::Parameter, "operator to invert must be Hermitian");
    if (b.norm() == 0.0) throw Error(ErrKind::ZeroNorm, "inversion input vector is zero");

    const int t = default_grid_bits(kappa, eps, grid_bits);
    const Eigen::MatrixXcd herm = 0.5 * (a + a.adjoint());
    const SpectralInversion sp = spectral_invert(herm, b, kappa, t, project_onto_span);
    return finish_inversion(sp, kappa, eps, t, 1.0, 0, "invert_dense");
}

InversionResult invert_block_encoded(const BlockEncoding& be, const Eigen::VectorXcd& b,
                                     double kappa, double eps, Tier tier,
                                     std::optional<int> grid_bits) {
    check_inversion_params(kappa, eps);
    const Eigen::MatrixXcd raw = be.extract_block();
    if (raw.rows() != b.size())
        throw Error(ErrKind::Parameter, "inversion input length does not match the block");
    if ((raw - raw.adjoint()).cwiseAbs().maxCoeff() > 1e-9)
        throw Error(ErrKind::Parameter, "encoded block must be Hermitian");
    if (b.norm() == 0.0) throw Error(ErrKind::ZeroNorm, "inversion input vector is zero");

    const int t = default_grid_bits(kappa, eps, grid_bits);
    const Eigen::MatrixXcd herm = 0.5 * (raw + raw.adjoint());
    const SpectralInversion sp = spectral_invert(herm, b, kappa, t);
    InversionResult res =
        finish_inversion(sp, kappa, eps, t, be.alpha, be.ancilla_bits, "invert_block_encoded");

    if (tier == Tier::Circuit) {
        if (raw.rows() > 4)
            throw Error(ErrKind::Parameter, "circuit-tier inversion supports dimension <= 4");
        // Basis change to the eigenbasis, a per-eigenindex ancilla rotation
        // sin = C / lambda-bar, post-selection, and the change back. The
        // rotation constant is the smallest kept magnitude, so the flagged
        // component is exactly the quantized pseudo-inverse.
        const int bits = ceil_log2(uint64_t(raw.rows()));
        SimState s = init_state({{"sys", bits}, {"anc", 1}});
        Program prog;
        prog.push_back(Op{state_prep_unitary(b / b.norm()), {"sys"}, {}});
        prog.push_back(Op{dense_u(sp.es.eigenvectors().adjoint()), {"sys"}, {}});
        const double cut = 1.0 / (2.0 * kappa);
        for (Eigen::Index k = 0; k < raw.rows(); ++k) {
            const double lam = sp.es.eigenvalues()[k];
            double sin_a = 0.0;
            if (std::abs(lam) >= cut) sin_a = sp.min_kept / quantize_signed(lam, t);
            Eigen::MatrixXcd rot(2, 2);
            const double cos_a = std::sqrt(std::max(0.0, 1.0 - sin_a * sin_a));
            rot << cd(cos_a, 0), cd(-sin_a, 0), cd(sin_a, 0), cd(cos_a, 0);
            prog.push_back(Op{dense_u(std::move(rot)), {"anc"}, {{"sys", uint64_t(k)}}});
        }
        qnpe::apply(s, prog);
        const double p = project(s, "anc", 1);
        drop_register(s, "anc", 1);
        qnpe::apply(s, Op{dense_u(sp.es.eigenvectors()), {"sys"}, {}});
        if (std::abs(p - sp.success_probability) > 1e-9 ||
            fidelity(s.amp, sp.state) < 1.0 - 1e-10)
            throw Error(ErrKind::Internal, "inversion circuit disagrees with the spectral path");
        res.state = s.amp;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Real-amplitude tomography

TomographyResult tomography(const Eigen::VectorXcd& state, double delta, Rng& rng) {
    const Eigen::Index d = state.size();
    if (d < 1) throw Error(ErrKind::EmptyInput, "tomography of an empty state");
    if (!(delta > 0.0 && delta < 1.0))
        throw Error(ErrKind::Parameter, "tomography accuracy delta must lie in (0, 1)");
    if (state.imag().cwiseAbs().maxCoeff() > 1e-8)
        throw Error(ErrKind::RealAmplitude,
                    "tomography requires real amplitudes, found imaginary part " +
                        format_double(state.imag().cwiseAbs().maxCoeff()));
    Eigen::VectorXd x = state.real();
    const double n = x.norm();
    if (n == 0.0) throw Error(ErrKind::ZeroNorm, "tomography of a zero state");
    x /= n;

    const uint64_t big_n =
        uint64_t(std::ceil(36.0 * double(d) * std::log(std::max(2.0, double(d))) /
                           (delta * delta)));

    // Magnitude phase: empirical frequencies of the basis distribution.
    std::vector<double> pmf(size_t(d), 0.0);
    for (Eigen::Index i = 0; i < d; ++i) pmf[size_t(i)] = x[i] * x[i];
    std::vector<uint64_t> counts(size_t(d), 0);
    for (uint64_t s = 0; s < big_n; ++s) counts[rng.sample_pmf(pmf)]++;
    Eigen::VectorXd mag(d);
    for (Eigen::Index i = 0; i < d; ++i)
        mag[i] = std::sqrt(double(counts[size_t(i)]) / double(big_n));

    // Sign phase: interfere the state against the magnitude estimate,
    // (|0>|x> + |1>|mag>)/sqrt2 followed by a Hadamard on the flag; the
    // flag-0/flag-1 outcome rates at index i order by sign(x_i).
    std::vector<double> pmf2(size_t(2 * d));
    for (Eigen::Index i = 0; i < d; ++i) {
        pmf2[size_t(i)] = 0.25 * (x[i] + mag[i]) * (x[i] + mag[i]);
        pmf2[size_t(d + i)] = 0.25 * (x[i] - mag[i]) * (x[i] - mag[i]);
    }
    std::vector<uint64_t> plus(size_t(d), 0), minus(size_t(d), 0);
    for (uint64_t s = 0; s < big_n; ++s) {
        const size_t k = rng.sample_pmf(pmf2);
        if (k < size_t(d))
            plus[k]++;
        else
            minus[k - size_t(d)]++;
    }

    TomographyResult res;
    res.estimate.resize(d);
    for (Eigen::Index i = 0; i < d; ++i)
        res.estimate[i] = (plus[size_t(i)] >= minus[size_t(i)]) ? mag[i] : -mag[i];
    const double en = res.estimate.norm();
    if (en > 0.0) res.estimate /= en;

    res.samples = big_n;
    res.queries = 2 * big_n;
    res.report.name = "tomography";
    res.report.params = {{"dimension", double(d)}, {"delta", delta}, {"samples", double(big_n)}};
    res.report.queries = res.queries;
    res.report.error_bound = std::sqrt(7.0) * delta;
    res.report.measured_error = (res.estimate - x).norm();
    return res;
}

// ---------------------------------------------------------------------------
// Singular-value estimation

double QsveResult::sigma_of_label(uint64_t y) const {
    const uint64_t big_m = 1ULL << grid_bits;
    const uint64_t folded = std::min(y, big_m - y);
    if (2 * folded == big_m) return 0.0;  // cos(pi/2) without roundoff
    return frobenius * std::cos(kPi * double(folded) / double(big_m));
}

QsveResult qsve(const TreeStore& d_store, const SimState& input, double delta, Tier tier) {
    if (!(delta > 0.0 && delta <= 0.5))
        throw Error(ErrKind::Parameter, "singular-value accuracy delta must lie in (0, 1/2]");
    if (input.has_reg("sv"))
        throw Error(ErrKind::Parameter, "register name 'sv' is reserved for the label");
    const Register& vec = input.regs.back();
    const Eigen::Index n = d_store.cols();
    if ((Eigen::Index(1) << vec.bits) != n)
        throw Error(ErrKind::Parameter,
                    "trailing register must span the store's column space");

    QsveResult res;
    res.grid_bits = std::min(20, int(std::ceil(std::log2(1.0 / delta))) + 2);
    res.frobenius = d_store.frobenius_norm();
    const uint64_t big_m = 1ULL << res.grid_bits;

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(d_store.matrix(), Eigen::ComputeFullV);
    res.v = svd.matrixV();
    for (Eigen::Index j = 0; j < n; ++j) canonical_sign(res.v.col(j));

    res.sigma_exact = Eigen::VectorXd::Zero(n);
    res.sigma_grid = Eigen::VectorXd::Zero(n);
    res.labels.assign(size_t(n), 0);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double sig = j < svd.singularValues().size() ? svd.singularValues()[j] : 0.0;
        res.sigma_exact[j] = sig;
        const double ratio = std::clamp(sig / res.frobenius, 0.0, 1.0);
        const uint64_t y = uint64_t(std::nearbyint(std::acos(ratio) / kPi * double(big_m)));
        res.labels[size_t(j)] = y;
        res.sigma_grid[j] = res.sigma_of_label(y);
        worst = std::max(worst, std::abs(res.sigma_grid[j] - sig));
    }

    // Rotate to the right-singular basis, write the label, rotate back; the
    // label register stays entangled with the singular components.
    res.state = input;
    append_register(res.state, "sv", res.grid_bits);
    const std::vector<uint64_t> labels = res.labels;
    Program prog;
    prog.push_back(Op{dense_u(res.v.transpose().cast<cd>()), {vec.name}, {}});
    prog.push_back(oracle_from_function({vec.name}, vec.bits, "sv", res.grid_bits,
                                        [labels](uint64_t j) { return labels[size_t(j)]; }));
    prog.push_back(Op{dense_u(res.v.cast<cd>()), {vec.name}, {}});
    if (tier == Tier::Circuit) {
        qnpe::apply(res.state, prog);
    } else {
        // Identical action computed directly on the decomposition: project
        // each leading-register slice onto the right-singular basis and tag
        // every component with its label.
        const Eigen::Index lab_dim = Eigen::Index(1) << res.grid_bits;
        const Eigen::Index block = n * lab_dim;
        Eigen::VectorXcd out = Eigen::VectorXcd::Zero(res.state.dim());
        for (Eigen::Index p = 0; p < res.state.dim() / block; ++p) {
            Eigen::VectorXcd slice(n);
            for (Eigen::Index vv = 0; vv < n; ++vv)
                slice[vv] = res.state.amp[p * block + vv * lab_dim];
            const Eigen::VectorXcd coeff = res.v.transpose().cast<cd>() * slice;
            for (Eigen::Index j = 0; j < n; ++j)
                for (Eigen::Index vv = 0; vv < n; ++vv)
                    out[p * block + vv * lab_dim + Eigen::Index(labels[size_t(j)])] +=
                        coeff[j] * cd(res.v(vv, j), 0.0);
        }
        res.state.amp = std::move(out);
    }

    res.queries = uint64_t(std::ceil(
        std::log2(std::max(4.0, double(d_store.rows()) * double(d_store.cols()))) / delta));
    res.report.name = "qsve";
    res.report.params = {{"grid_bits", double(res.grid_bits)},
                         {"frobenius", res.frobenius},
                         {"rows", double(d_store.rows())},
                         {"cols", double(n)}};
    res.report.queries = res.queries;
    res.report.error_bound = delta * res.frobenius;
    res.report.measured_error = worst;
    return res;
}

// ---------------------------------------------------------------------------
// Minimum finding

MinFindResult find_minimum(const QsveResult& labeled, double exclude_threshold,
                           const std::vector<uint64_t>& already_found, int rho, Tier tier,
                           Rng& rng) {
    if (rho < 1) throw Error(ErrKind::Parameter, "repetition count must be at least 1");
    const SimState& st = labeled.state;
    const Register& sv = st.reg("sv");
    const uint64_t n_labels = 1ULL << sv.bits;

    const Eigen::VectorXd mass = marginal_pmf(st, "sv");
    const std::unordered_set<uint64_t> excluded(already_found.begin(), already_found.end());
    std::vector<char> qualifies(size_t(n_labels), 0);
    uint64_t present = 0;
    uint64_t target = 0;
    bool any = false;
    for (uint64_t y = 0; y < n_labels; ++y) {
        if (mass[Eigen::Index(y)] < 1e-15) continue;
        ++present;
        if (labeled.sigma_of_label(y) <= exclude_threshold || excluded.count(y)) continue;
        qualifies[size_t(y)] = 1;
        if (!any || y > target) target = y;  // larger label = smaller sigma
        any = true;
    }
    if (!any)
        throw Error(ErrKind::Exhausted, "no labels remain above the exclusion threshold");

    const uint64_t budget = uint64_t(std::ceil(22.5 * std::sqrt(double(present))));
    const double cap = std::sqrt(double(present));

    // Circuit tier re-prepares the labeled state unitarily for each search
    // iteration; keep that dense preparation to desk scale.
    Preparation prep;
    if (tier == Tier::Circuit) {
        if (st.dim() > 1024)
            throw Error(ErrKind::Parameter,
                        "circuit-tier minimum finding supports dimension <= 1024");
        std::vector<std::string> names;
        for (const auto& r : st.regs) {
            prep.layout.emplace_back(r.name, r.bits);
            names.push_back(r.name);
        }
        prep.program = {Op{state_prep_unitary(st.amp), names, {}}};
    }

    MinFindResult res;
    res.attempts = uint64_t(rho);
    uint64_t best = 0;
    bool have_best = false;

    for (int attempt = 0; attempt < rho; ++attempt) {
        // Start from a qualifying draw of the label marginal.
        std::vector<double> init(size_t(n_labels), 0.0);
        for (uint64_t y = 0; y < n_labels; ++y)
            if (qualifies[size_t(y)]) init[size_t(y)] = mass[Eigen::Index(y)];
        uint64_t cur = uint64_t(rng.sample_pmf(init));
        uint64_t used = 1;
        double m_par = 1.0;

        while (used < budget) {
            const uint64_t t = rng.uniform_int(std::max<uint64_t>(1, uint64_t(m_par)));
            const auto better = [&](uint64_t y) { return qualifies[size_t(y)] && y > cur; };

            uint64_t outcome;
            if (tier == Tier::Circuit) {
                const Op oracle = phase_oracle({"sv"}, sv.bits,
                                               [&](uint64_t y) { return better(y); });
                SimState s = prep.prepare();
                const Program q = grover_operator(prep, oracle);
                for (uint64_t k = 0; k < t; ++k) qnpe::apply(s, q);
                outcome = measure(s, "sv", 1, rng)[0];
            } else {
                // Exact post-iteration marginal: the good and bad classes
                // scale by sin/cos ratios of the rotated angle.
                double g = 0.0;
                for (uint64_t y = 0; y < n_labels; ++y)
                    if (better(y)) g += mass[Eigen::Index(y)];
                const double theta = std::asin(std::sqrt(std::clamp(g, 0.0, 1.0)));
                double sg = 1.0, sb = 1.0;
                const double rot = (2.0 * double(t) + 1.0) * theta;
                if (g > 1e-15 && g < 1.0 - 1e-15) {
                    sg = std::pow(std::sin(rot) / std::sin(theta), 2.0);
                    sb = std::pow(std::cos(rot) / std::cos(theta), 2.0);
                }
                std::vector<double> post(size_t(n_labels), 0.0);
                for (uint64_t y = 0; y < n_labels; ++y)
                    post[size_t(y)] = mass[Eigen::Index(y)] * (better(y) ? sg : sb);
                outcome = uint64_t(rng.sample_pmf(post));
            }

            used += t + 1;
            if (better(outcome)) {
                cur = outcome;
                m_par = 1.0;
            } else {
                m_par = std::min(m_par * 1.2, cap);
            }
        }

        res.queries += used;
        if (!have_best || cur > best) best = cur;
        have_best = true;
    }

    res.label = best;
    res.sigma = labeled.sigma_of_label(best);
    std::vector<Eigen::Index> cols;
    for (size_t j = 0; j < labeled.labels.size(); ++j)
        if (labeled.labels[j] == best) cols.push_back(Eigen::Index(j));
    res.vectors.resize(labeled.v.rows(), Eigen::Index(cols.size()));
    for (size_t k = 0; k < cols.size(); ++k) res.vectors.col(Eigen::Index(k)) = labeled.v.col(cols[k]);

    res.report.name = "find_minimum";
    res.report.params = {{"budget", double(budget)},
                         {"attempts", double(rho)},
                         {"present_labels", double(present)},
                         {"exclude_threshold", exclude_threshold}};
    res.report.queries = res.queries;
    res.report.error_bound = std::pow(0.5, double(rho));
    res.report.measured_error = double(best != target);
    return res;
}

// ---------------------------------------------------------------------------
// Extended-matrix phase estimation

ExtendedPeResult extended_matrix_phase_estimation(const TreeStore& x_store,
                                                  const Eigen::VectorXd& b, int t_bits,
                                                  Tier tier) {
    if (t_bits < 2 || t_bits > 16)
        throw Error(ErrKind::Parameter, "phase register width must lie in [2, 16]");
    const Eigen::Index m = x_store.rows();
    const Eigen::Index n = x_store.cols();
    const Eigen::Index s = std::max(m, n);
    if (b.size() != m && b.size() != s)
        throw Error(ErrKind::Parameter, "input vector must live in the left block");
    if (b.norm() == 0.0) throw Error(ErrKind::ZeroNorm, "phase estimation input is zero");

    Eigen::MatrixXd xp = Eigen::MatrixXd::Zero(s, s);
    xp.topLeftCorner(m, n) = x_store.matrix();
    Eigen::VectorXd bp = Eigen::VectorXd::Zero(s);
    bp.head(b.size()) = b / b.norm();

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(xp, Eigen::ComputeFullU | Eigen::ComputeFullV);
    ExtendedPeResult res;
    res.u = svd.matrixU();
    res.v = svd.matrixV();
    res.gamma_exact = svd.singularValues();
    for (Eigen::Index j = 0; j < s; ++j) {
        // Sign convention rides on the left factor; the right column flips
        // with it so each rank-one term is unchanged.
        Eigen::Index at = 0;
        res.u.col(j).cwiseAbs().maxCoeff(&at);
        if (res.u(at, j) < 0.0) {
            res.u.col(j) = -res.u.col(j);
            res.v.col(j) = -res.v.col(j);
        }
    }

    const double gamma_max = res.gamma_exact[0];
    if (gamma_max <= 0.0)
        throw Error(ErrKind::ZeroNorm, "extended matrix has no nonzero singular values");
    res.tau = kPi / (2.0 * gamma_max);
    res.grid_bits = t_bits;
    const uint64_t big_m = 1ULL << t_bits;

    res.beta = res.u.transpose() * bp;
    res.gamma_grid = Eigen::VectorXd::Zero(s);
    for (Eigen::Index j = 0; j < s; ++j) {
        const double phase = res.gamma_exact[j] * res.tau / (2.0 * kPi);  // in [0, 1/4]
        const uint64_t y = uint64_t(std::nearbyint(phase * double(big_m))) % big_m;
        const uint64_t folded = std::min(y, big_m - y);
        res.gamma_grid[j] = double(folded) * 2.0 * kPi / (double(big_m) * res.tau);
    }

    // Eigenvector embedding check: (|0,u> +- |1,v>)/sqrt2 must be an exact
    // +-gamma eigenpair of [[0, X], [X^T, 0]].
    Eigen::MatrixXd xbar = Eigen::MatrixXd::Zero(2 * s, 2 * s);
    xbar.topRightCorner(s, s) = xp;
    xbar.bottomLeftCorner(s, s) = xp.transpose();
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (Eigen::Index j = 0; j < s; ++j) {
        Eigen::VectorXd psi(2 * s);
        psi.head(s) = inv_sqrt2 * res.u.col(j);
        psi.tail(s) = inv_sqrt2 * res.v.col(j);
        if ((xbar * psi - res.gamma_exact[j] * psi).norm() > 1e-8)
            throw Error(ErrKind::Internal, "extended-matrix eigenvector embedding failed");
        psi.tail(s) = -psi.tail(s);
        if ((xbar * psi + res.gamma_exact[j] * psi).norm() > 1e-8)
            throw Error(ErrKind::Internal, "extended-matrix eigenvector embedding failed");
    }

    if (tier == Tier::Circuit) {
        if (s > 8)
            throw Error(ErrKind::Parameter,
                        "circuit-tier phase estimation supports dimension <= 8");
        // Exponentiate the extended matrix and run textbook phase estimation
        // on each positive-branch eigenvector; the measured peak must land on
        // the quantized label.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(xbar);
        Eigen::VectorXcd evo_phases(2 * s);
        for (Eigen::Index k = 0; k < 2 * s; ++k)
            evo_phases[k] = std::exp(cd(0.0, es.eigenvalues()[k] * res.tau));
        const Eigen::MatrixXcd evo = es.eigenvectors().cast<cd>() *
                                     evo_phases.asDiagonal() *
                                     es.eigenvectors().transpose().cast<cd>();

        const int sys_bits = ceil_log2(uint64_t(2 * s));
        std::vector<std::pair<std::string, int>> layout;
        std::vector<std::string> phase_regs;
        for (int k = 0; k < t_bits; ++k) {
            phase_regs.push_back("ph" + std::to_string(k));
            layout.emplace_back(phase_regs.back(), 1);
        }
        layout.emplace_back("sys", sys_bits);

        for (Eigen::Index j = 0; j < s; ++j) {
            if (res.beta[j] * res.beta[j] < 1e-12) continue;
            Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(Eigen::Index(1) << sys_bits);
            for (Eigen::Index r = 0; r < s; ++r) {
                psi[r] = cd(inv_sqrt2 * res.u(r, j), 0.0);
                psi[s + r] = cd(inv_sqrt2 * res.v(r, j), 0.0);
            }
            SimState qs = init_state(layout);
            Program prog;
            const double h = 1.0 / std::sqrt(2.0);
            Eigen::MatrixXcd had(2, 2);
            had << cd(h, 0), cd(h, 0), cd(h, 0), cd(-h, 0);
            for (const auto& pr : phase_regs) prog.push_back(Op{dense_u(had), {pr}, {}});
            prog.push_back(Op{state_prep_unitary(psi), {"sys"}, {}});
            Eigen::MatrixXcd power = evo;
            for (int k = t_bits - 1; k >= 0; --k) {
                prog.push_back(Op{dense_u(power), {"sys"}, {{phase_regs[size_t(k)], 1}}});
                if (k > 0) power = power * power;
            }
            Program unqft = inverse_program(qft_program(phase_regs));
            prog.insert(prog.end(), unqft.begin(), unqft.end());
            qnpe::apply(qs, prog);

            const Eigen::VectorXd pmf = marginal_pmf(qs, phase_regs);
            Eigen::Index peak = 0;
            pmf.maxCoeff(&peak);
            const double phase = res.gamma_exact[j] * res.tau / (2.0 * kPi);
            const uint64_t expect = uint64_t(std::nearbyint(phase * double(big_m))) % big_m;
            if (uint64_t(peak) != expect)
                throw Error(ErrKind::Internal,
                            "phase-estimation peak missed the quantized label");
        }
    }

    res.queries = (big_m - 1) * uint64_t(std::ceil(
                                    std::log2(std::max(4.0, double(m) * double(n)))));
    res.report.name = "extended_matrix_phase_estimation";
    res.report.params = {{"tau", res.tau},
                         {"gamma_max", gamma_max},
                         {"grid_bits", double(t_bits)},
                         {"rows", double(m)},
                         {"cols", double(n)}};
    res.report.queries = res.queries;
    res.report.error_bound = 2.0 * gamma_max / double(big_m);
    res.report.measured_error = (res.gamma_grid - res.gamma_exact).cwiseAbs().maxCoeff();
    return res;
}

}  // namespace qnpe
