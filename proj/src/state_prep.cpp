// State preparation subroutines: the fixed-point squared-distance oracle,
// difference-state preparation by rotation/interference, purification of the
// neighborhood correlation operator, and block encodings (from a purification
// and from a dense Hermitian contraction).
#include <algorithm>
#include <cmath>

#include "qnpe/subroutines.hpp"

namespace qnpe {

namespace {

int reg_bits(Eigen::Index padded_count) {
    return std::max(1, ceil_log2(uint64_t(std::max<Eigen::Index>(padded_count, 1))));
}

// Real 2x2 rotation sending |0> to cos|0> + sin|1>.
PrimitiveU rotation_u(double cos_a, double sin_a) {
    Eigen::MatrixXcd m(2, 2);
    m << cd(cos_a, 0.0), cd(-sin_a, 0.0), cd(sin_a, 0.0), cd(cos_a, 0.0);
    return dense_u(std::move(m));
}

PrimitiveU hadamard_u() {
    const double s = 1.0 / std::sqrt(2.0);
    Eigen::MatrixXcd m(2, 2);
    m << cd(s, 0.0), cd(s, 0.0), cd(s, 0.0), cd(-s, 0.0);
    return dense_u(std::move(m));
}

// Unit direction of a real vector padded to `dim` amplitudes.
Eigen::VectorXcd padded_direction(const Eigen::VectorXd& v, Eigen::Index dim) {
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(dim);
    const double n = v.norm();
    if (n == 0.0) {
        out[0] = cd(1.0, 0.0);
        return out;
    }
    for (Eigen::Index k = 0; k < v.size(); ++k) out[k] = cd(v[k] / n, 0.0);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Distance oracle

DistanceOracle distance_oracle(const TreeStore& x, const TreeStore& y, double eps1,
                               double delta) {
    if (!(eps1 > 0.0))
        throw Error(ErrKind::Parameter, "distance accuracy eps1 must be positive");
    if (!(delta > 0.0 && delta < 0.5))
        throw Error(ErrKind::Parameter, "distance failure probability delta must lie in (0, 1/2)");
    if (x.cols() != y.cols())
        throw Error(ErrKind::Parameter, "distance oracle stores must share the point dimension");

    DistanceOracle oc;
    oc.eps1 = eps1;
    oc.delta = delta;
    // Quantization step small enough that rounding alone stays within eps1.
    oc.frac_bits = std::max(12, int(std::ceil(std::log2(1.0 / eps1))) + 1);
    if (oc.frac_bits > 40)
        throw Error(ErrKind::Parameter, "eps1 below the supported fixed-point resolution");

    const Eigen::MatrixXd& mx = x.matrix();
    const Eigen::MatrixXd& my = y.matrix();
    oc.quantized.resize(mx.rows(), my.rows());
    double max_value = 0.0;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < mx.rows(); ++i) {
        for (Eigen::Index j = 0; j < my.rows(); ++j) {
            const double exact = (mx.row(i) - my.row(j)).squaredNorm();
            const double q = fixed_point_round(exact, oc.frac_bits);
            oc.quantized(i, j) = q;
            max_value = std::max(max_value, q);
            worst = std::max(worst, std::abs(q - exact));
        }
    }
    const int int_bits = std::max(1, int(std::ceil(std::log2(std::floor(max_value) + 2.0))));
    oc.value_bits = std::max(16, oc.frac_bits + int_bits);

    oc.norm_product = x.max_row_norm() * y.max_row_norm();
    const double idx_space = std::max(double(x.rows()) * double(x.cols()),
                                      double(y.rows()) * double(y.cols()));
    const double polylog = std::log2(std::max(4.0, idx_space));
    oc.cost_per_query =
        uint64_t(std::ceil(std::max(1.0, oc.norm_product) * polylog *
                           std::log2(1.0 / delta) / eps1));

    oc.report.name = "distance_oracle";
    oc.report.params = {{"eps1", eps1},
                        {"delta", delta},
                        {"value_bits", double(oc.value_bits)},
                        {"frac_bits", double(oc.frac_bits)},
                        {"norm_product", oc.norm_product},
                        {"rows_x", double(x.rows())},
                        {"rows_y", double(y.rows())}};
    oc.report.queries = oc.cost_per_query;
    oc.report.error_bound = eps1;
    oc.report.measured_error = worst;
    return oc;
}

Op DistanceOracle::make_bit_oracle(const std::string& i_reg, const std::string& j_reg,
                                   const std::string& value_reg, int i_bits, int j_bits) const {
    if ((Eigen::Index(1) << i_bits) < quantized.rows() ||
        (Eigen::Index(1) << j_bits) < quantized.cols())
        throw Error(ErrKind::Parameter, "index registers too narrow for the distance table");
    const Eigen::MatrixXd table = quantized;
    const int vb = value_bits;
    const int fb = frac_bits;
    return oracle_from_function(
        {i_reg, j_reg}, i_bits + j_bits, value_reg, vb,
        [table, j_bits, vb, fb](uint64_t joint) -> uint64_t {
            const uint64_t i = joint >> j_bits;
            const uint64_t j = joint & ((1ULL << j_bits) - 1);
            if (Eigen::Index(i) >= table.rows() || Eigen::Index(j) >= table.cols()) return 0;
            return encode_fixed_point(table(Eigen::Index(i), Eigen::Index(j)), vb, fb);
        });
}

// ---------------------------------------------------------------------------
// Difference-state preparation

DifferenceStateResult difference_state_prep(const TreeStore& x, const TreeStore& y,
                                            const std::vector<DifferenceBranch>& branches,
                                            double eps0, double delta_prime, int qae_bits,
                                            Tier tier, Rng& rng) {
    if (branches.empty())
        throw Error(ErrKind::EmptyInput, "difference-state preparation needs at least one branch");
    if (!(eps0 > 0.0))
        throw Error(ErrKind::Parameter, "difference norm floor eps0 must be positive");
    if (qae_bits < 1 || qae_bits > 20)
        throw Error(ErrKind::Parameter, "estimation register width must lie in [1, 20]");
    if (x.cols() != y.cols())
        throw Error(ErrKind::Parameter, "difference stores must share the point dimension");

    const int bi = reg_bits(x.rows());
    const int bj = reg_bits(y.rows());
    const int bv = reg_bits(x.cols());
    const Eigen::Index vdim = Eigen::Index(1) << bv;
    const uint64_t n_codes = 1ULL << (bi + bj);

    double weight_sum = 0.0;
    double h_max = 0.0;
    Eigen::VectorXcd branch_amp = Eigen::VectorXcd::Zero(Eigen::Index(n_codes));
    for (const auto& br : branches) {
        if (br.i < 0 || br.i >= x.rows() || br.j < 0 || br.j >= y.rows())
            throw Error(ErrKind::Bounds, "difference branch index out of range");
        if (!(br.weight > 0.0))
            throw Error(ErrKind::Value, "difference branch weights must be positive");
        const double d = (x.matrix().row(br.i) - y.matrix().row(br.j)).norm();
        if (d == 0.0)
            throw Error(ErrKind::ZeroDifference,
                        "rows " + std::to_string(br.i) + " and " + std::to_string(br.j) +
                            " coincide; the difference state is undefined");
        if (d < eps0)
            throw Error(ErrKind::Parameter,
                        "eps0 exceeds the difference norm of branch (" + std::to_string(br.i) +
                            "," + std::to_string(br.j) + ")");
        const uint64_t code = (uint64_t(br.i) << bj) | uint64_t(br.j);
        if (branch_amp[Eigen::Index(code)] != cd(0.0, 0.0))
            throw Error(ErrKind::Value, "duplicate difference branch (" + std::to_string(br.i) +
                                            "," + std::to_string(br.j) + ")");
        branch_amp[Eigen::Index(code)] = cd(std::sqrt(br.weight), 0.0);
        weight_sum += br.weight;
        h_max = std::max(h_max, std::hypot(x.row_norms()[br.i], y.row_norms()[br.j]));
    }
    if (std::abs(weight_sum - 1.0) > 1e-9)
        throw Error(ErrKind::Value, "difference branch weights must sum to 1");

    // Interference construction per branch (i,j): rotate a flag to
    // cos|0> + sin|1> with cos = |x_i|/h, load the row directions on the
    // flag-conditioned vector register, then a Hadamard on the flag puts the
    // normalized difference (x_i - y_j)/(sqrt2 h) on the flag-1 slice.
    const std::vector<std::pair<std::string, int>> layout = {
        {"ij", bi + bj}, {"df", 1}, {"vec", bv}};
    Program program;
    program.push_back(Op{state_prep_unitary(branch_amp), {"ij"}, {}});
    for (const auto& br : branches) {
        const uint64_t code = (uint64_t(br.i) << bj) | uint64_t(br.j);
        const double nx = x.row_norms()[br.i];
        const double ny = y.row_norms()[br.j];
        const double h = std::hypot(nx, ny);
        program.push_back(Op{rotation_u(nx / h, ny / h), {"df"}, {{"ij", code}}});
        const Eigen::VectorXcd dir_x =
            padded_direction(nx > 0.0 ? Eigen::VectorXd(x.row_state(br.i))
                                      : Eigen::VectorXd::Zero(x.cols()),
                             vdim);
        const Eigen::VectorXcd dir_y =
            padded_direction(ny > 0.0 ? Eigen::VectorXd(y.row_state(br.j))
                                      : Eigen::VectorXd::Zero(y.cols()),
                             vdim);
        program.push_back(
            Op{state_prep_unitary(dir_x), {"vec"}, {{"ij", code}, {"df", 0}}});
        program.push_back(
            Op{state_prep_unitary(dir_y), {"vec"}, {{"ij", code}, {"df", 1}}});
    }
    program.push_back(Op{hadamard_u(), {"df"}, {}});

    SimState joint = init_state(layout);
    qnpe::apply(joint, program);

    // Every branch overlap is at least eps0 / (sqrt2 h_max); amplify each
    // branch's flag-1 component with that floor backing the schedules.
    const double floor = eps0 / (std::sqrt(2.0) * h_max);
    ParallelHandlingResult ph = parallel_amplitude_handling(
        joint, "ij", "df", 1, delta_prime, qae_bits, floor, tier, rng);

    DifferenceStateResult res;
    res.flag_success_probability = project(ph.state, "df", 1);
    drop_register(ph.state, "df", 1);

    // Split the fused branch register into its row components (pure layout
    // surgery: the joint value (i << bj) | j already has i in the high bits).
    for (size_t k = 0; k < ph.state.regs.size(); ++k) {
        if (ph.state.regs[k].name != "ij") continue;
        const int shift = ph.state.regs[k].shift;
        ph.state.regs[k] = Register{"i", bi, shift + bj};
        ph.state.regs.insert(ph.state.regs.begin() + long(k) + 1, Register{"j", bj, shift});
        break;
    }
    res.state = std::move(ph.state);

    Eigen::VectorXcd ideal = Eigen::VectorXcd::Zero(res.state.dim());
    for (const auto& br : branches) {
        const Eigen::VectorXd diff = x.matrix().row(br.i) - y.matrix().row(br.j);
        const Eigen::VectorXcd dir = padded_direction(diff, vdim);
        const uint64_t code = (uint64_t(br.i) << bj) | uint64_t(br.j);
        for (Eigen::Index v = 0; v < vdim; ++v)
            ideal[Eigen::Index((code << bv) | uint64_t(v))] = std::sqrt(br.weight) * dir[v];
    }
    res.fidelity_vs_ideal = fidelity(res.state.amp, ideal);

    res.branch_fidelities.reserve(branches.size());
    for (const auto& br : branches) {
        const uint64_t code = (uint64_t(br.i) << bj) | uint64_t(br.j);
        Eigen::VectorXcd slice = Eigen::VectorXcd::Zero(vdim);
        for (Eigen::Index v = 0; v < vdim; ++v)
            slice[v] = res.state.amp[Eigen::Index((code << bv) | uint64_t(v))];
        const double n = slice.norm();
        if (n == 0.0) {
            res.branch_fidelities.push_back(0.0);
            continue;
        }
        const Eigen::VectorXcd dir =
            padded_direction(x.matrix().row(br.i) - y.matrix().row(br.j), vdim);
        res.branch_fidelities.push_back(fidelity(slice / n, dir));
    }

    res.queries = ph.queries + branches.size();
    res.report.name = "difference_state_prep";
    res.report.params = {{"eps0", eps0},
                         {"delta_prime", delta_prime},
                         {"qae_bits", double(qae_bits)},
                         {"branches", double(branches.size())},
                         {"overlap_floor", floor}};
    res.report.queries = res.queries;
    res.report.error_bound = 4.0 * delta_prime * delta_prime;
    res.report.measured_error = 1.0 - res.fidelity_vs_ideal;
    return res;
}

// ---------------------------------------------------------------------------
// Purification of the neighborhood correlation operator

PurificationResult purification_prep(const TreeStore& x, Eigen::Index i,
                                     const std::vector<Eigen::Index>& q, double r, double eps0,
                                     double delta_prime, int qae_bits, Tier tier, Rng& rng) {
    if (q.empty())
        throw Error(ErrKind::NoNeighbors,
                    "row " + std::to_string(i) + " has an empty neighborhood");
    if (i < 0 || i >= x.rows())
        throw Error(ErrKind::Bounds, "purification row index out of range");
    if (!(r > 0.0))
        throw Error(ErrKind::Parameter, "neighborhood radius must be positive");
    if (!(eps0 > 0.0))
        throw Error(ErrKind::Parameter, "difference norm floor eps0 must be positive");
    if (qae_bits < 1 || qae_bits > 20)
        throw Error(ErrKind::Parameter, "estimation register width must lie in [1, 20]");

    const Eigen::Index big_k = Eigen::Index(q.size());
    std::vector<double> dist(q.size(), 0.0);
    double c = 0.0;
    for (size_t s = 0; s < q.size(); ++s) {
        const Eigen::Index j = q[s];
        if (j < 0 || j >= x.rows())
            throw Error(ErrKind::Bounds, "neighbor index out of range");
        const double d = (x.matrix().row(i) - x.matrix().row(j)).norm();
        if (d == 0.0)
            throw Error(ErrKind::ZeroDifference,
                        "neighbor " + std::to_string(j) + " coincides with row " +
                            std::to_string(i));
        if (d < eps0)
            throw Error(ErrKind::Parameter, "eps0 exceeds the distance to neighbor " +
                                               std::to_string(j));
        if (d > r * (1.0 + 1e-12))
            throw Error(ErrKind::Parameter,
                        "neighbor " + std::to_string(j) + " lies outside radius " +
                            format_double(r));
        dist[s] = d;
        c += d * d;
    }

    const int br = reg_bits(x.rows());
    const int bv = reg_bits(x.cols());
    const Eigen::Index vdim = Eigen::Index(1) << bv;

    // Row marker, uniform neighbors, distance-proportional flag rotations.
    Preparation prep;
    prep.layout = {{"row", br}, {"nbr", br}, {"rot", 1}};
    Eigen::VectorXcd row_amp = Eigen::VectorXcd::Zero(Eigen::Index(1) << br);
    row_amp[i] = cd(1.0, 0.0);
    prep.program.push_back(Op{state_prep_unitary(row_amp), {"row"}, {}});
    Eigen::VectorXcd nbr_amp = Eigen::VectorXcd::Zero(Eigen::Index(1) << br);
    for (const Eigen::Index j : q) nbr_amp[j] = cd(1.0 / std::sqrt(double(big_k)), 0.0);
    prep.program.push_back(Op{state_prep_unitary(nbr_amp), {"nbr"}, {}});
    for (size_t s = 0; s < q.size(); ++s) {
        const double sin_a = dist[s] / r;
        prep.program.push_back(Op{rotation_u(std::sqrt(1.0 - sin_a * sin_a), sin_a),
                                  {"rot"},
                                  {{"nbr", uint64_t(q[s])}}});
    }
    const Op flag = phase_oracle({"rot"}, 1, [](uint64_t v) { return v == 1; });

    PurificationResult res;
    res.trace_norm = c;
    res.acceptance_probability = c / (double(big_k) * r * r);

    // Estimate the flag probability, then amplify with the overshoot-guarded
    // iteration count; the count is capped by the a-priori overlap floor
    // asin(eps0 / r), so the repetitions stay O(r / eps0).
    const QaeResult est =
        amplitude_estimation_boosted(prep, flag, qae_bits, delta_prime, tier, rng);
    const uint64_t t_cap = uint64_t(std::ceil((kPi / 4.0) * r / eps0)) + 1;
    const uint64_t t = best_iteration_count(est.estimate, t_cap);
    AmplifyResult amp = amplitude_amplify(prep, flag, t, tier);
    if (amp.good_probability < 1e-6)
        throw Error(ErrKind::ImpossibleOutcome,
                    "post-selection probability collapsed below 1e-6 after amplification");
    // Over-rotation past pi puts the good component on the negative amplitude
    // axis; the iteration count and estimate reveal that sign classically, so
    // fold it out to keep the distance-proportional amplitudes positive.
    const double theta_hat = std::asin(std::min(1.0, std::sqrt(est.estimate)));
    if (std::sin((2.0 * double(t) + 1.0) * theta_hat) < 0.0) amp.state.amp = -amp.state.amp;

    project(amp.state, "rot", 1);
    drop_register(amp.state, "rot", 1);
    append_register(amp.state, "vec", bv);
    Program load;
    for (size_t s = 0; s < q.size(); ++s) {
        const Eigen::VectorXcd dir =
            padded_direction(x.matrix().row(i) - x.matrix().row(q[s]), vdim);
        load.push_back(Op{state_prep_unitary(dir), {"vec"}, {{"nbr", uint64_t(q[s])}}});
    }
    qnpe::apply(amp.state, load);
    res.state = std::move(amp.state);

    Eigen::VectorXcd ideal = Eigen::VectorXcd::Zero(res.state.dim());
    for (size_t s = 0; s < q.size(); ++s) {
        const Eigen::VectorXcd dir =
            padded_direction(x.matrix().row(i) - x.matrix().row(q[s]), vdim);
        const uint64_t base = ((uint64_t(i) << br) | uint64_t(q[s])) << bv;
        for (Eigen::Index v = 0; v < vdim; ++v)
            ideal[Eigen::Index(base | uint64_t(v))] = (dist[s] / std::sqrt(c)) * dir[v];
    }
    res.fidelity_vs_ideal = fidelity(res.state.amp, ideal);

    res.queries = est.queries + amp.queries + q.size() + 1;
    res.report.name = "purification_prep";
    res.report.params = {{"row", double(i)},
                         {"neighbors", double(big_k)},
                         {"radius", r},
                         {"eps0", eps0},
                         {"trace_norm", c},
                         {"initial_probability", res.acceptance_probability},
                         {"flag_estimate", est.estimate},
                         {"iterations", double(t)}};
    res.report.queries = res.queries;
    res.report.error_bound = delta_prime;
    res.report.measured_error = 1.0 - res.fidelity_vs_ideal;
    return res;
}

// ---------------------------------------------------------------------------
// Block encodings

Eigen::MatrixXcd BlockEncoding::extract_block() const {
    const Eigen::MatrixXcd dense = program_dense(op, layout);
    Eigen::Index bdim = 0;
    for (const auto& [name, bits] : layout)
        if (name == block_reg) bdim = Eigen::Index(1) << bits;
    if (bdim == 0)
        throw Error(ErrKind::Internal, "block register missing from the encoding layout");
    return alpha * dense.topLeftCorner(bdim, bdim);
}

BlockEncoding block_encoding_from_purification(const Preparation& prep,
                                               const std::string& system_reg) {
    int sys_bits = -1;
    int total_bits = 0;
    for (const auto& [name, bits] : prep.layout) {
        if (name == "blk")
            throw Error(ErrKind::Parameter, "register name 'blk' is reserved for the encoding");
        if (name == system_reg) sys_bits = bits;
        total_bits += bits;
    }
    if (sys_bits < 0)
        throw Error(ErrKind::Parameter,
                    "system register '" + system_reg + "' not found in the preparation");
    // The system register must sit at the least significant position so the
    // all-ancilla block is the top-left corner of the dense operator.
    if (prep.layout.back().first != system_reg)
        throw Error(ErrKind::Parameter,
                    "system register must be the last (least significant) register");

    BlockEncoding be;
    be.alpha = 1.0;
    be.ancilla_bits = total_bits;
    be.epsilon = 0.0;
    be.layout = prep.layout;
    be.layout.emplace_back("blk", sys_bits);
    be.block_reg = "blk";

    // (G^+ (x) I) (I (x) SWAP) (G (x) I): the top-left block of the product
    // is the reduced density operator of the system register.
    const uint64_t half = 1ULL << sys_bits;
    std::vector<uint64_t> swap_perm(size_t(half * half));
    for (uint64_t s = 0; s < half; ++s)
        for (uint64_t b = 0; b < half; ++b) swap_perm[size_t((s << sys_bits) | b)] = (b << sys_bits) | s;

    be.op = prep.program;
    be.op.push_back(Op{permutation_u(std::move(swap_perm)), {system_reg, "blk"}, {}});
    Program unprep = inverse_program(prep.program);
    be.op.insert(be.op.end(), unprep.begin(), unprep.end());
    return be;
}

BlockEncoding dense_block_encoding(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols())
        throw Error(ErrKind::Parameter, "dense block encoding needs a square matrix");
    if (a.rows() < 1) throw Error(ErrKind::EmptyInput, "dense block encoding of an empty matrix");
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw Error(ErrKind::Parameter, "dense block encoding needs a symmetric matrix");

    const Eigen::Index dim = Eigen::Index(std::max<uint64_t>(2, next_pow2(uint64_t(a.rows()))));
    Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(dim, dim);
    padded.topLeftCorner(a.rows(), a.cols()) = a;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(padded);
    if (es.info() != Eigen::Success)
        throw Error(ErrKind::Internal, "eigendecomposition failed in dense block encoding");
    if (es.eigenvalues().cwiseAbs().maxCoeff() > 1.0 + 1e-12)
        throw Error(ErrKind::Parameter, "dense block encoding needs a contraction (norm <= 1)");

    // One-ancilla dilation [[A, S], [S, -A]] with S = sqrt(I - A^2); S
    // commutes with A, so the dilation is exactly unitary.
    Eigen::VectorXd comp = (1.0 - es.eigenvalues().array().square()).cwiseMax(0.0).sqrt();
    const Eigen::MatrixXd s =
        es.eigenvectors() * comp.asDiagonal() * es.eigenvectors().transpose();
    Eigen::MatrixXcd u = Eigen::MatrixXcd::Zero(2 * dim, 2 * dim);
    u.topLeftCorner(dim, dim) = padded.cast<cd>();
    u.topRightCorner(dim, dim) = s.cast<cd>();
    u.bottomLeftCorner(dim, dim) = s.cast<cd>();
    u.bottomRightCorner(dim, dim) = -padded.cast<cd>();

    BlockEncoding be;
    be.alpha = 1.0;
    be.ancilla_bits = 1;
    be.epsilon = 0.0;
    be.layout = {{"benc", 1}, {"blk", reg_bits(dim)}};
    be.block_reg = "blk";
    be.op = {Op{dense_u(std::move(u)), {"benc", "blk"}, {}}};
    return be;
}

void verify_block_encoding(const BlockEncoding& be, const Eigen::MatrixXcd& target,
                           double tol) {
    const Eigen::MatrixXcd block = be.extract_block();
    if (block.rows() != target.rows() || block.cols() != target.cols())
        throw Error(ErrKind::Parameter, "block encoding verification shape mismatch");
    const double dev = (block - target).cwiseAbs().maxCoeff();
    if (dev > be.epsilon + tol)
        throw Error(ErrKind::Invariant,
                    "encoded block deviates from the target by " + format_double(dev) +
                        " (allowed " + format_double(be.epsilon + tol) + ")");
}

}  // namespace qnpe
