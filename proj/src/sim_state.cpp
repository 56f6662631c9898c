#include "qnpe/sim_state.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qnpe/data_matrix.hpp"

namespace qnpe {

int SimState::total_bits() const {
    int b = 0;
    for (const auto& r : regs) b += r.bits;
    return b;
}

const Register& SimState::reg(const std::string& name) const {
    for (const auto& r : regs)
        if (r.name == name) return r;
    throw Error(ErrKind::Parameter, "unknown register: " + name);
}

bool SimState::has_reg(const std::string& name) const {
    for (const auto& r : regs)
        if (r.name == name) return true;
    return false;
}

void SimState::check_normalized(double tol) const {
    const double n = amp.norm();
    if (std::abs(n - 1.0) > tol)
        throw Error(ErrKind::Invariant, "state norm deviates from 1 by " + format_double(n - 1.0));
}

std::string SimState::dump_json() const {
    std::ostringstream os;
    os << "{\"registers\":[";
    for (size_t i = 0; i < regs.size(); ++i) {
        if (i) os << ',';
        os << "{\"name\":\"" << regs[i].name << "\",\"bits\":" << regs[i].bits << "}";
    }
    os << "],\"amplitudes\":[";
    for (Eigen::Index i = 0; i < amp.size(); ++i) {
        if (i) os << ',';
        os << '[' << format_double(amp[i].real()) << ',' << format_double(amp[i].imag()) << ']';
    }
    os << "]}";
    return os.str();
}

namespace {

std::vector<Register> make_layout(const std::vector<std::pair<std::string, int>>& layout) {
    if (layout.empty()) throw Error(ErrKind::Parameter, "register layout must be nonempty");
    std::vector<Register> regs;
    int total = 0;
    for (const auto& [name, bits] : layout) {
        if (bits < 1 || bits > 28)
            throw Error(ErrKind::Parameter, "register '" + name + "' has invalid width " +
                                                std::to_string(bits));
        for (const auto& r : regs)
            if (r.name == name)
                throw Error(ErrKind::Parameter, "duplicate register name: " + name);
        regs.push_back({name, bits, 0});
        total += bits;
    }
    if (total > 28)
        throw Error(ErrKind::Parameter,
                    "layout needs " + std::to_string(total) + " qubits, exceeding the desk-scale cap");
    int shift = total;
    for (auto& r : regs) {
        shift -= r.bits;
        r.shift = shift;
    }
    return regs;
}

}  // namespace

SimState init_state(const std::vector<std::pair<std::string, int>>& layout) {
    SimState s;
    s.regs = make_layout(layout);
    s.amp = Eigen::VectorXcd::Zero(Eigen::Index(1) << s.total_bits());
    s.amp[0] = 1.0;
    return s;
}

SimState init_state(const std::vector<std::pair<std::string, int>>& layout,
                    const Eigen::VectorXcd& amplitudes) {
    SimState s;
    s.regs = make_layout(layout);
    if (amplitudes.size() != (Eigen::Index(1) << s.total_bits()))
        throw Error(ErrKind::Parameter, "amplitude length does not match the register layout");
    s.amp = amplitudes;
    s.check_normalized();
    return s;
}

// ---------------------------------------------------------------------------

Eigen::Index PrimitiveU::dim() const {
    switch (kind) {
        case Kind::Dense: return dense.rows();
        case Kind::Permutation: return Eigen::Index(perm.size());
        case Kind::DiagonalPhase: return phases.size();
    }
    return 0;
}

void PrimitiveU::check_unitary(double tol) const {
    switch (kind) {
        case Kind::Dense: {
            const Eigen::Index n = dense.rows();
            if (dense.cols() != n)
                throw Error(ErrKind::Unitarity, "unitary block is not square");
            const double dev =
                (dense.adjoint() * dense - Eigen::MatrixXcd::Identity(n, n)).norm();
            if (dev > tol)
                throw Error(ErrKind::Unitarity,
                            "unitarity deviation " + format_double(dev) + " exceeds tolerance " +
                                format_double(tol));
            return;
        }
        case Kind::Permutation: {
            std::vector<bool> seen(perm.size(), false);
            for (uint64_t v : perm) {
                if (v >= perm.size() || seen[v])
                    throw Error(ErrKind::Unitarity, "permutation block is not a bijection");
                seen[v] = true;
            }
            return;
        }
        case Kind::DiagonalPhase: {
            for (Eigen::Index i = 0; i < phases.size(); ++i) {
                const double dev = std::abs(std::abs(phases[i]) - 1.0);
                if (dev > tol)
                    throw Error(ErrKind::Unitarity, "diagonal phase modulus deviates by " +
                                                        format_double(dev) + " at index " +
                                                        std::to_string(i));
            }
            return;
        }
    }
}

PrimitiveU PrimitiveU::inverse() const {
    switch (kind) {
        case Kind::Dense: return dense_u(dense.adjoint());
        case Kind::Permutation: {
            std::vector<uint64_t> inv(perm.size());
            for (uint64_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
            return permutation_u(std::move(inv));
        }
        case Kind::DiagonalPhase: return diagonal_u(phases.conjugate());
    }
    throw Error(ErrKind::Internal, "unknown primitive kind");
}

Eigen::MatrixXcd PrimitiveU::to_dense() const {
    switch (kind) {
        case Kind::Dense: return dense;
        case Kind::Permutation: {
            Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim(), dim());
            for (uint64_t i = 0; i < perm.size(); ++i) m(Eigen::Index(perm[i]), Eigen::Index(i)) = 1.0;
            return m;
        }
        case Kind::DiagonalPhase: {
            Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim(), dim());
            m.diagonal() = phases;
            return m;
        }
    }
    throw Error(ErrKind::Internal, "unknown primitive kind");
}

PrimitiveU dense_u(Eigen::MatrixXcd m) {
    PrimitiveU u;
    u.kind = PrimitiveU::Kind::Dense;
    u.dense = std::move(m);
    u.check_unitary();
    return u;
}

PrimitiveU permutation_u(std::vector<uint64_t> perm) {
    PrimitiveU u;
    u.kind = PrimitiveU::Kind::Permutation;
    u.perm = std::move(perm);
    u.check_unitary();
    return u;
}

PrimitiveU diagonal_u(Eigen::VectorXcd phases) {
    PrimitiveU u;
    u.kind = PrimitiveU::Kind::DiagonalPhase;
    u.phases = std::move(phases);
    u.check_unitary();
    return u;
}

PrimitiveU state_prep_unitary(const Eigen::VectorXcd& psi) {
    const Eigen::Index n = psi.size();
    if (n < 1 || (n & (n - 1)) != 0)
        throw Error(ErrKind::Parameter, "state length must be a power of two");
    if (std::abs(psi.norm() - 1.0) > 1e-9)
        throw Error(ErrKind::Invariant, "state to prepare is not normalized");
    // Deterministic completion: Gram-Schmidt the canonical basis against psi,
    // skipping the basis vector most parallel to it.
    Eigen::MatrixXcd u(n, n);
    u.col(0) = psi;
    Eigen::Index skip = 0;
    psi.cwiseAbs().maxCoeff(&skip);
    Eigen::Index col = 1;
    for (Eigen::Index e = 0; e < n && col < n; ++e) {
        if (e == skip) continue;
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(n);
        v[e] = 1.0;
        for (Eigen::Index c = 0; c < col; ++c) v -= u.col(c).dot(v) * u.col(c);
        const double vn = v.norm();
        if (vn < 1e-12)
            throw Error(ErrKind::Internal, "state preparation completion degenerated");
        u.col(col++) = v / vn;
    }
    return dense_u(std::move(u));
}

// ---------------------------------------------------------------------------

namespace {

struct TargetPlan {
    int t_bits = 0;
    std::vector<uint64_t> scatter;       // sub-index -> global bit pattern
    std::vector<int> rest_positions;     // non-target bit positions (ascending)
    uint64_t control_mask = 0;
    uint64_t control_pattern = 0;
};

TargetPlan plan_targets(const SimState& s, const Op& op) {
    TargetPlan plan;
    if (op.targets.empty()) throw Error(ErrKind::Parameter, "operation has no target registers");
    std::vector<int> positions;  // MSB-first across the joint target list
    uint64_t target_mask = 0;
    for (const auto& name : op.targets) {
        const Register& r = s.reg(name);
        for (int b = r.bits - 1; b >= 0; --b) {
            positions.push_back(r.shift + b);
            target_mask |= 1ULL << (r.shift + b);
        }
    }
    plan.t_bits = int(positions.size());
    if (op.u.dim() != (Eigen::Index(1) << plan.t_bits))
        throw Error(ErrKind::Parameter,
                    "unitary dimension " + std::to_string(op.u.dim()) +
                        " does not match target width 2^" + std::to_string(plan.t_bits));

    plan.scatter.assign(size_t(1) << plan.t_bits, 0);
    for (uint64_t k = 0; k < plan.scatter.size(); ++k) {
        uint64_t pattern = 0;
        for (int t = 0; t < plan.t_bits; ++t)
            if ((k >> (plan.t_bits - 1 - t)) & 1ULL) pattern |= 1ULL << positions[size_t(t)];
        plan.scatter[k] = pattern;
    }

    for (const auto& [name, value] : op.controls) {
        const Register& r = s.reg(name);
        const uint64_t rmask = ((1ULL << r.bits) - 1) << r.shift;
        if (rmask & target_mask)
            throw Error(ErrKind::Parameter, "control register '" + name + "' overlaps a target");
        if (value >= (1ULL << r.bits))
            throw Error(ErrKind::Parameter, "control value out of range for register '" + name + "'");
        plan.control_mask |= rmask;
        plan.control_pattern |= value << r.shift;
    }

    const int total = s.total_bits();
    for (int p = 0; p < total; ++p)
        if (!(target_mask & (1ULL << p))) plan.rest_positions.push_back(p);
    return plan;
}

uint64_t deposit(uint64_t value, const std::vector<int>& positions) {
    uint64_t out = 0;
    for (size_t t = 0; t < positions.size(); ++t)
        if ((value >> t) & 1ULL) out |= 1ULL << positions[t];
    return out;
}

}  // namespace

void apply(SimState& state, const Op& op) {
    op.u.check_unitary();
    const TargetPlan plan = plan_targets(state, op);
    const uint64_t groups = 1ULL << plan.rest_positions.size();
    const Eigen::Index sub = Eigen::Index(1) << plan.t_bits;

    Eigen::VectorXcd buf(sub), out(sub);
    for (uint64_t g = 0; g < groups; ++g) {
        const uint64_t base = deposit(g, plan.rest_positions);
        if ((base & plan.control_mask) != plan.control_pattern) continue;
        switch (op.u.kind) {
            case PrimitiveU::Kind::Dense: {
                for (Eigen::Index k = 0; k < sub; ++k)
                    buf[k] = state.amp[Eigen::Index(base | plan.scatter[size_t(k)])];
                out.noalias() = op.u.dense * buf;
                for (Eigen::Index k = 0; k < sub; ++k)
                    state.amp[Eigen::Index(base | plan.scatter[size_t(k)])] = out[k];
                break;
            }
            case PrimitiveU::Kind::Permutation: {
                for (Eigen::Index k = 0; k < sub; ++k)
                    buf[k] = state.amp[Eigen::Index(base | plan.scatter[size_t(k)])];
                for (Eigen::Index k = 0; k < sub; ++k)
                    state.amp[Eigen::Index(base | plan.scatter[size_t(op.u.perm[size_t(k)])])] =
                        buf[k];
                break;
            }
            case PrimitiveU::Kind::DiagonalPhase: {
                for (Eigen::Index k = 0; k < sub; ++k)
                    state.amp[Eigen::Index(base | plan.scatter[size_t(k)])] *= op.u.phases[k];
                break;
            }
        }
    }
}

void apply(SimState& state, const Program& program) {
    for (const auto& op : program) apply(state, op);
}

Program inverse_program(const Program& p) {
    Program inv;
    inv.reserve(p.size());
    for (auto it = p.rbegin(); it != p.rend(); ++it) {
        Op op;
        op.u = it->u.inverse();
        op.targets = it->targets;
        op.controls = it->controls;
        inv.push_back(std::move(op));
    }
    return inv;
}

Eigen::MatrixXcd program_dense(const Program& program,
                               const std::vector<std::pair<std::string, int>>& layout) {
    SimState probe = init_state(layout);
    const Eigen::Index dim = probe.dim();
    if (dim > (1 << 14))
        throw Error(ErrKind::Parameter, "dense program extraction is limited to 14 qubits");
    Eigen::MatrixXcd m(dim, dim);
    for (Eigen::Index c = 0; c < dim; ++c) {
        SimState s = probe;
        s.amp.setZero();
        s.amp[c] = 1.0;
        qnpe::apply(s, program);
        m.col(c) = s.amp;
    }
    return m;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd marginal_pmf(const SimState& state, const std::string& reg) {
    const Register& r = state.reg(reg);
    Eigen::VectorXd pmf = Eigen::VectorXd::Zero(Eigen::Index(1) << r.bits);
    for (Eigen::Index b = 0; b < state.amp.size(); ++b)
        pmf[Eigen::Index(state.value_of(uint64_t(b), r))] += std::norm(state.amp[b]);
    return pmf;
}

uint64_t joint_value(const SimState& state, const std::vector<std::string>& regs, uint64_t b) {
    uint64_t v = 0;
    for (const auto& name : regs) {
        const Register& r = state.reg(name);
        v = (v << r.bits) | state.value_of(b, r);
    }
    return v;
}

Eigen::VectorXd marginal_pmf(const SimState& state, const std::vector<std::string>& regs) {
    int bits = 0;
    for (const auto& name : regs) bits += state.reg(name).bits;
    if (bits > 30) throw Error(ErrKind::Bounds, "joint marginal over more than 30 bits");
    Eigen::VectorXd pmf = Eigen::VectorXd::Zero(Eigen::Index(1) << bits);
    for (Eigen::Index b = 0; b < state.amp.size(); ++b)
        pmf[Eigen::Index(joint_value(state, regs, uint64_t(b)))] += std::norm(state.amp[b]);
    return pmf;
}

std::vector<uint64_t> measure(const SimState& state, const std::vector<std::string>& regs,
                              size_t shots, Rng& rng) {
    const Eigen::VectorXd pmf = marginal_pmf(state, regs);
    std::vector<double> weights(pmf.data(), pmf.data() + pmf.size());
    std::vector<uint64_t> outcomes;
    outcomes.reserve(shots);
    for (size_t s = 0; s < shots; ++s) outcomes.push_back(uint64_t(rng.sample_pmf(weights)));
    return outcomes;
}

double project(SimState& state, const std::vector<std::string>& regs, uint64_t value, double tol) {
    double prob = 0.0;
    for (Eigen::Index b = 0; b < state.amp.size(); ++b) {
        if (joint_value(state, regs, uint64_t(b)) == value)
            prob += std::norm(state.amp[b]);
        else
            state.amp[b] = 0.0;
    }
    if (prob < tol)
        throw Error(ErrKind::ImpossibleOutcome,
                    "joint projection onto " + std::to_string(value) + " has probability " +
                        format_double(prob));
    state.amp /= std::sqrt(prob);
    return prob;
}

std::vector<uint64_t> measure(const SimState& state, const std::string& reg, size_t shots,
                              Rng& rng) {
    const Eigen::VectorXd pmf = marginal_pmf(state, reg);
    std::vector<double> weights(pmf.data(), pmf.data() + pmf.size());
    std::vector<uint64_t> outcomes;
    outcomes.reserve(shots);
    for (size_t s = 0; s < shots; ++s) outcomes.push_back(uint64_t(rng.sample_pmf(weights)));
    return outcomes;
}

double project(SimState& state, const std::string& reg, uint64_t value, double tol) {
    const Register& r = state.reg(reg);
    if (value >= (1ULL << r.bits))
        throw Error(ErrKind::Bounds, "projection value out of range for register '" + reg + "'");
    double prob = 0.0;
    for (Eigen::Index b = 0; b < state.amp.size(); ++b) {
        if (state.value_of(uint64_t(b), r) == value)
            prob += std::norm(state.amp[b]);
        else
            state.amp[b] = 0.0;
    }
    if (prob < tol)
        throw Error(ErrKind::ImpossibleOutcome,
                    "projection of register '" + reg + "' onto " + std::to_string(value) +
                        " has probability " + format_double(prob));
    state.amp /= std::sqrt(prob);
    return prob;
}

void append_register(SimState& state, const std::string& name, int bits) {
    std::vector<std::pair<std::string, int>> layout;
    for (const auto& r : state.regs) layout.emplace_back(r.name, r.bits);
    layout.emplace_back(name, bits);
    SimState grown = init_state(layout);
    grown.amp.setZero();
    for (Eigen::Index b = 0; b < state.amp.size(); ++b)
        grown.amp[b << bits] = state.amp[b];
    state = std::move(grown);
}

void drop_register(SimState& state, const std::string& name, uint64_t value) {
    project(state, name, value);
    const Register& r = state.reg(name);
    std::vector<std::pair<std::string, int>> layout;
    for (const auto& rr : state.regs)
        if (rr.name != name) layout.emplace_back(rr.name, rr.bits);
    if (layout.empty()) throw Error(ErrKind::Parameter, "cannot drop the last register");
    SimState shrunk = init_state(layout);
    shrunk.amp.setZero();
    const uint64_t low_mask = (1ULL << r.shift) - 1;
    for (Eigen::Index b = 0; b < state.amp.size(); ++b) {
        if (state.value_of(uint64_t(b), r) != value) continue;
        const uint64_t high = (uint64_t(b) >> (r.shift + r.bits)) << r.shift;
        shrunk.amp[Eigen::Index(high | (uint64_t(b) & low_mask))] = state.amp[b];
    }
    state = std::move(shrunk);
}

void DensityOp::check_valid(double tol) const {
    const double herm_dev = (rho - rho.adjoint()).norm();
    if (herm_dev > tol)
        throw Error(ErrKind::Invariant, "density operator hermiticity deviation " +
                                            format_double(herm_dev));
    const double trace_dev = std::abs(rho.trace().real() - 1.0) + std::abs(rho.trace().imag());
    if (trace_dev > tol)
        throw Error(ErrKind::Invariant,
                    "density operator trace deviation " + format_double(trace_dev));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho);
    if (es.eigenvalues().minCoeff() < -tol)
        throw Error(ErrKind::Invariant, "density operator has negative eigenvalue " +
                                            format_double(es.eigenvalues().minCoeff()));
}

SimState DensityOp::purify() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho);
    const Eigen::Index n = rho.rows();
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(n * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double lam = std::max(es.eigenvalues()[i], 0.0);
        if (lam <= 0.0) continue;
        psi.segment(i * n, n) = std::sqrt(lam) * es.eigenvectors().col(i);
    }
    psi /= psi.norm();
    return init_state({{"anc", bits}, {"sys", bits}}, psi);
}

DensityOp partial_trace(const SimState& state, const std::vector<std::string>& keep) {
    if (keep.empty()) throw Error(ErrKind::Parameter, "partial trace must keep some register");
    std::vector<int> positions;  // MSB-first over the kept registers
    uint64_t keep_mask = 0;
    for (const auto& name : keep) {
        const Register& r = state.reg(name);
        for (int b = r.bits - 1; b >= 0; --b) {
            positions.push_back(r.shift + b);
            keep_mask |= 1ULL << (r.shift + b);
        }
    }
    const int keep_bits = int(positions.size());
    const Eigen::Index kd = Eigen::Index(1) << keep_bits;
    std::vector<uint64_t> scatter(size_t(kd), 0);
    for (uint64_t k = 0; k < scatter.size(); ++k)
        for (int t = 0; t < keep_bits; ++t)
            if ((k >> (keep_bits - 1 - t)) & 1ULL) scatter[k] |= 1ULL << positions[size_t(t)];
    std::vector<int> rest;
    for (int p = 0; p < state.total_bits(); ++p)
        if (!(keep_mask & (1ULL << p))) rest.push_back(p);

    DensityOp out;
    out.bits = keep_bits;
    out.rho = Eigen::MatrixXcd::Zero(kd, kd);
    Eigen::VectorXcd v(kd);
    for (uint64_t g = 0; g < (1ULL << rest.size()); ++g) {
        const uint64_t base = deposit(g, rest);
        for (Eigen::Index k = 0; k < kd; ++k)
            v[k] = state.amp[Eigen::Index(base | scatter[size_t(k)])];
        out.rho.noalias() += v * v.adjoint();
    }
    return out;
}

// ---------------------------------------------------------------------------

Op oracle_from_function(const std::vector<std::string>& index_regs, int index_bits,
                        const std::string& value_reg, int value_bits,
                        const std::function<uint64_t(uint64_t)>& f) {
    const uint64_t index_dim = 1ULL << index_bits;
    const uint64_t value_dim = 1ULL << value_bits;
    std::vector<uint64_t> perm(index_dim * value_dim);
    for (uint64_t x = 0; x < index_dim; ++x) {
        const uint64_t fx = f(x);
        if (fx >= value_dim) {
            int need = 1;
            while ((1ULL << need) <= fx) ++need;
            throw Error(ErrKind::Representation,
                        "oracle value " + std::to_string(fx) + " needs " + std::to_string(need) +
                            " bits, register has " + std::to_string(value_bits));
        }
        for (uint64_t v = 0; v < value_dim; ++v)
            perm[(x << value_bits) | v] = (x << value_bits) | (v ^ fx);
    }
    Op op;
    op.u = permutation_u(std::move(perm));
    op.targets = index_regs;
    op.targets.push_back(value_reg);
    return op;
}

Op phase_oracle(const std::vector<std::string>& index_regs, int index_bits,
                const std::function<bool(uint64_t)>& predicate) {
    Eigen::VectorXcd phases(Eigen::Index(1) << index_bits);
    for (Eigen::Index x = 0; x < phases.size(); ++x)
        phases[x] = predicate(uint64_t(x)) ? -1.0 : 1.0;
    Op op;
    op.u = diagonal_u(std::move(phases));
    op.targets = index_regs;
    return op;
}

uint64_t encode_fixed_point(double v, int value_bits, int frac_bits) {
    if (v < 0.0)
        throw Error(ErrKind::Representation, "fixed-point value registers are unsigned, got " +
                                                 format_double(v));
    const double scaled = std::nearbyint(std::ldexp(v, frac_bits));
    if (scaled >= std::ldexp(1.0, value_bits)) {
        int need = frac_bits + 1;
        while (std::ldexp(1.0, need - frac_bits) <= v) ++need;
        throw Error(ErrKind::Representation,
                    "value " + format_double(v) + " needs " + std::to_string(need + 1) +
                        " fixed-point bits, register has " + std::to_string(value_bits));
    }
    return uint64_t(scaled);
}

double decode_fixed_point(uint64_t code, int frac_bits) {
    return std::ldexp(double(code), -frac_bits);
}

double fidelity(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
    if (a.size() != b.size())
        throw Error(ErrKind::Parameter, "fidelity requires equally sized states");
    return std::norm(a.dot(b));
}

}  // namespace qnpe
