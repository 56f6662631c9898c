// Deterministic statevector simulator with named registers. Unitaries are
// primitive dense / permutation / diagonal-phase blocks applied to whole
// registers, optionally under classical-value controls; programs are
// sequences of such operations. All randomness enters through explicit Rng
// streams so identical seeds reproduce identical trajectories.
#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "qnpe/common.hpp"

namespace qnpe {

using cd = std::complex<double>;

struct Register {
    std::string name;
    int bits = 0;
    int shift = 0;  // position of the register's least significant bit
};

struct SimState {
    std::vector<Register> regs;  // first register occupies the most significant bits
    Eigen::VectorXcd amp;

    int total_bits() const;
    Eigen::Index dim() const { return amp.size(); }
    const Register& reg(const std::string& name) const;
    bool has_reg(const std::string& name) const;

    // Value held by `name` within basis index b.
    uint64_t value_of(uint64_t b, const Register& r) const {
        return (b >> r.shift) & ((1ULL << r.bits) - 1);
    }

    double norm() const { return amp.norm(); }
    void check_normalized(double tol = 1e-9) const;

    std::string dump_json() const;
};

// |0...0> over the given layout (name, bits) pairs.
SimState init_state(const std::vector<std::pair<std::string, int>>& layout);

// Arbitrary initial amplitudes (normalized within 1e-9) over the layout.
SimState init_state(const std::vector<std::pair<std::string, int>>& layout,
                    const Eigen::VectorXcd& amplitudes);

// ---------------------------------------------------------------------------

struct PrimitiveU {
    enum class Kind { Dense, Permutation, DiagonalPhase };
    Kind kind = Kind::Dense;
    Eigen::MatrixXcd dense;        // Kind::Dense
    std::vector<uint64_t> perm;    // Kind::Permutation, |k> -> |perm[k]>
    Eigen::VectorXcd phases;       // Kind::DiagonalPhase

    Eigen::Index dim() const;
    // Throws a unitarity error naming the measured deviation when the block
    // is farther than `tol` from unitary.
    void check_unitary(double tol = 1e-10) const;
    PrimitiveU inverse() const;
    Eigen::MatrixXcd to_dense() const;
};

PrimitiveU dense_u(Eigen::MatrixXcd m);
PrimitiveU permutation_u(std::vector<uint64_t> perm);
PrimitiveU diagonal_u(Eigen::VectorXcd phases);

// Unitary whose first column is `psi` (deterministic completion); applied to
// |0> it prepares `psi`.
PrimitiveU state_prep_unitary(const Eigen::VectorXcd& psi);

struct Op {
    PrimitiveU u;
    std::vector<std::string> targets;                      // joint register list, MSB first
    std::vector<std::pair<std::string, uint64_t>> controls;  // register must hold value
};

using Program = std::vector<Op>;

Program inverse_program(const Program& p);

void apply(SimState& state, const Op& op);
void apply(SimState& state, const Program& program);

// Dense matrix of a whole-layout program (small layouts only; tests).
Eigen::MatrixXcd program_dense(const Program& program,
                               const std::vector<std::pair<std::string, int>>& layout);

// ---------------------------------------------------------------------------

// Joint value of the listed registers (MSB-first in list order) inside basis
// index b.
uint64_t joint_value(const SimState& state, const std::vector<std::string>& regs, uint64_t b);

// Marginal probability distribution over a register's values.
Eigen::VectorXd marginal_pmf(const SimState& state, const std::string& reg);
Eigen::VectorXd marginal_pmf(const SimState& state, const std::vector<std::string>& regs);

// Seeded computational-basis samples of one register (state unchanged:
// repeated preparation is modeled by sampling the fixed marginal).
std::vector<uint64_t> measure(const SimState& state, const std::string& reg, size_t shots,
                              Rng& rng);
std::vector<uint64_t> measure(const SimState& state, const std::vector<std::string>& regs,
                              size_t shots, Rng& rng);

// Projects a register onto `value`, renormalizes, returns the pre-projection
// probability. Probability below `tol` raises an impossible-outcome error.
double project(SimState& state, const std::string& reg, uint64_t value, double tol = 1e-12);
double project(SimState& state, const std::vector<std::string>& regs, uint64_t value,
               double tol = 1e-12);

// Appends a fresh |0> register at the least significant position.
void append_register(SimState& state, const std::string& name, int bits);

// Removes a register that classically holds `value` (projecting first).
void drop_register(SimState& state, const std::string& name, uint64_t value);

struct DensityOp {
    Eigen::MatrixXcd rho;
    int bits = 0;

    void check_valid(double tol = 1e-8) const;  // Hermitian, PSD, unit trace
    // Purification |Psi> = sum_i sqrt(lambda_i) |i>_anc |u_i>_sys.
    SimState purify() const;
};

// Reduced density operator over the kept registers (joint, in listed order).
DensityOp partial_trace(const SimState& state, const std::vector<std::string>& keep);

// ---------------------------------------------------------------------------

// Bit oracle |x>|v> -> |x>|v xor f(x)> over joint index registers; f returns
// the fixed-point encoding (must fit in value_bits, else a representation
// error names the required width).
Op oracle_from_function(const std::vector<std::string>& index_regs, int index_bits,
                        const std::string& value_reg, int value_bits,
                        const std::function<uint64_t(uint64_t)>& f);

// Phase oracle: flips the sign of basis states whose joint index satisfies
// the predicate.
Op phase_oracle(const std::vector<std::string>& index_regs, int index_bits,
                const std::function<bool(uint64_t)>& predicate);

// Fixed-point encoding helpers for value registers.
uint64_t encode_fixed_point(double v, int value_bits, int frac_bits);
double decode_fixed_point(uint64_t code, int frac_bits);

// |<a|b>|^2 for equally shaped states.
double fidelity(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b);

}  // namespace qnpe
