#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "confbound/sampleset.hpp"

namespace confbound::qsim {

inline constexpr int kMaxQubits = 16;

enum class GateKind { H, X, CNOT, CZ, TOFFOLI, RY, RZ };

struct Gate {
    GateKind kind = GateKind::H;
    std::array<int, 3> qubits{0, 0, 0};  // controls first, target last
    double angle = 0.0;                  // RY / RZ only

    int arity() const;
    bool operator==(const Gate&) const = default;

    static Gate h(int q) { return {GateKind::H, {q, 0, 0}, 0.0}; }
    static Gate x(int q) { return {GateKind::X, {q, 0, 0}, 0.0}; }
    static Gate cnot(int c, int t) { return {GateKind::CNOT, {c, t, 0}, 0.0}; }
    static Gate cz(int a, int b) { return {GateKind::CZ, {a, b, 0}, 0.0}; }
    static Gate toffoli(int c1, int c2, int t) { return {GateKind::TOFFOLI, {c1, c2, t}, 0.0}; }
    static Gate ry(int q, double theta) { return {GateKind::RY, {q, 0, 0}, theta}; }
    static Gate rz(int q, double theta) { return {GateKind::RZ, {q, 0, 0}, theta}; }
};

enum class Family { walker, ghz, graph, random, deep_random };

Family parse_family(const std::string& name);
std::string to_string(Family f);

struct Circuit {
    int n_qubits = 0;
    std::vector<Gate> gates;
    std::vector<int> measured_qubits;  // output column j <- measured_qubits[j]
    Family family = Family::ghz;
    int depth = 0;

    /// Throws std::invalid_argument on out-of-range or repeated qubits.
    void validate() const;
};

/// Pauli-twirled noise: after each gate, with probability p (p1 for one-qubit
/// gates, p2 for multi-qubit gates) every touched qubit receives an
/// independent uniformly random Pauli from {I, X, Y, Z}, which is the
/// depolarising channel of strength p. After measurement each bit flips
/// independently with probability `readout_flip`.
struct NoiseModel {
    double depolarizing_1q = 0.0;
    double depolarizing_2q = 0.0;
    double readout_flip = 0.0;
    std::string machine_id;

    void validate() const;
    bool noiseless() const {
        return depolarizing_1q == 0.0 && depolarizing_2q == 0.0 && readout_flip == 0.0;
    }

    /// p1 = 0.001 k, p2 = 0.01 k, readout = 0.02 k.
    static NoiseModel scaled(double multiplier, std::string machine_id);
};

enum class Pauli : std::uint8_t { I = 0, X = 1, Y = 2, Z = 3 };

/// Dense 2^n amplitude vector; qubit q is bit q of the basis index.
class Statevector {
public:
    explicit Statevector(int n_qubits);

    int n_qubits() const { return n_; }
    const std::vector<std::complex<double>>& amplitudes() const { return amp_; }
    std::vector<std::complex<double>>& amplitudes() { return amp_; }

    void apply(const Gate& g);
    void apply_inverse(const Gate& g);
    void apply_pauli(int q, Pauli p);
    double norm_squared() const;

    /// Basis index drawn from |amplitude|^2 by inverse CDF at u in [0, 1).
    std::size_t sample_basis(double u) const;

    /// Probability of each measured bitstring, indexed by the integer whose
    /// most significant bit is measured_qubits[0].
    std::vector<double> measured_probabilities(const std::vector<int>& measured_qubits) const;

private:
    void apply_1q(int q, const std::complex<double> (&m)[2][2]);
    int n_;
    std::vector<std::complex<double>> amp_;
};

Circuit build_circuit(Family family, int size_or_depth, std::uint64_t seed);

Statevector simulate(const Circuit& c);

/// Exact measured-output distribution of the ideal circuit.
sampleset::EmpiricalDistribution ideal_distribution(const Circuit& c);

sampleset::ShotMatrix run_ideal(const Circuit& c, std::size_t shots, std::uint64_t seed);
sampleset::ShotMatrix run_noisy(const Circuit& c, const NoiseModel& nm, std::size_t shots,
                                std::uint64_t seed);

nlohmann::json to_json(const Circuit& c);

}  // namespace confbound::qsim
