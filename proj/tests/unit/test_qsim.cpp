#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

#include "confbound/error.hpp"
#include "confbound/qsim.hpp"
#include "confbound/sampleset.hpp"

using namespace confbound;
using namespace confbound::qsim;

namespace {

double fraction_of_ones(const sampleset::ShotMatrix& m, std::size_t col) {
    double k = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) k += m.at(r, col);
    return k / static_cast<double>(m.rows());
}

double binomial_band(double p, std::size_t n) { return 4.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

Circuit single(Gate g, int n = 1, std::vector<int> measured = {0}) {
    Circuit c;
    c.n_qubits = n;
    c.gates = {g};
    c.measured_qubits = std::move(measured);
    return c;
}

}  // namespace

TEST_CASE("walker block structure") {
    const auto c = build_circuit(Family::walker, 3, 0);
    CHECK(c.n_qubits == 4);
    CHECK(c.depth == 3);
    CHECK(c.measured_qubits == std::vector<int>{2, 3});
    REQUIRE(c.gates.size() == 2 + 3 * 3);
    CHECK(c.gates[0] == Gate::h(0));
    CHECK(c.gates[1] == Gate::h(1));
    for (int b = 0; b < 3; ++b) {
        const auto* blk = &c.gates[2 + 3 * static_cast<std::size_t>(b)];
        CHECK(blk[0].kind == GateKind::CNOT);
        CHECK(blk[1].kind == GateKind::CNOT);
        CHECK(blk[2].kind == GateKind::TOFFOLI);
    }
    CHECK(run_ideal(c, 5, 1).width() == 2);
}

TEST_CASE("ghz(3) gates and exact output") {
    const auto c = build_circuit(Family::ghz, 3, 0);
    CHECK(c.gates == std::vector<Gate>{Gate::h(0), Gate::cnot(0, 1), Gate::cnot(1, 2)});
    const auto d = ideal_distribution(c);
    CHECK(d.probs.size() == 2);
    CHECK(d("000") == doctest::Approx(0.5));
    CHECK(d("111") == doctest::Approx(0.5));
    const auto shots = run_ideal(c, 2000, 4);
    for (std::size_t r = 0; r < shots.rows(); ++r) {
        const auto k = shots.key(r);
        REQUIRE((k == "000" || k == "111"));
    }
}

TEST_CASE("random circuits are deterministic per seed") {
    CHECK(build_circuit(Family::random, 5, 3).gates == build_circuit(Family::random, 5, 3).gates);
    CHECK(build_circuit(Family::random, 5, 3).gates != build_circuit(Family::random, 5, 4).gates);
    CHECK(build_circuit(Family::deep_random, 5, 3).depth == 15);
}

TEST_CASE("graph state on a ring") {
    const auto c = build_circuit(Family::graph, 4, 0);
    int cz = 0;
    for (const auto& g : c.gates) cz += g.kind == GateKind::CZ;
    CHECK(cz == 4);
    // Every graph state measured in the computational basis is uniform.
    const auto d = ideal_distribution(c);
    CHECK(d.probs.size() == 16);
    for (const auto& [k, p] : d.probs) CHECK(p == doctest::Approx(1.0 / 16.0));
}

TEST_CASE("run_ideal on single-gate circuits") {
    const auto h = run_ideal(single(Gate::h(0)), 10000, 8);
    CHECK(std::abs(fraction_of_ones(h, 0) - 0.5) <= 0.02);
    const auto x = run_ideal(single(Gate::x(0)), 100, 8);
    CHECK(fraction_of_ones(x, 0) == 1.0);
}

TEST_CASE("output column order follows measured_qubits") {
    const auto c = single(Gate::x(1), 2, {0, 1});
    CHECK(run_ideal(c, 3, 0).key(0) == "01");
    const auto swapped = single(Gate::x(1), 2, {1, 0});
    CHECK(run_ideal(swapped, 3, 0).key(0) == "10");
}

TEST_CASE("noiseless run_noisy reproduces run_ideal") {
    for (auto fam : {Family::ghz, Family::graph, Family::random, Family::walker}) {
        const auto c = build_circuit(fam, 5, 2);
        CHECK(run_noisy(c, NoiseModel{}, 300, 77) == run_ideal(c, 300, 77));
    }
}

TEST_CASE("readout flip 0.5 makes a deterministic bit uniform") {
    NoiseModel nm;
    nm.readout_flip = 0.5;
    const auto m = run_noisy(single(Gate::x(0)), nm, 10000, 12);
    CHECK(std::abs(fraction_of_ones(m, 0) - 0.5) <= binomial_band(0.5, 10000));
}

TEST_CASE("full depolarising on one qubit gives a maximally mixed bit") {
    NoiseModel nm;
    nm.depolarizing_1q = 1.0;
    const auto m = run_noisy(single(Gate::x(0)), nm, 10000, 13);
    CHECK(std::abs(fraction_of_ones(m, 0) - 0.5) <= binomial_band(0.5, 10000));
}

TEST_CASE("two-qubit depolarising mixes both touched qubits") {
    NoiseModel nm;
    nm.depolarizing_2q = 1.0;
    Circuit c = single(Gate::cnot(0, 1), 2, {0, 1});
    const auto m = run_noisy(c, nm, 10000, 14);
    CHECK(std::abs(fraction_of_ones(m, 0) - 0.5) <= binomial_band(0.5, 10000));
    CHECK(std::abs(fraction_of_ones(m, 1) - 0.5) <= binomial_band(0.5, 10000));
}

TEST_CASE("depolarising probability matches the exact mixture") {
    // After X with probability p a uniform Pauli acts; X or Y flip the bit,
    // so P(1) = 1 - p / 2.
    NoiseModel nm;
    nm.depolarizing_1q = 0.4;
    const auto m = run_noisy(single(Gate::x(0)), nm, 20000, 15);
    CHECK(std::abs(fraction_of_ones(m, 0) - 0.8) <= binomial_band(0.8, 20000));
}

TEST_CASE("norm is preserved after every gate in every family") {
    for (auto fam : {Family::ghz, Family::graph, Family::random, Family::deep_random}) {
        for (int size : {1, 2, 5, 9, 12}) {
            const auto c = build_circuit(fam, size, 7);
            Statevector sv(c.n_qubits);
            for (const auto& g : c.gates) {
                sv.apply(g);
                REQUIRE(std::abs(sv.norm_squared() - 1.0) <= 1e-10);
            }
        }
    }
    const auto w = build_circuit(Family::walker, 9, 0);
    Statevector sv(4);
    for (const auto& g : w.gates) {
        sv.apply(g);
        REQUIRE(std::abs(sv.norm_squared() - 1.0) <= 1e-10);
    }
}

TEST_CASE("every gate is undone by its inverse") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n01;
    Statevector sv(3);
    double norm = 0.0;
    for (auto& a : sv.amplitudes()) {
        a = {n01(rng), n01(rng)};
        norm += std::norm(a);
    }
    for (auto& a : sv.amplitudes()) a /= std::sqrt(norm);
    const auto start = sv.amplitudes();
    const std::vector<Gate> gates{Gate::h(1),          Gate::x(2),          Gate::cnot(2, 0), Gate::cz(0, 1),
                                  Gate::toffoli(0, 2, 1), Gate::ry(1, 0.731), Gate::rz(0, -2.2)};
    for (const auto& g : gates) {
        sv.apply(g);
        sv.apply_inverse(g);
        for (std::size_t k = 0; k < start.size(); ++k) REQUIRE(std::abs(sv.amplitudes()[k] - start[k]) <= 1e-10);
    }
}

TEST_CASE("Pauli Y equals i X Z on a basis state") {
    Statevector sv(1);
    sv.apply_pauli(0, Pauli::Y);
    CHECK(std::abs(sv.amplitudes()[1] - std::complex<double>(0.0, 1.0)) < 1e-15);
}

TEST_CASE("size and validation guards") {
    CHECK_THROWS(build_circuit(Family::ghz, 17, 0));
    CHECK_THROWS(build_circuit(Family::walker, 0, 0));
    Circuit bad = single(Gate::cnot(0, 0), 2, {0});
    CHECK_THROWS(bad.validate());
    Circuit dup = single(Gate::h(0), 2, {0, 0});
    CHECK_THROWS(dup.validate());
    NoiseModel nm;
    nm.readout_flip = 0.7;
    CHECK_THROWS(nm.validate());
    CHECK_THROWS(parse_family("qft"));
}

TEST_CASE("scaled noise model") {
    const auto nm = NoiseModel::scaled(1.5, "m4");
    CHECK(nm.depolarizing_1q == doctest::Approx(0.0015));
    CHECK(nm.depolarizing_2q == doctest::Approx(0.015));
    CHECK(nm.readout_flip == doctest::Approx(0.03));
    CHECK(nm.machine_id == "m4");
}

TEST_CASE("noisy runs are reproducible by seed") {
    const auto c = build_circuit(Family::random, 6, 1);
    const auto nm = NoiseModel::scaled(1.0, "m");
    CHECK(run_noisy(c, nm, 200, 5) == run_noisy(c, nm, 200, 5));
}

TEST_CASE("wide outputs sample directly from the trajectory") {
    // 13 measured bits bypasses the per-pattern cache; GHZ plus strong 2q
    // noise must still give every bit a fair marginal.
    const auto c = build_circuit(Family::ghz, 13, 0);
    NoiseModel nm;
    nm.depolarizing_2q = 0.5;
    const auto m = run_noisy(c, nm, 4000, 3);
    for (std::size_t j = 0; j < 13; ++j) CHECK(std::abs(fraction_of_ones(m, j) - 0.5) <= binomial_band(0.5, 4000));
}
