#include "confbound/qsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

#include "confbound/error.hpp"
#include "confbound/rng.hpp"

namespace confbound::qsim {

using cd = std::complex<double>;

namespace {

// Inserts a zero bit at position `bit`, shifting higher bits up.
inline std::size_t insert_zero(std::size_t i, int bit) {
    const std::size_t low = (std::size_t{1} << bit) - 1;
    return ((i & ~low) << 1) | (i & low);
}

}  // namespace

int Gate::arity() const {
    switch (kind) {
        case GateKind::CNOT:
        case GateKind::CZ:
            return 2;
        case GateKind::TOFFOLI:
            return 3;
        default:
            return 1;
    }
}

Family parse_family(const std::string& name) {
    if (name == "walker") return Family::walker;
    if (name == "ghz") return Family::ghz;
    if (name == "graph") return Family::graph;
    if (name == "random") return Family::random;
    if (name == "deep_random") return Family::deep_random;
    throw DataError("unsupported circuit family '" + name + "'");
}

std::string to_string(Family f) {
    switch (f) {
        case Family::walker: return "walker";
        case Family::ghz: return "ghz";
        case Family::graph: return "graph";
        case Family::random: return "random";
        case Family::deep_random: return "deep_random";
    }
    return "?";
}

void Circuit::validate() const {
    if (n_qubits < 1) throw std::invalid_argument("circuit needs at least one qubit");
    if (n_qubits > kMaxQubits) {
        throw std::invalid_argument("circuit has " + std::to_string(n_qubits) +
                                    " qubits; dense simulation is limited to 16");
    }
    for (const Gate& g : gates) {
        for (int k = 0; k < g.arity(); ++k) {
            const int q = g.qubits[k];
            if (q < 0 || q >= n_qubits) throw std::invalid_argument("gate qubit index out of range");
            for (int j = 0; j < k; ++j) {
                if (g.qubits[j] == q) throw std::invalid_argument("gate acts twice on one qubit");
            }
        }
    }
    if (measured_qubits.empty()) throw std::invalid_argument("no measured qubits");
    std::vector<bool> seen(static_cast<std::size_t>(n_qubits), false);
    for (int q : measured_qubits) {
        if (q < 0 || q >= n_qubits) throw std::invalid_argument("measured qubit out of range");
        if (seen[static_cast<std::size_t>(q)]) throw std::invalid_argument("measured qubit repeated");
        seen[static_cast<std::size_t>(q)] = true;
    }
}

void NoiseModel::validate() const {
    auto in01 = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!in01(depolarizing_1q) || !in01(depolarizing_2q)) {
        throw DataError("depolarizing probabilities must lie in [0, 1]");
    }
    if (!(readout_flip >= 0.0 && readout_flip <= 0.5)) throw DataError("readout flip must lie in [0, 0.5]");
}

NoiseModel NoiseModel::scaled(double multiplier, std::string machine_id) {
    NoiseModel nm{0.001 * multiplier, 0.01 * multiplier, 0.02 * multiplier, std::move(machine_id)};
    nm.validate();
    return nm;
}

// ---------------------------------------------------------------------------
// Statevector

Statevector::Statevector(int n_qubits) : n_(n_qubits) {
    if (n_qubits < 1 || n_qubits > kMaxQubits) {
        throw std::invalid_argument("statevector supports 1..16 qubits");
    }
    amp_.assign(std::size_t{1} << n_qubits, cd{0.0, 0.0});
    amp_[0] = 1.0;
}

void Statevector::apply_1q(int q, const cd (&m)[2][2]) {
    // Explicit real arithmetic: std::complex products go through the
    // Annex G inf/nan path unless -ffast-math is on.
    const double m00r = m[0][0].real(), m00i = m[0][0].imag(), m01r = m[0][1].real(), m01i = m[0][1].imag();
    const double m10r = m[1][0].real(), m10i = m[1][0].imag(), m11r = m[1][1].real(), m11i = m[1][1].imag();
    auto* a = reinterpret_cast<double*>(amp_.data());
    const std::size_t mask = std::size_t{1} << q;
    const std::size_t dim = amp_.size();
    for (std::size_t base = 0; base < dim; base += 2 * mask) {
        for (std::size_t i0 = base; i0 < base + mask; ++i0) {
            const std::size_t i1 = i0 | mask;
            const double a0r = a[2 * i0], a0i = a[2 * i0 + 1], a1r = a[2 * i1], a1i = a[2 * i1 + 1];
            a[2 * i0] = m00r * a0r - m00i * a0i + m01r * a1r - m01i * a1i;
            a[2 * i0 + 1] = m00r * a0i + m00i * a0r + m01r * a1i + m01i * a1r;
            a[2 * i1] = m10r * a0r - m10i * a0i + m11r * a1r - m11i * a1i;
            a[2 * i1 + 1] = m10r * a0i + m10i * a0r + m11r * a1i + m11i * a1r;
        }
    }
}

void Statevector::apply(const Gate& g) {
    const std::size_t dim = amp_.size();
    auto* a = reinterpret_cast<double*>(amp_.data());
    switch (g.kind) {
        case GateKind::H: {
            const double r = std::numbers::sqrt2 / 2.0;
            const std::size_t mask = std::size_t{1} << g.qubits[0];
            for (std::size_t base = 0; base < dim; base += 2 * mask) {
                for (std::size_t i0 = base; i0 < base + mask; ++i0) {
                    const std::size_t i1 = i0 | mask;
                    const double a0r = a[2 * i0], a0i = a[2 * i0 + 1], a1r = a[2 * i1], a1i = a[2 * i1 + 1];
                    a[2 * i0] = r * (a0r + a1r);
                    a[2 * i0 + 1] = r * (a0i + a1i);
                    a[2 * i1] = r * (a0r - a1r);
                    a[2 * i1 + 1] = r * (a0i - a1i);
                }
            }
            break;
        }
        case GateKind::X:
            apply_pauli(g.qubits[0], Pauli::X);
            break;
        case GateKind::RY: {
            const double c = std::cos(g.angle / 2.0), s = std::sin(g.angle / 2.0);
            const cd m[2][2] = {{c, -s}, {s, c}};
            apply_1q(g.qubits[0], m);
            break;
        }
        case GateKind::RZ: {
            // diag(e^{-i t/2}, e^{i t/2})
            const double c = std::cos(g.angle / 2.0), s = std::sin(g.angle / 2.0);
            const std::size_t mask = std::size_t{1} << g.qubits[0];
            for (std::size_t i = 0; i < dim; ++i) {
                const double sg = (i & mask) ? s : -s;
                const double re = a[2 * i], im = a[2 * i + 1];
                a[2 * i] = c * re - sg * im;
                a[2 * i + 1] = c * im + sg * re;
            }
            break;
        }
        case GateKind::CNOT: {
            const int cq = g.qubits[0], tq = g.qubits[1];
            const std::size_t c = std::size_t{1} << cq, t = std::size_t{1} << tq;
            const int lo = std::min(cq, tq), hi = std::max(cq, tq);
            for (std::size_t i = 0; i < dim / 4; ++i) {
                const std::size_t j = insert_zero(insert_zero(i, lo), hi) | c;
                std::swap(amp_[j], amp_[j | t]);
            }
            break;
        }
        case GateKind::CZ: {
            const int lo = std::min(g.qubits[0], g.qubits[1]), hi = std::max(g.qubits[0], g.qubits[1]);
            const std::size_t both = (std::size_t{1} << lo) | (std::size_t{1} << hi);
            for (std::size_t i = 0; i < dim / 4; ++i) {
                const std::size_t j = insert_zero(insert_zero(i, lo), hi) | both;
                amp_[j] = -amp_[j];
            }
            break;
        }
        case GateKind::TOFFOLI: {
            std::array<int, 3> q = g.qubits;
            std::sort(q.begin(), q.end());
            const std::size_t c = (std::size_t{1} << g.qubits[0]) | (std::size_t{1} << g.qubits[1]);
            const std::size_t t = std::size_t{1} << g.qubits[2];
            for (std::size_t i = 0; i < dim / 8; ++i) {
                const std::size_t j = insert_zero(insert_zero(insert_zero(i, q[0]), q[1]), q[2]) | c;
                std::swap(amp_[j], amp_[j | t]);
            }
            break;
        }
    }
}

void Statevector::apply_inverse(const Gate& g) {
    if (g.kind == GateKind::RY || g.kind == GateKind::RZ) {
        Gate inv = g;
        inv.angle = -g.angle;
        apply(inv);
    } else {
        apply(g);  // H, X, CNOT, CZ and TOFFOLI are involutions
    }
}

void Statevector::apply_pauli(int q, Pauli p) {
    const std::size_t mask = std::size_t{1} << q;
    const std::size_t dim = amp_.size();
    auto* a = reinterpret_cast<double*>(amp_.data());
    switch (p) {
        case Pauli::I:
            break;
        case Pauli::X:
            for (std::size_t base = 0; base < dim; base += 2 * mask) {
                for (std::size_t i = base; i < base + mask; ++i) std::swap(amp_[i], amp_[i | mask]);
            }
            break;
        case Pauli::Z:
            for (std::size_t base = mask; base < dim; base += 2 * mask) {
                for (std::size_t i = base; i < base + mask; ++i) amp_[i] = -amp_[i];
            }
            break;
        case Pauli::Y:
            // Y = [[0, -i], [i, 0]]
            for (std::size_t i = 0; i < dim; ++i) {
                if (!(i & mask)) {
                    const std::size_t j = i | mask;
                    const double a0r = a[2 * i], a0i = a[2 * i + 1], a1r = a[2 * j], a1i = a[2 * j + 1];
                    a[2 * i] = a1i;
                    a[2 * i + 1] = -a1r;
                    a[2 * j] = -a0i;
                    a[2 * j + 1] = a0r;
                }
            }
            break;
    }
}

std::size_t Statevector::sample_basis(double u) const {
    // Unitary evolution keeps the norm at 1 to ~1e-13, so u is used as is.
    const double target = u;
    double acc = 0.0;
    std::size_t last_nonzero = 0;
    for (std::size_t i = 0; i < amp_.size(); ++i) {
        const double p = std::norm(amp_[i]);
        if (p == 0.0) continue;
        acc += p;
        last_nonzero = i;
        if (acc > target) return i;
    }
    return last_nonzero;
}

double Statevector::norm_squared() const {
    double s = 0.0;
    for (const cd& a : amp_) s += std::norm(a);
    return s;
}

std::vector<double> Statevector::measured_probabilities(const std::vector<int>& measured_qubits) const {
    const std::size_t w = measured_qubits.size();
    std::vector<double> out(std::size_t{1} << w, 0.0);
    for (std::size_t i = 0; i < amp_.size(); ++i) {
        const double p = std::norm(amp_[i]);
        if (p == 0.0) continue;
        std::size_t k = 0;
        for (std::size_t j = 0; j < w; ++j) {
            k = (k << 1) | ((i >> measured_qubits[j]) & 1U);
        }
        out[k] += p;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Circuit families

namespace {

// Coins q0, q1 are put in superposition once; each block is a reversible
// walk step on the measured pair (q2, q3): two CNOTs then a Toffoli.
Circuit walker(int blocks) {
    if (blocks < 1) throw DataError("walker depth must be >= 1");
    Circuit c;
    c.n_qubits = 4;
    c.family = Family::walker;
    c.depth = blocks;
    c.measured_qubits = {2, 3};
    c.gates.push_back(Gate::h(0));
    c.gates.push_back(Gate::h(1));
    for (int b = 0; b < blocks; ++b) {
        c.gates.push_back(Gate::cnot(0, 2));
        c.gates.push_back(Gate::cnot(2, 3));
        c.gates.push_back(Gate::toffoli(1, 3, 2));
    }
    return c;
}

void check_size(int size) {
    if (size < 1) throw DataError("circuit size must be >= 1");
    if (size > kMaxQubits) {
        throw DataError("circuit size " + std::to_string(size) + " exceeds the 16-qubit simulation limit");
    }
}

std::vector<int> all_qubits(int n) {
    std::vector<int> q(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) q[static_cast<std::size_t>(i)] = i;
    return q;
}

Circuit ghz(int size) {
    check_size(size);
    Circuit c;
    c.n_qubits = size;
    c.family = Family::ghz;
    c.depth = size;
    c.gates.push_back(Gate::h(0));
    for (int q = 0; q + 1 < size; ++q) c.gates.push_back(Gate::cnot(q, q + 1));
    c.measured_qubits = all_qubits(size);
    return c;
}

Circuit ring_graph(int size) {
    check_size(size);
    Circuit c;
    c.n_qubits = size;
    c.family = Family::graph;
    c.depth = size;
    for (int q = 0; q < size; ++q) c.gates.push_back(Gate::h(q));
    if (size == 2) {
        c.gates.push_back(Gate::cz(0, 1));
    } else if (size > 2) {
        for (int q = 0; q < size; ++q) c.gates.push_back(Gate::cz(q, (q + 1) % size));
    }
    c.measured_qubits = all_qubits(size);
    return c;
}

// Layered random circuit: every layer partitions a shuffled qubit order into
// gates of random arity 1..3.
Circuit random_layers(int size, int depth, Family family, std::uint64_t seed) {
    check_size(size);
    Circuit c;
    c.n_qubits = size;
    c.family = family;
    c.depth = depth;
    Rng rng(derive_seed(seed, {0xc1, static_cast<std::uint64_t>(size), static_cast<std::uint64_t>(depth)}));
    std::vector<int> order = all_qubits(size);
    for (int layer = 0; layer < depth; ++layer) {
        std::shuffle(order.begin(), order.end(), rng);
        std::size_t pos = 0;
        while (pos < order.size()) {
            const std::size_t left = order.size() - pos;
            const std::size_t arity = 1 + static_cast<std::size_t>(rng() % std::min<std::size_t>(3, left));
            const int a = order[pos];
            if (arity == 1) {
                const double theta = 2.0 * std::numbers::pi * uniform01(rng);
                switch (rng() % 4) {
                    case 0: c.gates.push_back(Gate::h(a)); break;
                    case 1: c.gates.push_back(Gate::x(a)); break;
                    case 2: c.gates.push_back(Gate::ry(a, theta)); break;
                    default: c.gates.push_back(Gate::rz(a, theta)); break;
                }
            } else if (arity == 2) {
                const int b = order[pos + 1];
                c.gates.push_back(rng() % 2 ? Gate::cnot(a, b) : Gate::cz(a, b));
            } else {
                c.gates.push_back(Gate::toffoli(a, order[pos + 1], order[pos + 2]));
            }
            pos += arity;
        }
    }
    c.measured_qubits = all_qubits(size);
    return c;
}

}  // namespace

Circuit build_circuit(Family family, int size_or_depth, std::uint64_t seed) {
    Circuit c;
    switch (family) {
        case Family::walker: c = walker(size_or_depth); break;
        case Family::ghz: c = ghz(size_or_depth); break;
        case Family::graph: c = ring_graph(size_or_depth); break;
        case Family::random: c = random_layers(size_or_depth, size_or_depth, family, seed); break;
        case Family::deep_random: c = random_layers(size_or_depth, 3 * size_or_depth, family, seed); break;
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

struct Cdf {
    std::vector<double> cum;

    explicit Cdf(const std::vector<double>& probs) : cum(probs.size()) {
        double s = 0.0;
        for (std::size_t k = 0; k < probs.size(); ++k) {
            s += probs[k];
            cum[k] = s;
        }
        for (double& c : cum) c /= s;
    }

    std::size_t draw(double u) const {
        auto it = std::upper_bound(cum.begin(), cum.end(), u);
        if (it == cum.end()) --it;
        // upper_bound never lands on a zero-probability outcome.
        return static_cast<std::size_t>(it - cum.begin());
    }
};

std::size_t measured_index(std::size_t basis, const std::vector<int>& measured_qubits) {
    std::size_t k = 0;
    for (int q : measured_qubits) k = (k << 1) | ((basis >> q) & 1U);
    return k;
}

void write_outcome(std::vector<std::uint8_t>& bits, std::size_t m, std::size_t w, std::size_t k) {
    for (std::size_t j = 0; j < w; ++j) bits[m * w + j] = static_cast<std::uint8_t>((k >> (w - 1 - j)) & 1U);
}

std::string shots_id(const Circuit& c) {
    return to_string(c.family) + "_n" + std::to_string(c.n_qubits) + "_d" + std::to_string(c.depth);
}

}  // namespace

Statevector simulate(const Circuit& c) {
    c.validate();
    Statevector sv(c.n_qubits);
    for (const Gate& g : c.gates) sv.apply(g);
    return sv;
}

sampleset::EmpiricalDistribution ideal_distribution(const Circuit& c) {
    const auto probs = simulate(c).measured_probabilities(c.measured_qubits);
    const std::size_t w = c.measured_qubits.size();
    sampleset::EmpiricalDistribution d;
    d.support_dim = w;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        if (probs[k] < 1e-15) continue;
        std::string key(w, '0');
        for (std::size_t j = 0; j < w; ++j) key[j] = ((k >> (w - 1 - j)) & 1U) ? '1' : '0';
        d.probs.emplace(std::move(key), probs[k]);
    }
    return d;
}

sampleset::ShotMatrix run_ideal(const Circuit& c, std::size_t shots, std::uint64_t seed) {
    if (shots == 0) throw std::invalid_argument("run_ideal: M must be >= 1");
    const Cdf cdf(simulate(c).measured_probabilities(c.measured_qubits));
    const std::size_t w = c.measured_qubits.size();
    std::vector<std::uint8_t> bits(shots * w);
    Rng rng(seed);
    for (std::size_t m = 0; m < shots; ++m) write_outcome(bits, m, w, cdf.draw(uniform01(rng)));
    return sampleset::ShotMatrix(std::move(bits), w, shots_id(c));
}

namespace {

struct ErrorEvent {
    std::size_t gate;
    std::array<Pauli, 3> paulis;
    bool operator==(const ErrorEvent&) const = default;
};

struct EventsHash {
    std::size_t operator()(const std::vector<ErrorEvent>& ev) const {
        std::uint64_t h = 0x12345;
        for (const auto& e : ev) {
            h = splitmix64(h ^ e.gate);
            h = splitmix64(h ^ (static_cast<std::uint64_t>(e.paulis[0]) |
                                (static_cast<std::uint64_t>(e.paulis[1]) << 2) |
                                (static_cast<std::uint64_t>(e.paulis[2]) << 4)));
        }
        return static_cast<std::size_t>(h);
    }
};

}  // namespace

sampleset::ShotMatrix run_noisy(const Circuit& c, const NoiseModel& nm, std::size_t shots,
                                std::uint64_t seed) {
    if (shots == 0) throw std::invalid_argument("run_noisy: M must be >= 1");
    c.validate();
    nm.validate();

    // Ideal pass with periodic checkpoints: a trajectory whose first error is
    // at gate g restarts from the last checkpoint at or before g.
    const std::size_t n_gates = c.gates.size();
    const std::size_t stride = std::max<std::size_t>(1, (n_gates + 31) / 32);
    std::vector<Statevector> checkpoints;
    Statevector sv(c.n_qubits);
    for (std::size_t k = 0; k < n_gates; ++k) {
        if (k % stride == 0) checkpoints.push_back(sv);
        sv.apply(c.gates[k]);
    }
    const Cdf ideal_cdf(sv.measured_probabilities(c.measured_qubits));

    const std::size_t w = c.measured_qubits.size();
    // Narrow outputs: cache per-pattern output distributions, since error
    // patterns repeat often. Wide outputs: draw straight from the trajectory.
    const bool use_cache = w <= 12;
    const std::size_t cache_cap = std::max<std::size_t>(16, (std::size_t{1} << 22) >> w);
    std::unordered_map<std::vector<ErrorEvent>, Cdf, EventsHash> cache;

    Statevector traj(c.n_qubits);
    auto run_trajectory = [&](const std::vector<ErrorEvent>& events) {
        const std::size_t start = (events.front().gate / stride) * stride;
        traj = checkpoints[start / stride];
        std::size_t next = 0;
        for (std::size_t k = start; k < n_gates; ++k) {
            const Gate& g = c.gates[k];
            traj.apply(g);
            if (next < events.size() && events[next].gate == k) {
                for (int j = 0; j < g.arity(); ++j) {
                    traj.apply_pauli(g.qubits[static_cast<std::size_t>(j)],
                                     events[next].paulis[static_cast<std::size_t>(j)]);
                }
                ++next;
            }
        }
    };

    std::vector<std::uint8_t> bits(shots * w);
    std::vector<ErrorEvent> events;
    Rng rng(seed);
    for (std::size_t m = 0; m < shots; ++m) {
        events.clear();
        for (std::size_t k = 0; k < n_gates; ++k) {
            const Gate& g = c.gates[k];
            const double p = g.arity() == 1 ? nm.depolarizing_1q : nm.depolarizing_2q;
            if (p <= 0.0 || uniform01(rng) >= p) continue;
            ErrorEvent e{k, {Pauli::I, Pauli::I, Pauli::I}};
            bool effective = false;
            for (int j = 0; j < g.arity(); ++j) {
                e.paulis[static_cast<std::size_t>(j)] = static_cast<Pauli>(rng() % 4);
                effective = effective || e.paulis[static_cast<std::size_t>(j)] != Pauli::I;
            }
            if (effective) events.push_back(e);
        }

        std::size_t outcome;
        if (events.empty()) {
            outcome = ideal_cdf.draw(uniform01(rng));
        } else if (use_cache) {
            auto it = cache.find(events);
            if (it == cache.end()) {
                run_trajectory(events);
                Cdf cdf(traj.measured_probabilities(c.measured_qubits));
                if (cache.size() >= cache_cap) cache.clear();
                it = cache.emplace(events, std::move(cdf)).first;
            }
            outcome = it->second.draw(uniform01(rng));
        } else {
            run_trajectory(events);
            outcome = measured_index(traj.sample_basis(uniform01(rng)), c.measured_qubits);
        }
        write_outcome(bits, m, w, outcome);
        if (nm.readout_flip > 0.0) {
            for (std::size_t j = 0; j < w; ++j) {
                if (uniform01(rng) < nm.readout_flip) bits[m * w + j] ^= 1U;
            }
        }
    }
    return sampleset::ShotMatrix(std::move(bits), w, shots_id(c), nm.machine_id);
}

nlohmann::json to_json(const Circuit& c) {
    static const char* names[] = {"H", "X", "CNOT", "CZ", "TOFFOLI", "RY", "RZ"};
    nlohmann::json gates = nlohmann::json::array();
    for (const Gate& g : c.gates) {
        nlohmann::json jg{{"gate", names[static_cast<int>(g.kind)]},
                          {"qubits", std::vector<int>(g.qubits.begin(), g.qubits.begin() + g.arity())}};
        if (g.kind == GateKind::RY || g.kind == GateKind::RZ) jg["angle"] = g.angle;
        gates.push_back(std::move(jg));
    }
    return {{"family", to_string(c.family)},
            {"n_qubits", c.n_qubits},
            {"depth", c.depth},
            {"measured_qubits", c.measured_qubits},
            {"gates", std::move(gates)}};
}

}  // namespace confbound::qsim
