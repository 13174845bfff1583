#include "confbound/sampleset.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "confbound/error.hpp"

namespace confbound::sampleset {

ShotMatrix::ShotMatrix(std::vector<std::uint8_t> bits, std::size_t width, std::string circuit_id,
                       std::string machine_id)
    : bits_(std::move(bits)),
      width_(width),
      circuit_id_(std::move(circuit_id)),
      machine_id_(std::move(machine_id)) {
    if (width_ == 0) throw DataError("shot matrix width must be >= 1");
    if (bits_.empty()) throw DataError("no samples");
    if (bits_.size() % width_ != 0) throw DataError("shot matrix rows have unequal width");
    for (std::uint8_t b : bits_) {
        if (b > 1) throw DataError("shot matrix entries must be 0 or 1");
    }
}

ShotMatrix ShotMatrix::from_rows(const std::vector<std::string>& rows, std::string circuit_id,
                                 std::string machine_id) {
    if (rows.empty()) throw DataError("no samples");
    const std::size_t width = rows.front().size();
    std::vector<std::uint8_t> bits;
    bits.reserve(rows.size() * width);
    for (const auto& r : rows) {
        if (r.size() != width) throw DataError("shot matrix rows have unequal width");
        for (char c : r) {
            if (c != '0' && c != '1') throw DataError("bitstring row contains '" + std::string(1, c) + "'");
            bits.push_back(static_cast<std::uint8_t>(c - '0'));
        }
    }
    return ShotMatrix(std::move(bits), width, std::move(circuit_id), std::move(machine_id));
}

std::string ShotMatrix::key(std::size_t m) const {
    std::string k(width_, '0');
    for (std::size_t j = 0; j < width_; ++j) k[j] = static_cast<char>('0' + at(m, j));
    return k;
}

EmpiricalDistribution empirical_distribution(const ShotMatrix& shots) {
    if (shots.empty()) throw DataError("no samples");
    EmpiricalDistribution d;
    d.support_dim = shots.width();
    std::map<std::string, std::size_t> counts;
    for (std::size_t m = 0; m < shots.rows(); ++m) ++counts[shots.key(m)];
    const double total = static_cast<double>(shots.rows());
    for (const auto& [k, c] : counts) d.probs.emplace(k, static_cast<double>(c) / total);
    return d;
}

EmpiricalDistribution make_distribution(std::size_t support_dim, std::map<std::string, double> probs) {
    double sum = 0.0;
    for (const auto& [k, v] : probs) {
        if (k.size() != support_dim) throw DataError("distribution key '" + k + "' has wrong width");
        if (!(v >= 0.0)) throw DataError("negative probability for '" + k + "'");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw DataError("probabilities do not sum to 1");
    EmpiricalDistribution d;
    d.support_dim = support_dim;
    for (auto& [k, v] : probs) {
        if (v > 0.0) d.probs.emplace(k, v);
    }
    return d;
}

namespace {

void check_compatible(const EmpiricalDistribution& p, const EmpiricalDistribution& q) {
    if (p.support_dim != q.support_dim) {
        throw std::invalid_argument("support dimension mismatch: " + std::to_string(p.support_dim) +
                                    " vs " + std::to_string(q.support_dim));
    }
    if (p.support_dim > kMaxExactDim) {
        throw std::invalid_argument("exact divergences limited to support dimension <= 20");
    }
}

// Visits the union of both supports in key order with (p(y), q(y)).
template <typename F>
void for_each_union(const EmpiricalDistribution& p, const EmpiricalDistribution& q, F&& f) {
    auto a = p.probs.begin();
    auto b = q.probs.begin();
    while (a != p.probs.end() || b != q.probs.end()) {
        if (b == q.probs.end() || (a != p.probs.end() && a->first < b->first)) {
            f(a->second, 0.0);
            ++a;
        } else if (a == p.probs.end() || b->first < a->first) {
            f(0.0, b->second);
            ++b;
        } else {
            f(a->second, b->second);
            ++a;
            ++b;
        }
    }
}

}  // namespace

double exact_bc(const EmpiricalDistribution& p, const EmpiricalDistribution& q) {
    check_compatible(p, q);
    double bc = 0.0;
    for_each_union(p, q, [&](double pp, double qq) { bc += std::sqrt(pp * qq); });
    return std::min(bc, 1.0);
}

Divergences exact_divergences(const EmpiricalDistribution& p, const EmpiricalDistribution& q) {
    check_compatible(p, q);
    double bc = 0.0, l1 = 0.0, kl = 0.0;
    bool kl_finite = true;
    for_each_union(p, q, [&](double pp, double qq) {
        bc += std::sqrt(pp * qq);
        l1 += std::abs(pp - qq);
        if (qq > 0.0) {
            if (pp > 0.0) {
                kl += qq * std::log(qq / pp);
            } else {
                kl_finite = false;
            }
        }
    });
    bc = std::min(bc, 1.0);
    Divergences d;
    d.d_bc = bc > 0.0 ? -std::log(bc) : std::numeric_limits<double>::infinity();
    d.d_h2 = std::max(0.0, 1.0 - bc);
    d.d_tv = 0.5 * l1;
    d.d_kl = kl_finite ? std::max(0.0, kl) : std::numeric_limits<double>::infinity();
    return d;
}

ShotMatrix read_shots_csv(std::istream& in, std::string circuit_id, std::string machine_id) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("shot CSV is empty (header row required)");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::size_t width = 0;
    {
        std::stringstream header(line);
        std::string col;
        while (std::getline(header, col, ',')) {
            if (col != "bit_" + std::to_string(width)) {
                throw DataError("line 1: expected header column 'bit_" + std::to_string(width) + "', got '" +
                                col + "'");
            }
            ++width;
        }
    }
    if (width == 0) throw DataError("line 1: header has no columns");

    std::vector<std::uint8_t> bits;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t cols = 0;
        std::stringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) {
            if (cell != "0" && cell != "1") {
                throw DataError("line " + std::to_string(lineno) + ": entry '" + cell + "' is not 0 or 1");
            }
            bits.push_back(static_cast<std::uint8_t>(cell[0] - '0'));
            ++cols;
        }
        if (cols != width) {
            throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(width) +
                            " columns, got " + std::to_string(cols));
        }
    }
    if (bits.empty()) throw DataError("no samples");
    return ShotMatrix(std::move(bits), width, std::move(circuit_id), std::move(machine_id));
}

ShotMatrix read_shots_csv(const std::string& path, std::string circuit_id, std::string machine_id) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open shot file '" + path + "'");
    try {
        return read_shots_csv(in, std::move(circuit_id), std::move(machine_id));
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

void write_shots_csv(std::ostream& out, const ShotMatrix& shots) {
    for (std::size_t j = 0; j < shots.width(); ++j) out << (j ? "," : "") << "bit_" << j;
    out << '\n';
    std::string line;
    for (std::size_t m = 0; m < shots.rows(); ++m) {
        line.clear();
        for (std::size_t j = 0; j < shots.width(); ++j) {
            if (j) line += ',';
            line += static_cast<char>('0' + shots.at(m, j));
        }
        out << line << '\n';
    }
}

void write_shots_csv(const std::string& path, const ShotMatrix& shots) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write shot file '" + path + "'");
    write_shots_csv(out, shots);
    if (!out) throw std::runtime_error("failed writing shot file '" + path + "'");
}

}  // namespace confbound::sampleset
