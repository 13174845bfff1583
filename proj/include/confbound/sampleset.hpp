#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace confbound::sampleset {

/// M x s matrix of measured bits from one execution batch of one circuit.
///
/// Column j holds the j-th measured qubit; when a row is rendered as a
/// bitstring key, column 0 is the leftmost (most significant) character.
class ShotMatrix {
public:
    ShotMatrix() = default;

    /// Takes ownership of row-major bits; throws DataError if an entry is
    /// not 0/1 or if the size does not factor as rows * width.
    ShotMatrix(std::vector<std::uint8_t> bits, std::size_t width, std::string circuit_id = {},
               std::string machine_id = {});

    static ShotMatrix from_rows(const std::vector<std::string>& rows, std::string circuit_id = {},
                                std::string machine_id = {});

    std::size_t rows() const { return width_ == 0 ? 0 : bits_.size() / width_; }
    std::size_t width() const { return width_; }
    bool empty() const { return bits_.empty(); }

    std::span<const std::uint8_t> row(std::size_t m) const {
        return {bits_.data() + m * width_, width_};
    }
    std::uint8_t at(std::size_t m, std::size_t j) const { return bits_[m * width_ + j]; }
    std::string key(std::size_t m) const;

    const std::vector<std::uint8_t>& bits() const { return bits_; }
    const std::string& circuit_id() const { return circuit_id_; }
    const std::string& machine_id() const { return machine_id_; }

    bool operator==(const ShotMatrix& other) const {
        return width_ == other.width_ && bits_ == other.bits_;
    }

private:
    std::vector<std::uint8_t> bits_;
    std::size_t width_ = 0;
    std::string circuit_id_;
    std::string machine_id_;
};

/// Frequencies of observed bitstrings; unobserved strings are implicitly 0.
struct EmpiricalDistribution {
    std::size_t support_dim = 0;
    std::map<std::string, double> probs;

    double operator()(const std::string& y) const {
        auto it = probs.find(y);
        return it == probs.end() ? 0.0 : it->second;
    }
};

struct Divergences {
    double d_bc = 0.0;  // -log BC
    double d_h2 = 0.0;  // 1 - BC
    double d_tv = 0.0;  // (1/2) sum |p - q|
    double d_kl = 0.0;  // sum q log(q / p), +inf if q is not dominated by p
};

/// Largest support dimension accepted by the exact estimators.
inline constexpr std::size_t kMaxExactDim = 20;

EmpiricalDistribution empirical_distribution(const ShotMatrix& shots);

/// Builds a distribution from explicit probabilities, validating the key
/// widths and normalisation.
EmpiricalDistribution make_distribution(std::size_t support_dim, std::map<std::string, double> probs);

double exact_bc(const EmpiricalDistribution& p, const EmpiricalDistribution& q);

/// `p` is the ideal and `q` the noisy distribution; the KL term is
/// KL(q || p), the nonnegative divergence of the noisy output from the ideal.
Divergences exact_divergences(const EmpiricalDistribution& p, const EmpiricalDistribution& q);

/// Shot CSV: header `bit_0,...,bit_{s-1}`, one row per shot.
ShotMatrix read_shots_csv(std::istream& in, std::string circuit_id = {}, std::string machine_id = {});
ShotMatrix read_shots_csv(const std::string& path, std::string circuit_id = {},
                          std::string machine_id = {});
void write_shots_csv(std::ostream& out, const ShotMatrix& shots);
void write_shots_csv(const std::string& path, const ShotMatrix& shots);

}  // namespace confbound::sampleset
