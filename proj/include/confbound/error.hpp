#pragma once

#include <stdexcept>
#include <string>

namespace confbound {

// Malformed or out-of-domain input data (bad CSV rows, invalid manifests,
// width mismatches). The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace confbound
