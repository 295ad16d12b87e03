#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace clcsca {

// Violated precondition or shape/config mismatch. CLI maps this to exit code 1.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed or truncated file. CLI maps this to exit code 2.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
    FormatError(const std::string& msg, std::size_t byte_offset)
        : std::runtime_error(msg + " at byte " + std::to_string(byte_offset)) {}
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

}  // namespace clcsca
