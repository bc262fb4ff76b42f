// Exception taxonomy shared across the library. The CLI maps these to
// process exit codes (config -> 2, data -> 3, divergence -> 4).
#pragma once

#include <stdexcept>
#include <string>

namespace wpvc {

struct StructuralError : std::runtime_error {
    explicit StructuralError(const std::string& msg) : std::runtime_error(msg) {}
};

// Parameter outside the admissible domain of a copula family or statistic.
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// A partial-correlation denominator hit zero (some intermediate |rho| = 1).
struct SingularityError : std::runtime_error {
    explicit SingularityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Statistic undefined on the given sample (constant series, too few points).
struct UndefinedStatisticError : std::runtime_error {
    explicit UndefinedStatisticError(const std::string& msg) : std::runtime_error(msg) {}
};

// Requested value outside the attainable range (e.g. negative tau for Clayton).
struct RangeError : std::runtime_error {
    explicit RangeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SelectionError : std::runtime_error {
    explicit SelectionError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace wpvc
