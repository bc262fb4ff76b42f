// Rank and correlation statistics feeding the vine layer: Kendall's tau,
// the partial-correlation recursion, probability-integral transforms and the
// tau-based pairwise correlation matrix estimate.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wpvc/matrix.hpp"

namespace wpvc::stats {

struct CorrelationMatrix {
    int n = 0;
    std::vector<double> rho; // row-major n x n
    std::vector<std::string> labels;
    bool psd_repaired = false;

    CorrelationMatrix() = default;
    explicit CorrelationMatrix(int dim);

    double at(int i, int j) const { return rho[static_cast<std::size_t>(i) * n + j]; }
    void set(int i, int j, double value);

    // Throws DomainError unless symmetric with unit diagonal and |rho| <= 1.
    void validate() const;
};

struct PseudoObservations {
    int T = 0;
    int n = 0;
    std::vector<double> u; // row-major T x n, strictly inside (0,1)

    double at(int t, int i) const { return u[static_cast<std::size_t>(t) * n + i]; }

    std::vector<double> column(int i) const;
};

double pearson(std::span<const double> x, std::span<const double> y);

// Tie-adjusted Kendall tau-b. Throws UndefinedStatisticError on series
// shorter than 2 or constant series.
double kendall_tau(std::span<const double> x, std::span<const double> y);

// Recursive elimination of the conditioning variables, one at a time.
// Throws SingularityError when an intermediate correlation reaches +-1.
double partial_correlation(const CorrelationMatrix& corr, int i, int j,
                           std::span<const int> conditioning);

// Memoized variant for repeated queries on one matrix (the vine builder asks
// for thousands of overlapping conditioning sets). Limited to n <= 32.
class PartialCorrelationCache {
  public:
    explicit PartialCorrelationCache(const CorrelationMatrix& corr);
    double get(int i, int j, std::uint32_t conditioning_mask);

  private:
    const CorrelationMatrix& corr_;
    std::unordered_map<std::uint64_t, double> memo_;
};

// Column-wise rank transform u = rank / (T + 1), ties averaged.
PseudoObservations pit_transform(const Matrix& samples);

// Pairwise Kendall tau mapped through rho = sin(pi tau / 2); the result is
// floored to positive semi-definite (eigenvalues >= 1e-10) when needed and
// flagged via psd_repaired.
CorrelationMatrix estimate_pairwise(const Matrix& samples);
CorrelationMatrix estimate_pairwise(const PseudoObservations& pobs);

} // namespace wpvc::stats
