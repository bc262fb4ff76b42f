#include "wpvc/depstats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wpvc/errors.hpp"

namespace wpvc::stats {

CorrelationMatrix::CorrelationMatrix(int dim) : n(dim), rho(static_cast<std::size_t>(dim) * dim, 0.0) {
    for (int i = 0; i < dim; ++i) rho[static_cast<std::size_t>(i) * dim + i] = 1.0;
    labels.resize(dim);
    for (int i = 0; i < dim; ++i) labels[i] = "v" + std::to_string(i);
}

void CorrelationMatrix::set(int i, int j, double value) {
    rho[static_cast<std::size_t>(i) * n + j] = value;
    rho[static_cast<std::size_t>(j) * n + i] = value;
}

void CorrelationMatrix::validate() const {
    for (int i = 0; i < n; ++i) {
        if (std::fabs(at(i, i) - 1.0) > 1e-12)
            throw DomainError("correlation matrix: diagonal entry != 1 at " + std::to_string(i));
        for (int j = 0; j < n; ++j) {
            if (std::fabs(at(i, j) - at(j, i)) > 1e-12)
                throw DomainError("correlation matrix: not symmetric");
            if (std::fabs(at(i, j)) > 1.0 + 1e-12)
                throw DomainError("correlation matrix: |rho| > 1");
        }
    }
}

std::vector<double> PseudoObservations::column(int i) const {
    std::vector<double> out(T);
    for (int t = 0; t < T; ++t) out[t] = at(t, i);
    return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw UndefinedStatisticError("pearson: need two equal-length series of length >= 2");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw UndefinedStatisticError("pearson: constant series");
    return sxy / std::sqrt(sxx * syy);
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw UndefinedStatisticError("kendall_tau: length mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw UndefinedStatisticError("kendall_tau: need at least 2 observations");

    // O(n^2) pair counting; sample sizes here are a few thousand at most.
    long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j];
            const double dy = y[i] - y[j];
            if (dx == 0.0 && dy == 0.0) continue;
            if (dx == 0.0) ++ties_x;
            else if (dy == 0.0) ++ties_y;
            else if (dx * dy > 0.0) ++concordant;
            else ++discordant;
        }
    }
    const double n0 = 0.5 * static_cast<double>(n) * (n - 1);
    // tau-b denominator: pairs untied in x times pairs untied in y.
    const double both_tied = n0 - concordant - discordant - ties_x - ties_y;
    const double untied_x = n0 - ties_x - both_tied;
    const double untied_y = n0 - ties_y - both_tied;
    if (untied_x <= 0.0 || untied_y <= 0.0)
        throw UndefinedStatisticError("kendall_tau: constant series");
    return (static_cast<double>(concordant) - static_cast<double>(discordant)) /
           std::sqrt(untied_x * untied_y);
}

namespace {

double partial_corr_recursive(const CorrelationMatrix& corr, int i, int j,
                              std::vector<int>& cond) {
    if (cond.empty()) return corr.at(i, j);
    const int k = cond.back();
    cond.pop_back();
    const double r_ij = partial_corr_recursive(corr, i, j, cond);
    const double r_ik = partial_corr_recursive(corr, i, k, cond);
    const double r_jk = partial_corr_recursive(corr, j, k, cond);
    cond.push_back(k);
    const double d1 = 1.0 - r_ik * r_ik;
    const double d2 = 1.0 - r_jk * r_jk;
    if (d1 <= 0.0)
        throw SingularityError("partial_correlation: |rho(" + std::to_string(i) + "," +
                               std::to_string(k) + "; ...)| = 1");
    if (d2 <= 0.0)
        throw SingularityError("partial_correlation: |rho(" + std::to_string(j) + "," +
                               std::to_string(k) + "; ...)| = 1");
    double r = (r_ij - r_ik * r_jk) / (std::sqrt(d1) * std::sqrt(d2));
    if (r > 1.0 || r < -1.0) {
        if (std::fabs(r) > 1.0 + 1e-9)
            throw SingularityError("partial_correlation: result left [-1,1]; input not PSD");
        r = std::clamp(r, -1.0, 1.0);
    }
    return r;
}

void check_indices(const CorrelationMatrix& corr, int i, int j, std::span<const int> cond) {
    if (i == j) throw DomainError("partial_correlation: i == j");
    if (i < 0 || j < 0 || i >= corr.n || j >= corr.n)
        throw DomainError("partial_correlation: index out of range");
    for (int k : cond) {
        if (k < 0 || k >= corr.n) throw DomainError("partial_correlation: conditioning index out of range");
        if (k == i || k == j)
            throw DomainError("partial_correlation: conditioning set contains a conditioned variable");
    }
}

} // namespace

double partial_correlation(const CorrelationMatrix& corr, int i, int j,
                           std::span<const int> conditioning) {
    check_indices(corr, i, j, conditioning);
    std::vector<int> cond(conditioning.begin(), conditioning.end());
    std::sort(cond.begin(), cond.end());
    cond.erase(std::unique(cond.begin(), cond.end()), cond.end());
    return partial_corr_recursive(corr, i, j, cond);
}

PartialCorrelationCache::PartialCorrelationCache(const CorrelationMatrix& corr) : corr_(corr) {
    if (corr.n > 32) throw DomainError("PartialCorrelationCache: limited to n <= 32");
}

double PartialCorrelationCache::get(int i, int j, std::uint32_t mask) {
    if (i > j) std::swap(i, j);
    const std::uint64_t key =
        (static_cast<std::uint64_t>(i) << 38) | (static_cast<std::uint64_t>(j) << 32) | mask;
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;

    double r;
    if (mask == 0) {
        r = corr_.at(i, j);
    } else {
        const int k = 31 - __builtin_clz(mask); // largest conditioning index
        const std::uint32_t rest = mask & ~(1u << k);
        const double r_ij = get(i, j, rest);
        const double r_ik = get(std::min(i, k), std::max(i, k), rest & ~((1u << i) | (1u << k)));
        const double r_jk = get(std::min(j, k), std::max(j, k), rest & ~((1u << j) | (1u << k)));
        const double d1 = 1.0 - r_ik * r_ik;
        const double d2 = 1.0 - r_jk * r_jk;
        if (d1 <= 0.0 || d2 <= 0.0)
            throw SingularityError("partial_correlation: intermediate |rho| = 1 while conditioning on " +
                                   std::to_string(k));
        r = (r_ij - r_ik * r_jk) / (std::sqrt(d1) * std::sqrt(d2));
        if (r > 1.0 || r < -1.0) {
            if (std::fabs(r) > 1.0 + 1e-9)
                throw SingularityError("partial_correlation: result left [-1,1]; input not PSD");
            r = std::clamp(r, -1.0, 1.0);
        }
    }
    memo_.emplace(key, r);
    return r;
}

PseudoObservations pit_transform(const Matrix& samples) {
    if (samples.rows < 2) throw UndefinedStatisticError("pit_transform: need T >= 2 rows");
    PseudoObservations out;
    out.T = samples.rows;
    out.n = samples.cols;
    out.u.resize(static_cast<std::size_t>(out.T) * out.n);

    std::vector<int> order(samples.rows);
    std::vector<double> rank(samples.rows);
    for (int c = 0; c < samples.cols; ++c) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return samples.at(a, c) < samples.at(b, c);
        });
        // Average ranks over tied runs (1-based ranks).
        int i = 0;
        while (i < samples.rows) {
            int j = i;
            while (j + 1 < samples.rows && samples.at(order[j + 1], c) == samples.at(order[i], c)) ++j;
            const double avg = 0.5 * (i + j) + 1.0;
            for (int k = i; k <= j; ++k) rank[order[k]] = avg;
            i = j + 1;
        }
        for (int t = 0; t < samples.rows; ++t)
            out.u[static_cast<std::size_t>(t) * out.n + c] = rank[t] / (samples.rows + 1.0);
    }
    return out;
}

CorrelationMatrix estimate_pairwise(const Matrix& samples) {
    if (samples.rows < 2) throw UndefinedStatisticError("estimate_pairwise: need >= 2 samples");
    const int n = samples.cols;
    CorrelationMatrix corr(n);

    std::vector<std::vector<double>> cols(n);
    for (int c = 0; c < n; ++c) {
        cols[c].resize(samples.rows);
        for (int t = 0; t < samples.rows; ++t) cols[c][t] = samples.at(t, c);
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double tau = kendall_tau(cols[i], cols[j]);
            corr.set(i, j, std::sin(M_PI * tau / 2.0));
        }

    // PSD repair by eigenvalue flooring, flagged, never silent.
    Matrix sym(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) sym.at(i, j) = corr.at(i, j);
    Matrix vec;
    std::vector<double> eig = jacobi_eigen_sym(sym, vec);
    const double min_eig = *std::min_element(eig.begin(), eig.end());
    if (min_eig < 1e-10) {
        for (double& e : eig) e = std::max(e, 1e-10);
        Matrix repaired(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double s = 0.0;
                for (int k = 0; k < n; ++k) s += vec.at(i, k) * eig[k] * vec.at(j, k);
                repaired.at(i, j) = s;
            }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double d = std::sqrt(repaired.at(i, i) * repaired.at(j, j));
                corr.rho[static_cast<std::size_t>(i) * n + j] = (i == j) ? 1.0 : repaired.at(i, j) / d;
            }
        // Re-symmetrize against rounding.
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                corr.set(i, j, 0.5 * (corr.at(i, j) + corr.at(j, i)));
        corr.psd_repaired = true;
    }
    return corr;
}

CorrelationMatrix estimate_pairwise(const PseudoObservations& pobs) {
    Matrix m(pobs.T, pobs.n);
    for (int t = 0; t < pobs.T; ++t)
        for (int c = 0; c < pobs.n; ++c) m.at(t, c) = pobs.at(t, c);
    return estimate_pairwise(m);
}

} // namespace wpvc::stats
