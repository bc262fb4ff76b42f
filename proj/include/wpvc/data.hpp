// CSV ingestion: price panels, alignment, and log-return computation.
// Input format: header "date,<name1>,<name2>,...", ISO-8601 dates, decimal
// prices, optional empty cells for missing observations.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "wpvc/matrix.hpp"

namespace wpvc::io {

struct PricePanel {
    std::vector<std::string> dates; // ISO-8601, strictly increasing
    std::vector<std::string> instruments;
    Matrix prices; // NaN marks a missing cell

    bool missing(int row, int col) const { return std::isnan(prices.at(row, col)); }
};

struct ReturnsPanel {
    std::vector<std::string> dates; // one fewer than the aligned price dates
    std::vector<std::string> instruments;
    Matrix returns;
    std::string source_hash;      // FNV-1a of the source bytes
    std::string alignment_policy; // "intersection" or "forward_fill"
};

PricePanel load_prices(const std::string& path);
void save_prices(const PricePanel& panel, const std::string& path);

// r_t = ln(P_t / P_{t-1}) after alignment. "intersection" keeps only dates
// where every instrument has a price; "forward_fill" carries the last
// observation forward across gaps of at most 5 rows first.
ReturnsPanel to_log_returns(const PricePanel& panel, const std::string& policy);

ReturnsPanel load_returns(const std::string& path);
void save_returns(const ReturnsPanel& panel, const std::string& path);

// Rows of `panel.returns` restricted to dates in [first, last] (empty bound =
// unbounded). Returns the row range [begin, end).
std::pair<int, int> date_range(const std::vector<std::string>& dates, const std::string& first,
                               const std::string& last);

std::uint64_t fnv1a(const std::string& bytes);

} // namespace wpvc::io
