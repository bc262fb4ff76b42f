#include "wpvc/data.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "wpvc/errors.hpp"

namespace wpvc::io {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(field);
            field.clear();
        } else if (ch != '\r') {
            field += ch;
        }
    }
    out.push_back(field);
    return out;
}

bool valid_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    auto digits = [&](int from, int to) {
        for (int i = from; i < to; ++i)
            if (s[i] < '0' || s[i] > '9') return false;
        return true;
    };
    if (!digits(0, 4) || !digits(5, 7) || !digits(8, 10)) return false;
    const int m = std::stoi(s.substr(5, 2));
    const int d = std::stoi(s.substr(8, 2));
    return m >= 1 && m <= 12 && d >= 1 && d <= 31;
}

double parse_price(const std::string& field, int line_no, const std::string& column) {
    if (field.empty()) return std::numeric_limits<double>::quiet_NaN();
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end != field.c_str() + field.size())
        throw DataError("line " + std::to_string(line_no) + ", column '" + column +
                        "': unparseable number '" + field + "'");
    if (!(v > 0.0))
        throw DataError("line " + std::to_string(line_no) + ", column '" + column +
                        "': price must be positive");
    return v;
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

PricePanel load_prices(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open " + path);
    std::stringstream buffer;
    buffer << f.rdbuf();
    const std::string content = buffer.str();

    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    auto header = split_csv_line(line);
    if (header.empty() || header[0] != "date")
        throw DataError(path + ": first header column must be 'date'");
    if (header.size() < 2) throw DataError(path + ": no instrument columns");

    PricePanel panel;
    panel.instruments.assign(header.begin() + 1, header.end());
    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw DataError(path + ": line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        const std::string& date = fields[0];
        if (!valid_iso_date(date))
            throw DataError(path + ": line " + std::to_string(line_no) + ": bad date '" + date +
                            "'");
        if (!panel.dates.empty() && date <= panel.dates.back()) {
            if (date == panel.dates.back())
                throw DataError(path + ": duplicate date " + date);
            throw DataError(path + ": dates not strictly increasing at " + date);
        }
        panel.dates.push_back(date);
        std::vector<double> row(panel.instruments.size());
        for (std::size_t i = 0; i < panel.instruments.size(); ++i)
            row[i] = parse_price(fields[i + 1], line_no, panel.instruments[i]);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(path + ": no data rows");

    panel.prices = Matrix(static_cast<int>(rows.size()), static_cast<int>(panel.instruments.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            panel.prices.at(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
    return panel;
}

void save_prices(const PricePanel& panel, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    f << "date";
    for (const auto& name : panel.instruments) f << "," << name;
    f << "\n";
    for (std::size_t r = 0; r < panel.dates.size(); ++r) {
        f << panel.dates[r];
        for (int c = 0; c < panel.prices.cols; ++c) {
            f << ",";
            if (!panel.missing(static_cast<int>(r), c)) f << fmt(panel.prices.at(static_cast<int>(r), c));
        }
        f << "\n";
    }
}

ReturnsPanel to_log_returns(const PricePanel& panel, const std::string& policy) {
    if (policy != "intersection" && policy != "forward_fill")
        throw ConfigError("unknown alignment policy '" + policy + "'");
    const int T = static_cast<int>(panel.dates.size());
    const int n = static_cast<int>(panel.instruments.size());

    Matrix filled = panel.prices;
    if (policy == "forward_fill") {
        for (int c = 0; c < n; ++c) {
            int gap = 0;
            double last = std::numeric_limits<double>::quiet_NaN();
            for (int t = 0; t < T; ++t) {
                if (!std::isnan(filled.at(t, c))) {
                    last = filled.at(t, c);
                    gap = 0;
                } else if (!std::isnan(last) && gap < 5) {
                    filled.at(t, c) = last;
                    ++gap;
                }
            }
        }
    }

    // Keep dates where every instrument has a (possibly filled) price.
    std::vector<int> keep;
    for (int t = 0; t < T; ++t) {
        bool all = true;
        for (int c = 0; c < n && all; ++c) all = !std::isnan(filled.at(t, c));
        if (all) keep.push_back(t);
    }
    if (keep.size() < 2)
        throw DataError("to_log_returns: fewer than 2 usable dates after alignment");

    ReturnsPanel out;
    out.instruments = panel.instruments;
    out.alignment_policy = policy;
    out.returns = Matrix(static_cast<int>(keep.size()) - 1, n);
    for (std::size_t k = 1; k < keep.size(); ++k) {
        out.dates.push_back(panel.dates[keep[k]]);
        for (int c = 0; c < n; ++c)
            out.returns.at(static_cast<int>(k) - 1, c) =
                std::log(filled.at(keep[k], c) / filled.at(keep[k - 1], c));
    }
    return out;
}

ReturnsPanel load_returns(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open " + path);
    std::stringstream buffer;
    buffer << f.rdbuf();
    const std::string content = buffer.str();

    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    auto header = split_csv_line(line);
    if (header.empty() || header[0] != "date")
        throw DataError(path + ": first header column must be 'date'");

    ReturnsPanel panel;
    panel.instruments.assign(header.begin() + 1, header.end());
    panel.source_hash = std::to_string(fnv1a(content));
    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw DataError(path + ": line " + std::to_string(line_no) + ": field count mismatch");
        if (!valid_iso_date(fields[0]))
            throw DataError(path + ": line " + std::to_string(line_no) + ": bad date");
        if (!panel.dates.empty() && fields[0] <= panel.dates.back())
            throw DataError(path + ": dates not strictly increasing at " + fields[0]);
        panel.dates.push_back(fields[0]);
        std::vector<double> row(panel.instruments.size());
        for (std::size_t i = 0; i < row.size(); ++i) {
            char* end = nullptr;
            row[i] = std::strtod(fields[i + 1].c_str(), &end);
            if (fields[i + 1].empty() || end != fields[i + 1].c_str() + fields[i + 1].size())
                throw DataError(path + ": line " + std::to_string(line_no) +
                                ": unparseable return in column " + panel.instruments[i]);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(path + ": no data rows");
    panel.returns = Matrix(static_cast<int>(rows.size()), static_cast<int>(panel.instruments.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            panel.returns.at(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
    return panel;
}

void save_returns(const ReturnsPanel& panel, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    f << "date";
    for (const auto& name : panel.instruments) f << "," << name;
    f << "\n";
    for (std::size_t r = 0; r < panel.dates.size(); ++r) {
        f << panel.dates[r];
        for (int c = 0; c < panel.returns.cols; ++c)
            f << "," << fmt(panel.returns.at(static_cast<int>(r), c));
        f << "\n";
    }
}

std::pair<int, int> date_range(const std::vector<std::string>& dates, const std::string& first,
                               const std::string& last) {
    int begin = 0, end = static_cast<int>(dates.size());
    if (!first.empty()) {
        begin = 0;
        while (begin < static_cast<int>(dates.size()) && dates[begin] < first) ++begin;
    }
    if (!last.empty()) {
        end = static_cast<int>(dates.size());
        while (end > 0 && dates[end - 1] > last) --end;
    }
    if (begin > end) throw RangeError("date_range: empty range [" + first + ", " + last + "]");
    return {begin, end};
}

} // namespace wpvc::io
