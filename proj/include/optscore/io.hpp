#pragma once

// Return-series CSV input/output, descriptive statistics, atomic file writes.

#include "optscore/dgp.hpp"
#include "optscore/error.hpp"
#include "optscore/scores.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace optscore {

struct CsvOptions {
    bool prices = false;                  // convert prices to 100 * log(p_t / p_{t-1})
    std::optional<std::string> column;    // header name of the value column; default: last column
};

namespace detail {

inline std::string_view trim(std::string_view s) noexcept {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = line.find(',', pos);
        out.push_back(trim(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) noexcept {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

/// YYYY-MM-DD with a plausible month and day.
inline bool is_iso_date(std::string_view s) noexcept {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t k : {0, 1, 2, 3, 5, 6, 8, 9}) {
        if (s[k] < '0' || s[k] > '9') return false;
    }
    const int month = (s[5] - '0') * 10 + (s[6] - '0');
    const int day = (s[8] - '0') * 10 + (s[9] - '0');
    return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

[[noreturn]] inline void parse_fail(const std::string& path, std::size_t line, const std::string& why) {
    throw ParseError(path + ":" + std::to_string(line) + ": " + why);
}

}  // namespace detail

/// Reads `date,value` or `value` rows. A header line is optional and is
/// recognised by a non-numeric value field on the first line.
inline ReturnSeries load_returns_csv(const std::string& path, const CsvOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::vector<double> values;
    std::vector<std::string> dates;
    std::optional<std::size_t> value_col;
    std::optional<std::size_t> date_col;
    std::size_t width = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto text = detail::trim(line);
        if (text.empty()) detail::parse_fail(path, lineno, "blank line");
        const auto cells = detail::split_commas(text);
        if (lineno == 1) {
            width = cells.size();
            if (!detail::parse_double(cells.back())) {
                for (std::size_t c = 0; c < cells.size(); ++c) {
                    if (opt.column && cells[c] == *opt.column) value_col = c;
                    if (cells[c] == "date" || cells[c] == "Date") date_col = c;
                }
                if (opt.column && !value_col) detail::parse_fail(path, lineno, "no column named '" + *opt.column + "'");
                if (!value_col) value_col = width - 1;
                if (!date_col && width == 2 && *value_col == 1) date_col = 0;
                continue;
            }
            if (opt.column) detail::parse_fail(path, lineno, "column '" + *opt.column + "' requested but no header");
            value_col = width - 1;
            if (width == 2) date_col = 0;
        }
        if (cells.size() != width) {
            detail::parse_fail(path, lineno, "expected " + std::to_string(width) + " fields, found " +
                                                 std::to_string(cells.size()));
        }
        const auto v = detail::parse_double(cells[*value_col]);
        if (!v || !std::isfinite(*v)) {
            detail::parse_fail(path, lineno, "non-numeric value '" + std::string(cells[*value_col]) + "'");
        }
        values.push_back(*v);
        if (date_col) {
            if (!detail::is_iso_date(cells[*date_col])) {
                detail::parse_fail(path, lineno, "date '" + std::string(cells[*date_col]) + "' is not YYYY-MM-DD");
            }
            dates.emplace_back(cells[*date_col]);
        }
    }
    if (values.empty()) throw ParseError(path + ": no data rows");

    if (opt.prices) {
        if (values.size() < 3) throw ParseError(path + ": need at least 3 prices");
        std::vector<double> r(values.size() - 1);
        for (std::size_t t = 1; t < values.size(); ++t) {
            if (!(values[t] > 0.0) || !(values[t - 1] > 0.0)) {
                throw ParseError(path + ": non-positive price near data row " + std::to_string(t + 1));
            }
            r[t - 1] = 100.0 * std::log(values[t] / values[t - 1]);
        }
        if (!dates.empty()) dates.erase(dates.begin());
        return dates.empty() ? ReturnSeries(std::move(r)) : ReturnSeries(std::move(r), std::move(dates));
    }
    if (values.size() < 2) throw ParseError(path + ": need at least 2 observations");
    return dates.empty() ? ReturnSeries(std::move(values)) : ReturnSeries(std::move(values), std::move(dates));
}

/// Writes `content` to a temporary file next to `path` and renames it into place.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string render_series_csv(const ReturnSeries& s) {
    std::ostringstream os;
    const bool dated = !s.dates().empty();
    os << (dated ? "date,value\n" : "value\n");
    char buf[40];
    for (std::size_t t = 0; t < s.size(); ++t) {
        std::snprintf(buf, sizeof buf, "%.17g", s[t]);
        if (dated) os << s.dates()[t] << ',';
        os << buf << '\n';
    }
    return os.str();
}

inline void write_series_csv(const std::filesystem::path& path, const ReturnSeries& s) {
    atomic_write(path, render_series_csv(s));
}

struct SeriesSummary {
    std::size_t n = 0;
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    double median = 0.0;
    double st_dev = 0.0;        // divisor n - 1
    double range = 0.0;
    double skewness = 0.0;      // m3 / m2^1.5, no bias correction
    double kurtosis = 0.0;      // m4 / m2^2 - 3, no bias correction
    double jarque_bera = 0.0;
    double ljung_box_sq = 0.0;  // on squared values
    std::size_t lb_lags = 10;
};

/// Ljung-Box Q = n(n+2) sum_k rho_k^2 / (n-k) on the demeaned series.
inline double ljung_box(std::span<const double> x, std::size_t lags) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double c0 = 0.0;
    for (double v : x) c0 += (v - mean) * (v - mean);
    if (!(c0 > 0.0)) throw DegenerateSampleError("ljung_box: constant series");
    double q = 0.0;
    for (std::size_t k = 1; k <= lags; ++k) {
        double ck = 0.0;
        for (std::size_t t = k; t < x.size(); ++t) ck += (x[t] - mean) * (x[t - k] - mean);
        const double rho = ck / c0;
        q += rho * rho / (n - static_cast<double>(k));
    }
    return n * (n + 2.0) * q;
}

inline SeriesSummary summarize(std::span<const double> x, std::size_t lb_lags = 10) {
    if (x.size() < 30) throw InsufficientHistoryError("summarize needs at least 30 observations");
    if (x.size() <= lb_lags) throw InsufficientHistoryError("summarize: series shorter than the Ljung-Box lag");
    SeriesSummary s;
    s.n = x.size();
    s.lb_lags = lb_lags;
    const double n = static_cast<double>(x.size());
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    s.min = sorted.front();
    s.max = sorted.back();
    s.range = s.max - s.min;
    s.median = type7_quantile(sorted, 0.5);
    for (double v : x) s.mean += v;
    s.mean /= n;
    double m2 = 0.0;
    double m3 = 0.0;
    double m4 = 0.0;
    for (double v : x) {
        const double d = v - s.mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (!(m2 > 0.0)) throw DegenerateSampleError("summarize: constant series has no skewness, kurtosis or JB");
    s.st_dev = std::sqrt(m2 * n / (n - 1.0));
    s.skewness = m3 / std::pow(m2, 1.5);
    s.kurtosis = m4 / (m2 * m2) - 3.0;
    s.jarque_bera = n * (s.skewness * s.skewness / 6.0 + s.kurtosis * s.kurtosis / 24.0);
    std::vector<double> sq(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) sq[t] = x[t] * x[t];
    s.ljung_box_sq = ljung_box(sq, lb_lags);
    return s;
}

inline std::string render_summary_csv(const SeriesSummary& s) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "n,min,max,mean,median,st_dev,range,skewness,kurtosis,jarque_bera,ljung_box_sq\n"
                  "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  s.n, s.min, s.max, s.mean, s.median, s.st_dev, s.range, s.skewness, s.kurtosis, s.jarque_bera,
                  s.ljung_box_sq);
    return buf;
}

}  // namespace optscore
