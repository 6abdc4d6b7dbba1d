#include "precision_lab/ingest.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace precision_lab {
namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '"')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '"')) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
        start = comma + 1;
    }
    return cells;
}

bool parse_number(const std::string& cell, double& out) {
    if (cell.empty()) return false;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

// YYYY-MM-DD, optionally followed by a time part.
bool looks_like_date(const std::string& s) {
    if (s.size() < 10) return false;
    for (int i : {0, 1, 2, 3, 5, 6, 8, 9}) {
        if (s[static_cast<std::size_t>(i)] < '0' || s[static_cast<std::size_t>(i)] > '9') return false;
    }
    return s[4] == '-' && s[7] == '-' && (s.size() == 10 || s[10] == 'T' || s[10] == ' ');
}

struct RawTable {
    std::vector<std::string> tickers;
    std::vector<std::string> stamps;
    std::vector<std::vector<double>> rows;
    std::size_t dropped = 0;
};

RawTable read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "'" + path + "' is empty");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
    const auto header = split_row(line);
    if (header.size() < 2) {
        throw Error(ErrorKind::ParseError, "header of '" + path + "' needs a date column and tickers");
    }
    RawTable table;
    table.tickers.assign(header.begin() + 1, header.end());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = split_row(line);
        if (!looks_like_date(cells[0])) {
            throw Error(ErrorKind::ParseError,
                        path + ":" + std::to_string(lineno) + ": '" + cells[0] + "' is not an ISO-8601 date");
        }
        if (cells.size() > header.size()) {
            throw Error(ErrorKind::ParseError, path + ":" + std::to_string(lineno) + ": too many cells");
        }
        std::vector<double> row(table.tickers.size());
        bool complete = cells.size() == header.size();
        for (std::size_t j = 0; complete && j < row.size(); ++j) {
            complete = parse_number(cells[j + 1], row[j]);
        }
        if (!complete) {
            ++table.dropped;
            continue;
        }
        table.stamps.push_back(cells[0]);
        table.rows.push_back(std::move(row));
    }
    return table;
}

MatrixXd to_matrix(const std::vector<std::vector<double>>& rows, std::size_t cols) {
    MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(cols));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (std::size_t j = 0; j < cols; ++j) m(static_cast<Index>(t), static_cast<Index>(j)) = rows[t][j];
    }
    return m;
}

}  // namespace

void PricePanel::validate() const {
    if (values.rows() != static_cast<Index>(dates.size()) || values.cols() != static_cast<Index>(tickers.size())) {
        throw Error(ErrorKind::DimensionMismatch, "price panel labels do not match values");
    }
    for (std::size_t t = 1; t < dates.size(); ++t) {
        if (!(dates[t - 1] < dates[t])) {
            throw Error(ErrorKind::InvalidArgument, "price dates not strictly increasing at '" + dates[t] + "'");
        }
    }
    if (!(values.array() > 0.0).all()) {
        throw Error(ErrorKind::NonPositivePrice, "price panel contains a non-positive price");
    }
}

LoadedPanel load_panel(const std::string& path, PanelKind kind) {
    RawTable table = read_table(path);
    if (table.dropped > 0) {
        spdlog::warn("{}: dropped {} row(s) with missing or non-numeric cells", path, table.dropped);
    }
    if (table.rows.size() < 2) {
        throw Error(ErrorKind::EmptyPanel, "'" + path + "' has fewer than 2 usable rows");
    }
    for (std::size_t t = 1; t < table.stamps.size(); ++t) {
        if (!(table.stamps[t - 1] < table.stamps[t])) {
            throw Error(ErrorKind::ParseError, "'" + path + "': dates not strictly increasing at '" +
                                                   table.stamps[t] + "'");
        }
    }
    LoadedPanel out;
    out.kind = kind;
    out.values = to_matrix(table.rows, table.tickers.size());
    out.dates = std::move(table.stamps);
    out.tickers = std::move(table.tickers);
    out.dropped_rows = table.dropped;
    return out;
}

PricePanel load_prices(const std::string& path) {
    LoadedPanel raw = load_panel(path, PanelKind::prices);
    PricePanel panel{std::move(raw.values), std::move(raw.dates), std::move(raw.tickers)};
    panel.validate();
    return panel;
}

ReturnsMatrix load_returns(const std::string& path) {
    LoadedPanel raw = load_panel(path, PanelKind::returns);
    return ReturnsMatrix(std::move(raw.values), std::move(raw.dates), std::move(raw.tickers));
}

void write_panel(const std::string& path, const MatrixXd& values, const std::vector<std::string>& dates,
                 const std::vector<std::string>& tickers) {
    if (values.rows() != static_cast<Index>(dates.size()) || values.cols() != static_cast<Index>(tickers.size())) {
        throw Error(ErrorKind::DimensionMismatch, "write_panel: labels do not match values");
    }
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::ParseError, "cannot write '" + path + "'");
    out << "date";
    for (const auto& t : tickers) out << ',' << t;
    out << '\n';
    char buf[40];
    for (Index t = 0; t < values.rows(); ++t) {
        out << dates[static_cast<std::size_t>(t)];
        for (Index j = 0; j < values.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", values(t, j));
            out << ',' << buf;
        }
        out << '\n';
    }
}

IntradayReturns load_intraday(const std::string& path) {
    RawTable table = read_table(path);
    if (table.dropped > 0) {
        spdlog::warn("{}: dropped {} intra-day row(s) with missing cells", path, table.dropped);
    }
    IntradayReturns out;
    out.tickers = table.tickers;
    std::map<std::string, std::vector<std::vector<double>>> grouped;
    for (std::size_t t = 0; t < table.rows.size(); ++t) {
        if (t > 0 && table.stamps[t] < table.stamps[t - 1]) {
            throw Error(ErrorKind::ParseError, "'" + path + "': timestamps out of order at '" + table.stamps[t] + "'");
        }
        grouped[table.stamps[t].substr(0, 10)].push_back(table.rows[t]);
    }
    for (auto& [day, rows] : grouped) out.by_day.emplace(day, to_matrix(rows, out.tickers.size()));
    return out;
}

ReturnsMatrix log_returns(const PricePanel& prices) {
    prices.validate();
    const Index t_count = prices.values.rows();
    if (t_count < 2) throw Error(ErrorKind::EmptyPanel, "log_returns needs at least 2 price rows");
    MatrixXd r = (prices.values.bottomRows(t_count - 1).array() / prices.values.topRows(t_count - 1).array()).log();
    std::vector<std::string> dates(prices.dates.begin() + 1, prices.dates.end());
    return ReturnsMatrix(std::move(r), std::move(dates), prices.tickers);
}

ReturnsMatrix aggregate_horizon(const ReturnsMatrix& r, int h) {
    if (h < 1) throw Error(ErrorKind::InvalidArgument, "horizon must be >= 1");
    const Index blocks = r.periods() / h;
    if (blocks < 1 || r.periods() < h) {
        throw Error(ErrorKind::HorizonTooLarge, "horizon " + std::to_string(h) + " exceeds " +
                                                     std::to_string(r.periods()) + " rows");
    }
    MatrixXd out(blocks, r.assets());
    std::vector<std::string> dates;
    dates.reserve(static_cast<std::size_t>(blocks));
    for (Index b = 0; b < blocks; ++b) {
        out.row(b) = r.values().middleRows(b * h, h).colwise().sum();
        dates.push_back(r.dates()[static_cast<std::size_t>(b * h + h - 1)]);
    }
    return ReturnsMatrix(std::move(out), std::move(dates), r.tickers());
}

int horizon_days(Horizon h) { return static_cast<int>(h); }

Horizon parse_horizon(const std::string& name) {
    if (name == "daily") return Horizon::daily;
    if (name == "weekly") return Horizon::weekly;
    if (name == "monthly") return Horizon::monthly;
    throw Error(ErrorKind::ConfigError, "unknown horizon '" + name + "' (daily, weekly, monthly)");
}

std::string to_string(Horizon h) {
    switch (h) {
        case Horizon::daily: return "daily";
        case Horizon::weekly: return "weekly";
        case Horizon::monthly: return "monthly";
    }
    return "daily";
}

Index default_window(Horizon h) {
    switch (h) {
        case Horizon::daily: return 150;
        case Horizon::weekly: return 100;
        case Horizon::monthly: return 50;
    }
    return 150;
}

std::vector<WindowSlice> rolling_windows(Index periods, Index window_length, Index step, Index test_length) {
    if (window_length < 2 || step < 1 || test_length < 1) {
        throw Error(ErrorKind::InvalidArgument, "rolling window needs window_length > 1, step >= 1, test >= 1");
    }
    if (window_length + test_length > periods) {  // implies window_length < T
        throw Error(ErrorKind::InvalidArgument, "window " + std::to_string(window_length) + " + test " +
                                                    std::to_string(test_length) + " exceeds " +
                                                    std::to_string(periods) + " periods");
    }
    std::vector<WindowSlice> windows;
    for (Index start = 0; start + window_length + test_length <= periods; start += step) {
        windows.push_back({start, start + window_length, start + window_length,
                           start + window_length + test_length});
    }
    return windows;
}

std::vector<WindowSlice> rolling_windows(const ReturnsMatrix& r, const RollingWindowPlan& plan) {
    return rolling_windows(r.periods(), plan.window_length, plan.step, horizon_days(plan.horizon));
}

ReturnsMatrix filter_dates(const ReturnsMatrix& r, const std::string& from, const std::string& to) {
    std::vector<Index> keep;
    for (Index t = 0; t < r.periods(); ++t) {
        const std::string day = r.dates()[static_cast<std::size_t>(t)].substr(0, 10);
        if ((from.empty() || day >= from) && (to.empty() || day <= to)) keep.push_back(t);
    }
    if (keep.size() < 2) {
        throw Error(ErrorKind::EmptyPanel, "date filter [" + from + ", " + to + "] keeps fewer than 2 rows");
    }
    return r.rows(keep);
}

}  // namespace precision_lab
