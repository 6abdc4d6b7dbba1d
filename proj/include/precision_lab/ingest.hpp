#pragma once

#include "precision_lab/core.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace precision_lab {

/// T x p closing prices.
struct PricePanel {
    MatrixXd values;
    std::vector<std::string> dates;
    std::vector<std::string> tickers;

    /// Throws NonPositivePrice / InvalidArgument when the invariants do not hold.
    void validate() const;
};

enum class PanelKind { prices, returns };

struct LoadedPanel {
    PanelKind kind = PanelKind::returns;
    MatrixXd values;
    std::vector<std::string> dates;
    std::vector<std::string> tickers;
    std::size_t dropped_rows = 0;
};

/// Reads "date,TICKER1,TICKER2,..." delimited text. Rows with a missing or non-numeric cell
/// are dropped and counted; fewer than two usable rows is an EmptyPanel error.
LoadedPanel load_panel(const std::string& path, PanelKind kind);
PricePanel load_prices(const std::string& path);
ReturnsMatrix load_returns(const std::string& path);

void write_panel(const std::string& path, const MatrixXd& values, const std::vector<std::string>& dates,
                 const std::vector<std::string>& tickers);

/// Intra-day returns grouped by calendar day (first 10 characters of the timestamp).
struct IntradayReturns {
    std::vector<std::string> tickers;
    std::map<std::string, MatrixXd> by_day;
};

IntradayReturns load_intraday(const std::string& path);

ReturnsMatrix log_returns(const PricePanel& prices);

/// Sums non-overlapping blocks of h consecutive rows anchored at the first row; a trailing
/// partial block is dropped. Each output row carries the date of its block's last row.
ReturnsMatrix aggregate_horizon(const ReturnsMatrix& r, int h);

enum class Horizon { daily = 1, weekly = 5, monthly = 20 };

int horizon_days(Horizon h);
Horizon parse_horizon(const std::string& name);
std::string to_string(Horizon h);
/// 150 days, 100 weeks, 50 months.
Index default_window(Horizon h);

struct RollingWindowPlan {
    Index window_length = 150;
    Index step = 1;
    Horizon horizon = Horizon::daily;
};

struct WindowSlice {
    Index train_begin = 0;
    Index train_end = 0;  // exclusive
    Index test_begin = 0;
    Index test_end = 0;   // exclusive
};

/// Window k trains on rows [k*step, k*step + window_length) and tests on the following
/// `test_length` rows.
std::vector<WindowSlice> rolling_windows(Index periods, Index window_length, Index step, Index test_length);

/// Same, with the test length taken from the plan's horizon.
std::vector<WindowSlice> rolling_windows(const ReturnsMatrix& r, const RollingWindowPlan& plan);

/// Keeps rows whose date (first 10 characters) lies in [from, to]; empty bounds are open.
ReturnsMatrix filter_dates(const ReturnsMatrix& r, const std::string& from, const std::string& to);

}  // namespace precision_lab
