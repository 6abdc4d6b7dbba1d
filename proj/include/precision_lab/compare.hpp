#pragma once

#include "precision_lab/core.hpp"
#include "precision_lab/portfolio.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace precision_lab {

/// Loss panel: column i holds the losses of model i (n periods x m models).
struct LossDifferentials {
    std::vector<std::string> models;
    MatrixXd losses;

    static LossDifferentials from_series(const std::vector<LossSeries>& series);

    /// d_ij,t = l_i,t - l_j,t
    [[nodiscard]] VectorXd pairwise(Index i, Index j) const;
    /// d_i.,t = (m - 1)^-1 sum_{j != i} d_ij,t
    [[nodiscard]] VectorXd relative(Index i) const;
};

inline constexpr int kArMaxLag = 10;
inline constexpr double kArCritical = 1.96;
inline constexpr int kDefaultBootstraps = 5000;

/// Lag coefficients with |t| > 1.96 in a least-squares AR(max_lag) fit with intercept.
int ar_significant_lags(const VectorXd& series, int max_lag = kArMaxLag);

/// Largest significant-lag count over all pairwise differentials, at least 1.
int ar_block_length(const LossDifferentials& d, int max_lag = kArMaxLag);

/// Circular moving-block resample of 0..T-1.
std::vector<Index> block_bootstrap_indices(Index periods, Index block, std::uint64_t seed);

/// Stationary bootstrap: geometric block lengths with the given mean, circular wrap.
std::vector<Index> stationary_bootstrap_indices(Index periods, double mean_block, std::uint64_t seed);

enum class McsStatistic { t_r, t_max };

struct McsElimination {
    std::string model;
    int round = 0;
    double test_pvalue = 0.0;  // p-value of the EPA test that removed the model
    double statistic = 0.0;    // elimination statistic of the removed model
};

struct McsResult {
    std::vector<std::string> ssm;             // superior set, best first
    std::vector<McsElimination> eliminated;   // in elimination order, including models past the SSM cut
    std::map<std::string, double> mcs_pvalues;
    /// Elimination statistic: at removal for eliminated models, inside the SSM for survivors.
    std::map<std::string, double> v;
    std::map<std::string, int> rank;
    McsStatistic statistic_kind = McsStatistic::t_max;
    double alpha = 0.05;
    int block_length = 1;
};

struct McsOptions {
    double alpha = 0.05;
    McsStatistic statistic = McsStatistic::t_max;
    int n_boot = kDefaultBootstraps;
    std::uint64_t seed = 0;
    int threads = 1;
    /// Overrides the AR block-length rule.
    std::optional<int> block_length;
};

/// Sequential elimination run to a single model; MCS p-values are running maxima of the test
/// p-values and the SSM holds the models with MCS p-value >= alpha.
McsResult mcs_run(const std::vector<LossSeries>& losses, const McsOptions& options);

struct SpaResult {
    std::string benchmark;
    double statistic = 0.0;
    double p_value = 0.0;  // consistent
    double p_lower = 0.0;
    double p_upper = 0.0;
};

struct SpaOptions {
    int n_boot = kDefaultBootstraps;
    double mean_block = 5.0;
    std::uint64_t seed = 0;
    int threads = 1;
};

/// H0: no competitor beats the benchmark in expected loss.
SpaResult spa_test(const std::vector<LossSeries>& losses, const std::string& benchmark, const SpaOptions& options);

struct McsReportRow {
    std::string model;
    int rank_m = 0;
    double v_m = 0.0;
    double mcs_m = 0.0;
    int rank_r = 0;
    double v_r = 0.0;
    double mcs_r = 0.0;
};

/// Both elimination rules on the same bootstrap seed, one row per model ordered by Rank_M.
std::vector<McsReportRow> mcs_report(const std::vector<LossSeries>& losses, McsOptions options);

/// Delimited text with header Model,Rank_M,v_M,MCS_M,Rank_R,v_R,MCS_R.
std::string format_mcs_report(const std::vector<McsReportRow>& rows);

}  // namespace precision_lab
