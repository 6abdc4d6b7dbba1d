#include "precision_lab/compare.hpp"

#include "precision_lab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace precision_lab {
namespace {

/// Per-replicate column means of the losses under the given resampling scheme.
template <typename IndexFn>
MatrixXd bootstrap_means(const MatrixXd& losses, int n_boot, int threads, IndexFn&& indices) {
    MatrixXd out(n_boot, losses.cols());
    parallel_for(static_cast<std::size_t>(n_boot), threads, [&](std::size_t b) {
        const std::vector<Index> idx = indices(static_cast<std::uint64_t>(b));
        VectorXd acc = VectorXd::Zero(losses.cols());
        for (Index t : idx) acc += losses.row(t).transpose();
        out.row(static_cast<Index>(b)) = acc.transpose() / static_cast<double>(idx.size());
    });
    return out;
}

struct RoundStats {
    double statistic = 0.0;          // T_max or T_R of the current set
    std::vector<double> per_model;   // elimination statistic per alive model
    double pvalue = 1.0;
};

RoundStats t_max_round(const VectorXd& lbar, const MatrixXd& bm, const std::vector<Index>& alive) {
    const std::size_t k = alive.size();
    const double scale = static_cast<double>(k) / static_cast<double>(k - 1);
    const Index nb = bm.rows();
    double mean_alive = 0.0;
    VectorXd boot_mean = VectorXd::Zero(nb);
    for (Index i : alive) {
        mean_alive += lbar(i) / static_cast<double>(k);
        boot_mean += bm.col(i) / static_cast<double>(k);
    }
    RoundStats rs;
    rs.per_model.resize(k);
    VectorXd tstar = VectorXd::Constant(nb, -std::numeric_limits<double>::infinity());
    for (std::size_t a = 0; a < k; ++a) {
        const Index i = alive[a];
        const double dbar = scale * (lbar(i) - mean_alive);
        const VectorXd centered = scale * (bm.col(i) - boot_mean).array() - dbar;
        const double var = centered.squaredNorm() / static_cast<double>(nb);
        // A zero-variance differential contributes a zero t-statistic.
        const double sd = std::sqrt(var);
        rs.per_model[a] = var > 0.0 ? dbar / sd : 0.0;
        if (var > 0.0) {
            tstar = tstar.cwiseMax(centered / sd);
        } else {
            tstar = tstar.cwiseMax(VectorXd::Zero(nb));
        }
    }
    rs.statistic = *std::max_element(rs.per_model.begin(), rs.per_model.end());
    rs.pvalue = static_cast<double>((tstar.array() >= rs.statistic).count()) / static_cast<double>(nb);
    return rs;
}

RoundStats t_r_round(const VectorXd& lbar, const MatrixXd& bm, const std::vector<Index>& alive) {
    const std::size_t k = alive.size();
    const Index nb = bm.rows();
    RoundStats rs;
    rs.per_model.assign(k, -std::numeric_limits<double>::infinity());
    VectorXd tstar = VectorXd::Zero(nb);
    double stat = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t c = a + 1; c < k; ++c) {
            const Index i = alive[a], j = alive[c];
            const double dbar = lbar(i) - lbar(j);
            const VectorXd centered = (bm.col(i) - bm.col(j)).array() - dbar;
            const double var = centered.squaredNorm() / static_cast<double>(nb);
            const double sd = std::sqrt(var);
            const double t = var > 0.0 ? dbar / sd : 0.0;
            rs.per_model[a] = std::max(rs.per_model[a], t);
            rs.per_model[c] = std::max(rs.per_model[c], -t);
            stat = std::max(stat, std::abs(t));
            if (var > 0.0) tstar = tstar.cwiseMax(centered.cwiseAbs() / sd);
        }
    }
    rs.statistic = stat;
    rs.pvalue = static_cast<double>((tstar.array() >= stat).count()) / static_cast<double>(nb);
    return rs;
}

}  // namespace

LossDifferentials LossDifferentials::from_series(const std::vector<LossSeries>& series) {
    if (series.empty()) throw Error(ErrorKind::InvalidArgument, "no loss series");
    const std::size_t n = series.front().losses.size();
    LossDifferentials d;
    d.losses.resize(static_cast<Index>(n), static_cast<Index>(series.size()));
    for (std::size_t m = 0; m < series.size(); ++m) {
        if (series[m].losses.size() != n) {
            throw Error(ErrorKind::IncomparableSeries, "loss series '" + series[m].method + "' has a different length");
        }
        d.models.push_back(series[m].method);
        for (std::size_t t = 0; t < n; ++t) d.losses(static_cast<Index>(t), static_cast<Index>(m)) = series[m].losses[t];
    }
    if (n < 1) throw Error(ErrorKind::SeriesTooShort, "empty loss series");
    return d;
}

VectorXd LossDifferentials::pairwise(Index i, Index j) const { return losses.col(i) - losses.col(j); }

VectorXd LossDifferentials::relative(Index i) const {
    const Index m = losses.cols();
    VectorXd out = VectorXd::Zero(losses.rows());
    for (Index j = 0; j < m; ++j)
        if (j != i) out += pairwise(i, j);
    return out / static_cast<double>(m - 1);
}

int ar_significant_lags(const VectorXd& y, int max_lag) {
    const Index n = y.size();
    if (max_lag < 1) throw Error(ErrorKind::InvalidArgument, "AR fit needs max_lag >= 1");
    if (n <= 2 * max_lag) throw Error(ErrorKind::SeriesTooShort, "AR fit needs more than 2 * max_lag observations");
    const Index rows = n - max_lag, cols = max_lag + 1;
    MatrixXd x(rows, cols);
    VectorXd target = y.tail(rows);
    x.col(0).setOnes();
    for (int l = 1; l <= max_lag; ++l) x.col(l) = y.segment(max_lag - l, rows);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
    if (qr.rank() < cols) return 0;
    const VectorXd beta = qr.solve(target);
    const double rss = (target - x * beta).squaredNorm();
    const double sigma2 = rss / static_cast<double>(rows - cols);
    if (!(sigma2 > 1e-300)) return 0;
    const MatrixXd xtx_inv = (x.transpose() * x).inverse();
    int count = 0;
    for (int l = 1; l <= max_lag; ++l) {
        const double se = std::sqrt(sigma2 * xtx_inv(l, l));
        if (std::abs(beta(l)) / se > kArCritical) ++count;
    }
    return count;
}

int ar_block_length(const LossDifferentials& d, int max_lag) {
    const Index m = d.losses.cols();
    int block = 1;
    for (Index i = 0; i < m; ++i)
        for (Index j = i + 1; j < m; ++j) block = std::max(block, ar_significant_lags(d.pairwise(i, j), max_lag));
    return block;
}

std::vector<Index> block_bootstrap_indices(Index periods, Index block, std::uint64_t seed) {
    if (periods < 1 || block < 1 || block > periods) {
        throw Error(ErrorKind::InvalidArgument, "block bootstrap needs 1 <= block <= T");
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Index> start(0, periods - 1);
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(periods));
    while (static_cast<Index>(out.size()) < periods) {
        const Index s = start(rng);
        for (Index k = 0; k < block && static_cast<Index>(out.size()) < periods; ++k) out.push_back((s + k) % periods);
    }
    return out;
}

std::vector<Index> stationary_bootstrap_indices(Index periods, double mean_block, std::uint64_t seed) {
    if (periods < 1 || !(mean_block >= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "stationary bootstrap needs T >= 1 and mean_block >= 1");
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Index> start(0, periods - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double restart = 1.0 / mean_block;
    std::vector<Index> out(static_cast<std::size_t>(periods));
    Index cur = start(rng);
    out[0] = cur;
    for (Index t = 1; t < periods; ++t) {
        cur = u(rng) < restart ? start(rng) : (cur + 1) % periods;
        out[static_cast<std::size_t>(t)] = cur;
    }
    return out;
}

McsResult mcs_run(const std::vector<LossSeries>& series, const McsOptions& opt) {
    if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw Error(ErrorKind::InvalidArgument, "mcs: alpha must lie in (0, 1)");
    if (opt.n_boot < 100) throw Error(ErrorKind::InvalidArgument, "mcs: n_boot must be >= 100");
    const LossDifferentials d = LossDifferentials::from_series(series);
    const Index n = d.losses.rows(), m = d.losses.cols();

    McsResult res;
    res.statistic_kind = opt.statistic;
    res.alpha = opt.alpha;
    if (m == 1) {
        res.ssm = d.models;
        res.mcs_pvalues[d.models[0]] = 1.0;
        res.v[d.models[0]] = 0.0;
        res.rank[d.models[0]] = 1;
        return res;
    }
    if (opt.block_length) {
        res.block_length = std::clamp<int>(*opt.block_length, 1, static_cast<int>(n));
    } else {
        // Keep the AR fit well posed on short series.
        const int lag = std::min<int>(kArMaxLag, static_cast<int>((n - 1) / 2));
        res.block_length = lag >= 1 ? ar_block_length(d, lag) : 1;
    }
    const Index block = res.block_length;
    const MatrixXd bm = bootstrap_means(d.losses, opt.n_boot, opt.threads, [&](std::uint64_t b) {
        return block_bootstrap_indices(n, block, derive_seed(opt.seed, b));
    });
    const VectorXd lbar = d.losses.colwise().mean().transpose();

    std::vector<Index> alive(static_cast<std::size_t>(m));
    std::iota(alive.begin(), alive.end(), 0);
    double running = 0.0;
    std::optional<std::vector<Index>> ssm;
    std::vector<double> ssm_stats;
    for (int round = 1; alive.size() > 1; ++round) {
        const RoundStats rs = opt.statistic == McsStatistic::t_max ? t_max_round(lbar, bm, alive)
                                                                   : t_r_round(lbar, bm, alive);
        if (!ssm && rs.pvalue >= opt.alpha) {
            ssm = alive;
            ssm_stats = rs.per_model;
        }
        // Worst model: largest elimination statistic, lowest index on ties.
        std::size_t worst = 0;
        for (std::size_t a = 1; a < alive.size(); ++a)
            if (rs.per_model[a] > rs.per_model[worst]) worst = a;
        running = std::max(running, rs.pvalue);
        const std::string& name = d.models[static_cast<std::size_t>(alive[worst])];
        res.eliminated.push_back({name, round, rs.pvalue, rs.per_model[worst]});
        res.mcs_pvalues[name] = running;
        res.v[name] = rs.per_model[worst];
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(worst));
    }
    const std::string& last = d.models[static_cast<std::size_t>(alive[0])];
    res.mcs_pvalues[last] = 1.0;
    if (!ssm) {
        ssm = alive;
        ssm_stats = {0.0};
    }
    std::vector<std::size_t> order(ssm->size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ssm_stats[a] < ssm_stats[b]; });
    int rank = 0;
    for (std::size_t a : order) {
        const std::string& name = d.models[static_cast<std::size_t>((*ssm)[a])];
        res.ssm.push_back(name);
        res.v[name] = ssm_stats[a];
        res.rank[name] = ++rank;
    }
    for (auto it = res.eliminated.rbegin(); it != res.eliminated.rend(); ++it)
        if (!res.rank.count(it->model)) res.rank[it->model] = ++rank;
    return res;
}

SpaResult spa_test(const std::vector<LossSeries>& series, const std::string& benchmark, const SpaOptions& opt) {
    if (opt.n_boot < 1) throw Error(ErrorKind::InvalidArgument, "spa: n_boot must be >= 1");
    const LossDifferentials d = LossDifferentials::from_series(series);
    const Index n = d.losses.rows(), m = d.losses.cols();
    if (m < 2) throw Error(ErrorKind::InvalidArgument, "spa: needs at least two models");
    const auto it = std::find(d.models.begin(), d.models.end(), benchmark);
    if (it == d.models.end()) throw Error(ErrorKind::InvalidArgument, "spa: unknown benchmark '" + benchmark + "'");
    const Index b0 = it - d.models.begin();

    // X_k,t = L_0,t - L_k,t: positive when competitor k beats the benchmark.
    MatrixXd x(n, m - 1);
    for (Index k = 0, c = 0; k < m; ++k)
        if (k != b0) x.col(c++) = d.pairwise(b0, k);
    const Index nk = x.cols();
    const VectorXd xbar = x.colwise().mean().transpose();
    const MatrixXd bm = bootstrap_means(x, opt.n_boot, opt.threads, [&](std::uint64_t b) {
        return stationary_bootstrap_indices(n, opt.mean_block, derive_seed(opt.seed, b));
    });
    const double rn = std::sqrt(static_cast<double>(n));
    VectorXd omega(nk);
    for (Index k = 0; k < nk; ++k)
        omega(k) = rn * std::sqrt((bm.col(k).array() - xbar(k)).square().mean());

    SpaResult res;
    res.benchmark = benchmark;
    VectorXd tk = VectorXd::Zero(nk);
    for (Index k = 0; k < nk; ++k) tk(k) = omega(k) > 0.0 ? rn * xbar(k) / omega(k) : 0.0;
    res.statistic = std::max(0.0, tk.maxCoeff());

    const double loglog = n >= 3 ? std::sqrt(2.0 * std::log(std::log(static_cast<double>(n)))) : 0.0;
    VectorXd g_lower(nk), g_cons(nk);
    for (Index k = 0; k < nk; ++k) {
        g_lower(k) = std::max(xbar(k), 0.0);
        g_cons(k) = tk(k) >= -loglog ? xbar(k) : 0.0;
    }
    auto pvalue = [&](const VectorXd& g) {
        Index hits = 0;
        for (Index b = 0; b < bm.rows(); ++b) {
            double t = 0.0;
            for (Index k = 0; k < nk; ++k)
                if (omega(k) > 0.0) t = std::max(t, rn * (bm(b, k) - g(k)) / omega(k));
            hits += t >= res.statistic ? 1 : 0;
        }
        return static_cast<double>(hits) / static_cast<double>(bm.rows());
    };
    res.p_lower = pvalue(g_lower);
    res.p_value = pvalue(g_cons);
    res.p_upper = pvalue(xbar);
    return res;
}

std::vector<McsReportRow> mcs_report(const std::vector<LossSeries>& losses, McsOptions options) {
    options.statistic = McsStatistic::t_max;
    const McsResult rm = mcs_run(losses, options);
    options.statistic = McsStatistic::t_r;
    const McsResult rr = mcs_run(losses, options);
    std::vector<McsReportRow> rows;
    for (const auto& s : losses) {
        const std::string& id = s.method;
        rows.push_back({id, rm.rank.at(id), rm.v.at(id), rm.mcs_pvalues.at(id), rr.rank.at(id), rr.v.at(id),
                        rr.mcs_pvalues.at(id)});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.rank_m < b.rank_m; });
    return rows;
}

std::string format_mcs_report(const std::vector<McsReportRow>& rows) {
    std::string out = "Model,Rank_M,v_M,MCS_M,Rank_R,v_R,MCS_R\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%d,%.10g,%.10g,%d,%.10g,%.10g\n", r.model.c_str(), r.rank_m, r.v_m, r.mcs_m,
                      r.rank_r, r.v_r, r.mcs_r);
        out += buf;
    }
    return out;
}

}  // namespace precision_lab
