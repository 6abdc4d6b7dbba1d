#include "precision_lab/tuning.hpp"

#include "precision_lab/covariance.hpp"
#include "precision_lab/ggm.hpp"
#include "precision_lab/parallel.hpp"
#include "precision_lab/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

namespace precision_lab {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Standardizer {
    VectorXd mean;
    VectorXd sd;

    explicit Standardizer(const MatrixXd& x) {
        mean = x.colwise().mean().transpose();
        sd = (x.rowwise() - mean.transpose()).colwise().squaredNorm().transpose().cwiseSqrt() /
             std::sqrt(static_cast<double>(x.rows()));
        if (!(sd.minCoeff() > 0.0)) throw Error(ErrorKind::ZeroResidualVariance, "cv2: an asset has zero variance");
    }

    [[nodiscard]] MatrixXd apply(const MatrixXd& x) const {
        return (x.rowwise() - mean.transpose()) * sd.cwiseInverse().asDiagonal();
    }
};

MatrixXd correlation_scale(const ReturnsMatrix& r, VectorXd& sd) {
    const MatrixXd s = covariance_of(r.values());
    sd = s.diagonal().cwiseSqrt();
    if (!(sd.minCoeff() > 0.0)) throw Error(ErrorKind::ZeroResidualVariance, "an asset has zero variance");
    return correlation_from_covariance(s);
}

PrecisionEstimate rescale(PrecisionEstimate est, const VectorXd& sd) {
    const VectorXd inv = sd.cwiseInverse();
    est.matrix = symmetrize(inv.asDiagonal() * est.matrix * inv.asDiagonal());
    return est;
}

double param(const ParamMap& p, const char* key) {
    const auto it = p.find(key);
    if (it == p.end()) throw Error(ErrorKind::InvalidArgument, std::string("missing hyperparameter ") + key);
    return it->second;
}

double param_or(const ParamMap& p, const char* key, double fallback) {
    const auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

inline constexpr double kHybridDefaultNu = 0.05;

}  // namespace

FoldPlan kfold_split(Index periods, int k) {
    if (k < 2) throw Error(ErrorKind::InvalidArgument, "kfold_split: k must be >= 2");
    if (periods < k) throw Error(ErrorKind::TooFewRows, "kfold_split: fewer rows than folds");
    FoldPlan plan;
    plan.k = k;
    const Index base = periods / k, extra = periods % k;
    Index begin = 0;
    for (Index f = 0; f < k; ++f) {
        const Index len = base + (f < extra ? 1 : 0);
        plan.fold_slices.emplace_back(begin, begin + len);
        begin += len;
    }
    return plan;
}

ReturnsMatrix fold_complement(const ReturnsMatrix& r, const FoldPlan& plan, int f) {
    const auto [b, e] = plan.fold_slices.at(static_cast<std::size_t>(f));
    std::vector<Index> keep;
    for (Index t = 0; t < r.periods(); ++t)
        if (t < b || t >= e) keep.push_back(t);
    return r.rows(keep);
}

Criterion parse_criterion(const std::string& name) {
    if (name == "cv1") return Criterion::cv1;
    if (name == "cv2") return Criterion::cv2;
    throw Error(ErrorKind::ConfigError, "unknown criterion '" + name + "'");
}

SearchMode parse_search(const std::string& name) {
    if (name == "grid") return SearchMode::grid;
    if (name == "nm" || name == "nelder_mead") return SearchMode::nelder_mead;
    throw Error(ErrorKind::ConfigError, "unknown search '" + name + "'");
}

std::string to_string(Criterion c) { return c == Criterion::cv1 ? "cv1" : "cv2"; }
std::string to_string(SearchMode s) { return s == SearchMode::grid ? "grid" : "nm"; }

double cv1_score(const ReturnsMatrix& train, const ReturnsMatrix& holdout, const Estimator& estimator,
                 const ParamMap& params) {
    const Estimate est = estimator(train, params);
    if (const auto* pe = std::get_if<PrecisionEstimate>(&est); pe && pe->degenerate) {
        throw Error(ErrorKind::DegenerateWeights, "cv1: degenerate precision estimate");
    }
    const PortfolioWeights w = min_variance_weights(est);
    return realized_loss(w, holdout, LossConvention::demeaned);
}

double cv2_residual(const MatrixXd& theta, const MatrixXd& x) {
    const Index p = theta.rows();
    if (x.cols() != p) throw Error(ErrorKind::DimensionMismatch, "cv2: holdout width differs from Theta");
    if (!(theta.diagonal().minCoeff() > 0.0)) throw Error(ErrorKind::ZeroDiagonal, "cv2: Theta has a non-positive diagonal");
    // Column i of b holds the regression form of node i: b_ii = 1, b_ji = (t_ij + t_ji) / (2 t_ii).
    MatrixXd b(p, p);
    for (Index i = 0; i < p; ++i) {
        for (Index j = 0; j < p; ++j) b(j, i) = (theta(i, j) + theta(j, i)) / (2.0 * theta(i, i));
        b(i, i) = 1.0;
    }
    return (x * b).squaredNorm() / static_cast<double>(p * x.rows());
}

double cv2_score(const ReturnsMatrix& train, const ReturnsMatrix& holdout, const Estimator& estimator,
                 const ParamMap& params) {
    const Standardizer z(train.values());
    const ReturnsMatrix ztrain(z.apply(train.values()), train.dates(), train.tickers());
    const Estimate est = estimator(ztrain, params);
    const auto* pe = std::get_if<PrecisionEstimate>(&est);
    if (!pe) throw Error(ErrorKind::InvalidArgument, "cv2 applies to precision estimators only");
    if (pe->degenerate) throw Error(ErrorKind::ZeroDiagonal, "cv2: degenerate precision estimate");
    return cv2_residual(pe->matrix, z.apply(holdout.values()));
}

double cv_objective(const ReturnsMatrix& r, const FoldPlan& plan, const Estimator& estimator, const ParamMap& params,
                    Criterion criterion, int threads) {
    std::vector<double> scores(static_cast<std::size_t>(plan.k));
    parallel_for(scores.size(), threads, [&](std::size_t f) {
        const auto [b, e] = plan.fold_slices[f];
        const ReturnsMatrix train = fold_complement(r, plan, static_cast<int>(f));
        const ReturnsMatrix holdout = r.slice(b, e);
        scores[f] = criterion == Criterion::cv1 ? cv1_score(train, holdout, estimator, params)
                                                : cv2_score(train, holdout, estimator, params);
    });
    return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

namespace {

TuneResult select_best(const std::vector<ParamMap>& grid, const std::vector<double>& scores, Criterion criterion,
                       const SparsityOrder& sparser) {
    TuneResult res;
    res.criterion = criterion;
    res.search = SearchMode::grid;
    std::optional<std::size_t> best;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (!std::isfinite(scores[g])) continue;
        res.trace.push_back({grid[g], scores[g]});
        if (!best) {
            best = g;
            continue;
        }
        const double cur = scores[*best];
        if (scores[g] == cur ? (sparser && sparser(grid[g], grid[*best])) : scores[g] < cur) best = g;
    }
    if (!best) throw Error(ErrorKind::AllPointsFailed, "grid_search: every grid point failed");
    res.best_params = grid[*best];
    res.best_score = scores[*best];
    return res;
}

// Glasso grid scored fold by fold. Within a fold the penalties run from largest to smallest and
// each fit starts from the previous solution, which cuts the sweeps at small penalties. The order
// is fixed per fold, so scores do not depend on the thread count.
TuneResult glasso_path_search(const ReturnsMatrix& r, const std::vector<ParamMap>& grid, Criterion criterion,
                              const SparsityOrder& sparser, int threads, int folds) {
    const FoldPlan plan = kfold_split(r.periods(), folds);
    std::vector<std::size_t> order(grid.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return param(grid[a], "rho") > param(grid[b], "rho"); });
    std::vector<std::vector<double>> fold_scores(static_cast<std::size_t>(plan.k), std::vector<double>(grid.size()));
    parallel_for(fold_scores.size(), threads, [&](std::size_t f) {
        const auto [b, e] = plan.fold_slices[f];
        const ReturnsMatrix train = fold_complement(r, plan, static_cast<int>(f));
        const ReturnsMatrix holdout = r.slice(b, e);
        std::optional<MatrixXd> warm;
        const Estimator path = [&warm](const ReturnsMatrix& panel, const ParamMap& p) -> Estimate {
            VectorXd sd;
            CovarianceEstimate corr;
            corr.matrix = correlation_scale(panel, sd);
            PrecisionEstimate fit = glasso_estimate(corr, param(p, "rho"), nullptr, warm ? &*warm : nullptr);
            warm = fit.matrix;
            return rescale(std::move(fit), sd);
        };
        for (std::size_t g : order) {
            try {
                fold_scores[f][g] = criterion == Criterion::cv1 ? cv1_score(train, holdout, path, grid[g])
                                                                : cv2_score(train, holdout, path, grid[g]);
            } catch (const Error&) {
                fold_scores[f][g] = kInf;
                warm.reset();
            }
        }
    });
    std::vector<double> scores(grid.size(), 0.0);
    for (const auto& fs : fold_scores)
        for (std::size_t g = 0; g < grid.size(); ++g) scores[g] += fs[g];
    for (double& v : scores) v /= static_cast<double>(plan.k);
    return select_best(grid, scores, criterion, sparser);
}

}  // namespace

TuneResult grid_search(const ReturnsMatrix& r, const Estimator& estimator, const std::vector<ParamMap>& grid,
                       Criterion criterion, const SparsityOrder& sparser, int threads, int folds) {
    if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "grid_search: empty grid");
    const FoldPlan plan = kfold_split(r.periods(), folds);
    std::vector<double> scores(grid.size(), kInf);
    parallel_for(grid.size(), threads, [&](std::size_t g) {
        try {
            scores[g] = cv_objective(r, plan, estimator, grid[g], criterion, 1);
        } catch (const Error&) {
            scores[g] = kInf;
        }
    });
    return select_best(grid, scores, criterion, sparser);
}

TuneResult nelder_mead_minimize(const std::function<double(const ParamMap&)>& objective, const ParamMap& init,
                                const std::vector<std::string>& continuous, int budget) {
    const std::size_t n = continuous.size();
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "nelder_mead: no continuous parameter");
    if (budget < 1) throw Error(ErrorKind::InvalidArgument, "nelder_mead: budget must be >= 1");
    VectorXd x0(static_cast<Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
        const double v = param(init, continuous[k].c_str());
        if (!(v > 0.0)) throw Error(ErrorKind::InvalidArgument, "nelder_mead: parameters must be positive");
        x0(static_cast<Index>(k)) = std::log(v);
    }

    TuneResult res;
    res.search = SearchMode::nelder_mead;
    int evals = 0;
    auto to_params = [&](const VectorXd& x) {
        ParamMap p = init;
        for (std::size_t k = 0; k < n; ++k) p[continuous[k]] = std::exp(x(static_cast<Index>(k)));
        return p;
    };
    auto eval = [&](const VectorXd& x) {
        ++evals;
        const ParamMap p = to_params(x);
        double f = objective(p);
        if (std::isnan(f)) f = kInf;
        if (std::isfinite(f)) res.trace.push_back({p, f});
        return f;
    };

    std::vector<VectorXd> xs{x0};
    std::vector<double> fs{eval(x0)};
    for (std::size_t k = 0; k < n && evals < budget; ++k) {
        VectorXd x = x0;
        x(static_cast<Index>(k)) += 0.5;
        xs.push_back(x);
        fs.push_back(eval(x));
    }

    auto diameter = [&] {
        double d = 0.0;
        for (std::size_t a = 0; a < xs.size(); ++a)
            for (std::size_t b = a + 1; b < xs.size(); ++b) d = std::max(d, (xs[a] - xs[b]).cwiseAbs().maxCoeff());
        return d;
    };

    bool converged = false;
    while (xs.size() == n + 1) {
        std::vector<std::size_t> order(xs.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
        std::vector<VectorXd> sx;
        std::vector<double> sf;
        for (std::size_t i : order) {
            sx.push_back(xs[i]);
            sf.push_back(fs[i]);
        }
        xs = std::move(sx);
        fs = std::move(sf);
        if (diameter() < kNelderMeadDiameter) {
            converged = true;
            break;
        }
        if (evals >= budget) break;

        VectorXd c = VectorXd::Zero(static_cast<Index>(n));
        for (std::size_t i = 0; i < n; ++i) c += xs[i];
        c /= static_cast<double>(n);
        const VectorXd xr = c + (c - xs[n]);
        const double fr = eval(xr);
        if (fr < fs[0]) {
            if (evals >= budget) {
                xs[n] = xr;
                fs[n] = fr;
                continue;
            }
            const VectorXd xe = c + 2.0 * (xr - c);
            const double fe = eval(xe);
            if (fe < fr) {
                xs[n] = xe;
                fs[n] = fe;
            } else {
                xs[n] = xr;
                fs[n] = fr;
            }
        } else if (fr < fs[n - 1]) {
            xs[n] = xr;
            fs[n] = fr;
        } else {
            if (evals >= budget) continue;
            const bool outside = fr < fs[n];
            const VectorXd xc = outside ? VectorXd(c + 0.5 * (xr - c)) : VectorXd(c + 0.5 * (xs[n] - c));
            const double fc = eval(xc);
            if (outside ? fc <= fr : fc < fs[n]) {
                xs[n] = xc;
                fs[n] = fc;
            } else {
                for (std::size_t i = 1; i <= n && evals < budget; ++i) {
                    xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
                    fs[i] = eval(xs[i]);
                }
            }
        }
    }
    res.budget_exhausted = !converged;
    if (res.trace.empty()) throw Error(ErrorKind::AllPointsFailed, "nelder_mead: no finite objective value");
    const auto best = std::min_element(res.trace.begin(), res.trace.end(),
                                       [](const TraceEntry& a, const TraceEntry& b) { return a.score < b.score; });
    res.best_params = best->params;
    res.best_score = best->score;
    return res;
}

GgmMethod parse_ggm(const std::string& name) {
    if (name == "glasso") return GgmMethod::glasso;
    if (name == "mb") return GgmMethod::mb;
    if (name == "clime") return GgmMethod::clime;
    if (name == "greedy") return GgmMethod::greedy;
    if (name == "hybridmb") return GgmMethod::hybridmb;
    throw Error(ErrorKind::ConfigError, "unknown GGM method '" + name + "'");
}

std::string to_string(GgmMethod m) {
    switch (m) {
        case GgmMethod::glasso: return "glasso";
        case GgmMethod::mb: return "mb";
        case GgmMethod::clime: return "clime";
        case GgmMethod::greedy: return "greedy";
        case GgmMethod::hybridmb: return "hybridmb";
    }
    return "?";
}

Estimator ggm_estimator(GgmMethod m, int threads) {
    switch (m) {
        case GgmMethod::glasso:
            return [](const ReturnsMatrix& r, const ParamMap& p) -> Estimate {
                VectorXd sd;
                CovarianceEstimate corr;
                corr.matrix = correlation_scale(r, sd);
                return rescale(glasso_estimate(corr, param(p, "rho")), sd);
            };
        case GgmMethod::clime:
            return [threads](const ReturnsMatrix& r, const ParamMap& p) -> Estimate {
                VectorXd sd;
                CovarianceEstimate corr;
                corr.matrix = correlation_scale(r, sd);
                return rescale(clime_estimate(corr, param(p, "lambda"), threads), sd);
            };
        case GgmMethod::mb:
            return [threads](const ReturnsMatrix& r, const ParamMap& p) -> Estimate {
                return mb_estimate(r, param(p, "lambda"), threads);
            };
        case GgmMethod::greedy:
            return [threads](const ReturnsMatrix& r, const ParamMap& p) -> Estimate {
                // Grid values of steps beyond p - 1 are clamped to the full candidate set.
                const int steps = std::min(static_cast<int>(std::lround(param(p, "steps"))),
                                           static_cast<int>(r.assets() - 1));
                return greedy_prune_estimate(r, steps, param(p, "nu"), threads);
            };
        case GgmMethod::hybridmb:
            return [threads](const ReturnsMatrix& r, const ParamMap& p) -> Estimate {
                return hybrid_mb_estimate(r, param(p, "lambda"), param_or(p, "nu", kHybridDefaultNu), threads);
            };
    }
    throw Error(ErrorKind::InvalidArgument, "ggm_estimator: unknown method");
}

std::vector<ParamMap> default_grid(GgmMethod m) {
    static const std::vector<double> penalties{0.01, 0.025, 0.05, 0.1, 0.2, 0.4};
    std::vector<ParamMap> grid;
    switch (m) {
        case GgmMethod::glasso:
            for (double v : penalties) grid.push_back({{"rho", v}});
            break;
        case GgmMethod::mb:
        case GgmMethod::clime:
            for (double v : penalties) grid.push_back({{"lambda", v}});
            break;
        case GgmMethod::hybridmb:
            for (double v : penalties) grid.push_back({{"lambda", v}, {"nu", kHybridDefaultNu}});
            break;
        case GgmMethod::greedy:
            for (double steps : {5.0, 10.0, 20.0})
                for (double nu : {0.01, 0.05, 0.1, 0.2}) grid.push_back({{"steps", steps}, {"nu", nu}});
            break;
    }
    return grid;
}

SparsityOrder sparsity_order(GgmMethod m) {
    switch (m) {
        case GgmMethod::glasso:
            return [](const ParamMap& a, const ParamMap& b) { return param(a, "rho") > param(b, "rho"); };
        case GgmMethod::mb:
        case GgmMethod::clime:
            return [](const ParamMap& a, const ParamMap& b) { return param(a, "lambda") > param(b, "lambda"); };
        case GgmMethod::hybridmb:
            // The L1 radius bounds the candidate set: a smaller radius is sparser.
            return [](const ParamMap& a, const ParamMap& b) {
                if (param(a, "lambda") != param(b, "lambda")) return param(a, "lambda") < param(b, "lambda");
                return param_or(a, "nu", kHybridDefaultNu) > param_or(b, "nu", kHybridDefaultNu);
            };
        case GgmMethod::greedy:
            return [](const ParamMap& a, const ParamMap& b) {
                if (param(a, "steps") != param(b, "steps")) return param(a, "steps") < param(b, "steps");
                return param(a, "nu") > param(b, "nu");
            };
    }
    return {};
}

std::vector<std::string> continuous_keys(GgmMethod m) {
    switch (m) {
        case GgmMethod::glasso: return {"rho"};
        case GgmMethod::mb:
        case GgmMethod::clime: return {"lambda"};
        case GgmMethod::hybridmb: return {"lambda", "nu"};
        case GgmMethod::greedy: return {"nu"};
    }
    return {};
}

std::pair<PrecisionEstimate, TuneResult> tune_estimator(const ReturnsMatrix& r, GgmMethod m, const TuneConfig& cfg) {
    // Parallelism goes to the grid; each fit runs single-threaded.
    const Estimator est = ggm_estimator(m, 1);
    const std::vector<ParamMap> grid = cfg.grid.empty() ? default_grid(m) : cfg.grid;
    if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "grid_search: empty grid");
    TuneResult res = m == GgmMethod::glasso
                         ? glasso_path_search(r, grid, cfg.criterion, sparsity_order(m), cfg.threads, cfg.folds)
                         : grid_search(r, est, grid, cfg.criterion, sparsity_order(m), cfg.threads, cfg.folds);
    if (cfg.search == SearchMode::nelder_mead) {
        const FoldPlan plan = kfold_split(r.periods(), cfg.folds);
        auto objective = [&](const ParamMap& p) {
            try {
                return cv_objective(r, plan, est, p, cfg.criterion, cfg.threads);
            } catch (const Error&) {
                return kInf;
            }
        };
        res = nelder_mead_minimize(objective, res.best_params, continuous_keys(m), cfg.budget);
        res.criterion = cfg.criterion;
    }
    Estimate fit = ggm_estimator(m, cfg.threads)(r, res.best_params);
    return {std::get<PrecisionEstimate>(std::move(fit)), std::move(res)};
}

CovarianceEstimate tune_threshold(const ReturnsMatrix& r, ThresholdKind kind, int threads, int folds) {
    std::vector<double> grid;
    if (kind == ThresholdKind::adaptive) {
        for (int k = 0; k <= 8; ++k) grid.push_back(0.5 * k);
    } else {
        for (int k = 0; k <= 20; ++k) grid.push_back(k / 20.0);
    }
    auto fit = [kind](const ReturnsMatrix& panel, double g) {
        CovarianceEstimate s = sample_covariance(panel);
        if (kind == ThresholdKind::adaptive) return threshold_adaptive(s, panel, g);
        MatrixXd off = s.matrix;
        off.diagonal().setZero();
        const double tau = g * off.cwiseAbs().maxCoeff();
        return kind == ThresholdKind::hard ? threshold_hard(s, tau) : threshold_soft(s, tau);
    };
    const FoldPlan plan = kfold_split(r.periods(), folds);
    std::vector<double> scores(grid.size(), 0.0);
    parallel_for(grid.size(), threads, [&](std::size_t g) {
        for (int f = 0; f < plan.k; ++f) {
            const auto [b, e] = plan.fold_slices[static_cast<std::size_t>(f)];
            const MatrixXd held = covariance_of(r.slice(b, e).values());
            scores[g] += (fit(fold_complement(r, plan, f), grid[g]).matrix - held).norm();
        }
    });
    // Ties go to the larger threshold.
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g)
        if (scores[g] <= scores[best]) best = g;
    return fit(r, grid[best]);
}

}  // namespace precision_lab
