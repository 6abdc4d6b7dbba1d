#include "precision_lab/covariance.hpp"
#include "precision_lab/portfolio.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <numeric>
#include <random>

using namespace precision_lab;
using namespace precision_lab::testing;

namespace {

CovarianceEstimate as_cov(const MatrixXd& s) {
    CovarianceEstimate c;
    c.matrix = s;
    c.method = "given";
    return c;
}

/// Minimizes w' S w subject to 1'w = 1 through the bordered KKT system.
VectorXd kkt_weights(const MatrixXd& s) {
    const Index p = s.rows();
    MatrixXd k = MatrixXd::Zero(p + 1, p + 1);
    k.topLeftCorner(p, p) = 2.0 * s;
    k.block(0, p, p, 1).setOnes();
    k.block(p, 0, 1, p).setOnes();
    VectorXd rhs = VectorXd::Zero(p + 1);
    rhs(p) = 1.0;
    return gauss_jordan_inverse(k).col(p).head(p) * rhs(p);
}

ReturnsMatrix dated(const MatrixXd& x) {
    std::vector<std::string> dates, tickers;
    for (Index t = 0; t < x.rows(); ++t) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "2020-%02d-%02d", static_cast<int>(1 + t / 28), static_cast<int>(1 + t % 28));
        dates.emplace_back(buf);
    }
    for (Index j = 0; j < x.cols(); ++j) tickers.push_back("A" + std::to_string(j));
    return ReturnsMatrix(x, dates, tickers);
}

}  // namespace

TEST_CASE("minimum-variance weights closed forms") {
    const auto w = min_variance_weights(make_precision(MatrixXd::Identity(4, 4), "id"));
    CHECK(max_abs_diff(w.weights, VectorXd::Constant(4, 0.25)) < 1e-15);
    MatrixXd d = MatrixXd::Zero(2, 2);
    d.diagonal() << 1.0, 2.0;
    const auto wd = min_variance_weights(as_cov(d));
    CHECK(wd.weights(0) == doctest::Approx(2.0 / 3.0));
    CHECK(wd.weights(1) == doctest::Approx(1.0 / 3.0));
    CHECK_FALSE(wd.repaired);
}

TEST_CASE("minimum-variance weights match the KKT oracle") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const MatrixXd s = random_spd(10, seed);
        const VectorXd expect = kkt_weights(s);
        const auto w = min_variance_weights(as_cov(s));
        CHECK(max_abs_diff(w.weights, expect) < 1e-8);
        const auto wp = min_variance_weights(make_precision(s.inverse(), "inv"));
        CHECK(max_abs_diff(wp.weights, expect) < 1e-8);
        CHECK(std::abs(w.weights.sum() - 1.0) < 1e-10);
        const auto scaled = min_variance_weights(as_cov(37.5 * s));
        CHECK(max_abs_diff(scaled.weights, w.weights) < 1e-12);
    }
}

TEST_CASE("minimum-variance weights beat every feasible portfolio") {
    const MatrixXd s = random_spd(8, 77);
    const VectorXd w = min_variance_weights(as_cov(s)).weights;
    const double best = w.dot(s * w);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    for (int k = 0; k < 1000; ++k) {
        VectorXd v(8);
        for (Index i = 0; i < 8; ++i) v(i) = nd(rng);
        v.array() += (1.0 - v.sum()) / 8.0;
        CHECK(best <= v.dot(s * v) + 1e-14);
    }
}

TEST_CASE("indefinite covariance is repaired and flagged") {
    MatrixXd s(3, 3);
    s << 1.0, 0.9, 0.9, 0.9, 1.0, -0.9, 0.9, -0.9, 1.0;
    REQUIRE(min_eigenvalue(s) < 0.0);
    const auto w = min_variance_weights(as_cov(s));
    CHECK(w.repaired);
    CHECK(std::abs(w.weights.sum() - 1.0) < 1e-10);
    CHECK(w.weights.allFinite());

    MatrixXd zero_sum(2, 2);
    zero_sum << 1.0, -1.0, -1.0, 1.0;
    try {
        min_variance_weights(make_precision(zero_sum, "z"));
        FAIL("expected DegenerateDenominator");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateDenominator);
    }
}

TEST_CASE("equal weights") {
    CHECK(equal_weights(1).weights(0) == 1.0);
    CHECK(max_abs_diff(equal_weights(4).weights, VectorXd::Constant(4, 0.25)) == 0.0);
    for (Index p = 1; p <= 500; ++p) CHECK(std::abs(equal_weights(p).weights.sum() - 1.0) < 1e-12);
    CHECK_THROWS_AS(equal_weights(0), Error);
}

TEST_CASE("realized_loss") {
    PortfolioWeights w = equal_weights(2);
    MatrixXd t(2, 2);
    t << 1, -1, -1, 1;
    CHECK(realized_loss(w, t) == 0.0);
    CHECK(realized_loss(w, MatrixXd::Constant(5, 2, 0.2)) < 1e-30);
    MatrixXd one(1, 2);
    one << 0.02, 0.04;
    CHECK(realized_loss(w, one) == doctest::Approx(0.03 * 0.03));

    const MatrixXd x = gaussian_matrix(20, 6, 3);
    w.weights = gaussian_matrix(6, 1, 4).col(0);
    w.weights /= w.weights.sum();
    double mean = 0.0, zero = 0.0;
    std::vector<double> port(20);
    for (Index r = 0; r < 20; ++r) {
        for (Index j = 0; j < 6; ++j) port[static_cast<std::size_t>(r)] += x(r, j) * w.weights(j);
        mean += port[static_cast<std::size_t>(r)] / 20.0;
        zero += port[static_cast<std::size_t>(r)] * port[static_cast<std::size_t>(r)] / 20.0;
    }
    double var = 0.0;
    for (double v : port) var += (v - mean) * (v - mean) / 19.0;
    CHECK(std::abs(realized_loss(w, x) - var) < 1e-12);
    CHECK(std::abs(realized_loss(w, x, LossConvention::about_zero) - zero) < 1e-12);
    CHECK_THROWS_AS(realized_loss(w, gaussian_matrix(3, 5, 1)), Error);
}

TEST_CASE("single-window backtest is the composition of fit, weights and loss") {
    const ReturnsMatrix r = dated(gaussian_matrix(31, 4, 6));
    BacktestInput in{r, {30, 1, Horizon::daily}, nullptr, 1};
    const auto out = backtest(in, {make_method("sample", {})});
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].losses.size() == 1);
    const auto w = min_variance_weights(sample_covariance(r.slice(0, 30)));
    const double direct = realized_loss(w, r.slice(30, 31));
    CHECK(out[0].losses[0] == doctest::Approx(direct).epsilon(1e-14));
    CHECK(out[0].timestamps[0] == r.dates()[30]);
}

TEST_CASE("backtest window arithmetic, intra-day losses and EWP") {
    const ReturnsMatrix r = dated(gaussian_matrix(200, 5, 7) * 0.01);
    BacktestInput daily{r, {150, 1, Horizon::daily}, nullptr, 1};
    const auto d = backtest(daily, {make_method("ewp", {}), make_method("lwl", {})});
    CHECK(d[0].losses.size() == 50);
    CHECK(d[0].losses == backtest(daily, {make_method("ewp", {})})[0].losses);

    BacktestInput weekly{r, {30, 1, Horizon::weekly}, nullptr, 2};
    const auto wk = backtest(weekly, {make_method("ewp", {})});
    CHECK(wk[0].losses.size() == 200 / 5 - 30);
    // First weekly window tests on daily rows [150, 155) about zero.
    const double expect = realized_loss(equal_weights(5), r.slice(150, 155), LossConvention::about_zero);
    CHECK(wk[0].losses[0] == doctest::Approx(expect).epsilon(1e-14));
    CHECK(wk[0].timestamps[0] == r.dates()[154]);

    IntradayReturns intra;
    intra.by_day[r.dates()[150]] = gaussian_matrix(12, 5, 8);
    daily.intraday = &intra;
    const auto di = backtest(daily, {make_method("ewp", {})});
    CHECK(di[0].losses[0] == doctest::Approx(realized_loss(equal_weights(5), intra.by_day[r.dates()[150]])));
    CHECK(di[0].losses[1] == d[0].losses[1]);
}

TEST_CASE("backtest failure handling") {
    const ReturnsMatrix r = dated(gaussian_matrix(40, 3, 9));
    BacktestInput in{r, {30, 1, Horizon::daily}, nullptr, 1};
    const BacktestMethod odd_fail{"odd", [](const ReturnsMatrix& train) {
                                      if (train.values()(0, 0) > 0.0) throw Error(ErrorKind::SingularInput, "x");
                                      return equal_weights(train.assets());
                                  }};
    const BacktestMethod odd_fail_too{"odd2", odd_fail.fit};
    const auto both = backtest(in, {odd_fail, odd_fail_too});
    std::size_t expected = 0;
    for (Index k = 0; k < 10; ++k) expected += r.values()(k, 0) > 0.0 ? 0 : 1;
    CHECK(both[0].losses.size() == expected);
    CHECK(both[1].losses.size() == expected);
    CHECK_THROWS_AS(backtest(in, {odd_fail, make_method("ewp", {})}), Error);
    CHECK_THROWS_AS(make_method("nope", {}), Error);
}

TEST_CASE("backtest is identical across worker counts") {
    const ReturnsMatrix r = dated(gaussian_matrix(120, 6, 10));
    BacktestInput in{r, {100, 1, Horizon::daily}, nullptr, 1};
    const std::vector<BacktestMethod> ms{make_method("lwl", {}), make_method("glasso1", {}), make_method("hard", {})};
    const auto a = backtest(in, ms);
    in.threads = 4;
    const auto b = backtest(in, ms);
    for (std::size_t m = 0; m < ms.size(); ++m) CHECK(a[m].losses == b[m].losses);
}

TEST_CASE("fit_method criterion suffix") {
    const ReturnsMatrix r = dated(gaussian_matrix(100, 5, 11));
    TuneResult t1, t2;
    fit_method("mb1", r, {}, &t1);
    fit_method("mb2", r, {}, &t2);
    CHECK(t1.criterion == Criterion::cv1);
    CHECK(t2.criterion == Criterion::cv2);
    for (const auto& id : known_methods()) {
        if (id == "ewp") continue;
        const Estimate e = fit_method(id, r, {});
        CHECK(std::abs(min_variance_weights(e).weights.sum() - 1.0) < 1e-10);
    }
}

TEST_CASE("true-covariance weights lower-bound estimator losses on average") {
    const Index p = 20;
    MatrixXd sigma = random_spd(p, 12, 0.2);
    const VectorXd scale = VectorXd::LinSpaced(p, 0.5, 2.0);
    sigma = scale.asDiagonal() * sigma * scale.asDiagonal() * 1e-4;
    const ReturnsMatrix r = dated(mvn_panel(sigma, 60 + 200, 13));
    const BacktestMethod oracle{"oracle", [&](const ReturnsMatrix&) {
                                    return min_variance_weights(as_cov(sigma));
                                }};
    BacktestInput in{r, {60, 1, Horizon::daily}, nullptr, 1};
    const auto out = backtest(in, {oracle, make_method("sample", {}), make_method("lwl", {}), make_method("ewp", {}),
                                   make_method("oas", {})});
    const auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
    REQUIRE(out[0].losses.size() == 200);
    for (std::size_t m = 1; m < out.size(); ++m) {
        INFO(out[m].method);
        CHECK(mean(out[0].losses) <= mean(out[m].losses));
    }
}
