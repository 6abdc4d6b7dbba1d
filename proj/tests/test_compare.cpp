#include "precision_lab/compare.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

using namespace precision_lab;
using namespace precision_lab::testing;

namespace {

std::vector<LossSeries> to_series(const MatrixXd& losses) {
    std::vector<LossSeries> out;
    for (Index m = 0; m < losses.cols(); ++m) {
        LossSeries s;
        s.method = "m" + std::to_string(m);
        s.losses.assign(losses.col(m).data(), losses.col(m).data() + losses.rows());
        out.push_back(std::move(s));
    }
    return out;
}

/// iid N(1, 0.1^2) losses for m models; `shift` adds 5 sigma to the listed model.
MatrixXd normal_losses(Index n, Index m, std::uint64_t seed, Index shifted = -1) {
    MatrixXd l = (gaussian_matrix(n, m, seed) * 0.1).array() + 1.0;
    if (shifted >= 0) l.col(shifted).array() += 0.5;
    return l;
}

VectorXd ar1(Index n, double phi, std::uint64_t seed) {
    const VectorXd e = gaussian_matrix(n + 100, 1, seed).col(0);
    VectorXd y(n + 100);
    y(0) = e(0);
    for (Index t = 1; t < n + 100; ++t) y(t) = phi * y(t - 1) + e(t);
    return y.tail(n);
}

}  // namespace

TEST_CASE("loss differentials") {
    const MatrixXd l = gaussian_matrix(30, 4, 1);
    const LossDifferentials d = LossDifferentials::from_series(to_series(l));
    for (Index i = 0; i < 4; ++i) {
        VectorXd acc = VectorXd::Zero(30);
        for (Index j = 0; j < 4; ++j) {
            CHECK(d.pairwise(i, j) == -d.pairwise(j, i));
            if (j != i) acc += d.pairwise(i, j);
        }
        CHECK(max_abs_diff(d.relative(i), acc / 3.0) < 1e-14);
    }
    auto bad = to_series(l);
    bad[2].losses.pop_back();
    CHECK_THROWS_AS(LossDifferentials::from_series(bad), Error);
}

TEST_CASE("AR block length") {
    LossDifferentials zero;
    zero.models = {"a", "b"};
    zero.losses = MatrixXd::Ones(100, 2);
    CHECK(ar_block_length(zero) == 1);

    int white_ones = 0, ar_ones = 0;
    for (std::uint64_t rep = 0; rep < 100; ++rep) {
        LossDifferentials d;
        d.models = {"a", "b"};
        d.losses = gaussian_matrix(500, 2, 1000 + rep);
        white_ones += ar_block_length(d) == 1 ? 1 : 0;

        const VectorXd y = ar1(500, 0.8, 2000 + rep);
        const int lags = ar_significant_lags(y);
        CHECK(lags >= 1);
        ar_ones += lags == 1 ? 1 : 0;
    }
    MESSAGE("white noise block 1: " << white_ones << "/100, AR(1) one lag: " << ar_ones << "/100");
    CHECK(white_ones >= 90);
    CHECK(ar_ones >= 50);
    CHECK_THROWS_AS(ar_significant_lags(VectorXd::Zero(20), 10), Error);
}

TEST_CASE("block bootstrap indices") {
    const auto whole = block_bootstrap_indices(10, 10, 3);
    for (Index k = 1; k < 10; ++k) CHECK(whole[static_cast<std::size_t>(k)] == (whole[0] + k) % 10);

    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const Index t = 5 + static_cast<Index>(seed % 50);
        const Index b = 1 + static_cast<Index>(seed % static_cast<std::uint64_t>(t));
        const auto idx = block_bootstrap_indices(t, b, seed);
        CHECK(static_cast<Index>(idx.size()) == t);
        CHECK(*std::min_element(idx.begin(), idx.end()) >= 0);
        CHECK(*std::max_element(idx.begin(), idx.end()) < t);
    }
    CHECK(block_bootstrap_indices(50, 3, 9) == block_bootstrap_indices(50, 3, 9));
    CHECK(block_bootstrap_indices(50, 3, 9) != block_bootstrap_indices(50, 3, 10));

    // block = 1: iid draws, so consecutive pairs follow each other only by chance (~1/T).
    const auto iid = block_bootstrap_indices(1000, 1, 4);
    int runs = 0;
    for (std::size_t k = 1; k < iid.size(); ++k) runs += iid[k] == (iid[k - 1] + 1) % 1000 ? 1 : 0;
    CHECK(runs < 10);
    CHECK_THROWS_AS(block_bootstrap_indices(10, 11, 1), Error);
}

TEST_CASE("stationary bootstrap indices") {
    const auto idx = stationary_bootstrap_indices(100000, 4.0, 5);
    CHECK(idx.size() == 100000);
    std::size_t blocks = 1;
    for (std::size_t k = 1; k < idx.size(); ++k) blocks += idx[k] == (idx[k - 1] + 1) % 100000 ? 0 : 1;
    const double mean_run = 100000.0 / static_cast<double>(blocks);
    CHECK(mean_run == doctest::Approx(4.0).epsilon(0.05));

    const auto iid = stationary_bootstrap_indices(1000, 1.0, 6);
    int runs = 0;
    for (std::size_t k = 1; k < iid.size(); ++k) runs += iid[k] == (iid[k - 1] + 1) % 1000 ? 1 : 0;
    CHECK(runs < 10);
    for (Index v : stationary_bootstrap_indices(37, 3.0, 7)) CHECK((v >= 0 && v < 37));
    CHECK_THROWS_AS(stationary_bootstrap_indices(10, 0.5, 1), Error);
}

TEST_CASE("MCS trivial cases") {
    McsOptions opt;
    opt.n_boot = 200;
    const auto one = mcs_run(to_series(normal_losses(50, 1, 1)), opt);
    CHECK(one.ssm.size() == 1);
    CHECK(one.mcs_pvalues.at("m0") == 1.0);

    MatrixXd same(60, 2);
    same.col(0) = normal_losses(60, 1, 2).col(0);
    same.col(1) = same.col(0);
    for (McsStatistic k : {McsStatistic::t_max, McsStatistic::t_r}) {
        opt.statistic = k;
        const auto r = mcs_run(to_series(same), opt);
        CHECK(r.ssm.size() == 2);
        CHECK(r.mcs_pvalues.at("m0") == 1.0);
        CHECK(r.mcs_pvalues.at("m1") == 1.0);
    }
    opt.n_boot = 50;
    CHECK_THROWS_AS(mcs_run(to_series(same), opt), Error);
}

TEST_CASE("MCS size, power and p-value monotonicity") {
    for (McsStatistic k : {McsStatistic::t_max, McsStatistic::t_r}) {
        int kept = 0, first_out = 0;
        for (std::uint64_t rep = 0; rep < 100; ++rep) {
            McsOptions opt;
            opt.statistic = k;
            opt.n_boot = 500;
            opt.seed = rep;
            const auto null = mcs_run(to_series(normal_losses(250, 5, 3000 + rep)), opt);
            kept += null.ssm.size() == 5 ? 1 : 0;
            const auto alt = mcs_run(to_series(normal_losses(250, 5, 4000 + rep, 3)), opt);
            first_out += alt.eliminated.front().model == "m3" ? 1 : 0;
            for (const auto* r : {&null, &alt}) {
                double prev = 0.0;
                for (const auto& e : r->eliminated) {
                    CHECK(r->mcs_pvalues.at(e.model) >= prev);
                    prev = r->mcs_pvalues.at(e.model);
                }
            }
        }
        MESSAGE("statistic " << static_cast<int>(k) << ": null kept " << kept << "/100, shifted first out "
                             << first_out << "/100");
        CHECK(kept >= 90);
        CHECK(first_out >= 95);
    }
}

TEST_CASE("MCS nesting, determinism and thread invariance") {
    const auto series = to_series(normal_losses(200, 6, 77, 2));
    for (int rep = 0; rep < 5; ++rep) {
        MatrixXd l = normal_losses(200, 6, 500 + static_cast<std::uint64_t>(rep));
        l.col(1).array() += 0.03;
        l.col(4).array() += 0.06;
        const auto s = to_series(l);
        McsOptions a;
        a.n_boot = 300;
        a.alpha = 0.2;
        McsOptions b = a;
        b.alpha = 0.05;
        const auto wide = mcs_run(s, b), narrow = mcs_run(s, a);
        const std::set<std::string> w(wide.ssm.begin(), wide.ssm.end());
        for (const auto& name : narrow.ssm) CHECK(w.count(name) == 1);
    }
    McsOptions opt;
    opt.n_boot = 300;
    opt.seed = 11;
    const auto r1 = mcs_run(series, opt);
    opt.threads = 4;
    const auto r2 = mcs_run(series, opt);
    CHECK(r1.mcs_pvalues == r2.mcs_pvalues);
    CHECK(r1.v == r2.v);
    CHECK(r1.ssm == r2.ssm);
}

TEST_CASE("SPA behaviour") {
    int best_high = 0, dominated_low = 0;
    for (std::uint64_t rep = 0; rep < 100; ++rep) {
        SpaOptions opt;
        opt.n_boot = 500;
        opt.seed = rep;
        MatrixXd l = normal_losses(250, 4, 6000 + rep);
        // Benchmark m0 is the pointwise minimum minus a constant.
        l.col(0) = l.rightCols(3).rowwise().minCoeff().array() - 0.05;
        const auto best = spa_test(to_series(l), "m0", opt);
        best_high += best.p_value >= 0.9 ? 1 : 0;
        CHECK(best.p_lower <= best.p_value);
        CHECK(best.p_value <= best.p_upper);

        const auto dom = spa_test(to_series(normal_losses(250, 4, 7000 + rep, 0)), "m0", opt);
        dominated_low += dom.p_value < 0.05 ? 1 : 0;
        CHECK(dom.p_lower <= dom.p_value);
        CHECK(dom.p_value <= dom.p_upper);
    }
    CHECK(best_high >= 95);
    CHECK(dominated_low >= 95);

    MatrixXd same(80, 3);
    for (Index m = 0; m < 3; ++m) same.col(m) = normal_losses(80, 1, 8).col(0);
    const auto flat = spa_test(to_series(same), "m1", {});
    CHECK(flat.statistic == 0.0);
    CHECK(flat.p_value == 1.0);
    CHECK_THROWS_AS(spa_test(to_series(same), "zz", {}), Error);
}

TEST_CASE("MCS report layout") {
    McsOptions opt;
    opt.n_boot = 200;
    const auto rows = mcs_report(to_series(normal_losses(120, 3, 9, 1)), opt);
    REQUIRE(rows.size() == 3);
    for (std::size_t k = 0; k < rows.size(); ++k) CHECK(rows[k].rank_m == static_cast<int>(k + 1));
    const std::string text = format_mcs_report(rows);
    CHECK(text.rfind("Model,Rank_M,v_M,MCS_M,Rank_R,v_R,MCS_R\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}
