#include "test_support.hpp"

#include <doctest.h>
#include <fmt/format.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

using namespace precision_lab;
namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "precision_lab_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

/// Runs the CLI with stderr discarded and returns its exit status.
int run(const std::string& args) {
    const std::string cmd = fmt::format("\"{}\" -q {} 2>/dev/null >/dev/null", PRECISION_LAB_CLI, args);
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string write_file(const std::string& name, const std::string& text) {
    const fs::path p = scratch() / name;
    std::ofstream(p, std::ios::binary) << text;
    return p.string();
}

/// Returns panel with `rows` trading days (2020-MM-DD, days 1..28) and p tickers.
std::string returns_panel(const std::string& name, Index rows, Index p, std::uint64_t seed) {
    const MatrixXd x = 0.01 * testing::gaussian_matrix(rows, p, seed);
    std::string text = "date";
    for (Index j = 0; j < p; ++j) text += fmt::format(",T{}", j);
    text += "\n";
    for (Index t = 0; t < rows; ++t) {
        text += fmt::format("{:04}-{:02}-{:02}", 2020 + t / 336, 1 + (t % 336) / 28, 1 + t % 28);
        for (Index j = 0; j < p; ++j) text += fmt::format(",{}", x(t, j));
        text += "\n";
    }
    return write_file(name, text);
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::vector<std::string> out;
    std::istringstream in(slurp(p));
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

/// Every regular file under dir except the manifest, keyed by name.
std::map<std::string, std::string> outputs(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "manifest.ini") out[e.path().filename().string()] = slurp(e.path());
    return out;
}

std::string out_dir(const std::string& name) { return (scratch() / name).string(); }

}  // namespace

TEST_CASE("exit codes separate configuration, data and success") {
    const std::string data = returns_panel("small.csv", 60, 3, 1);
    CHECK(run(fmt::format("estimate --data {} --out {}", data, out_dir("ok"))) == 0);
    CHECK(run(fmt::format("estimate --data {} --methods nosuch --out {}", data, out_dir("bad_method"))) == 2);
    CHECK(run(fmt::format("estimate --data {} --set run.color=1 --out {}", data, out_dir("bad_key"))) == 2);
    CHECK(run(fmt::format("estimate --data {} --out {}", (scratch() / "missing.csv").string(), out_dir("missing"))) == 3);
    CHECK(run(fmt::format("estimate --data {} --out {}", write_file("garbled.csv", "date,A\nyesterday,x\n"),
                          out_dir("garbled"))) == 3);
    CHECK(run("frobnicate") == 2);
    // d must divide every half size n/2.
    CHECK(run(fmt::format("synth --set synth.sizes=20 --set synth.d=3 --out {}", out_dir("bad_d"))) == 2);
}

TEST_CASE("estimate writes one matrix file per method plus weights and manifest") {
    const std::string data = returns_panel("est.csv", 80, 4, 2);
    const std::string dir = out_dir("est");
    REQUIRE(run(fmt::format("estimate --data {} --methods sample,glasso1 --out {}", data, dir)) == 0);
    CHECK(fs::exists(fs::path(dir) / "sigma_sample.csv"));
    CHECK(fs::exists(fs::path(dir) / "theta_glasso1.csv"));
    CHECK(fs::exists(fs::path(dir) / "manifest.ini"));
    const auto weights = lines_of(fs::path(dir) / "weights.csv");
    CHECK(weights.size() == 1 + 2 * 4);
    const auto sigma = lines_of(fs::path(dir) / "sigma_sample.csv");
    CHECK(sigma.size() == 1 + 4);
    CHECK(sigma[0] == "ticker,T0,T1,T2,T3");
}

TEST_CASE("backtest row count is windows times methods and threads do not change bytes") {
    const std::string data = returns_panel("bt.csv", 200, 4, 3);
    const std::string one = out_dir("bt1");
    const std::string four = out_dir("bt4");
    const std::string args = fmt::format("backtest --data {} --methods sample,lwl,glasso1,ewp --window 150", data);
    REQUIRE(run(fmt::format("{} --threads 1 --out {}", args, one)) == 0);
    REQUIRE(run(fmt::format("{} --threads 4 --out {}", args, four)) == 0);
    const auto losses = lines_of(fs::path(one) / "losses.csv");
    // 200 rows, window 150, daily horizon and step 1: 50 windows.
    CHECK(losses.size() == 1 + 50 * 4);
    CHECK(losses[0] == "timestamp,method,loss");
    CHECK(outputs(one) == outputs(four));
    CHECK(slurp(fs::path(one) / "manifest.ini") == slurp(fs::path(four) / "manifest.ini"));

    SUBCASE("replay reproduces the outputs byte for byte") {
        const std::string again = out_dir("bt_replay");
        REQUIRE(run(fmt::format("replay {} --out {} --threads 2", (fs::path(one) / "manifest.ini").string(), again)) == 0);
        CHECK(outputs(one) == outputs(again));
        CHECK(slurp(fs::path(one) / "manifest.ini") == slurp(fs::path(again) / "manifest.ini"));
    }

    SUBCASE("compare is thread independent and retains identical duplicated series") {
        const std::string losses_path = (fs::path(one) / "losses.csv").string();
        const std::string c1 = out_dir("cmp1");
        const std::string c3 = out_dir("cmp3");
        const std::string cargs = fmt::format("compare {} --n-boot 300 --seed 5", losses_path);
        REQUIRE(run(fmt::format("{} --threads 1 --out {}", cargs, c1)) == 0);
        REQUIRE(run(fmt::format("{} --threads 3 --out {}", cargs, c3)) == 0);
        CHECK(outputs(c1) == outputs(c3));
        CHECK(fs::exists(fs::path(c1) / "mcs.csv"));
        CHECK(lines_of(fs::path(c1) / "spa.csv")[0] == "Benchmark,Statistic,p_lower,p_consistent,p_upper");

        // Two copies of one method's losses: every copy has the same loss, so the whole set survives.
        std::string dup = "timestamp,method,loss\n";
        for (const auto& line : losses)
            if (line.find(",sample,") != std::string::npos) dup += line + "\n";
        std::string twin = dup;
        for (std::size_t at = twin.find(",sample,"); at != std::string::npos; at = twin.find(",sample,", at + 1))
            twin.replace(at, 8, ",twin00,");
        const std::string a = write_file("dup_a.csv", dup);
        const std::string b = write_file("dup_b.csv", twin);
        const std::string cd = out_dir("cmp_dup");
        REQUIRE(run(fmt::format("compare {} {} --n-boot 200 --out {}", a, b, cd)) == 0);
        const auto mcs = lines_of(fs::path(cd) / "mcs.csv");
        REQUIRE(mcs.size() == 3);
        for (std::size_t i = 1; i < mcs.size(); ++i) {
            // Model,Rank_M,v_M,MCS_M,...: an MCS p-value at or above alpha means retained.
            std::vector<std::string> cells;
            std::istringstream row(mcs[i]);
            for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
            REQUIRE(cells.size() == 7);
            CHECK(std::stod(cells[3]) >= 0.05);
        }
    }
}

TEST_CASE("synth complexity oracle curve is flat at the ladder start") {
    const std::string dir = out_dir("synth_oracle");
    REQUIRE(run(fmt::format("synth --methods oracle --set synth.sizes=10,20 --set synth.criteria=cv1 --out {}", dir)) ==
            0);
    const auto rows = lines_of(fs::path(dir) / "complexity.csv");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == "method,criterion,n,m_star,status");
    CHECK(rows[1] == "oracle,cv1,10,32,ok");
    CHECK(rows[2] == "oracle,cv1,20,32,ok");
}
