#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "piezores/io.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace piezores;

namespace {

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(PIEZORES_CLI) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return {-1, {}};
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("piezores_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string out(const std::string& sub = {}) const { return "--out " + (dir / sub).string(); }
  std::string file(const std::string& name) const { return io::read_text(dir / name); }
  fs::path dir;
};

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_F(Cli, CutScanIsDeterministic) {
  const auto a = run(out("a") + " cut-scan --step 0.1");
  ASSERT_EQ(a.code, 0) << a.out;
  const auto b = run(out("b") + " cut-scan --step 0.1");
  ASSERT_EQ(b.code, 0) << b.out;
  const auto csv = file("a/cut_scan.csv");
  EXPECT_EQ(csv, file("b/cut_scan.csv"));
  EXPECT_EQ(file("a/cut_scan_summary.json"), file("b/cut_scan_summary.json"));
  const auto rows = read_csv(csv);
  ASSERT_EQ(rows.size(), 1802u);
  EXPECT_EQ(rows.front(), (std::vector<std::string>{"theta_deg", "k33_sq", "k35_sq"}));
  const double null_deg = std::stod(a.out.substr(a.out.find("crossing:") + 9));
  EXPECT_GE(null_deg, 31.0);
  EXPECT_LE(null_deg, 41.0);
}

TEST_F(Cli, MasonSweepFeedsScore) {
  const auto m = run(out() + " mason --points 2001");
  ASSERT_EQ(m.code, 0) << m.out;
  const auto s = run(out() + " score --input " + (dir / "mason_sweep.csv").string());
  ASSERT_EQ(s.code, 0) << s.out;
  const auto report = io::parse_json(file("score_report.json"));
  EXPECT_GT(report["fs_hz"].get<double>(), 0.85 * 10.14e6);
  EXPECT_LT(report["fs_hz"].get<double>(), 1.15 * 10.14e6);
}

TEST_F(Cli, ScoreOfTwin) {
  const auto r = run(out() + " score --input " PIEZORES_DATA_DIR "/twin_sweep.s1p");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto report = io::parse_json(file("score_report.json"));
  EXPECT_NEAR(report["fom"].get<double>(), 1200.0, 60.0);
  EXPECT_EQ(report["threshold_multiplier"].get<double>(), 20.0);
  EXPECT_EQ(report["schema_version"], "1");
  const auto plot = read_csv(file("score_plot.csv"));
  EXPECT_GT(plot.size(), 1000u);
}

TEST_F(Cli, CapacitorIsResonanceNotFound) {
  std::ostringstream csv;
  csv << "freq_hz,re_ohm,im_ohm\n";
  for (int k = 1; k <= 200; ++k) {
    const double f = 1e5 * k;
    csv << f << ",0," << -1.0 / (kTwoPi * f * 1e-10) << "\n";
  }
  io::write_text(dir / "cap.csv", csv.str());
  const auto r = run(out() + " score --input " + (dir / "cap.csv").string());
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("cap.csv"), std::string::npos) << r.out;
}

TEST_F(Cli, InputErrorsExitOne) {
  EXPECT_EQ(run(out() + " score --input " + (dir / "missing.s1p").string()).code, 1);
  EXPECT_EQ(run(out() + " cut-scan --step -1").code, 1);
  EXPECT_EQ(run(out() + " score --threshold 0.5").code, 1);
  EXPECT_EQ(run(out() + " no-such-command").code, 1);
}

TEST_F(Cli, FitWritesModel) {
  const auto r = run(out() + " fit --input " PIEZORES_DATA_DIR "/twin_sweep.s1p");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto model = io::bvd_model_from_json(io::parse_json(file("fit_model.json")));
  ASSERT_EQ(model.branches.size(), 1u);
  EXPECT_LE(test::rel_err(model.branches[0].series_freq(), 10.14e6), 1e-6);
}

TEST_F(Cli, CompareRanksTwinFirst) {
  const auto r = run(out() + " compare --bvd " PIEZORES_DATA_DIR "/twin_bvd.json --label twin");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rows = read_csv(file("compare.csv"));
  ASSERT_GE(rows.size(), 3u);
  EXPECT_EQ(rows[1][1], "twin");
  EXPECT_EQ(rows[2][1], "LN TE 10.14 MHz ring");
}

TEST_F(Cli, ConverterWaveformIsNearSinusoidal) {
  const auto r = run(out() + " converter --vin 40 --vout 30 --grid-points 10");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rows = read_csv(file("waveform.csv"));
  ASSERT_EQ(rows.front(), (std::vector<std::string>{"t_s", "i_l_a", "v_cm_v", "v_c0_v", "stage_index"}));
  ASSERT_GE(rows.size(), 201u);
  std::vector<double> i;
  for (std::size_t k = 1; k < rows.size(); ++k) i.push_back(std::stod(rows[k][1]));
  // Plain DFT of the sampled period.
  const std::size_t n = i.size();
  double fundamental = 0.0, harmonics = 0.0;
  for (std::size_t h = 1; h < n / 2; ++h) {
    cdouble acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += i[k] * std::polar(1.0, -kTwoPi * double(h * k) / double(n));
    const double p = std::norm(acc);
    (h == 1 ? fundamental : harmonics) += p;
  }
  EXPECT_LT(std::sqrt(harmonics / fundamental), 0.15);
  const auto pss = io::parse_json(file("pss_report.json"));
  EXPECT_LT(pss["periodicity_residual"].get<double>(), 1e-9);
  EXPECT_EQ(read_csv(file("power_sweep.csv")).size(), 11u);
}

TEST_F(Cli, ConvergenceFailureExitsTwo) {
  io::write_text(dir / "cfg.json", R"({"solver": {"max_iterations": 1, "tolerance": 1e-14}})");
  const auto r = run(out() + " --config " + (dir / "cfg.json").string() + " converter");
  EXPECT_EQ(r.code, 2) << r.out;
}
