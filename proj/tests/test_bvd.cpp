#include <gtest/gtest.h>

#include <random>

#include "piezores/bvd.hpp"
#include "piezores/error.hpp"
#include "support.hpp"

using namespace piezores;
using namespace piezores::bvd;

namespace {

// Nodal analysis written separately: admittance of each element, summed.
cdouble nodal_impedance(const BvdModel& m, double f) {
  const double w = kTwoPi * f;
  cdouble y(0.0, w * m.c0);
  for (const auto& b : m.branches) {
    const cdouble zl(0.0, w * b.l_m), zc(0.0, -1.0 / (w * b.c_m));
    y += 1.0 / (b.r_m + zl + zc);
  }
  return 1.0 / y;
}

BvdModel three_branch() {
  BvdModel m;
  m.c0 = 100e-12;
  m.label = "three";
  m.branches.push_back(BvdBranch::from_resonance(10.0e6, 3000.0, 0.2));
  m.branches.push_back(BvdBranch::from_resonance(10.6e6, 800.0, 4.0));
  m.branches.push_back(BvdBranch::from_resonance(11.1e6, 1200.0, 6.0));
  return m;
}

}  // namespace

TEST(Bvd, BareCapacitor) {
  BvdModel m{47e-12, {}, "cap"};
  for (double f : {1e3, 1e6, 1e9}) {
    const cdouble want = 1.0 / cdouble(0.0, kTwoPi * f * m.c0);
    EXPECT_EQ(m.impedance(f), want);
  }
}

TEST(Bvd, SeriesResonanceLeavesOnlyResistance) {
  const auto m = test::twin();
  const auto& b = m.branches.front();
  const double ws = 1.0 / std::sqrt(b.l_m * b.c_m);
  EXPECT_LE(std::abs(b.impedance(ws) - cdouble(b.r_m, 0.0)), 1e-12 * std::abs(b.impedance(ws)) + 1e-9 * b.r_m);
  const cdouble zc = 1.0 / cdouble(0.0, ws * m.c0);
  const cdouble want = b.r_m * zc / (b.r_m + zc);
  const cdouble got = m.impedance(ws / kTwoPi);
  EXPECT_LE(std::abs(got - want) / std::abs(want), 1e-9);
}

TEST(Bvd, LowFrequencyIsCapacitive) {
  const auto m = test::twin();
  const cdouble z = m.impedance(1.0);
  EXPECT_GT(std::abs(z), 1e8);
  EXPECT_NEAR(std::arg(z), -kPi / 2, 1e-6);
}

TEST(Bvd, ClosedFormResonances) {
  const double fs = 10.14e6;
  BvdModel m;
  m.c0 = 100e-12;
  const double cm = 0.2422 * m.c0;
  m.branches.push_back({0.1, 1.0 / (std::pow(kTwoPi * fs, 2) * cm), cm});
  const auto [gfs, gfp] = resonance_freqs(m);
  EXPECT_LE(test::rel_err(gfs, fs), 1e-12);
  EXPECT_NEAR(gfp / 1e6, 11.301, 5e-4);
}

TEST(Bvd, ResonanceMonotonicity) {
  auto m = test::twin();
  const auto [fs, fp] = resonance_freqs(m);
  m.c0 *= 2.0;
  const auto [fs2, fp2] = resonance_freqs(m);
  EXPECT_DOUBLE_EQ(fs2, fs);
  EXPECT_LT(fp2, fp);
  m = test::twin();
  auto& b = m.branches.front();
  const double lc = b.l_m * b.c_m;
  b.c_m *= 1e-9;
  b.l_m = lc / b.c_m;
  const auto [fs3, fp3] = resonance_freqs(m);
  EXPECT_LE(test::rel_err(fp3, fs3), 1e-9);
}

TEST(Bvd, ResonanceFreqsNeedsOneBranch) {
  EXPECT_THROW(resonance_freqs(three_branch()), InputError);
  EXPECT_THROW(resonance_freqs(BvdModel{1e-10, {}, ""}), InputError);
}

TEST(Bvd, ValidationRejectsBadModels) {
  EXPECT_THROW((BvdModel{0.0, {}, ""}.validate()), InputError);
  BvdModel m = test::twin();
  m.branches.front().r_m = -1.0;
  EXPECT_THROW(m.validate(), InputError);
  m = test::twin();
  m.branches.push_back(m.branches.front());
  EXPECT_THROW(m.validate(), InputError);
}

TEST(Bvd, MatchesNodalOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = test::random_model(rng, 1 + trial % 4);
    for (double f : {2e5, 1.1e6, 4.7e6, 9.9e6, 3e7}) {
      const cdouble want = nodal_impedance(m, f);
      EXPECT_LE(std::abs(m.impedance(f) - want) / std::abs(want), 1e-12);
    }
  }
}

TEST(Bvd, SweepUsesGridAndReference) {
  const auto s = impedance(test::twin(), linear_grid(9e6, 12e6, 11), 75.0);
  EXPECT_EQ(s.size(), 11u);
  EXPECT_DOUBLE_EQ(s.ref_ohm, 75.0);
  EXPECT_THROW(impedance(test::twin(), std::vector<double>{0.0}), InputError);
}

TEST(Bvd, FitRecoversSingleBranch) {
  const auto truth = test::twin();
  const auto sweep = impedance(truth, linear_grid(9.5e6, 12e6, 2000));
  const auto r = fit(sweep);
  ASSERT_EQ(r.model.branches.size(), 1u);
  const auto& got = r.model.branches.front();
  const auto& want = truth.branches.front();
  EXPECT_LE(test::rel_err(r.model.c0, truth.c0), 1e-3);
  EXPECT_LE(test::rel_err(got.r_m, want.r_m), 1e-3);
  EXPECT_LE(test::rel_err(got.l_m, want.l_m), 1e-3);
  EXPECT_LE(test::rel_err(got.c_m, want.c_m), 1e-3);
  ASSERT_EQ(r.report.confidence.size(), 1u);
  EXPECT_LT(r.report.rms_log_error, 1e-6);
}

TEST(Bvd, FitRecoversThreeBranchesUnderNoise) {
  const auto truth = three_branch();
  auto sweep = impedance(truth, linear_grid(9.5e6, 12e6, 4000));
  std::mt19937_64 rng(20240611);
  std::normal_distribution<double> noise(0.0, 1e-3);
  for (auto& z : sweep.z_ohm) z *= 1.0 + noise(rng);
  const auto r = fit(sweep);
  ASSERT_EQ(r.model.branches.size(), 3u);
  for (const auto& want : truth.branches) {
    const auto it = std::min_element(r.model.branches.begin(), r.model.branches.end(), [&](const auto& a, const auto& b) {
      return std::abs(a.series_freq() - want.series_freq()) < std::abs(b.series_freq() - want.series_freq());
    });
    EXPECT_LE(test::rel_err(it->series_freq(), want.series_freq()), 1e-4);
    EXPECT_LE(test::rel_err(it->r_m, want.r_m), 0.05);
  }
}

TEST(Bvd, FitOfCapacitorHasNoBranches) {
  const BvdModel cap{220e-12, {}, "cap"};
  const auto r = fit(impedance(cap, linear_grid(1e6, 2e7, 500)));
  EXPECT_TRUE(r.model.branches.empty());
  EXPECT_LE(test::rel_err(r.model.c0, cap.c0), 1e-3);
}

TEST(Bvd, FitWithoutResonanceFails) {
  // Series R-C: conductance rises monotonically, no peak.
  ImpedanceSweep s;
  s.freq_hz = linear_grid(1e6, 2e7, 400);
  for (double f : s.freq_hz) s.z_ohm.push_back(cdouble(30.0, -1.0 / (kTwoPi * f * 1e-10)));
  EXPECT_THROW(fit(s), NotFoundError);
}

TEST(Bvd, FitNeedsFiftyPoints) {
  EXPECT_THROW(fit(impedance(test::twin(), linear_grid(9e6, 12e6, 49))), InputError);
}

TEST(Bvd, InjectSpurs) {
  const auto base = test::twin();
  EXPECT_EQ(inject_spurs(base, {}).branches.size(), 1u);
  const auto [fs, fp] = resonance_freqs(base);
  const double f_spur = 0.5 * (fs + fp);
  const std::vector<SpurSpec> spurs{{f_spur, 0.002, 1000.0}};
  const auto spurred = inject_spurs(base, spurs);
  ASSERT_EQ(spurred.branches.size(), 2u);
  EXPECT_EQ(spurred.branches.front().r_m, base.branches.front().r_m);
  EXPECT_LE(test::rel_err(spurred.branches.back().series_freq(), f_spur), 1e-12);
  EXPECT_NEAR(spurred.branches.back().quality(), 1000.0, 1e-6);

  const auto grid = linear_grid(f_spur * 0.98, f_spur * 1.02, 8001);
  const auto s = impedance(spurred, grid);
  std::size_t k_peak = 0;
  for (std::size_t k = 1; k + 1 < s.size(); ++k)
    if (s.z_ohm[k].real() > s.z_ohm[k - 1].real() && s.z_ohm[k].real() >= s.z_ohm[k + 1].real()) {
      if (k_peak == 0 || s.z_ohm[k].real() > s.z_ohm[k_peak].real()) k_peak = k;
    }
  ASSERT_GT(k_peak, 0u);
  EXPECT_LE(test::rel_err(grid[k_peak], f_spur), 1e-3);

  const std::vector<SpurSpec> dup{{fs, 0.01, 500.0}};
  EXPECT_THROW(inject_spurs(base, dup), InputError);
  const std::vector<SpurSpec> twice{{f_spur, 0.01, 500.0}, {f_spur, 0.02, 600.0}};
  EXPECT_THROW(inject_spurs(base, twice), InputError);
}

TEST(Bvd, RefitRecoversSpur) {
  const auto base = test::twin();
  const auto [fs, fp] = resonance_freqs(base);
  const double f_spur = 0.5 * (fs + fp);
  const std::vector<SpurSpec> spurs{{f_spur, 0.002, 1000.0}};
  const auto r = fit(impedance(inject_spurs(base, spurs), linear_grid(9.5e6, 12e6, 4000)));
  ASSERT_GE(r.model.branches.size(), 2u);
  double best = 1.0;
  for (const auto& b : r.model.branches) best = std::min(best, test::rel_err(b.series_freq(), f_spur));
  EXPECT_LE(best, 0.01);
}
