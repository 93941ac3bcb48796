#include <gtest/gtest.h>

#include <random>

#include "piezores/converter.hpp"
#include "piezores/error.hpp"
#include "piezores/io.hpp"
#include "piezores/materials.hpp"
#include "piezores/metrics.hpp"
#include "support.hpp"

using namespace piezores;

namespace {

constexpr std::uint64_t kSeed = 0x5eed2024;

std::string mutate(std::mt19937_64& rng, std::string text) {
  static const std::string alphabet = "0123456789+-.eE #!,\n\tSZRIMADBHzkKgG_xnaN\r";
  const int edits = std::uniform_int_distribution<int>(1, 8)(rng);
  for (int k = 0; k < edits; ++k) {
    const int op = std::uniform_int_distribution<int>(0, 3)(rng);
    const std::size_t pos = text.empty() ? 0 : std::uniform_int_distribution<std::size_t>(0, text.size() - 1)(rng);
    const char ch = alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
    if (op == 0 && !text.empty()) text[pos] = ch;
    else if (op == 1) text.insert(text.begin() + static_cast<std::ptrdiff_t>(std::min(pos, text.size())), ch);
    else if (op == 2 && !text.empty()) text.erase(pos, 1);
    else if (!text.empty()) text.insert(pos, text.substr(pos, std::uniform_int_distribution<std::size_t>(1, 20)(rng)));
  }
  return text;
}

std::string random_bytes(std::mt19937_64& rng) {
  std::string s(std::uniform_int_distribution<std::size_t>(0, 300)(rng), '\0');
  for (char& c : s) c = static_cast<char>(std::uniform_int_distribution<int>(0, 255)(rng));
  return s;
}

}  // namespace

TEST(Properties, RotationPreservesInvariants) {
  std::mt19937_64 rng(kSeed);
  const auto ln = materials::lithium_niobate();
  for (int trial = 0; trial < 200; ++trial) {
    const materials::CrystalCut cut(test::uniform(rng, -360.0, 360.0));
    const auto rotated = materials::rotate_constants(ln, cut);
    EXPECT_NO_THROW(rotated.validate());
    // Isotropic contractions c_iijj and c_ijij survive any rotation.
    auto invariants = [](const materials::Stiffness& c) {
      return std::pair{c.topLeftCorner<3, 3>().sum(), c.diagonal().head<3>().sum() + 2.0 * c.diagonal().tail<3>().sum()};
    };
    const auto [a0, b0] = invariants(ln.stiffness);
    const auto [a1, b1] = invariants(rotated.stiffness);
    EXPECT_LE(test::rel_err(a1, a0), 1e-12);
    EXPECT_LE(test::rel_err(b1, b0), 1e-12);
    EXPECT_LE(test::rel_err(rotated.permittivity.trace(), ln.permittivity.trace()), 1e-12);
    const auto back = materials::transform(rotated, materials::rotation_about_x(cut.theta_deg()).transpose());
    EXPECT_LE((back.stiffness - ln.stiffness).cwiseAbs().maxCoeff(), 1e-6 * ln.stiffness.cwiseAbs().maxCoeff());
    EXPECT_LE((back.piezo - ln.piezo).cwiseAbs().maxCoeff(), 1e-12 * ln.piezo.cwiseAbs().maxCoeff());
    const auto plate = materials::plate_frame(ln, cut);
    for (auto form : {materials::CouplingForm::literal, materials::CouplingForm::stiffened}) {
      const double te = materials::coupling_te(plate, form), ts = materials::coupling_ts(plate, form);
      EXPECT_GE(te, 0.0);
      EXPECT_GE(ts, 0.0);
      if (form == materials::CouplingForm::stiffened) {
        EXPECT_LT(te, 1.0);
        EXPECT_LT(ts, 1.0);
      }
    }
  }
}

TEST(Properties, BvdIsPassive) {
  std::mt19937_64 rng(kSeed + 1);
  for (int trial = 0; trial < 300; ++trial) {
    const auto m = test::random_model(rng, 1 + trial % 4);
    const auto grid = linear_grid(0.5e6, 30e6, 257);
    const auto z = bvd::impedance(m, grid);
    for (const cdouble& v : z.z_ohm) EXPECT_GE(v.real(), 0.0);
  }
}

TEST(Properties, SuppressedRegionIsBoundedAndMonotone) {
  std::mt19937_64 rng(kSeed + 2);
  for (int trial = 0; trial < 40; ++trial) {
    const double fs = test::log_uniform(rng, 1e6, 2e7);
    const double fp = fs * test::uniform(rng, 1.02, 1.3);
    const auto m = bvd::from_resonances(fs, fp, test::log_uniform(rng, 200.0, 5000.0), 1e-10);
    const auto sweep = bvd::impedance(m, linear_grid(0.95 * fs, 1.02 * fp, 4001));
    double previous = 0.0;
    for (double thr : {2.0, 5.0, 20.0, 100.0}) {
      const auto r = metrics::suppressed_region(sweep, fs, fp, thr);
      EXPECT_GE(r.f_lo, fs);
      EXPECT_LE(r.f_hi, fp);
      EXPECT_GE(r.fractional, previous - 1e-12);
      EXPECT_LE(r.fractional, 1.0);
      previous = r.fractional;
    }
  }
}

TEST(Properties, CouplingConventionsAgreeAtWeakCoupling) {
  std::mt19937_64 rng(kSeed + 3);
  for (int trial = 0; trial < 200; ++trial) {
    const double fs = test::log_uniform(rng, 1e5, 1e9);
    const double fp = fs * (1.0 + test::log_uniform(rng, 1e-6, 1e-3));
    const double a = metrics::coupling_from_freqs(fs, fp, metrics::KsqConvention::pi_squared_over_8);
    const double b = metrics::coupling_from_freqs(fs, fp, metrics::KsqConvention::mason_tangent);
    const double c = metrics::coupling_from_freqs(fs, fp, metrics::KsqConvention::parallel_ratio);
    EXPECT_GT(a, 0.0);
    EXPECT_LE(test::rel_err(b, a), 1e-2);
    EXPECT_LE(test::rel_err(c * kPi * kPi / 8.0, a), 1e-2);
    EXPECT_LE(test::rel_err(metrics::fp_from_coupling(fs, a), fp), 1e-9);
  }
}

TEST(Properties, StagePropagatorComposes) {
  std::mt19937_64 rng(kSeed + 4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = test::random_model(rng, 1, 0.01, 500.0);
    const double period = 1.0 / m.branches.front().series_freq();
    const converter::ResonatorState s{test::uniform(rng, -2, 2), test::uniform(rng, -500, 500),
                                      test::uniform(rng, -50, 50)};
    const auto st = trial % 2 ? converter::StageDef::open()
                              : converter::StageDef::clamp(converter::StageRole::input, 40.0);
    const double t1 = test::uniform(rng, 0, period), t2 = test::uniform(rng, 0, period);
    const auto a = converter::stage_evolve(converter::stage_evolve(s, st, m, t1), st, m, t2);
    const auto b = converter::stage_evolve(s, st, m, t1 + t2);
    const double scale = std::max({1.0, std::abs(b.v_cm), std::abs(b.v_c0), std::abs(b.i_l) * 1e3});
    EXPECT_LE(std::abs(a.v_cm - b.v_cm), 1e-9 * scale);
    EXPECT_LE(std::abs(a.v_c0 - b.v_c0), 1e-9 * scale);
  }
}

TEST(Properties, SerializationRoundTripsAreExact) {
  std::mt19937_64 rng(kSeed + 5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = test::random_model(rng, 1 + trial % 3);
    auto grid = linear_grid(1e6, 25e6, 64);
    const auto z = bvd::impedance(m, grid, test::log_uniform(rng, 1.0, 1000.0));
    const auto back = io::parse_csv_sweep(io::write_csv_sweep(z)).sweep;
    ASSERT_EQ(back.size(), z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
      EXPECT_EQ(back.z_ohm[k], z.z_ohm[k]);
      EXPECT_EQ(back.freq_hz[k], z.freq_hz[k]);
    }
    EXPECT_EQ(back.ref_ohm, z.ref_ohm);
    const auto m2 = io::bvd_model_from_json(io::parse_json(io::canonical(io::to_json(m))));
    for (std::size_t k = 0; k < m.branches.size(); ++k) {
      EXPECT_EQ(m2.branches[k].r_m, m.branches[k].r_m);
      EXPECT_EQ(m2.branches[k].l_m, m.branches[k].l_m);
      EXPECT_EQ(m2.branches[k].c_m, m.branches[k].c_m);
    }
    io::SweepFile ts;
    ts.sweep = z;
    const auto t1 = io::parse_touchstone_s1p(io::write_touchstone(ts));
    const auto t2 = io::parse_touchstone_s1p(io::write_touchstone(t1));
    for (std::size_t k = 0; k < z.size(); ++k) EXPECT_EQ(t2.sweep.z_ohm[k], t1.sweep.z_ohm[k]);
  }
}

TEST(Properties, ParsersAreTotal) {
  std::mt19937_64 rng(kSeed + 6);
  const std::string s1p = "! fuzz seed\n# MHZ S MA R 50\n1 0.5 10\n1.5 0.25 -30\n2 0.125 170\n";
  const std::string csv = "# ref_ohm=50\nfreq_hz,re_ohm,im_ohm\n1e6,1,2\n2e6,3,4\n3e6,5,-6\n";
  const std::string json = io::canonical(io::to_json(test::twin()));
  std::size_t structured = 0, accepted = 0;
  constexpr int kInputs = 100000;
  for (int k = 0; k < kInputs; ++k) {
    std::string text;
    switch (k % 5) {
      case 0: text = random_bytes(rng); break;
      case 1: case 2: text = mutate(rng, s1p); break;
      case 3: text = mutate(rng, csv); break;
      default: text = mutate(rng, json); break;
    }
    try {
      if (k % 5 == 4) {
        (void)io::bvd_model_from_json(io::parse_json(text));
      } else if (k % 5 == 3) {
        io::parse_csv_sweep(text).sweep.validate();
      } else if (k % 5 == 0 && (k / 5) % 2) {
        io::parse_csv_sweep(text).sweep.validate();
      } else {
        io::parse_touchstone_s1p(text).sweep.validate();
      }
      ++accepted;
    } catch (const Error&) {
      ++structured;
    } catch (const std::exception& e) {
      ADD_FAILURE() << "unstructured exception '" << e.what() << "' on input #" << k;
    }
  }
  EXPECT_EQ(structured + accepted, static_cast<std::size_t>(kInputs));
  EXPECT_GT(structured, 0u);
  EXPECT_GT(accepted, 0u);
}
