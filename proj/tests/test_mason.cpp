#include <gtest/gtest.h>

#include <limits>

#include "piezores/bvd.hpp"
#include "piezores/error.hpp"
#include "piezores/mason.hpp"
#include "support.hpp"

using namespace piezores;
using namespace piezores::mason;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Layer bare_plate(double q = kInf) {
  const auto p = materials::plate_frame(materials::lithium_niobate(), materials::CrystalCut(36.0));
  Layer l;
  l.name = "plate";
  l.thickness = 3e-4;
  l.density = p.density;
  l.stiffness_c33 = p.stiffness(2, 2);
  l.piezo_e33 = p.piezo(2, 2);
  l.permittivity_e33 = p.permittivity(2, 2);
  l.mech_q = q;
  l.piezoelectric = true;
  return l;
}

LayerStack plate_only(double q = kInf) { return {{bare_plate(q)}, 7.85e-5}; }

// Root of tan(x)/x = 1/k2 on (0, pi/2) by bisection.
double tan_root(double k2) {
  double lo = 1e-12, hi = kPi / 2 - 1e-15;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::tan(mid) / mid < 1.0 / k2 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(Mason, DecoupledPlateIsCapacitor) {
  auto stack = default_stack();
  for (auto& l : stack.layers)
    if (l.piezoelectric) l.piezo_e33 = 0.0;
  const double c0 = stack.static_capacitance();
  for (double f : {1e5, 3e6, 10.9e6, 12.2e6, 5e7}) {
    const cdouble want = 1.0 / (cdouble(0.0, kTwoPi * f * c0));
    const cdouble got = input_impedance_at(stack, f);
    EXPECT_LE(std::abs(got - want) / std::abs(want), 1e-12) << f;
  }
}

TEST(Mason, FreePlateParallelResonance) {
  const auto stack = plate_only();
  const Layer& p = stack.layers.front();
  const double v = std::sqrt((p.stiffness_c33 + p.piezo_e33 * p.piezo_e33 / p.permittivity_e33) / p.density);
  const double fp_closed = v / (2.0 * p.thickness);
  const auto grid = linear_grid(9e6, 13e6, 8001);
  const auto sweep = input_impedance(stack, grid);
  const auto [fs, fp] = find_resonances(sweep);
  EXPECT_LE(std::abs(fp - fp_closed), grid[1] - grid[0]);
  EXPECT_LT(fs, fp);
}

TEST(Mason, SeriesResonanceMatchesTranscendentalRoot) {
  const auto stack = plate_only();
  const Layer& p = stack.layers.front();
  const double e2_eps = p.piezo_e33 * p.piezo_e33 / p.permittivity_e33;
  const double cbar = p.stiffness_c33 + e2_eps;
  const double kt2 = e2_eps / cbar;
  const double fp = std::sqrt(cbar / p.density) / (2.0 * p.thickness);
  const double fs_oracle = fp * 2.0 * tan_root(kt2) / kPi;
  const double fs = series_resonance(stack, 0.7 * fp, 0.999 * fp);
  EXPECT_LE(test::rel_err(fs, fs_oracle), 1e-6);
  const double phi = 0.5 * kPi * fs / fp;
  EXPECT_NEAR(std::tan(phi) / phi * kt2, 1.0, 1e-6);
}

TEST(Mason, DefaultStackMatchesDocumentedGeometry) {
  const auto stack = default_stack();
  EXPECT_NO_THROW(stack.validate());
  ASSERT_EQ(stack.layers.size(), 3u);
  EXPECT_DOUBLE_EQ(stack.layers[1].thickness, 3.0e-4);
  EXPECT_DOUBLE_EQ(stack.layers[0].thickness, 3.0e-7);
  EXPECT_DOUBLE_EQ(stack.layers[2].thickness, 3.0e-7);
  EXPECT_EQ(stack.piezo_index(), 1u);
}

TEST(Mason, DefaultStackWithinSanityBand) {
  const auto sweep = input_impedance(default_stack(), linear_grid(8e6, 14e6, 6001));
  const auto [fs, fp] = find_resonances(sweep);
  EXPECT_LE(std::abs(fs - 10.14e6) / 10.14e6, 0.15);
  EXPECT_GT(fp, fs);
}

TEST(Mason, ResonancesOfBvdSweep) {
  const auto twin = test::twin();
  const auto& b = twin.branches.front();
  const double fs_closed = 1.0 / (kTwoPi * std::sqrt(b.l_m * b.c_m));
  const double fp_closed = fs_closed * std::sqrt(1.0 + b.c_m / twin.c0);
  const auto [fs, fp] = find_resonances(bvd::impedance(twin, linear_grid(9e6, 12.5e6, 3501)));
  EXPECT_LE(test::rel_err(fs, fs_closed), 1e-4);
  EXPECT_LE(test::rel_err(fp, fp_closed), 1e-4);
}

TEST(Mason, CapacitorSweepHasNoResonance) {
  bvd::BvdModel cap{1e-10, {}, "cap"};
  EXPECT_THROW(find_resonances(bvd::impedance(cap, linear_grid(1e6, 2e7, 500))), NotFoundError);
}

TEST(Mason, DegenerateStacksRejected) {
  LayerStack none{{aluminum(1e-6)}, 1e-4};
  EXPECT_THROW(none.validate(), InputError);
  LayerStack two{{bare_plate(), bare_plate()}, 1e-4};
  EXPECT_THROW(two.validate(), InputError);
  EXPECT_THROW(input_impedance(two, std::vector<double>{1e6}), InputError);
  LayerStack no_area{{bare_plate()}, 0.0};
  EXPECT_THROW(no_area.validate(), InputError);
}

TEST(Mason, PassiveWithLoss) {
  const auto sweep = input_impedance(default_stack(), linear_grid(1e6, 4e7, 4000));
  for (const auto& z : sweep.z_ohm) EXPECT_GT(z.real(), 0.0);
}

TEST(Mason, WeakCouplingApproachesCapacitor) {
  auto stack = plate_only();
  stack.layers.front().piezo_e33 *= 1e-4;
  const double c0 = stack.static_capacitance();
  for (double f : linear_grid(1e6, 8e6, 50)) {
    const double want = 1.0 / (kTwoPi * f * c0);
    EXPECT_LE(test::rel_err(std::abs(input_impedance_at(stack, f)), want), 1e-6) << f;
  }
}

TEST(Mason, ThickerElectrodesLowerParallelResonance) {
  double last = std::numeric_limits<double>::infinity();
  for (double t : {1e-7, 2e-7, 3e-7, 5e-7, 8e-7}) {
    StackOptions opt;
    opt.electrode_thickness = t;
    const auto sweep = input_impedance(default_stack(opt), linear_grid(9e6, 13.5e6, 9001));
    const double fp = find_resonances(sweep).second;
    EXPECT_LT(fp, last) << t;
    last = fp;
  }
}

TEST(Mason, ThreadPartitionsAgree) {
  const auto grid = linear_grid(8e6, 14e6, 1001);
  const auto a = input_impedance(default_stack(), grid, 1);
  const auto b = input_impedance(default_stack(), grid, 3);
  for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_EQ(a.z_ohm[k], b.z_ohm[k]);
}
