#include "piezores/bvd.hpp"

#include <algorithm>
#include <cmath>

#include "piezores/error.hpp"

namespace piezores::bvd {

namespace {
constexpr cdouble kI{0.0, 1.0};
constexpr double kDistinctFreq = 1e-6;
}  // namespace

double BvdBranch::series_freq() const { return 1.0 / (kTwoPi * std::sqrt(l_m * c_m)); }

double BvdBranch::quality() const { return kTwoPi * series_freq() * l_m / r_m; }

cdouble BvdBranch::impedance(double omega) const {
  return cdouble(r_m, omega * l_m - 1.0 / (omega * c_m));
}

BvdBranch BvdBranch::from_resonance(double fs_hz, double q, double r_m) {
  const double ws = kTwoPi * fs_hz;
  BvdBranch b;
  b.r_m = r_m;
  b.l_m = q * r_m / ws;
  b.c_m = 1.0 / (ws * ws * b.l_m);
  return b;
}

void BvdModel::validate() const {
  if (!(c0 > 0.0) || !std::isfinite(c0)) throw InputError("BVD model needs C0 > 0");
  std::vector<double> fs;
  for (const BvdBranch& b : branches) {
    if (!(b.r_m >= 0.0) || !(b.l_m > 0.0) || !(b.c_m > 0.0) || !std::isfinite(b.r_m) ||
        !std::isfinite(b.l_m) || !std::isfinite(b.c_m)) {
      throw InputError("BVD branch needs r_m >= 0 and positive l_m, c_m, all finite");
    }
    fs.push_back(b.series_freq());
  }
  std::sort(fs.begin(), fs.end());
  for (std::size_t k = 1; k < fs.size(); ++k) {
    if ((fs[k] - fs[k - 1]) <= kDistinctFreq * fs[k]) {
      throw InputError("BVD branches share a series resonance frequency");
    }
  }
}

cdouble BvdModel::admittance(double freq_hz) const {
  const double omega = kTwoPi * freq_hz;
  cdouble y = kI * omega * c0;
  for (const BvdBranch& b : branches) y += 1.0 / b.impedance(omega);
  return y;
}

cdouble BvdModel::impedance(double freq_hz) const { return 1.0 / admittance(freq_hz); }

ImpedanceSweep impedance(const BvdModel& model, std::span<const double> freq_hz, double ref_ohm) {
  model.validate();
  ImpedanceSweep sweep;
  sweep.ref_ohm = ref_ohm;
  sweep.freq_hz.assign(freq_hz.begin(), freq_hz.end());
  sweep.z_ohm.reserve(freq_hz.size());
  for (double f : freq_hz) {
    if (!(f > 0.0)) throw InputError("frequencies must be positive");
    sweep.z_ohm.push_back(model.impedance(f));
  }
  return sweep;
}

std::pair<double, double> resonance_freqs(const BvdModel& model) {
  if (model.branches.size() != 1) {
    throw InputError("resonance_freqs needs exactly one branch, model has " +
                     std::to_string(model.branches.size()));
  }
  model.validate();
  const BvdBranch& b = model.branches.front();
  const double fs = b.series_freq();
  return {fs, fs * std::sqrt(1.0 + b.c_m / model.c0)};
}

BvdModel from_resonances(double fs_hz, double fp_hz, double q, double c0, std::string label) {
  if (!(fs_hz > 0.0) || !(fp_hz > fs_hz) || !(q > 0.0) || !(c0 > 0.0)) {
    throw InputError("from_resonances needs 0 < fs < fp, q > 0, c0 > 0");
  }
  const double ratio = (fp_hz / fs_hz) * (fp_hz / fs_hz) - 1.0;
  const double ws = kTwoPi * fs_hz;
  BvdBranch b;
  b.c_m = ratio * c0;
  b.l_m = 1.0 / (ws * ws * b.c_m);
  b.r_m = ws * b.l_m / q;
  BvdModel m{c0, {b}, std::move(label)};
  m.validate();
  return m;
}

BvdModel inject_spurs(const BvdModel& base, std::span<const SpurSpec> spurs) {
  base.validate();
  BvdModel out = base;
  for (const SpurSpec& spur : spurs) {
    if (!(spur.freq_hz > 0.0) || !(spur.coupling > 0.0) || !(spur.q > 0.0)) {
      throw InputError("spur needs positive frequency, coupling and q");
    }
    for (const BvdBranch& b : out.branches) {
      if (std::abs(b.series_freq() - spur.freq_hz) <= kDistinctFreq * spur.freq_hz) {
        throw InputError("duplicate frequency: spur at " + std::to_string(spur.freq_hz) +
                         " Hz coincides with an existing branch");
      }
    }
    const double ws = kTwoPi * spur.freq_hz;
    BvdBranch b;
    b.c_m = base.c0 * spur.coupling * 8.0 / (kPi * kPi);
    b.l_m = 1.0 / (ws * ws * b.c_m);
    b.r_m = ws * b.l_m / spur.q;
    out.branches.push_back(b);
  }
  out.validate();
  return out;
}

}  // namespace piezores::bvd
