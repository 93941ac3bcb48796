#include "piezores/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "piezores/error.hpp"
#include "piezores/mason.hpp"

namespace piezores::metrics {

std::string to_string(KsqConvention c) {
  switch (c) {
    case KsqConvention::pi_squared_over_8: return "pi2_over_8";
    case KsqConvention::parallel_ratio: return "parallel_ratio";
    case KsqConvention::mason_tangent: return "mason_tangent";
  }
  return "unknown";
}

KsqConvention ksq_convention_from_string(const std::string& name) {
  if (name == "pi2_over_8") return KsqConvention::pi_squared_over_8;
  if (name == "parallel_ratio") return KsqConvention::parallel_ratio;
  if (name == "mason_tangent") return KsqConvention::mason_tangent;
  throw InputError("unknown k^2 convention '" + name + "'");
}

std::vector<QPoint> bode_q(const ImpedanceSweep& sweep) {
  sweep.validate();
  const std::size_t n = sweep.size();
  if (n < 3) throw InputError("bode_q needs at least 3 points");

  std::vector<double> omega(n), mag(n), phase(n);
  for (std::size_t k = 0; k < n; ++k) {
    const cdouble z = sweep.z_ohm[k];
    const cdouble gamma = (z - sweep.ref_ohm) / (z + sweep.ref_ohm);
    mag[k] = std::abs(gamma);
    if (!(mag[k] < 1.0 - 1e-12)) {
      throw InputError("reflection magnitude reaches 1 at " + std::to_string(sweep.freq_hz[k]) +
                       " Hz (non-passive data)");
    }
    omega[k] = kTwoPi * sweep.freq_hz[k];
    phase[k] = std::arg(gamma);
    if (k > 0) {
      double step = phase[k] - phase[k - 1];
      phase[k] -= kTwoPi * std::round(step / kTwoPi);
    }
  }

  std::vector<QPoint> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t lo = k == 0 ? 0 : k - 1;
    const std::size_t hi = k + 1 == n ? k : k + 1;
    const double tau = -(phase[hi] - phase[lo]) / (omega[hi] - omega[lo]);
    out[k] = {sweep.freq_hz[k], omega[k] * tau * mag[k] / (1.0 - mag[k] * mag[k])};
  }
  return out;
}

double coupling_from_freqs(double fs_hz, double fp_hz, KsqConvention convention) {
  if (!(fs_hz > 0.0) || !(fs_hz < fp_hz)) throw InputError("coupling needs 0 < fs < fp");
  const double ratio = (fp_hz / fs_hz) * (fp_hz / fs_hz) - 1.0;
  switch (convention) {
    case KsqConvention::pi_squared_over_8:
      return kPi * kPi / 8.0 * ratio;
    case KsqConvention::parallel_ratio:
      return (fp_hz * fp_hz - fs_hz * fs_hz) / (fp_hz * fp_hz);
    case KsqConvention::mason_tangent:
      return kPi / 2.0 * (fs_hz / fp_hz) * std::tan(kPi / 2.0 * (fp_hz - fs_hz) / fp_hz);
  }
  return 0.0;
}

double fp_from_coupling(double fs_hz, double k_sq) {
  if (!(fs_hz > 0.0) || !(k_sq >= 0.0)) throw InputError("fp_from_coupling needs fs > 0, k^2 >= 0");
  return fs_hz * std::sqrt(1.0 + 8.0 * k_sq / (kPi * kPi));
}

SuppressedRegion suppressed_region(const ImpedanceSweep& sweep, double fs_hz, double fp_hz,
                                   double threshold) {
  sweep.validate();
  if (!(fs_hz < fp_hz)) throw InputError("suppressed region needs fs < fp");
  if (!(threshold >= 1.0)) throw InputError("threshold multiplier must be >= 1");
  const auto& f = sweep.freq_hz;
  if (f.front() > fs_hz || f.back() < fp_hz) {
    throw InputError("sweep does not cover [fs, fp]");
  }

  const std::size_t n = sweep.size();
  std::size_t k_min = n;
  double r_min = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (f[k] < fs_hz || f[k] > fp_hz) continue;
    const double r = sweep.z_ohm[k].real();
    if (k_min == n || r < r_min) {
      k_min = k;
      r_min = r;
    }
  }
  if (k_min == n) throw InputError("no sweep sample inside [fs, fp]");
  if (!(r_min > 0.0)) throw InputError("minimum resistance in [fs, fp] is not positive");

  const double limit = threshold * r_min;
  auto r_at = [&](std::size_t k) { return sweep.z_ohm[k].real(); };
  auto crossing = [&](std::size_t inside, std::size_t outside) {
    const double ri = r_at(inside), ro = r_at(outside);
    return f[inside] + (limit - ri) * (f[outside] - f[inside]) / (ro - ri);
  };

  std::size_t lo = k_min;
  while (lo > 0 && r_at(lo - 1) <= limit) --lo;
  std::size_t hi = k_min;
  while (hi + 1 < n && r_at(hi + 1) <= limit) ++hi;

  double f_lo = lo > 0 ? crossing(lo, lo - 1) : f[lo];
  double f_hi = hi + 1 < n ? crossing(hi, hi + 1) : f[hi];
  f_lo = std::clamp(f_lo, fs_hz, fp_hz);
  f_hi = std::clamp(f_hi, fs_hz, fp_hz);
  const double width = f_hi - f_lo;
  return {f_lo, f_hi, width, width / (fp_hz - fs_hz), r_min};
}

double fom(double q, double k_sq) {
  if (!(q >= 0.0) || !(k_sq >= 0.0)) throw InputError("fom needs q >= 0 and k^2 >= 0");
  return q * k_sq;
}

ResonatorScore score(const ImpedanceSweep& sweep, const ScoreSettings& settings) {
  const auto [fs, fp] = mason::find_resonances(sweep);
  const double k_sq = coupling_from_freqs(fs, fp, settings.convention);
  const std::vector<QPoint> q = bode_q(sweep);
  const SuppressedRegion region = suppressed_region(sweep, fs, fp, settings.threshold);

  // Q at fs by linear interpolation between the bracketing samples.
  const auto it = std::lower_bound(q.begin(), q.end(), fs,
                                   [](const QPoint& p, double f) { return p.freq_hz < f; });
  double q_fs;
  if (it == q.begin()) {
    q_fs = it->q;
  } else if (it == q.end()) {
    q_fs = q.back().q;
  } else {
    const QPoint& a = *(it - 1);
    const QPoint& b = *it;
    q_fs = a.q + (b.q - a.q) * (fs - a.freq_hz) / (b.freq_hz - a.freq_hz);
  }

  std::vector<double> band;
  for (const QPoint& p : q) {
    if (p.freq_hz >= region.f_lo && p.freq_hz <= region.f_hi) band.push_back(p.q);
  }
  const double band_median = band.empty() ? q_fs : median(band);

  ResonatorScore s{};
  s.fs_hz = fs;
  s.fp_hz = fp;
  s.k_r_sq = k_sq;
  s.q_bode_at_fs = q_fs;
  s.q_band_lo_hz = region.f_lo;
  s.q_band_hi_hz = region.f_hi;
  s.q_band_median = band_median;
  s.fom = fom(std::max(q_fs, 0.0), k_sq);
  s.supp_lo_hz = region.f_lo;
  s.supp_hi_hz = region.f_hi;
  s.supp_width_hz = region.width_hz;
  s.fractional_supp = region.fractional;

  if (!(s.fs_hz < s.fp_hz) || !(s.k_r_sq >= 0.0 && s.k_r_sq < 1.0) ||
      !(s.supp_lo_hz <= s.supp_hi_hz) || !(s.fractional_supp >= 0.0 && s.fractional_supp <= 1.0)) {
    throw InvariantError("resonator score violates its invariants (k^2 = " +
                         std::to_string(s.k_r_sq) + ", fractional = " +
                         std::to_string(s.fractional_supp) + ")");
  }
  return s;
}

std::vector<SoaRow> soa_table() {
  return {
      {"PZT radial", 0.48, 0.19, 1030.0, 196.0, 0.015, 0.429},
      {"LN TS 3.55 MHz", 3.55, 0.53, std::nullopt, std::nullopt, std::nullopt, std::nullopt},
      {"LN TS 5.94 MHz", 5.94, 0.45, 3500.0, 1575.0, 0.37, 0.349},
      {"LN TE 6.28 MHz", 6.28, 0.255, 3700.0, 944.0, std::nullopt, std::nullopt},
      {"LN TE 6.82 MHz", 6.82, 0.29, 4178.0, 1212.0, 0.027, 0.0338},
      {"LN TE 10.14 MHz ring", 10.14, 0.30, 4000.0, 1200.0, 0.72, 0.62},
  };
}

SoaRow to_soa_row(const ResonatorScore& s, const std::string& label) {
  return {label, s.fs_hz / 1e6, s.k_r_sq, s.q_bode_at_fs, s.fom, s.supp_width_hz / 1e6, s.fractional_supp};
}

std::vector<SoaRow> compare(const ResonatorScore& score, const std::string& label) {
  std::vector<SoaRow> rows = soa_table();
  rows.push_back(to_soa_row(score, label));
  auto descending = [](const std::optional<double>& a, const std::optional<double>& b) -> int {
    if (a && b) return *a > *b ? -1 : (*a < *b ? 1 : 0);
    if (a) return -1;
    if (b) return 1;
    return 0;
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const SoaRow& a, const SoaRow& b) {
    const int by_region = descending(a.fractional_supp, b.fractional_supp);
    if (by_region != 0) return by_region < 0;
    return descending(a.fom, b.fom) < 0;
  });
  return rows;
}

}  // namespace piezores::metrics
