#pragma once

#include <optional>
#include <string>
#include <vector>

#include "piezores/sweep.hpp"

namespace piezores::metrics {

enum class KsqConvention {
  pi_squared_over_8,  // (pi^2/8) (fp^2 - fs^2) / fs^2
  parallel_ratio,     // (fp^2 - fs^2) / fp^2
  mason_tangent,      // (pi/2)(fs/fp) tan((pi/2)(fp - fs)/fp)
};

std::string to_string(KsqConvention c);
KsqConvention ksq_convention_from_string(const std::string& name);

struct QPoint {
  double freq_hz;
  double q;
};

/// Bode Q from the group delay of the reflection coefficient against ref_ohm:
/// Q = w tau |G| / (1 - |G|^2), tau = -d(arg G)/dw by central differences on
/// the unwrapped phase.
std::vector<QPoint> bode_q(const ImpedanceSweep& sweep);

double coupling_from_freqs(double fs_hz, double fp_hz,
                           KsqConvention convention = KsqConvention::pi_squared_over_8);

/// Parallel resonance implied by fs and k^2 under the default convention.
double fp_from_coupling(double fs_hz, double k_sq);

struct SuppressedRegion {
  double f_lo;
  double f_hi;
  double width_hz;
  double fractional;
  double r_min;
};

/// Contiguous band around the Re Z minimum on [fs, fp] where
/// Re Z <= threshold * min Re Z, clipped to [fs, fp].
SuppressedRegion suppressed_region(const ImpedanceSweep& sweep, double fs_hz, double fp_hz,
                                   double threshold = 20.0);

double fom(double q, double k_sq);

struct ScoreSettings {
  double threshold = 20.0;
  KsqConvention convention = KsqConvention::pi_squared_over_8;
};

struct ResonatorScore {
  double fs_hz;
  double fp_hz;
  double k_r_sq;
  double q_bode_at_fs;
  double q_band_lo_hz;
  double q_band_hi_hz;
  double q_band_median;
  double fom;
  double supp_lo_hz;
  double supp_hi_hz;
  double supp_width_hz;
  double fractional_supp;
};

ResonatorScore score(const ImpedanceSweep& sweep, const ScoreSettings& settings = {});

/// One row of the state-of-the-art comparison. Absent values are N/A.
struct SoaRow {
  std::string reference;
  std::optional<double> fs_mhz;
  std::optional<double> k_r_sq;
  std::optional<double> q;
  std::optional<double> fom;
  std::optional<double> supp_region_mhz;
  std::optional<double> fractional_supp;
};

/// Published piezoelectric power-converter resonators, including the
/// 36Y LiNbO3 grounded-ring device ("LN TE 10.14 MHz ring").
std::vector<SoaRow> soa_table();

SoaRow to_soa_row(const ResonatorScore& score, const std::string& label);

/// Table plus the user's row, ranked by fractional suppressed region then
/// FoM, both descending, N/A last. Stable for ties.
std::vector<SoaRow> compare(const ResonatorScore& score, const std::string& label = "user device");

}  // namespace piezores::metrics
