#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "piezores/sweep.hpp"

namespace piezores::bvd {

/// Series motional R-L-C.
struct BvdBranch {
  double r_m = 0.0;  // ohm
  double l_m = 0.0;  // H
  double c_m = 0.0;  // F

  double series_freq() const;
  double quality() const;  // omega_s L / R
  cdouble impedance(double omega) const;

  /// Branch with the given series resonance, quality factor and resistance.
  static BvdBranch from_resonance(double fs_hz, double q, double r_m);
};

/// Static capacitance in parallel with any number of motional branches.
struct BvdModel {
  double c0 = 0.0;  // F
  std::vector<BvdBranch> branches;
  std::string label;

  void validate() const;
  cdouble admittance(double freq_hz) const;
  cdouble impedance(double freq_hz) const;
};

/// Z = [i w C0 + sum_k 1 / (r_k + i w l_k + 1 / (i w c_k))]^-1 on the grid.
ImpedanceSweep impedance(const BvdModel& model, std::span<const double> freq_hz,
                         double ref_ohm = 50.0);

/// Closed-form fs and fp of a single-branch model.
std::pair<double, double> resonance_freqs(const BvdModel& model);

/// Single-branch model with C0 given and branch chosen so that the series
/// resonance is fs, the parallel resonance is fp and omega_s L / R = q.
BvdModel from_resonances(double fs_hz, double fp_hz, double q, double c0, std::string label = {});

struct SpurSpec {
  double freq_hz;
  double coupling;  // spur k^2 in the (pi^2/8)(fp^2 - fs^2)/fs^2 convention
  double q;
};

/// Appends one branch per spur: c_m / c0 = (8/pi^2) coupling, l_m from the
/// spur frequency, r_m from q. Throws InputError on duplicate frequencies.
BvdModel inject_spurs(const BvdModel& base, std::span<const SpurSpec> spurs);

struct FitOptions {
  std::size_t max_branches = 4;
  double peak_threshold = 3.0;         // times the median conductance
  double removal_threshold = 0.01;     // relative residual change to keep a branch
  int max_iterations = 200;
  double gradient_tolerance = 1e-10;   // on the log-parameter scale
  double capacitor_rms_limit = 0.05;   // accept a branchless model below this log-rms
};

struct BranchConfidence {
  double fs_rel_sigma;  // relative standard error of fs
  double r_rel_sigma;
  double q_rel_sigma;
};

struct FitReport {
  double residual = 0.0;       // sum of squared complex log errors
  double rms_log_error = 0.0;  // sqrt(residual / points)
  int iterations = 0;
  std::size_t candidates = 0;  // conductance peaks seeded before pruning
  std::vector<BranchConfidence> confidence;
};

struct FitResult {
  BvdModel model;
  FitReport report;
};

/// Extract a BVD model: C0 from the low-frequency tail, branches seeded at
/// conductance peaks, then Levenberg-Marquardt on log Z over
/// log-parameters. Branches whose removal moves the residual by less than
/// removal_threshold are dropped.
FitResult fit(const ImpedanceSweep& sweep, const FitOptions& options = {});

}  // namespace piezores::bvd
