#pragma once

#include <complex>
#include <span>
#include <vector>

namespace piezores {

using cdouble = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Frequency grid with complex impedance samples. Every module consumes or
/// produces this type.
struct ImpedanceSweep {
  std::vector<double> freq_hz;
  std::vector<cdouble> z_ohm;
  double ref_ohm = 50.0;

  std::size_t size() const noexcept { return freq_hz.size(); }
  bool empty() const noexcept { return freq_hz.empty(); }

  /// Throws InputError unless lengths match, frequencies are positive and
  /// strictly increasing, impedances are finite and ref_ohm > 0.
  void validate() const;
};

/// Evenly spaced grid including both endpoints.
std::vector<double> linear_grid(double start, double stop, std::size_t points);

/// Median of a copy of the values. Empty input returns 0.
double median(std::span<const double> values);

}  // namespace piezores
