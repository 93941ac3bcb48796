#include "piezores/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "piezores/error.hpp"

namespace piezores {

void ImpedanceSweep::validate() const {
  if (freq_hz.size() != z_ohm.size()) {
    throw InputError("sweep has " + std::to_string(freq_hz.size()) + " frequencies but " +
                     std::to_string(z_ohm.size()) + " impedance samples");
  }
  if (freq_hz.empty()) throw InputError("sweep is empty");
  if (!(ref_ohm > 0.0) || !std::isfinite(ref_ohm)) {
    throw InputError("reference impedance must be positive");
  }
  for (std::size_t k = 0; k < freq_hz.size(); ++k) {
    if (!std::isfinite(freq_hz[k]) || freq_hz[k] <= 0.0) {
      throw InputError("frequency at index " + std::to_string(k) + " is not positive");
    }
    if (k > 0 && !(freq_hz[k] > freq_hz[k - 1])) {
      throw InputError("frequencies not strictly increasing at index " + std::to_string(k));
    }
    if (!std::isfinite(z_ohm[k].real()) || !std::isfinite(z_ohm[k].imag())) {
      throw InputError("impedance at index " + std::to_string(k) + " is not finite");
    }
  }
}

std::vector<double> linear_grid(double start, double stop, std::size_t points) {
  if (points < 2 || !(stop > start)) throw InputError("grid needs start < stop and >= 2 points");
  std::vector<double> grid(points);
  const double step = (stop - start) / static_cast<double>(points - 1);
  for (std::size_t k = 0; k < points; ++k) grid[k] = start + step * static_cast<double>(k);
  grid.back() = stop;
  return grid;
}

double median(std::span<const double> values) {
  if (values.empty()) return 0.0;
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace piezores
