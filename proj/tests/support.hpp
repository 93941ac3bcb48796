#pragma once

#include <cmath>
#include <random>

#include "piezores/bvd.hpp"

namespace piezores::test {

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

inline bvd::BvdModel twin() {
  const double fs = 10.14e6;
  return bvd::from_resonances(fs, fs + 0.72e6 / 0.62, 4000.0, 100e-12, "twin");
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

// Random valid model: C0 in [10 pF, 1 nF], branches spread over 1-20 MHz.
inline bvd::BvdModel random_model(std::mt19937_64& rng, int branches, double r_lo = 0.05, double r_hi = 50.0) {
  bvd::BvdModel m;
  m.c0 = log_uniform(rng, 1e-11, 1e-9);
  for (int k = 0; k < branches; ++k) {
    const double fs = log_uniform(rng, 1e6, 2e7) * (1.0 + 0.05 * k);
    const double cm = m.c0 * log_uniform(rng, 1e-3, 0.5);
    const double lm = 1.0 / (std::pow(2.0 * M_PI * fs, 2) * cm);
    m.branches.push_back({log_uniform(rng, r_lo, r_hi), lm, cm});
  }
  return m;
}

}  // namespace piezores::test
