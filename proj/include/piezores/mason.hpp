#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "piezores/materials.hpp"
#include "piezores/sweep.hpp"

namespace piezores::mason {

/// One layer of a 1-D thickness stack. Loss enters as c (1 + i / mech_q).
struct Layer {
  std::string name;
  double thickness = 0.0;         // m
  double density = 0.0;           // kg/m^3
  double stiffness_c33 = 0.0;     // Pa, constant-field value along the stack axis
  double piezo_e33 = 0.0;         // C/m^2, zero for metals
  double permittivity_e33 = 0.0;  // F/m, ignored for metals
  double mech_q = 1e4;
  bool piezoelectric = false;
};

/// Bottom-to-top stack with exactly one piezoelectric layer.
struct LayerStack {
  std::vector<Layer> layers;
  double active_area = 0.0;  // m^2

  void validate() const;
  std::size_t piezo_index() const;
  double static_capacitance() const;
};

struct StackOptions {
  double electrode_radius = 5e-3;
  double cut_deg = 36.0;
  double piezo_thickness = 3.0e-4;
  double electrode_thickness = 3.0e-7;
  double piezo_q = 4000.0;
  double electrode_q = 1000.0;
};

/// Aluminum electrode layer with the given thickness.
Layer aluminum(double thickness, double mech_q = 1000.0);

/// Al / rotated-Y LiNbO3 / Al with plate-frame constants from `material`.
LayerStack default_stack(const StackOptions& options = {},
                         const materials::MaterialConstantSet& material =
                             materials::lithium_niobate());

/// Electrical input impedance at a single frequency. Pure.
cdouble input_impedance_at(const LayerStack& stack, double freq_hz);

/// Impedance over a grid. Frequencies are split across `threads` workers.
ImpedanceSweep input_impedance(const LayerStack& stack, std::span<const double> freq_hz,
                               unsigned threads = 1);

/// fs at the global |Z| minimum and fp at the first |Z| maximum above it,
/// each refined by a parabola through log|Z| at three grid points.
std::pair<double, double> find_resonances(const ImpedanceSweep& sweep);

/// Zero of Im Z(f) in [f_lo, f_hi] for a stack, located by Brent's method.
/// Use on lossless stacks where the series resonance is a true reactance zero.
double series_resonance(const LayerStack& stack, double f_lo, double f_hi);

}  // namespace piezores::mason
