#include "piezores/mason.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "piezores/error.hpp"

namespace piezores::mason {

namespace {

constexpr cdouble kI{0.0, 1.0};

cdouble lossy(double c, double q) { return c * cdouble(1.0, 1.0 / q); }

// Mechanical load (stress over velocity, per unit area) seen looking out of
// the piezo face through `layers`, ordered from the face outward. The outer
// surface is traction free.
cdouble face_load(std::span<const Layer> layers, double omega) {
  cdouble load = 0.0;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    const cdouble c = lossy(it->stiffness_c33, it->mech_q);
    const cdouble v = std::sqrt(c / it->density);
    const cdouble zc = it->density * v;
    const cdouble t = std::tan(omega * it->thickness / v);
    load = zc * (load + kI * zc * t) / (zc + kI * load * t);
  }
  return load;
}

double log_abs(const cdouble& z) { return std::log(std::abs(z)); }

// Vertex of the parabola through (x[k-1..k+1], y[k-1..k+1]).
double parabola_vertex(std::span<const double> x, std::span<const double> y, std::size_t k) {
  const double x0 = x[k - 1], x1 = x[k], x2 = x[k + 1];
  const double y0 = y[k - 1], y1 = y[k], y2 = y[k + 1];
  const double d01 = (y1 - y0) / (x1 - x0);
  const double d12 = (y2 - y1) / (x2 - x1);
  const double curvature = (d12 - d01) / (x2 - x0);
  if (curvature == 0.0 || !std::isfinite(curvature)) return x1;
  const double vertex = 0.5 * (x0 + x1) - d01 / (2.0 * curvature);
  return std::clamp(vertex, x0, x2);
}

}  // namespace

void LayerStack::validate() const {
  if (!(active_area > 0.0)) throw InputError("active area must be positive");
  std::size_t piezo_count = 0;
  for (const Layer& layer : layers) {
    if (!(layer.thickness > 0.0) || !(layer.density > 0.0) || !(layer.stiffness_c33 > 0.0) ||
        !(layer.mech_q > 0.0)) {
      throw InputError("layer '" + layer.name + "' needs positive thickness, density, stiffness and Q");
    }
    if (layer.piezoelectric) {
      ++piezo_count;
      if (!(layer.permittivity_e33 > 0.0)) {
        throw InputError("piezo layer '" + layer.name + "' needs positive permittivity");
      }
    } else if (layer.piezo_e33 != 0.0) {
      throw InputError("non-piezo layer '" + layer.name + "' has nonzero e33");
    }
  }
  if (piezo_count != 1) {
    throw InputError("degenerate stack: expected exactly one piezo layer, found " +
                     std::to_string(piezo_count));
  }
}

std::size_t LayerStack::piezo_index() const {
  const auto it = std::find_if(layers.begin(), layers.end(), [](const Layer& l) { return l.piezoelectric; });
  if (it == layers.end()) throw InputError("degenerate stack: no piezo layer");
  return static_cast<std::size_t>(it - layers.begin());
}

double LayerStack::static_capacitance() const {
  const Layer& p = layers.at(piezo_index());
  return p.permittivity_e33 * active_area / p.thickness;
}

Layer aluminum(double thickness, double mech_q) {
  Layer l;
  l.name = "Al";
  l.thickness = thickness;
  l.density = 2700.0;
  l.stiffness_c33 = 111.3e9;
  l.mech_q = mech_q;
  return l;
}

LayerStack default_stack(const StackOptions& options,
                         const materials::MaterialConstantSet& material) {
  const auto plate = materials::plate_frame(material, materials::CrystalCut(options.cut_deg));

  Layer piezo;
  piezo.name = "LiNbO3";
  piezo.thickness = options.piezo_thickness;
  piezo.density = plate.density;
  piezo.stiffness_c33 = plate.stiffness(2, 2);
  piezo.piezo_e33 = plate.piezo(2, 2);
  piezo.permittivity_e33 = plate.permittivity(2, 2);
  piezo.mech_q = options.piezo_q;
  piezo.piezoelectric = true;

  LayerStack stack;
  stack.layers = {aluminum(options.electrode_thickness, options.electrode_q), piezo,
                  aluminum(options.electrode_thickness, options.electrode_q)};
  stack.active_area = kPi * options.electrode_radius * options.electrode_radius;
  stack.validate();
  return stack;
}

cdouble input_impedance_at(const LayerStack& stack, double freq_hz) {
  const std::size_t p = stack.piezo_index();
  const Layer& layer = stack.layers[p];
  const double omega = kTwoPi * freq_hz;
  const double c0 = stack.static_capacitance();
  const cdouble capacitor = 1.0 / (kI * omega * c0);

  const double e = layer.piezo_e33;
  const double eps = layer.permittivity_e33;
  const double d = layer.thickness;
  const cdouble stiffened = lossy(layer.stiffness_c33 + e * e / eps, layer.mech_q);
  const cdouble v = std::sqrt(stiffened / layer.density);
  const cdouble z0 = layer.density * v;
  const cdouble kd = omega * d / v;
  const cdouble s = std::sin(kd), c = std::cos(kd);

  std::vector<Layer> below(stack.layers.begin(), stack.layers.begin() + static_cast<std::ptrdiff_t>(p));
  std::reverse(below.begin(), below.end());
  const std::span<const Layer> above(stack.layers.data() + p + 1, stack.layers.size() - p - 1);
  const cdouble zb = face_load(below, omega);
  const cdouble zt = face_load(above, omega);

  // Displacement u = A sin(kx) + B cos(kx) driven by uniform D; the face
  // stresses balance the loads. [A, B] = (h D / omega) [a, b].
  const cdouble m00 = z0, m01 = -kI * zb;
  const cdouble m10 = z0 * c + kI * zt * s, m11 = -z0 * s + kI * zt * c;
  const cdouble det = m00 * m11 - m01 * m10;
  const cdouble a = (m11 - m01) / det;
  const cdouble b = (m00 - m10) / det;
  const cdouble stretch = a * s + b * (c - 1.0);

  return capacitor * (1.0 - (e * e / (eps * omega * d)) * stretch);
}

ImpedanceSweep input_impedance(const LayerStack& stack, std::span<const double> freq_hz,
                               unsigned threads) {
  stack.validate();
  for (double f : freq_hz) {
    if (!(f > 0.0)) throw InputError("frequencies must be positive");
  }
  ImpedanceSweep sweep;
  sweep.freq_hz.assign(freq_hz.begin(), freq_hz.end());
  sweep.z_ohm.resize(freq_hz.size());

  const std::size_t n = freq_hz.size();
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  auto fill = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) sweep.z_ohm[k] = input_impedance_at(stack, freq_hz[k]);
  };
  if (workers == 1) {
    fill(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(n, begin + chunk);
      if (begin < end) pool.emplace_back(fill, begin, end);
    }
  }
  return sweep;
}

std::pair<double, double> find_resonances(const ImpedanceSweep& sweep) {
  sweep.validate();
  const std::size_t n = sweep.size();
  if (n < 3) throw NotFoundError("sweep too short to locate resonances");

  std::vector<double> log_z(n);
  for (std::size_t k = 0; k < n; ++k) log_z[k] = log_abs(sweep.z_ohm[k]);

  const auto min_it = std::min_element(log_z.begin(), log_z.end());
  const auto k_min = static_cast<std::size_t>(min_it - log_z.begin());
  if (k_min == 0 || k_min + 1 >= n) {
    throw NotFoundError("no interior |Z| minimum in sweep (no series resonance)");
  }

  std::size_t k_max = 0;
  for (std::size_t k = k_min + 1; k + 1 < n; ++k) {
    if (log_z[k] >= log_z[k - 1] && log_z[k] > log_z[k + 1]) {
      k_max = k;
      break;
    }
  }
  if (k_max == 0) throw NotFoundError("no |Z| maximum above the series resonance");

  const double fs = parabola_vertex(sweep.freq_hz, log_z, k_min);
  const double fp = parabola_vertex(sweep.freq_hz, log_z, k_max);
  if (!(fs < fp)) throw NotFoundError("series and parallel resonance not ordered");
  return {fs, fp};
}

double series_resonance(const LayerStack& stack, double f_lo, double f_hi) {
  auto reactance = [&](double f) { return input_impedance_at(stack, f).imag(); };
  double a = f_lo, b = f_hi;
  double fa = reactance(a), fb = reactance(b);
  if (!(fa * fb < 0.0)) throw NotFoundError("reactance does not change sign in bracket");

  // Brent's method.
  double c = a, fc = fa, d = b - a, e = d;
  for (int iter = 0; iter < 200; ++iter) {
    if (fb * fc > 0.0) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const double tol = 2.0 * 1e-16 * std::abs(b) + 1e-9;
    const double m = 0.5 * (c - b);
    if (std::abs(m) <= tol || fb == 0.0) return b;
    if (std::abs(e) >= tol && std::abs(fa) > std::abs(fb)) {
      const double s = fb / fa;
      double p, q;
      if (a == c) {
        p = 2.0 * m * s;
        q = 1.0 - s;
      } else {
        const double qa = fa / fc, r = fb / fc;
        p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
        q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q; else p = -p;
      if (2.0 * p < std::min(3.0 * m * q - std::abs(tol * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = m;
        e = m;
      }
    } else {
      d = m;
      e = m;
    }
    a = b;
    fa = fb;
    b += std::abs(d) > tol ? d : (m > 0.0 ? tol : -tol);
    fb = reactance(b);
  }
  return b;
}

}  // namespace piezores::mason
