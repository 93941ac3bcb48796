#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>

#include "piezores/bvd.hpp"
#include "piezores/error.hpp"

namespace piezores::bvd {

namespace {

constexpr cdouble kI{0.0, 1.0};

// Parameter vector: [log C0, then (log omega_s, log R, log Q) per branch].
// The branch impedance is R (1 + i Q x) with x = w/ws - ws/w.
struct Problem {
  std::span<const double> omega;
  std::vector<cdouble> log_z_data;

  std::size_t points() const { return omega.size(); }

  static std::size_t branch_count(const Eigen::VectorXd& p) { return (p.size() - 1) / 3; }

  Eigen::VectorXd residual(const Eigen::VectorXd& p) const {
    const std::size_t n = points();
    Eigen::VectorXd r(2 * n);
    for (std::size_t k = 0; k < n; ++k) {
      const cdouble d = -std::log(admittance(p, omega[k])) - log_z_data[k];
      r(2 * k) = d.real();
      r(2 * k + 1) = std::remainder(d.imag(), kTwoPi);
    }
    return r;
  }

  void jacobian(const Eigen::VectorXd& p, Eigen::MatrixXd& jac) const {
    const std::size_t n = points();
    const std::size_t nb = branch_count(p);
    jac.resize(2 * static_cast<Eigen::Index>(n), p.size());
    const double c0 = std::exp(p(0));
    for (std::size_t k = 0; k < n; ++k) {
      const double w = omega[k];
      const cdouble y = admittance(p, w);
      // d log Z / d theta = -(dY / d theta) / Y
      auto put = [&](Eigen::Index col, cdouble dy) {
        const cdouble g = -dy / y;
        jac(2 * k, col) = g.real();
        jac(2 * k + 1, col) = g.imag();
      };
      put(0, kI * w * c0);
      for (std::size_t b = 0; b < nb; ++b) {
        const auto col = static_cast<Eigen::Index>(1 + 3 * b);
        const double ws = std::exp(p(col)), r = std::exp(p(col + 1)), q = std::exp(p(col + 2));
        const double x = w / ws - ws / w;
        const cdouble zm = r * cdouble(1.0, q * x);
        const cdouble inv_zm2 = 1.0 / (zm * zm);
        put(col, -(kI * r * q * (-w / ws - ws / w)) * inv_zm2);
        put(col + 1, -zm * inv_zm2);
        put(col + 2, -(kI * r * q * x) * inv_zm2);
      }
    }
  }

  static cdouble admittance(const Eigen::VectorXd& p, double w) {
    cdouble y = kI * w * std::exp(p(0));
    for (std::size_t b = 0; b < branch_count(p); ++b) {
      const auto col = static_cast<Eigen::Index>(1 + 3 * b);
      const double ws = std::exp(p(col)), r = std::exp(p(col + 1)), q = std::exp(p(col + 2));
      y += 1.0 / (r * cdouble(1.0, q * (w / ws - ws / w)));
    }
    return y;
  }
};

struct LmOutcome {
  Eigen::VectorXd params;
  double cost;
  int iterations;
  Eigen::MatrixXd jacobian;
};

LmOutcome levenberg_marquardt(const Problem& problem, Eigen::VectorXd p, const FitOptions& options) {
  Eigen::VectorXd r = problem.residual(p);
  double cost = r.squaredNorm();
  Eigen::MatrixXd jac;
  double lambda = 1e-3;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    problem.jacobian(p, jac);
    const Eigen::VectorXd grad = jac.transpose() * r;
    if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      return {p, cost, iter, jac};
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const double diag_floor = 1e-12 * jtj.diagonal().maxCoeff();

    bool accepted = false;
    bool stalled = false;
    while (!accepted) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, i) += lambda * std::max(jtj(i, i), diag_floor);
      const Eigen::VectorXd step = a.ldlt().solve(-grad);
      const Eigen::VectorXd trial = p + step;
      const Eigen::VectorXd r_trial = problem.residual(trial);
      const double cost_trial = r_trial.squaredNorm();
      if (std::isfinite(cost_trial) && cost_trial < cost) {
        const double gain = cost - cost_trial;
        p = trial;
        r = r_trial;
        cost = cost_trial;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        stalled = gain <= 1e-15 * cost || step.lpNorm<Eigen::Infinity>() < 1e-15;
      } else {
        lambda *= 4.0;
        if (lambda > 1e16) {
          stalled = true;
          break;
        }
      }
    }
    if (stalled) {
      problem.jacobian(p, jac);
      return {p, cost, iter + 1, jac};
    }
  }
  throw ConvergenceError("BVD fit did not converge in " + std::to_string(options.max_iterations) +
                             " iterations",
                         cost);
}

Eigen::VectorXd drop_branch(const Eigen::VectorXd& p, std::size_t branch) {
  Eigen::VectorXd out(p.size() - 3);
  const auto col = static_cast<Eigen::Index>(1 + 3 * branch);
  out.head(col) = p.head(col);
  out.tail(p.size() - col - 3) = p.tail(p.size() - col - 3);
  return out;
}

struct Seed {
  double fs;
  double r;
  double q;
  double peak;
};

std::vector<Seed> conductance_seeds(std::span<const double> freq, std::span<const cdouble> y,
                                    const FitOptions& options) {
  const std::size_t n = freq.size();
  std::vector<double> g(n);
  double y_scale = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    g[k] = y[k].real();
    y_scale = std::max(y_scale, std::abs(y[k]));
  }
  const double threshold = std::max(options.peak_threshold * median(g), 1e-9 * y_scale);
  const std::size_t window = std::max<std::size_t>(2, n / 200);

  std::vector<Seed> seeds;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (!(g[k] > threshold)) continue;
    const std::size_t lo = k >= window ? k - window : 0;
    const std::size_t hi = std::min(n - 1, k + window);
    bool is_max = true;
    for (std::size_t j = lo; j <= hi && is_max; ++j) {
      if (j != k && (g[j] > g[k] || (g[j] == g[k] && j < k))) is_max = false;
    }
    if (!is_max) continue;

    // Parabolic refinement of the peak.
    double fs = freq[k], peak = g[k];
    const double d01 = (g[k] - g[k - 1]) / (freq[k] - freq[k - 1]);
    const double d12 = (g[k + 1] - g[k]) / (freq[k + 1] - freq[k]);
    const double curv = (d12 - d01) / (freq[k + 1] - freq[k - 1]);
    if (curv < 0.0) {
      const double v = 0.5 * (freq[k - 1] + freq[k]) - d01 / (2.0 * curv);
      if (v > freq[k - 1] && v < freq[k + 1]) {
        fs = v;
        peak = g[k] + d01 * (v - freq[k]) + curv * (v - freq[k - 1]) * (v - freq[k]);
        peak = std::max(peak, g[k]);
      }
    }

    // Half-power crossings on either side.
    const double half = 0.5 * peak;
    double f_left = -1.0, f_right = -1.0;
    for (std::size_t j = k; j > 0; --j) {
      if (g[j - 1] < half) {
        f_left = freq[j - 1] + (half - g[j - 1]) * (freq[j] - freq[j - 1]) / (g[j] - g[j - 1]);
        break;
      }
    }
    for (std::size_t j = k; j + 1 < n; ++j) {
      if (g[j + 1] < half) {
        f_right = freq[j] + (g[j] - half) * (freq[j + 1] - freq[j]) / (g[j] - g[j + 1]);
        break;
      }
    }
    double bandwidth;
    if (f_left > 0.0 && f_right > 0.0) {
      bandwidth = f_right - f_left;
    } else if (f_left > 0.0) {
      bandwidth = 2.0 * (fs - f_left);
    } else if (f_right > 0.0) {
      bandwidth = 2.0 * (f_right - fs);
    } else {
      bandwidth = freq[k + 1] - freq[k - 1];
    }
    bandwidth = std::max(bandwidth, 0.5 * (freq[k + 1] - freq[k - 1]));
    seeds.push_back({fs, 1.0 / peak, fs / bandwidth, peak});
  }

  std::sort(seeds.begin(), seeds.end(), [](const Seed& a, const Seed& b) { return a.peak > b.peak; });
  if (seeds.size() > options.max_branches) seeds.resize(options.max_branches);
  return seeds;
}

BvdModel to_model(const Eigen::VectorXd& p, const std::string& label) {
  BvdModel m;
  m.c0 = std::exp(p(0));
  m.label = label;
  for (std::size_t b = 0; b < Problem::branch_count(p); ++b) {
    const auto col = static_cast<Eigen::Index>(1 + 3 * b);
    m.branches.push_back(BvdBranch::from_resonance(std::exp(p(col)) / kTwoPi, std::exp(p(col + 2)),
                                                   std::exp(p(col + 1))));
  }
  return m;
}

}  // namespace

FitResult fit(const ImpedanceSweep& sweep, const FitOptions& options) {
  sweep.validate();
  const std::size_t n = sweep.size();
  if (n < 50) throw InputError("fit needs at least 50 points, sweep has " + std::to_string(n));

  std::vector<double> omega(n);
  std::vector<cdouble> y(n);
  Problem problem{omega, {}};
  problem.log_z_data.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    omega[k] = kTwoPi * sweep.freq_hz[k];
    if (std::abs(sweep.z_ohm[k]) == 0.0) throw InputError("sweep contains a zero impedance sample");
    y[k] = 1.0 / sweep.z_ohm[k];
    problem.log_z_data[k] = std::log(sweep.z_ohm[k]);
  }

  // Static capacitance from the low-frequency tail.
  const std::size_t tail = std::max<std::size_t>(1, n / 10);
  std::vector<double> tail_c(tail);
  for (std::size_t k = 0; k < tail; ++k) tail_c[k] = y[k].imag() / omega[k];
  double c0 = median(tail_c);

  const std::vector<Seed> seeds = conductance_seeds(sweep.freq_hz, y, options);

  // Remove the seeded branches' contribution before trusting the tail value.
  if (!seeds.empty()) {
    for (std::size_t k = 0; k < tail; ++k) {
      cdouble yb = 0.0;
      for (const Seed& s : seeds) {
        const double ws = kTwoPi * s.fs;
        yb += 1.0 / (s.r * cdouble(1.0, s.q * (omega[k] / ws - ws / omega[k])));
      }
      tail_c[k] = (y[k] - yb).imag() / omega[k];
    }
    const double corrected = median(tail_c);
    if (corrected > 0.0) c0 = corrected;
  }
  if (!(c0 > 0.0)) throw InputError("low-frequency tail is not capacitive");

  Eigen::VectorXd p(1 + 3 * static_cast<Eigen::Index>(seeds.size()));
  p(0) = std::log(c0);
  for (std::size_t b = 0; b < seeds.size(); ++b) {
    const auto col = static_cast<Eigen::Index>(1 + 3 * b);
    p(col) = std::log(kTwoPi * seeds[b].fs);
    p(col + 1) = std::log(seeds[b].r);
    p(col + 2) = std::log(seeds[b].q);
  }

  LmOutcome fit = levenberg_marquardt(problem, p, options);
  int iterations = fit.iterations;

  if (seeds.empty()) {
    const double rms = std::sqrt(fit.cost / static_cast<double>(n));
    if (rms > options.capacitor_rms_limit) {
      throw NotFoundError("no conductance peak exceeds " + std::to_string(options.peak_threshold) +
                          "x the median conductance");
    }
  }

  // Prune branches the data does not need.
  while (Problem::branch_count(fit.params) > 0) {
    std::size_t weakest = 0;
    double weakest_change = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < Problem::branch_count(fit.params); ++b) {
      const double without = problem.residual(drop_branch(fit.params, b)).squaredNorm();
      const double change = (without - fit.cost) / std::max(fit.cost, 1e-300);
      if (change < weakest_change) {
        weakest_change = change;
        weakest = b;
      }
    }
    if (weakest_change >= options.removal_threshold) break;
    fit = levenberg_marquardt(problem, drop_branch(fit.params, weakest), options);
    iterations += fit.iterations;
  }

  // Order branches by series frequency.
  const std::size_t nb = Problem::branch_count(fit.params);
  std::vector<std::size_t> order(nb);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return fit.params(static_cast<Eigen::Index>(1 + 3 * a)) < fit.params(static_cast<Eigen::Index>(1 + 3 * b));
  });

  FitResult result;
  result.model = to_model(fit.params, "fit");
  std::vector<BvdBranch> sorted;
  for (std::size_t b : order) sorted.push_back(result.model.branches[b]);
  result.model.branches = std::move(sorted);

  result.report.residual = fit.cost;
  result.report.rms_log_error = std::sqrt(fit.cost / static_cast<double>(n));
  result.report.iterations = iterations;
  result.report.candidates = seeds.size();

  const auto dof = static_cast<double>(std::max<Eigen::Index>(1, 2 * static_cast<Eigen::Index>(n) - fit.params.size()));
  const Eigen::MatrixXd jtj = fit.jacobian.transpose() * fit.jacobian;
  const Eigen::MatrixXd cov = jtj.completeOrthogonalDecomposition().pseudoInverse() * (fit.cost / dof);
  for (std::size_t b : order) {
    const auto col = static_cast<Eigen::Index>(1 + 3 * b);
    result.report.confidence.push_back({std::sqrt(std::max(0.0, cov(col, col))),
                                        std::sqrt(std::max(0.0, cov(col + 1, col + 1))),
                                        std::sqrt(std::max(0.0, cov(col + 2, col + 2)))});
  }

  result.model.validate();
  return result;
}

}  // namespace piezores::bvd
