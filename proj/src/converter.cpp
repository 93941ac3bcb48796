#include "piezores/converter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <thread>

#include "piezores/error.hpp"

namespace piezores::converter {
namespace {

using bvd::BvdBranch;
using bvd::BvdModel;

ResonatorState evolve(const ResonatorState& state, const StageDef& stage, const BvdModel& model,
                      double dt);

double role_level(StageRole role, double v_in, double v_out) {
  switch (role) {
    case StageRole::input: return v_in;
    case StageRole::output: return v_out;
    case StageRole::series: return v_in - v_out;
    case StageRole::zero: return 0.0;
    case StageRole::open: break;
  }
  return 0.0;
}

// (c, s) with exp(At) = exp(alpha t)[c I + s (A - alpha I)] for a 2x2 A whose
// eigenvalues are alpha +- sqrt(disc).
std::pair<double, double> exp_coefficients(double disc, double t) {
  if (disc < 0.0) {
    const double beta = std::sqrt(-disc);
    return {std::cos(beta * t), std::sin(beta * t) / beta};
  }
  if (disc > 0.0) {
    const double beta = std::sqrt(disc);
    return {std::cosh(beta * t), std::sinh(beta * t) / beta};
  }
  return {1.0, t};
}

// Series R-L-C on (i, u): L di/dt = -R i - u, du/dt = i / C.
std::pair<double, double> rlc_evolve(double i0, double u0, double r, double l, double c, double t) {
  const double alpha = -r / (2.0 * l);
  const double disc = alpha * alpha - 1.0 / (l * c);
  const auto [cc, ss] = exp_coefficients(disc, t);
  const double decay = std::exp(alpha * t);
  const double i1 = decay * (cc * i0 + ss * (-r / (2.0 * l) * i0 - u0 / l));
  const double u1 = decay * (cc * u0 + ss * (i0 / c + r / (2.0 * l) * u0));
  return {i1, u1};
}

const BvdBranch& sole_branch(const BvdModel& model) {
  if (model.branches.size() != 1)
    throw InputError("converter model must have exactly one motional branch");
  return model.branches.front();
}

// Affine map x1 = M x0 + b on (i, v_cm, v_c0).
struct AffineMap {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
};

Eigen::Vector3d to_vec(const ResonatorState& s) { return {s.i_l, s.v_cm, s.v_c0}; }
ResonatorState to_state(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }

AffineMap stage_map(const StageDef& stage, const BvdModel& model, double dt) {
  AffineMap map;
  const Eigen::Vector3d base = to_vec(evolve({}, stage, model, dt));
  map.b = base;
  for (int j = 0; j < 3; ++j) {
    Eigen::Vector3d e = Eigen::Vector3d::Zero();
    e(j) = 1.0;
    map.m.col(j) = to_vec(evolve(to_state(e), stage, model, dt)) - base;
  }
  return map;
}

// Five-point Gauss-Legendre nodes and weights on [-1, 1].
constexpr std::array<double, 5> kGlNodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                            0.5384693101056831, 0.9061798459386640};
constexpr std::array<double, 5> kGlWeights = {0.2369268850561891, 0.4786286704993665,
                                              0.5688888888888889, 0.4786286704993665,
                                              0.2369268850561891};

double stage_loss(const ResonatorState& start, const StageDef& stage, const BvdModel& model,
                  double dt) {
  const BvdBranch& br = sole_branch(model);
  if (br.r_m == 0.0 || dt == 0.0) return 0.0;
  const double fs = br.series_freq();
  const int pieces = std::max(8, static_cast<int>(std::ceil(std::abs(dt) * fs * 32.0)));
  const double h = dt / pieces;
  double sum = 0.0;
  for (int p = 0; p < pieces; ++p) {
    const double mid = (p + 0.5) * h;
    for (std::size_t k = 0; k < kGlNodes.size(); ++k) {
      const double t = mid + 0.5 * h * kGlNodes[k];
      const double i = evolve(start, stage, model, t).i_l;
      sum += kGlWeights[k] * i * i;
    }
  }
  return br.r_m * sum * 0.5 * h;
}

}  // namespace

std::string to_string(StageRole role) {
  switch (role) {
    case StageRole::input: return "input";
    case StageRole::output: return "output";
    case StageRole::series: return "series";
    case StageRole::zero: return "zero";
    case StageRole::open: return "open";
  }
  return "open";
}

StageRole stage_role_from_string(const std::string& name) {
  for (StageRole r : {StageRole::input, StageRole::output, StageRole::series, StageRole::zero,
                      StageRole::open})
    if (to_string(r) == name) return r;
  throw InputError("unknown stage role '" + name + "'");
}

StageDef StageDef::clamp(StageRole role, double volts, double weight) {
  if (role == StageRole::open) throw InputError("clamp stage cannot have the open role");
  return {role, volts, weight};
}

StageRole infer_role(double volts, double v_in, double v_out) {
  const double tol = 1e-9 * std::max({1.0, std::abs(v_in), std::abs(v_out)});
  if (std::abs(volts) <= tol) return StageRole::zero;
  if (std::abs(volts - v_in) <= tol) return StageRole::input;
  if (std::abs(volts - v_out) <= tol) return StageRole::output;
  if (std::abs(volts - (v_in - v_out)) <= tol) return StageRole::series;
  throw InputError("clamp level " + std::to_string(volts) +
                   " V matches none of 0, v_in, v_out, v_in - v_out");
}

std::vector<StageDef> ConverterSpec::default_stages(double v_in, double v_out) {
  return {StageDef::clamp(StageRole::input, v_in), StageDef::open(),
          StageDef::clamp(StageRole::zero, 0.0),   StageDef::open(),
          StageDef::clamp(StageRole::output, v_out), StageDef::open()};
}

ConverterSpec ConverterSpec::make(double v_in, double v_out, double f_op) {
  return {v_in, v_out, f_op, default_stages(v_in, v_out)};
}

void ConverterSpec::validate() const {
  if (!(std::isfinite(v_in) && v_in > 0.0)) throw InputError("v_in must be positive");
  if (!(std::isfinite(v_out) && v_out > 0.0 && v_out < v_in))
    throw InputError("v_out must lie in (0, v_in)");
  if (!(std::isfinite(f_op) && f_op > 0.0)) throw InputError("f_op must be positive");
  if (stages.size() < 2) throw InputError("stage sequence needs at least two stages");
  const std::size_t n = stages.size();
  bool any_clamp = false, any_open = false;
  const double tol = 1e-9 * std::max(v_in, v_out);
  for (std::size_t k = 0; k < n; ++k) {
    const StageDef& s = stages[k];
    const StageDef& next = stages[(k + 1) % n];
    if (s.clamped()) {
      any_clamp = true;
      if (!(std::isfinite(s.weight) && s.weight > 0.0))
        throw InputError("stage " + std::to_string(k) + ": clamp weight must be positive");
      if (std::abs(s.v_applied - role_level(s.role, v_in, v_out)) > tol)
        throw InputError("stage " + std::to_string(k) + ": clamp level does not match role " +
                         to_string(s.role));
      if (next.clamped() && std::abs(next.v_applied - s.v_applied) > tol)
        throw InputError("stage " + std::to_string(k) +
                         ": adjacent clamps at different levels need an open stage between them");
    } else {
      any_open = true;
      if (!next.clamped())
        throw InputError("stage " + std::to_string(k) + ": open stage must be followed by a clamp");
    }
  }
  if (!any_clamp || !any_open) throw InputError("stage sequence needs clamped and open stages");
}

ResonatorState stage_evolve(const ResonatorState& state, const StageDef& stage,
                            const BvdModel& model, double dt) {
  if (!(dt >= 0.0)) throw InputError("stage duration must be non-negative");
  return evolve(state, stage, model, dt);
}

namespace {

// Also accepts negative dt: Newton iterates may pass through them.
ResonatorState evolve(const ResonatorState& state, const StageDef& stage, const BvdModel& model,
                      double dt) {
  const BvdBranch& br = sole_branch(model);
  if (stage.clamped()) {
    const double v = stage.v_applied;
    const auto [i1, u1] = rlc_evolve(state.i_l, state.v_cm + v, br.r_m, br.l_m, br.c_m, dt);
    return {i1, u1 - v, v};
  }
  const double c_eff = br.c_m * model.c0 / (br.c_m + model.c0);
  const double u0 = state.v_cm + state.v_c0;
  const auto [i1, u1] = rlc_evolve(state.i_l, u0, br.r_m, br.l_m, c_eff, dt);
  const double dq = c_eff * (u1 - u0);
  return {i1, state.v_cm + dq / br.c_m, state.v_c0 + dq / model.c0};
}

}  // namespace

ShootingProblem::ShootingProblem(ConverterSpec spec, BvdModel model)
    : spec_(std::move(spec)), model_(std::move(model)) {
  spec_.validate();
  const BvdBranch& br = sole_branch(model_);
  for (std::size_t k = 0; k < spec_.stages.size(); ++k)
    if (!spec_.stages[k].clamped()) open_stages_.push_back(k);
  state_count_ = spec_.stages.front().clamped() ? 2 : 3;
  current_scale_ = spec_.v_in * kTwoPi * br.series_freq() * model_.c0;
  voltage_scale_ = spec_.v_in;
  period_ = 1.0 / spec_.f_op;
}

std::vector<double> ShootingProblem::durations(const Eigen::VectorXd& z) const {
  const std::size_t n = spec_.stages.size();
  std::vector<double> out(n, 0.0);
  double open_total = 0.0, weight_total = 0.0;
  for (std::size_t j = 0; j < open_stages_.size(); ++j) {
    const double d = z(static_cast<Eigen::Index>(state_count_ + j)) * period_;
    out[open_stages_[j]] = d;
    open_total += d;
  }
  for (const auto& s : spec_.stages)
    if (s.clamped()) weight_total += s.weight;
  const double clamp_total = period_ - open_total;
  for (std::size_t k = 0; k < n; ++k)
    if (spec_.stages[k].clamped()) out[k] = clamp_total * spec_.stages[k].weight / weight_total;
  return out;
}

ResonatorState ShootingProblem::initial_state(const Eigen::VectorXd& z) const {
  ResonatorState s;
  s.i_l = z(0) * current_scale_;
  s.v_cm = z(1) * voltage_scale_;
  s.v_c0 = state_count_ == 3 ? z(2) * voltage_scale_ : spec_.stages.front().v_applied;
  return s;
}

std::vector<double> ShootingProblem::open_fractions(const Eigen::VectorXd& z) const {
  std::vector<double> out;
  for (std::size_t j = 0; j < open_stages_.size(); ++j)
    out.push_back(z(static_cast<Eigen::Index>(state_count_ + j)));
  return out;
}

Eigen::VectorXd ShootingProblem::residual(const Eigen::VectorXd& z) const {
  const auto dur = durations(z);
  const ResonatorState s0 = initial_state(z);
  ResonatorState s = s0;
  Eigen::VectorXd r(unknowns());
  Eigen::Index row = static_cast<Eigen::Index>(state_count_);
  const std::size_t n = spec_.stages.size();
  for (std::size_t k = 0; k < n; ++k) {
    s = evolve(s, spec_.stages[k], model_, dur[k]);
    if (!spec_.stages[k].clamped())
      r(row++) = (s.v_c0 - spec_.stages[(k + 1) % n].v_applied) / voltage_scale_;
  }
  r(0) = (s.i_l - s0.i_l) / current_scale_;
  r(1) = (s.v_cm - s0.v_cm) / voltage_scale_;
  if (state_count_ == 3) r(2) = (s.v_c0 - s0.v_c0) / voltage_scale_;
  return r;
}

Eigen::MatrixXd ShootingProblem::jacobian(const Eigen::VectorXd& z, double rel_step,
                                          bool centered) const {
  const Eigen::Index m = unknowns();
  Eigen::MatrixXd jac(m, m);
  const Eigen::VectorXd f0 = centered ? Eigen::VectorXd() : residual(z);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double h = rel_step * std::max(std::abs(z(j)), 1.0);
    Eigen::VectorXd zp = z;
    zp(j) += h;
    if (centered) {
      Eigen::VectorXd zm = z;
      zm(j) -= h;
      jac.col(j) = (residual(zp) - residual(zm)) / (2.0 * h);
    } else {
      jac.col(j) = (residual(zp) - f0) / h;
    }
  }
  return jac;
}

Eigen::VectorXd ShootingProblem::periodic_guess(std::span<const double> open_fractions) const {
  if (open_fractions.size() != open_stages_.size())
    throw InputError("one fraction per open stage required");
  Eigen::VectorXd z = Eigen::VectorXd::Zero(unknowns());
  for (std::size_t j = 0; j < open_fractions.size(); ++j)
    z(static_cast<Eigen::Index>(state_count_ + j)) = open_fractions[j];
  const auto dur = durations(z);
  AffineMap total;
  for (std::size_t k = 0; k < spec_.stages.size(); ++k) {
    const AffineMap step = stage_map(spec_.stages[k], model_, dur[k]);
    total.b = step.m * total.b + step.b;
    total.m = step.m * total.m;
  }
  const auto ns = static_cast<Eigen::Index>(state_count_);
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(ns, ns) - total.m.topLeftCorner(ns, ns);
  Eigen::VectorXd rhs = total.b.head(ns);
  if (state_count_ == 2) rhs += total.m.block(0, 2, 2, 1) * spec_.stages.front().v_applied;
  const auto qr = lhs.colPivHouseholderQr();
  if (!qr.isInvertible()) throw ConvergenceError("monodromy has a unit eigenvalue", 0.0);
  const Eigen::VectorXd x = qr.solve(rhs);
  z(0) = x(0) / current_scale_;
  z(1) = x(1) / voltage_scale_;
  if (state_count_ == 3) z(2) = x(2) / voltage_scale_;
  return z;
}

Eigen::VectorXd ShootingProblem::cold_guess() const {
  static constexpr std::array<double, 12> kFine = {0.004, 0.01, 0.02, 0.035, 0.05, 0.07,
                                                   0.09,  0.12, 0.15, 0.19,  0.24, 0.3};
  static constexpr std::array<double, 6> kCoarse = {0.01, 0.03, 0.06, 0.1, 0.15, 0.22};
  const std::size_t n_open = open_stages_.size();
  const std::span<const double> grid =
      n_open <= 3 ? std::span<const double>(kFine) : std::span<const double>(kCoarse);
  std::vector<std::size_t> idx(n_open, 0);
  std::vector<double> frac(n_open);
  Eigen::VectorXd best;
  double best_norm = std::numeric_limits<double>::infinity();
  for (;;) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n_open; ++j) sum += frac[j] = grid[idx[j]];
    if (sum < 0.9) {
      try {
        Eigen::VectorXd z = periodic_guess(frac);
        const double norm = residual(z).norm();
        if (std::isfinite(norm) && norm < best_norm) {
          best_norm = norm;
          best = std::move(z);
        }
      } catch (const ConvergenceError&) {
      }
    }
    std::size_t j = 0;
    while (j < n_open && ++idx[j] == grid.size()) idx[j++] = 0;
    if (j == n_open) break;
  }
  if (best.size() == 0) throw ConvergenceError("no usable starting point for the shooting solve", 0.0);
  return best;
}

namespace {

Eigen::VectorXd newton(const ShootingProblem& problem, Eigen::VectorXd z,
                       const SolverOptions& options, int& iterations, double& final_norm) {
  Eigen::VectorXd f = problem.residual(z);
  double norm = f.norm();
  iterations = 0;
  while (norm > options.tolerance) {
    if (iterations >= options.max_iterations || !std::isfinite(norm)) {
      final_norm = norm;
      throw ConvergenceError("shooting solve did not converge", norm);
    }
    ++iterations;
    const Eigen::MatrixXd jac = problem.jacobian(z, options.fd_rel_step);
    const Eigen::VectorXd step = jac.colPivHouseholderQr().solve(-f);
    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      const Eigen::VectorXd trial = z + t * step;
      const Eigen::VectorXd ft = problem.residual(trial);
      const double nt = ft.norm();
      if (std::isfinite(nt) && nt < (1.0 - 1e-4 * t) * norm) {
        z = trial;
        f = ft;
        norm = nt;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      final_norm = norm;
      throw ConvergenceError("shooting solve stalled", norm);
    }
  }
  final_norm = norm;
  return z;
}

}  // namespace

PssSolution solve_pss(const ConverterSpec& spec, const BvdModel& model,
                      const SolverOptions& options, const PssSolution* warm) {
  model.validate();
  sole_branch(model);
  const auto [fs, fp] = bvd::resonance_freqs(model);
  if (!(spec.f_op > fs && spec.f_op < fp))
    throw InputError("operating frequency must lie strictly between fs and fp");
  const ShootingProblem problem(spec, model);

  int iterations = 0;
  double norm = 0.0;
  Eigen::VectorXd z;
  bool solved = false;
  if (warm != nullptr && warm->durations.size() == spec.stages.size()) {
    std::vector<double> frac;
    for (std::size_t k = 0; k < spec.stages.size(); ++k)
      if (!spec.stages[k].clamped()) frac.push_back(warm->durations[k] * warm->f_op);
    try {
      z = newton(problem, problem.periodic_guess(frac), options, iterations, norm);
      solved = true;
    } catch (const ConvergenceError&) {
    }
  }
  if (!solved) z = newton(problem, problem.cold_guess(), options, iterations, norm);

  PssSolution sol;
  sol.f_op = spec.f_op;
  sol.durations = problem.durations(z);
  sol.iterations = iterations;
  sol.residual_norm = norm;
  for (std::size_t k = 0; k < sol.durations.size(); ++k)
    if (sol.durations[k] < 0.0)
      throw InfeasibleError("operating point needs a negative duration in stage " +
                            std::to_string(k));

  sol.boundary.push_back(problem.initial_state(z));
  const std::size_t n = spec.stages.size();
  for (std::size_t k = 0; k < n; ++k) {
    const ResonatorState next = stage_evolve(sol.boundary.back(), spec.stages[k], model, sol.durations[k]);
    if (!spec.stages[k].clamped())
      sol.zvs_residuals.push_back(next.v_c0 - spec.stages[(k + 1) % n].v_applied);
    sol.boundary.push_back(next);
  }
  const Eigen::VectorXd r = problem.residual(z);
  sol.periodicity_residual = r.head(problem.unknowns() - static_cast<Eigen::Index>(sol.zvs_residuals.size())).norm();

  const EnergyAudit audit = energy_audit(spec, model, sol);
  sol.p_in = audit.e_in * spec.f_op;
  sol.p_out = audit.e_out * spec.f_op;
  sol.p_loss = audit.e_loss * spec.f_op;
  if (!(sol.p_out > 0.0))
    throw InfeasibleError("stage sequence moves power from the output to the input");
  sol.efficiency = sol.p_out / (sol.p_out + sol.p_loss);
  if (!(sol.efficiency >= 0.0 && sol.efficiency <= 1.0 + 1e-9))
    throw InvariantError("efficiency outside [0, 1]");
  return sol;
}

EnergyAudit energy_audit(const ConverterSpec& spec, const BvdModel& model,
                         const PssSolution& solution) {
  const BvdBranch& br = sole_branch(model);
  EnergyAudit a{0.0, 0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < spec.stages.size(); ++k) {
    const StageDef& s = spec.stages[k];
    const ResonatorState& start = solution.boundary[k];
    const ResonatorState& end = solution.boundary[k + 1];
    a.e_loss += stage_loss(start, s, model, solution.durations[k]);
    if (!s.clamped()) continue;
    const double q_in = -br.c_m * (end.v_cm - start.v_cm);  // charge into the top terminal
    switch (s.role) {
      case StageRole::input: a.e_in += s.v_applied * q_in; break;
      case StageRole::output: a.e_out -= s.v_applied * q_in; break;
      case StageRole::series:
        a.e_in += spec.v_in * q_in;
        a.e_out += spec.v_out * q_in;
        break;
      case StageRole::zero:
      case StageRole::open: break;
    }
  }
  a.imbalance = a.e_in - a.e_out - a.e_loss;
  return a;
}

double forward_drift(const ConverterSpec& spec, const BvdModel& model, const PssSolution& solution,
                     int periods) {
  const BvdBranch& br = sole_branch(model);
  const double i_scale = spec.v_in * kTwoPi * br.series_freq() * model.c0;
  ResonatorState s = solution.boundary.front();
  for (int p = 0; p < periods; ++p)
    for (std::size_t k = 0; k < spec.stages.size(); ++k)
      s = stage_evolve(s, spec.stages[k], model, solution.durations[k]);
  const ResonatorState& s0 = solution.boundary.front();
  return std::max({std::abs(s.i_l - s0.i_l) / i_scale, std::abs(s.v_cm - s0.v_cm) / spec.v_in,
                   std::abs(s.v_c0 - s0.v_c0) / spec.v_in});
}

std::vector<WaveformSample> sample_waveform(const ConverterSpec& spec, const BvdModel& model,
                                            const PssSolution& solution,
                                            std::size_t points_per_period) {
  if (points_per_period < 2) throw InputError("need at least two samples per period");
  const double period = 1.0 / spec.f_op;
  std::vector<WaveformSample> out;
  out.reserve(points_per_period);
  std::size_t stage = 0;
  double stage_start = 0.0;
  for (std::size_t p = 0; p < points_per_period; ++p) {
    const double t = period * static_cast<double>(p) / static_cast<double>(points_per_period);
    while (stage + 1 < spec.stages.size() && t >= stage_start + solution.durations[stage]) {
      stage_start += solution.durations[stage];
      ++stage;
    }
    const ResonatorState s =
        stage_evolve(solution.boundary[stage], spec.stages[stage], model, t - stage_start);
    out.push_back({t, s.i_l, s.v_cm, s.v_c0, stage});
  }
  return out;
}

double total_harmonic_distortion(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 4) throw InputError("need at least four samples for a harmonic analysis");
  double fundamental = 0.0, harmonics = 0.0;
  for (std::size_t h = 1; h < n / 2; ++h) {
    cdouble acc = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      acc += samples[k] * std::polar(1.0, -kTwoPi * static_cast<double>(h * k % n) / static_cast<double>(n));
    const double mag2 = std::norm(acc);
    if (h == 1)
      fundamental = mag2;
    else
      harmonics += mag2;
  }
  if (fundamental == 0.0) throw InputError("waveform has no fundamental component");
  return std::sqrt(harmonics / fundamental);
}

std::optional<BvdModel> local_single_branch(const BvdModel& model, double freq_hz) {
  if (model.branches.empty()) return std::nullopt;
  if (model.branches.size() == 1) return model;
  const double w = kTwoPi * freq_hz;
  cdouble y_sum = 0.0, dy_sum = 0.0;
  for (const auto& b : model.branches) {
    const cdouble z = b.impedance(w);
    const cdouble dz(0.0, b.l_m + 1.0 / (w * w * b.c_m));
    y_sum += 1.0 / z;
    dy_sum += -dz / (z * z);
  }
  const cdouble z_eq = 1.0 / y_sum;
  const cdouble dz_eq = -dy_sum / (y_sum * y_sum);
  const double x = z_eq.imag(), dx = dz_eq.imag();
  const double r = z_eq.real();
  const double l = (x + w * dx) / (2.0 * w);
  const double inv_wc = (w * dx - x) / 2.0;
  if (!(r > 0.0 && l > 0.0 && inv_wc > 0.0)) return std::nullopt;
  BvdModel out;
  out.c0 = model.c0;
  out.label = model.label;
  out.branches.push_back({r, l, 1.0 / (w * inv_wc)});
  return out;
}

namespace {

SweepPoint solve_point(const ConverterSpec& tmpl, const BvdModel& model, double f,
                       const SolverOptions& options, const PssSolution* warm,
                       std::optional<PssSolution>* keep) {
  SweepPoint pt{f, 0.0, 0.0, false, {}};
  try {
    const auto eq = local_single_branch(model, f);
    if (!eq) throw InfeasibleError("no passive single-branch equivalent at this frequency");
    ConverterSpec spec = tmpl;
    spec.f_op = f;
    PssSolution sol = solve_pss(spec, *eq, options, warm);
    pt.p_out = sol.p_out;
    pt.efficiency = sol.efficiency;
    pt.converged = true;
    if (keep) *keep = std::move(sol);
  } catch (const Error& e) {
    pt.message = e.what();
    if (keep) keep->reset();
  }
  return pt;
}

}  // namespace

std::vector<SweepPoint> power_sweep(const ConverterSpec& spec_template, const BvdModel& model,
                                    std::span<const double> f_grid, const SweepOptions& options) {
  model.validate();
  std::vector<SweepPoint> out(f_grid.size());
  if (options.warm_start) {
    std::optional<PssSolution> last;
    for (std::size_t k = 0; k < f_grid.size(); ++k) {
      std::optional<PssSolution> now;
      out[k] = solve_point(spec_template, model, f_grid[k], options.solver,
                           last ? &*last : nullptr, &now);
      if (now) last = std::move(now);
    }
    return out;
  }
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(f_grid.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t k = t; k < f_grid.size(); k += threads)
          out[k] = solve_point(spec_template, model, f_grid[k], options.solver, nullptr, nullptr);
      });
  }
  return out;
}

bool SpurImpact::lost_contains(double freq_hz) const {
  return std::any_of(lost.begin(), lost.end(),
                     [&](const FrequencyInterval& iv) { return freq_hz >= iv.lo && freq_hz <= iv.hi; });
}

SpurImpact spur_impact(const ConverterSpec& spec_template, const BvdModel& clean,
                       const BvdModel& spurred, std::span<const double> f_grid,
                       const SweepOptions& options, double tolerance) {
  const auto a = power_sweep(spec_template, clean, f_grid, options);
  const auto b = power_sweep(spec_template, spurred, f_grid, options);
  SpurImpact out;
  const std::size_t n = f_grid.size();
  for (std::size_t k = 0; k < n; ++k) {
    SpurImpactPoint p{f_grid[k], a[k].p_out, b[k].p_out, a[k].converged, b[k].converged, false};
    if (p.clean_converged)
      p.lost = !p.spurred_converged ||
               std::abs(p.p_out_spurred - p.p_out_clean) > tolerance * std::abs(p.p_out_clean);
    out.points.push_back(p);
  }
  auto half_gap = [&](std::size_t i, std::size_t j) { return 0.5 * std::abs(f_grid[j] - f_grid[i]); };
  for (std::size_t k = 0; k < n;) {
    if (!out.points[k].lost) {
      ++k;
      continue;
    }
    std::size_t e = k;
    while (e + 1 < n && out.points[e + 1].lost) ++e;
    const double lo_pad = k > 0 ? half_gap(k - 1, k) : (n > 1 ? half_gap(0, 1) : 0.0);
    const double hi_pad = e + 1 < n ? half_gap(e, e + 1) : (n > 1 ? half_gap(n - 2, n - 1) : 0.0);
    out.lost.push_back({f_grid[k] - lo_pad, f_grid[e] + hi_pad});
    k = e + 1;
  }
  return out;
}

}  // namespace piezores::converter
