#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "piezores/bvd.hpp"

namespace piezores::converter {

/// What a stage connects the resonator terminals to. Clamped stages pin the
/// terminal voltage (v_C0); `open` leaves the terminals floating.
enum class StageRole {
  input,   // resonator across the input rail: +v_in
  output,  // resonator across the output rail: +v_out
  series,  // input and output in series with the resonator: v_in - v_out
  zero,    // terminals shorted
  open,
};

std::string to_string(StageRole role);
StageRole stage_role_from_string(const std::string& name);

struct StageDef {
  StageRole role = StageRole::open;
  double v_applied = 0.0;  // clamp level, V
  double weight = 1.0;     // share of the clamped time left over by open stages

  bool clamped() const noexcept { return role != StageRole::open; }

  static StageDef clamp(StageRole role, double volts, double weight = 1.0);
  static StageDef open() { return {}; }
};

/// Role implied by a clamp level: 0 -> zero, v_in -> input, v_out -> output,
/// v_in - v_out -> series. Throws InputError for any other level.
StageRole infer_role(double volts, double v_in, double v_out);

struct ConverterSpec {
  double v_in = 40.0;
  double v_out = 30.0;
  double f_op = 0.0;
  std::vector<StageDef> stages;

  /// Clamped(v_in), Open, Clamped(0), Open, Clamped(v_out), Open.
  static std::vector<StageDef> default_stages(double v_in, double v_out);
  static ConverterSpec make(double v_in, double v_out, double f_op);

  void validate() const;
};

struct ResonatorState {
  double i_l = 0.0;   // motional current, A, positive into the C0 node
  double v_cm = 0.0;  // motional capacitor voltage, V
  double v_c0 = 0.0;  // terminal voltage, V
};

struct SolverOptions {
  double tolerance = 1e-9;     // scaled residual norm
  int max_iterations = 100;
  double fd_rel_step = 1e-7;
};

struct PssSolution {
  double f_op = 0.0;
  std::vector<double> durations;              // per stage, s
  std::vector<ResonatorState> boundary;       // stages + 1 entries; last equals first
  double p_in = 0.0;                          // W drawn from v_in
  double p_out = 0.0;                         // W delivered into v_out
  double p_loss = 0.0;                        // W dissipated in r_m
  double efficiency = 0.0;
  double periodicity_residual = 0.0;          // scaled
  std::vector<double> zvs_residuals;          // V, one per open stage
  double residual_norm = 0.0;
  int iterations = 0;
};

/// Exact propagation of one stage for dt seconds.
ResonatorState stage_evolve(const ResonatorState& state, const StageDef& stage,
                            const bvd::BvdModel& model, double dt);

/// Shooting map of the periodic steady state. Unknowns, all scaled:
/// i_L / (v_in w_s C0), v_Cm / v_in, [v_C0 / v_in when stage 0 is open],
/// then each open-stage duration times f_op. Residuals: periodicity of the
/// states and, per open stage, the arrival error of v_C0 at the next clamp.
class ShootingProblem {
 public:
  ShootingProblem(ConverterSpec spec, bvd::BvdModel model);

  Eigen::Index unknowns() const { return static_cast<Eigen::Index>(state_count_ + open_stages_.size()); }
  const ConverterSpec& spec() const { return spec_; }
  const bvd::BvdModel& model() const { return model_; }

  Eigen::VectorXd residual(const Eigen::VectorXd& z) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& z, double rel_step, bool centered = false) const;

  std::vector<double> durations(const Eigen::VectorXd& z) const;
  ResonatorState initial_state(const Eigen::VectorXd& z) const;

  /// Unknown vector whose states are the exact periodic orbit for the given
  /// open-stage durations (as fractions of the period).
  Eigen::VectorXd periodic_guess(std::span<const double> open_fractions) const;

  /// Best ZVS residual over a coarse grid of open-stage fractions.
  Eigen::VectorXd cold_guess() const;

  std::vector<double> open_fractions(const Eigen::VectorXd& z) const;

 private:
  ConverterSpec spec_;
  bvd::BvdModel model_;
  std::vector<std::size_t> open_stages_;
  std::size_t state_count_;
  double current_scale_;
  double voltage_scale_;
  double period_;
};

/// Damped Newton on the shooting map. `warm` seeds the open-stage fractions.
PssSolution solve_pss(const ConverterSpec& spec, const bvd::BvdModel& model,
                      const SolverOptions& options = {}, const PssSolution* warm = nullptr);

struct EnergyAudit {
  double e_in;    // J per period from the input source
  double e_out;   // J per period into the output sink
  double e_loss;  // J per period in r_m, by quadrature
  double imbalance;
};

EnergyAudit energy_audit(const ConverterSpec& spec, const bvd::BvdModel& model,
                         const PssSolution& solution);

/// Scaled state mismatch after re-simulating the solution for `periods`.
double forward_drift(const ConverterSpec& spec, const bvd::BvdModel& model,
                     const PssSolution& solution, int periods);

struct WaveformSample {
  double t_s;
  double i_l_a;
  double v_cm_v;
  double v_c0_v;
  std::size_t stage_index;
};

std::vector<WaveformSample> sample_waveform(const ConverterSpec& spec, const bvd::BvdModel& model,
                                            const PssSolution& solution,
                                            std::size_t points_per_period = 400);

/// sqrt(sum_{h>=2} |X_h|^2) / |X_1| of one period of uniform samples.
double total_harmonic_distortion(std::span<const double> samples);

/// Single branch matching the combined motional impedance of a
/// multi-branch model and its reactance slope at freq_hz. Empty when the
/// match is not a passive R-L-C.
std::optional<bvd::BvdModel> local_single_branch(const bvd::BvdModel& model, double freq_hz);

struct SweepOptions {
  SolverOptions solver;
  bool warm_start = true;
  unsigned threads = 1;  // used only without warm starts
};

struct SweepPoint {
  double f_op;
  double p_out;
  double efficiency;
  bool converged;
  std::string message;
};

/// One PSS per grid frequency. Multi-branch models are replaced at each
/// frequency by local_single_branch. Failures are flagged per point.
std::vector<SweepPoint> power_sweep(const ConverterSpec& spec_template, const bvd::BvdModel& model,
                                    std::span<const double> f_grid, const SweepOptions& options = {});

struct SpurImpactPoint {
  double f_op;
  double p_out_clean;
  double p_out_spurred;
  bool clean_converged;
  bool spurred_converged;
  bool lost;
};

struct FrequencyInterval {
  double lo;
  double hi;
};

struct SpurImpact {
  std::vector<SpurImpactPoint> points;
  std::vector<FrequencyInterval> lost;  // merged around contiguous lost points

  bool lost_contains(double freq_hz) const;
};

/// Points usable with the clean model that the spurred model loses, either
/// by failing to converge or by moving p_out more than `tolerance`.
SpurImpact spur_impact(const ConverterSpec& spec_template, const bvd::BvdModel& clean,
                       const bvd::BvdModel& spurred, std::span<const double> f_grid,
                       const SweepOptions& options = {}, double tolerance = 0.10);

}  // namespace piezores::converter
