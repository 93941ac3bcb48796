// piezores command-line front end.
#include <CLI11.hpp>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "piezores/bvd.hpp"
#include "piezores/converter.hpp"
#include "piezores/error.hpp"
#include "piezores/io.hpp"
#include "piezores/mason.hpp"
#include "piezores/materials.hpp"
#include "piezores/metrics.hpp"

namespace fs = std::filesystem;
using namespace piezores;
using io::json;

namespace {

struct Globals {
  std::string out = ".";
  std::string config;
  std::optional<std::uint64_t> seed;
  json cfg = json::object();
};

bvd::BvdModel reference_twin() {
  const double fs = 10.14e6;
  return bvd::from_resonances(fs, fs + 0.72e6 / 0.62, 4000.0, 100e-12, "reference twin");
}

double cfg_num(const Globals& g, const char* key, double fallback) {
  if (!g.cfg.contains(key)) return fallback;
  if (!g.cfg.at(key).is_number()) throw InputError(std::string("config field '") + key + "' must be a number");
  return g.cfg.at(key).get<double>();
}

std::string cfg_str(const Globals& g, const char* key, std::string fallback) {
  if (!g.cfg.contains(key)) return fallback;
  if (!g.cfg.at(key).is_string()) throw InputError(std::string("config field '") + key + "' must be a string");
  return g.cfg.at(key).get<std::string>();
}

fs::path out_path(const Globals& g, const std::string& name) { return fs::path(g.out) / name; }

void finish_report(const Globals& g, json doc, const std::string& name) {
  if (g.seed) doc["seed"] = *g.seed;
  io::write_report(std::move(doc), out_path(g, name));
}

materials::MaterialConstantSet load_material(const std::string& path) {
  if (path.empty()) return materials::lithium_niobate();
  return io::material_from_json(io::parse_json(io::read_text(path), path));
}

bvd::BvdModel load_bvd(const std::string& path) {
  if (path.empty()) return reference_twin();
  return io::bvd_model_from_json(io::parse_json(io::read_text(path), path));
}

materials::CouplingForm form_from(const std::string& s) {
  if (s == "literal") return materials::CouplingForm::literal;
  if (s == "stiffened") return materials::CouplingForm::stiffened;
  throw InputError("coupling form must be 'literal' or 'stiffened'");
}

// ---- cut-scan

struct CutScanArgs {
  double theta_min = 0.0, theta_max = 180.0, step = 0.5;
  std::string material, form = "literal";
};

void cmd_cut_scan(const Globals& g, const CutScanArgs& a) {
  const auto base = load_material(a.material);
  const auto form = form_from(a.form);
  const auto rows = materials::coupling_scan(base, a.theta_min, a.theta_max, a.step, form);
  std::string csv = "theta_deg,k33_sq,k35_sq\n";
  for (const auto& r : rows)
    csv += io::format_double(r.theta_deg) + ',' + io::format_double(r.k33_sq) + ',' + io::format_double(r.k35_sq) + '\n';
  io::write_text(out_path(g, "cut_scan.csv"), csv);

  const auto plate36 = materials::plate_frame(base, materials::CrystalCut(36.0));
  const double k33 = materials::coupling_te(plate36, form), k35 = materials::coupling_ts(plate36, form);
  const auto nulls = materials::ts_null_angles(base, a.theta_min, a.theta_max);
  const auto best = materials::best_ts_null(base);
  json doc = {{"kind", "cut_scan"},
              {"material", base.name},
              {"coupling_form", a.form},
              {"rows", rows.size()},
              {"ts_null_angles_deg", nulls},
              {"k33_sq_at_36", k33},
              {"k35_sq_at_36", k35},
              {"ratio_at_36", k35 > 0.0 ? json(k33 / k35) : json(nullptr)}};
  doc["ts_null_deg"] = best ? json(*best) : json(nullptr);
  finish_report(g, doc, "cut_scan_summary.json");
  if (best)
    std::printf("TS zero crossing: %.4f deg\n", *best);
  else
    std::printf("TS zero crossing: none\n");
  std::printf("k33^2(36 deg) = %.5f, k35^2(36 deg) = %.3e, rows = %zu\n", k33, k35, rows.size());
}

// ---- mason

struct MasonArgs {
  double f_start = 5e6, f_stop = 15e6;
  std::size_t points = 4001;
  unsigned threads = 1;
  std::optional<double> radius, cut, thickness;
  std::string material;
};

void cmd_mason(const Globals& g, const MasonArgs& a) {
  mason::StackOptions opt;
  opt.electrode_radius = a.radius.value_or(cfg_num(g, "electrode_radius", opt.electrode_radius));
  opt.cut_deg = a.cut.value_or(cfg_num(g, "cut_deg", opt.cut_deg));
  opt.piezo_thickness = a.thickness.value_or(cfg_num(g, "piezo_thickness", opt.piezo_thickness));
  if (!(opt.electrode_radius > 0.0 && opt.electrode_radius < 0.1))
    throw InputError("electrode radius must lie in (0, 0.1) m");
  const auto stack = mason::default_stack(opt, load_material(a.material));
  const auto grid = linear_grid(a.f_start, a.f_stop, a.points);
  const auto sweep = mason::input_impedance(stack, grid, a.threads);
  io::write_text(out_path(g, "mason_sweep.csv"), io::write_csv_sweep(sweep));
  const auto [fs, fp] = mason::find_resonances(sweep);
  const double k2 = metrics::coupling_from_freqs(fs, fp);
  finish_report(g,
                {{"kind", "mason"},
                 {"electrode_radius_m", opt.electrode_radius},
                 {"cut_deg", opt.cut_deg},
                 {"piezo_thickness_m", opt.piezo_thickness},
                 {"c0_f", stack.static_capacitance()},
                 {"fs_hz", fs},
                 {"fp_hz", fp},
                 {"k_r_sq", k2}},
                "mason_report.json");
  std::printf("fs = %.6g Hz, fp = %.6g Hz, k^2 = %.4f\n", fs, fp, k2);
}

// Re-raises module errors with the name of the data they came from.
template <class F>
auto in_context(const std::string& source, F&& fn) {
  try {
    return fn();
  } catch (const NotFoundError& e) {
    throw NotFoundError(source + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
}

// ---- fit

struct FitArgs {
  std::string input;
  std::size_t max_branches = 4;
};

void cmd_fit(const Globals& g, const FitArgs& a) {
  const auto file = io::read_sweep_file(a.input);
  bvd::FitOptions opt;
  opt.max_branches = a.max_branches;
  const auto result = in_context(file.source, [&] { return bvd::fit(file.sweep, opt); });
  finish_report(g, io::fit_report(result, file.source), "fit_report.json");
  finish_report(g, io::to_json(result.model), "fit_model.json");
  const auto model_sweep = bvd::impedance(result.model, file.sweep.freq_hz, file.sweep.ref_ohm);
  std::string csv = "freq_hz,abs_z_ohm,abs_z_fit_ohm,re_z_ohm,re_z_fit_ohm\n";
  for (std::size_t k = 0; k < file.sweep.size(); ++k)
    csv += io::format_double(file.sweep.freq_hz[k]) + ',' + io::format_double(std::abs(file.sweep.z_ohm[k])) + ',' +
           io::format_double(std::abs(model_sweep.z_ohm[k])) + ',' + io::format_double(file.sweep.z_ohm[k].real()) +
           ',' + io::format_double(model_sweep.z_ohm[k].real()) + '\n';
  io::write_text(out_path(g, "fit_plot.csv"), csv);
  std::printf("C0 = %.6g F, %zu branch(es), rms log error = %.3e\n", result.model.c0, result.model.branches.size(),
              result.report.rms_log_error);
  for (const auto& b : result.model.branches)
    std::printf("  fs = %.8g Hz  Q = %.1f  r_m = %.5g ohm\n", b.series_freq(), b.quality(), b.r_m);
}

// ---- score

struct SweepSource {
  std::string input, bvd;
  std::optional<double> f_start, f_stop;
  std::size_t points = 20001;
};

io::SweepFile load_sweep(const SweepSource& s) {
  if (!s.input.empty() && !s.bvd.empty()) throw InputError("give either --input or --bvd, not both");
  if (!s.input.empty()) return io::read_sweep_file(s.input);
  const auto model = load_bvd(s.bvd);
  double lo = 0.0, hi = 0.0;
  if (s.f_start && s.f_stop) {
    lo = *s.f_start;
    hi = *s.f_stop;
  } else {
    double f_min = model.branches.empty() ? 1e6 : model.branches.front().series_freq(), f_max = f_min;
    for (const auto& b : model.branches) {
      f_min = std::min(f_min, b.series_freq());
      f_max = std::max(f_max, b.series_freq());
    }
    lo = s.f_start.value_or(0.85 * f_min);
    hi = s.f_stop.value_or(1.25 * f_max);
  }
  io::SweepFile f;
  f.source = s.bvd.empty() ? "reference twin" : s.bvd;
  f.sweep = bvd::impedance(model, linear_grid(lo, hi, s.points));
  return f;
}

metrics::ScoreSettings settings_from(const Globals& g, std::optional<double> threshold, const std::string& conv) {
  metrics::ScoreSettings st;
  st.threshold = threshold.value_or(cfg_num(g, "threshold", st.threshold));
  st.convention = metrics::ksq_convention_from_string(conv.empty() ? cfg_str(g, "ksq_convention", "pi2_over_8") : conv);
  if (!(st.threshold > 1.0 && st.threshold <= 1e4)) throw InputError("threshold multiplier must lie in (1, 1e4]");
  return st;
}

void cmd_score(const Globals& g, const SweepSource& src, std::optional<double> threshold, const std::string& conv) {
  const auto file = load_sweep(src);
  const auto st = settings_from(g, threshold, conv);
  const auto s = in_context(file.source, [&] { return metrics::score(file.sweep, st); });
  finish_report(g, io::score_report(s, st, file.source), "score_report.json");
  const auto q = metrics::bode_q(file.sweep);
  std::string csv = "freq_hz,abs_z_ohm,re_z_ohm,q_bode,in_suppressed_band\n";
  for (std::size_t k = 0; k < file.sweep.size(); ++k) {
    const double f = file.sweep.freq_hz[k];
    csv += io::format_double(f) + ',' + io::format_double(std::abs(file.sweep.z_ohm[k])) + ',' +
           io::format_double(file.sweep.z_ohm[k].real()) + ',' + io::format_double(q[k].q) + ',' +
           (f >= s.supp_lo_hz && f <= s.supp_hi_hz ? "1" : "0") + '\n';
  }
  io::write_text(out_path(g, "score_plot.csv"), csv);
  std::printf("fs = %.6g Hz, fp = %.6g Hz, k_r^2 = %.4f, Q(fs) = %.1f, FoM = %.1f, fractional = %.4f\n", s.fs_hz,
              s.fp_hz, s.k_r_sq, s.q_bode_at_fs, s.fom, s.fractional_supp);
}

// ---- converter

struct ConverterArgs {
  std::string bvd;
  std::optional<double> vin, vout, f_op, tolerance;
  std::size_t grid_points = 0;
  std::size_t samples = 400;
  bool no_warm = false;
  unsigned threads = 1;
};

void cmd_converter(const Globals& g, const ConverterArgs& a) {
  json cfg = g.cfg;
  if (a.vin) cfg["v_in"] = *a.vin;
  if (a.vout) cfg["v_out"] = *a.vout;
  if ((a.vin || a.vout) && cfg.contains("stages"))
    throw InputError("--vin/--vout cannot override a config that lists explicit stages");
  if (a.f_op) cfg["f_op_hz"] = *a.f_op;
  auto config = io::converter_config_from_json(cfg);
  if (a.tolerance) config.sweep.solver.tolerance = *a.tolerance;
  if (a.no_warm) config.sweep.warm_start = false;
  if (a.threads > 1) config.sweep.threads = a.threads;
  if (a.samples < 200) throw InputError("at least 200 samples per period");

  const auto model = load_bvd(a.bvd);
  if (model.branches.empty()) throw InputError("converter needs a model with a motional branch");
  // Band of the main (first) branch; spur branches come after it.
  const auto [fs, fp] = bvd::resonance_freqs({model.c0, {model.branches.front()}, model.label});
  if (!(config.spec.f_op > 0.0)) config.spec.f_op = 0.5 * (fs + fp);
  const auto base = converter::local_single_branch(model, config.spec.f_op);
  if (!base) throw InfeasibleError("no single-branch equivalent at the operating frequency");

  const auto sol = converter::solve_pss(config.spec, *base, config.sweep.solver);
  finish_report(g, io::pss_report(config.spec, sol), "pss_report.json");
  const auto wave = converter::sample_waveform(config.spec, *base, sol, a.samples);
  std::string csv = "t_s,i_l_a,v_cm_v,v_c0_v,stage_index\n";
  std::vector<double> current;
  for (const auto& w : wave) {
    csv += io::format_double(w.t_s) + ',' + io::format_double(w.i_l_a) + ',' + io::format_double(w.v_cm_v) + ',' +
           io::format_double(w.v_c0_v) + ',' + std::to_string(w.stage_index) + '\n';
    current.push_back(w.i_l_a);
  }
  io::write_text(out_path(g, "waveform.csv"), csv);
  const double thd = converter::total_harmonic_distortion(current);
  std::printf("f_op = %.6g Hz, p_out = %.5g W, p_loss = %.4g W, efficiency = %.5f, THD(i_L) = %.4f\n", sol.f_op,
              sol.p_out, sol.p_loss, sol.efficiency, thd);

  std::vector<double> grid = config.f_grid_hz;
  if (grid.empty() && a.grid_points > 0) {
    const double margin = 0.01 * (fp - fs);
    grid = linear_grid(fs + margin, fp - margin, a.grid_points);
  }
  if (!grid.empty()) {
    const auto pts = converter::power_sweep(config.spec, model, grid, config.sweep);
    std::string sc = "f_op_hz,p_out_w,efficiency,converged\n";
    std::size_t ok = 0;
    for (const auto& p : pts) {
      sc += io::format_double(p.f_op) + ',' + io::format_double(p.p_out) + ',' + io::format_double(p.efficiency) +
            ',' + (p.converged ? "1" : "0") + '\n';
      ok += p.converged;
    }
    io::write_text(out_path(g, "power_sweep.csv"), sc);
    std::printf("power sweep: %zu of %zu points converged\n", ok, pts.size());
  }
}

// ---- compare

void cmd_compare(const Globals& g, const SweepSource& src, const std::string& report, const std::string& label) {
  metrics::ResonatorScore s;
  std::string name = label;
  if (!report.empty()) {
    s = io::score_from_json(io::parse_json(io::read_text(report), report));
    if (name.empty()) name = report;
  } else {
    const auto file = load_sweep(src);
    const auto st = settings_from(g, std::nullopt, "");
    s = in_context(file.source, [&] { return metrics::score(file.sweep, st); });
    if (name.empty()) name = file.source;
  }
  const auto rows = metrics::compare(s, name);
  io::write_text(out_path(g, "compare.csv"), io::soa_csv(rows));
  finish_report(g, {{"kind", "compare"}, {"rows", io::soa_json(rows)}}, "compare.json");
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    std::printf("%zu. %-24s fractional=%s fom=%s\n", k + 1, r.reference.c_str(),
                r.fractional_supp ? io::format_double(*r.fractional_supp).c_str() : "N/A",
                r.fom ? io::format_double(*r.fom).c_str() : "N/A");
  }
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConvergenceError*>(&e) || dynamic_cast<const InfeasibleError*>(&e)) return 2;
  if (dynamic_cast<const InputError*>(&e)) return 1;
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Piezoelectric resonator design and converter toolkit"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--config", g.config, "JSON configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "Seed recorded in reports");

  CutScanArgs cut;
  auto* c_cut = app.add_subcommand("cut-scan", "Coupling versus rotated-Y cut angle");
  c_cut->add_option("--theta-min", cut.theta_min)->capture_default_str();
  c_cut->add_option("--theta-max", cut.theta_max)->capture_default_str();
  c_cut->add_option("--step", cut.step)->capture_default_str();
  c_cut->add_option("--material", cut.material, "Material constants JSON");
  c_cut->add_option("--form", cut.form, "literal or stiffened")->capture_default_str();

  MasonArgs ma;
  auto* c_mason = app.add_subcommand("mason", "Impedance of the layered thickness-mode stack");
  c_mason->add_option("--f-start", ma.f_start)->capture_default_str();
  c_mason->add_option("--f-stop", ma.f_stop)->capture_default_str();
  c_mason->add_option("--points", ma.points)->capture_default_str();
  c_mason->add_option("--threads", ma.threads)->capture_default_str();
  c_mason->add_option("--radius", ma.radius, "Electrode radius, m");
  c_mason->add_option("--cut", ma.cut, "Cut angle, degrees");
  c_mason->add_option("--thickness", ma.thickness, "Piezoelectric thickness, m");
  c_mason->add_option("--material", ma.material, "Material constants JSON");

  FitArgs fa;
  auto* c_fit = app.add_subcommand("fit", "Extract a BVD model from a sweep");
  c_fit->add_option("--input", fa.input, "Sweep file (.s1p or CSV)")->required();
  c_fit->add_option("--max-branches", fa.max_branches)->capture_default_str();

  SweepSource ss;
  std::optional<double> threshold;
  std::string conv;
  auto* c_score = app.add_subcommand("score", "Figures of merit of a resonator sweep");
  for (auto* sc : {c_score}) {
    sc->add_option("--input", ss.input, "Sweep file (.s1p or CSV)");
    sc->add_option("--bvd", ss.bvd, "BVD model JSON to synthesize the sweep from");
    sc->add_option("--f-start", ss.f_start);
    sc->add_option("--f-stop", ss.f_stop);
    sc->add_option("--points", ss.points)->capture_default_str();
  }
  c_score->add_option("--threshold", threshold, "Suppressed-region multiplier of min Re Z (default 20)");
  c_score->add_option("--convention", conv, "pi2_over_8, parallel_ratio or mason_tangent");

  ConverterArgs ca;
  auto* c_conv = app.add_subcommand("converter", "Periodic steady state of the resonant converter");
  c_conv->add_option("--bvd", ca.bvd, "BVD model JSON (default: reference twin)");
  c_conv->add_option("--vin", ca.vin);
  c_conv->add_option("--vout", ca.vout);
  c_conv->add_option("--f-op", ca.f_op, "Operating frequency, Hz (default: mid-band)");
  c_conv->add_option("--tolerance", ca.tolerance);
  c_conv->add_option("--grid-points", ca.grid_points, "Also sweep this many points across (fs, fp)");
  c_conv->add_option("--samples", ca.samples, "Waveform samples per period")->capture_default_str();
  c_conv->add_flag("--no-warm-start", ca.no_warm);
  c_conv->add_option("--threads", ca.threads, "Sweep workers when warm starts are off");

  SweepSource cs;
  std::string report, label;
  auto* c_cmp = app.add_subcommand("compare", "Rank a resonator against published converter resonators");
  c_cmp->add_option("--input", cs.input, "Sweep file (.s1p or CSV)");
  c_cmp->add_option("--bvd", cs.bvd, "BVD model JSON");
  c_cmp->add_option("--report", report, "Score report JSON");
  c_cmp->add_option("--label", label);
  c_cmp->add_option("--points", cs.points)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*seed_opt) g.seed = seed;
    if (!g.config.empty()) {
      g.cfg = io::parse_json(io::read_text(g.config), g.config);
      if (!g.cfg.is_object()) throw InputError(g.config + ": configuration must be a JSON object");
    }
    fs::create_directories(g.out);
    if (*c_cut) cmd_cut_scan(g, cut);
    if (*c_mason) cmd_mason(g, ma);
    if (*c_fit) cmd_fit(g, fa);
    if (*c_score) cmd_score(g, ss, threshold, conv);
    if (*c_conv) cmd_converter(g, ca);
    if (*c_cmp) cmd_compare(g, cs, report, label);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
