#include "piezores/io.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "piezores/error.hpp"

namespace piezores::io {
namespace {

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> out;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    if (nl == std::string_view::npos) {
      out.push_back(text);
      break;
    }
    out.push_back(text.substr(0, nl));
    text.remove_prefix(nl + 1);
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto c = s.find(',');
    out.push_back(trim(s.substr(0, c)));
    if (c == std::string_view::npos) break;
    s.remove_prefix(c + 1);
  }
  return out;
}

// Whole-token finite number; a single leading '+' is allowed.
bool parse_number(std::string_view tok, double& out) {
  if (tok.size() > 1 && tok.front() == '+' && tok[1] != '-' && tok[1] != '+') tok.remove_prefix(1);
  if (tok.empty()) return false;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size() && std::isfinite(out);
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string printable(std::string_view s) {
  std::string out;
  for (char c : s.substr(0, 32)) out += std::isprint(static_cast<unsigned char>(c)) ? c : '?';
  return out;
}

double unit_scale(const std::string& unit) {
  if (unit == "HZ") return 1.0;
  if (unit == "KHZ") return 1e3;
  if (unit == "MHZ") return 1e6;
  return 1e9;
}

TouchstoneOptions parse_option_line(std::string_view body, std::size_t row) {
  TouchstoneOptions opt;
  bool unit = false, param = false, fmt = false, ref = false;
  const auto toks = split_ws(body);
  for (std::size_t k = 0; k < toks.size(); ++k) {
    const std::string t = upper(toks[k]);
    auto once = [&](bool& seen) {
      if (seen) throw ParseError("malformed option line: repeated field '" + printable(toks[k]) + "'", row);
      seen = true;
    };
    if (t == "HZ" || t == "KHZ" || t == "MHZ" || t == "GHZ") {
      once(unit);
      opt.freq_unit = t;
    } else if (t == "S" || t == "Z") {
      once(param);
      opt.parameter = t[0];
    } else if (t == "Y" || t == "H" || t == "G") {
      throw ParseError("unsupported network parameter '" + t + "' (only S and Z)", row);
    } else if (t == "RI" || t == "MA" || t == "DB") {
      once(fmt);
      opt.format = t;
    } else if (t == "R") {
      once(ref);
      if (k + 1 >= toks.size() || !parse_number(toks[k + 1], opt.ref_ohm) || !(opt.ref_ohm > 0.0))
        throw ParseError("malformed option line: R needs a positive number", row);
      ++k;
    } else {
      throw ParseError("malformed option line: unexpected token '" + printable(toks[k]) + "'", row);
    }
  }
  return opt;
}

cdouble pair_to_complex(const std::string& format, double a, double b) {
  if (format == "RI") return {a, b};
  const double mag = format == "MA" ? a : std::pow(10.0, a / 20.0);
  return std::polar(mag, b * kPi / 180.0);
}

[[noreturn]] void fs_error(const std::filesystem::path& path, int err) {
  throw InputError(path.string() + ": " + std::strerror(err));
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double get_num(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) throw InputError(std::string("missing field '") + key + "'");
  const json& v = doc.at(key);
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!v.is_number()) throw InputError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

double get_num_or(const json& doc, const char* key, double fallback) {
  return doc.is_object() && doc.contains(key) ? get_num(doc, key) : fallback;
}

int get_int(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key) || !doc.at(key).is_number_integer())
    throw InputError(std::string("field '") + key + "' must be an integer");
  const json& v = doc.at(key);
  const bool fits = v.is_number_unsigned() ? v.get<std::uint64_t>() <= std::numeric_limits<int>::max()
                                           : v.get<std::int64_t>() >= std::numeric_limits<int>::min() &&
                                                 v.get<std::int64_t>() <= std::numeric_limits<int>::max();
  if (!fits) throw InputError(std::string("field '") + key + "' is out of range");
  return v.get<int>();
}

std::string get_str_or(const json& doc, const char* key, std::string fallback) {
  if (!doc.is_object() || !doc.contains(key)) return fallback;
  if (!doc.at(key).is_string()) throw InputError(std::string("field '") + key + "' must be a string");
  return doc.at(key).get<std::string>();
}

const json& get_array(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key) || !doc.at(key).is_array())
    throw InputError(std::string("field '") + key + "' must be an array");
  return doc.at(key);
}

std::vector<double> num_vector(const json& arr, const char* key) {
  std::vector<double> out;
  for (const auto& v : arr) {
    if (v.is_null()) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    if (!v.is_number()) throw InputError(std::string("field '") + key + "' must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

// Row-major flat array.
template <typename Matrix>
json matrix_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

// Flat row-major or nested rows.
template <typename Matrix>
void matrix_from(const json& doc, const char* key, Matrix& m) {
  const json& arr = get_array(doc, key);
  std::vector<double> flat;
  const bool nested = !arr.empty() && arr.front().is_array();
  for (const auto& v : arr) {
    if (nested) {
      if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != m.cols())
        throw InputError(std::string("field '") + key + "' has the wrong number of columns");
      for (const auto& x : v) {
        if (!x.is_number()) throw InputError(std::string("field '") + key + "' must hold numbers");
        flat.push_back(x.get<double>());
      }
    } else {
      if (!v.is_number()) throw InputError(std::string("field '") + key + "' must hold numbers");
      flat.push_back(v.get<double>());
    }
  }
  if (static_cast<Eigen::Index>(flat.size()) != m.size())
    throw InputError(std::string("field '") + key + "' needs " + std::to_string(m.size()) + " numbers");
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = flat[static_cast<std::size_t>(r * m.cols() + c)];
}

void expect_kind(const json& doc, const char* kind) {
  const std::string got = get_str_or(doc, "kind", kind);
  if (got != kind) throw InputError("expected a '" + std::string(kind) + "' document, got '" + got + "'");
}

json stage_json(const converter::StageDef& s) {
  if (!s.clamped()) return "open";
  return json{{"clamped", s.v_applied}, {"role", converter::to_string(s.role)}, {"weight", s.weight}};
}

converter::StageDef stage_from_json(const json& doc, double v_in, double v_out) {
  if (doc.is_string()) {
    if (doc.get<std::string>() != "open") throw InputError("a stage string must be \"open\"");
    return converter::StageDef::open();
  }
  if (!doc.is_object() || !doc.contains("clamped")) throw InputError("stage must be \"open\" or {\"clamped\": volts}");
  const double v = get_num(doc, "clamped");
  const std::string role = get_str_or(doc, "role", "");
  const auto r = role.empty() ? converter::infer_role(v, v_in, v_out) : converter::stage_role_from_string(role);
  return converter::StageDef::clamp(r, v, get_num_or(doc, "weight", 1.0));
}

std::string opt_cell(const std::optional<double>& v) { return v ? format_double(*v) : "N/A"; }

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw InvariantError("number formatting failed");
  return {buf, ptr};
}

SweepFile parse_touchstone_s1p(std::string_view text, std::string source) {
  if (trim(text).empty()) throw ParseError("empty Touchstone file");
  SweepFile file;
  file.source = std::move(source);
  file.format = SweepFormat::touchstone_s1p;
  bool have_option = false;
  double scale = 1.0;
  const auto lines = split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t row = n + 1;
    std::string_view line = lines[n];
    if (const auto bang = line.find('!'); bang != std::string_view::npos) {
      file.comments.emplace_back(trim(line.substr(bang + 1)));
      line = line.substr(0, bang);
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (!file.rows.empty()) throw ParseError("option line after data rows", row);
      if (!have_option) {
        file.touchstone = parse_option_line(line.substr(1), row);
        scale = unit_scale(file.touchstone.freq_unit);
        have_option = true;
      }
      continue;
    }
    const auto toks = split_ws(line);
    if (toks.size() != 3)
      throw ParseError("expected 3 numbers (frequency and one complex value), found " +
                           std::to_string(toks.size()), row);
    std::array<double, 3> v{};
    for (std::size_t k = 0; k < 3; ++k)
      if (!parse_number(toks[k], v[k]))
        throw ParseError("not a finite number: '" + printable(toks[k]) + "'", row, k + 1);
    const double f = v[0] * scale;
    if (!(f > 0.0) || !std::isfinite(f)) throw ParseError("frequency must be positive", row, 1);
    if (!file.sweep.freq_hz.empty() && !(f > file.sweep.freq_hz.back()))
      throw ParseError("frequencies must be strictly increasing", row, 1);
    const cdouble p = pair_to_complex(file.touchstone.format, v[1], v[2]);
    const double ref = file.touchstone.ref_ohm;
    cdouble z;
    if (file.touchstone.parameter == 'S') {
      if (!(std::abs(p) < 1.0)) throw ParseError("|S11| >= 1 has no passive impedance", row);
      z = ref * (1.0 + p) / (1.0 - p);
    } else {
      z = ref * p;
    }
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) throw ParseError("impedance overflows", row);
    file.rows.push_back(v);
    file.sweep.freq_hz.push_back(f);
    file.sweep.z_ohm.push_back(z);
  }
  if (file.rows.empty()) throw ParseError("no data rows");
  file.sweep.ref_ohm = file.touchstone.ref_ohm;
  file.sweep.validate();
  return file;
}

SweepFile parse_csv_sweep(std::string_view text, std::string source) {
  SweepFile file;
  file.source = std::move(source);
  file.format = SweepFormat::csv;
  bool header = false;
  std::size_t col_f = 0, col_re = 0, col_im = 0, needed = 0;
  const auto lines = split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t row = n + 1;
    const std::string_view line = trim(lines[n]);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string_view body = trim(line.substr(1));
      constexpr std::string_view key = "ref_ohm=";
      if (body.substr(0, key.size()) == key) {
        double ref = 0.0;
        if (!parse_number(trim(body.substr(key.size())), ref) || !(ref > 0.0))
          throw ParseError("ref_ohm must be a positive number", row);
        file.sweep.ref_ohm = ref;
      } else {
        file.comments.emplace_back(body);
      }
      continue;
    }
    const auto cells = split_commas(line);
    if (!header) {
      auto find = [&](std::string_view name) {
        const auto it = std::find(cells.begin(), cells.end(), name);
        if (it == cells.end()) throw ParseError("missing column '" + std::string(name) + "'", row);
        return static_cast<std::size_t>(it - cells.begin());
      };
      col_f = find("freq_hz");
      col_re = find("re_ohm");
      col_im = find("im_ohm");
      needed = std::max({col_f, col_re, col_im}) + 1;
      header = true;
      continue;
    }
    if (cells.size() < needed)
      throw ParseError("expected at least " + std::to_string(needed) + " cells, found " +
                           std::to_string(cells.size()), row);
    double f = 0.0, re = 0.0, im = 0.0;
    for (auto [col, dst] : {std::pair{col_f, &f}, std::pair{col_re, &re}, std::pair{col_im, &im}})
      if (!parse_number(cells[col], *dst))
        throw ParseError("not a finite number: '" + printable(cells[col]) + "'", row, col + 1);
    if (!(f > 0.0)) throw ParseError("frequency must be positive", row, col_f + 1);
    if (!file.sweep.freq_hz.empty() && !(f > file.sweep.freq_hz.back()))
      throw ParseError("frequencies must be strictly increasing", row, col_f + 1);
    file.sweep.freq_hz.push_back(f);
    file.sweep.z_ohm.emplace_back(re, im);
  }
  if (!header) throw ParseError("missing header row");
  if (file.sweep.empty()) throw ParseError("no data rows");
  file.sweep.validate();
  return file;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fs_error(path, errno);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fs_error(path, errno);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.close();
  if (!out) fs_error(path, errno);
}

SweepFile read_sweep_file(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  try {
    return ext == ".s1p" ? parse_touchstone_s1p(text, path.string()) : parse_csv_sweep(text, path.string());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string write_csv_sweep(const ImpedanceSweep& sweep) {
  std::string out = "# ref_ohm=" + format_double(sweep.ref_ohm) + "\nfreq_hz,re_ohm,im_ohm\n";
  for (std::size_t k = 0; k < sweep.size(); ++k)
    out += format_double(sweep.freq_hz[k]) + ',' + format_double(sweep.z_ohm[k].real()) + ',' +
           format_double(sweep.z_ohm[k].imag()) + '\n';
  return out;
}

std::string write_touchstone(const SweepFile& file) {
  if (file.format == SweepFormat::touchstone_s1p && file.rows.size() == file.sweep.size()) {
    const auto& o = file.touchstone;
    std::string out = "# " + o.freq_unit + ' ' + o.parameter + ' ' + o.format + " R " + format_double(o.ref_ohm) + '\n';
    for (const auto& r : file.rows)
      out += format_double(r[0]) + ' ' + format_double(r[1]) + ' ' + format_double(r[2]) + '\n';
    return out;
  }
  const double ref = file.sweep.ref_ohm;
  std::string out = "# HZ S RI R " + format_double(ref) + '\n';
  for (std::size_t k = 0; k < file.sweep.size(); ++k) {
    const cdouble z = file.sweep.z_ohm[k];
    const cdouble s = (z - ref) / (z + ref);
    out += format_double(file.sweep.freq_hz[k]) + ' ' + format_double(s.real()) + ' ' + format_double(s.imag()) + '\n';
  }
  return out;
}

std::string canonical(const json& doc) { return doc.dump(2) + "\n"; }

json parse_json(std::string_view text, const std::string& source) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw ParseError((source.empty() ? std::string() : source + ": ") + e.what());
  }
}

void write_report(json doc, const std::filesystem::path& path) {
  doc["schema_version"] = kSchemaVersion;
  write_text(path, canonical(doc));
}

json to_json(const materials::MaterialConstantSet& m) {
  return {{"kind", "material"},
          {"name", m.name},
          {"density_kg_m3", m.density},
          {"stiffness_pa", matrix_json(m.stiffness)},
          {"piezo_c_m2", matrix_json(m.piezo)},
          {"permittivity_f_m", matrix_json(m.permittivity)}};
}

materials::MaterialConstantSet material_from_json(const json& doc) {
  expect_kind(doc, "material");
  materials::MaterialConstantSet m;
  m.name = get_str_or(doc, "name", "");
  m.density = get_num(doc, "density_kg_m3");
  matrix_from(doc, "stiffness_pa", m.stiffness);
  matrix_from(doc, "piezo_c_m2", m.piezo);
  matrix_from(doc, "permittivity_f_m", m.permittivity);
  m.validate();
  return m;
}

json to_json(const bvd::BvdModel& model) {
  json branches = json::array();
  for (const auto& b : model.branches)
    branches.push_back({{"r_ohm", b.r_m}, {"l_h", b.l_m}, {"c_f", b.c_m}});
  return {{"kind", "bvd_model"}, {"label", model.label}, {"c0_f", model.c0}, {"branches", branches}};
}

bvd::BvdModel bvd_model_from_json(const json& doc) {
  expect_kind(doc, "bvd_model");
  bvd::BvdModel m;
  m.label = get_str_or(doc, "label", "");
  if (doc.contains("fs_hz")) {
    // Shorthand: single branch from resonances.
    m = bvd::from_resonances(get_num(doc, "fs_hz"), get_num(doc, "fp_hz"), get_num(doc, "q"),
                             get_num(doc, "c0_f"), m.label);
  } else {
    m.c0 = get_num(doc, "c0_f");
    for (const auto& b : get_array(doc, "branches"))
      m.branches.push_back({get_num(b, "r_ohm"), get_num(b, "l_h"), get_num(b, "c_f")});
  }
  m.validate();
  return m;
}

json score_report(const metrics::ResonatorScore& s, const metrics::ScoreSettings& settings,
                  const std::string& source) {
  return {{"kind", "score"},
          {"source", source},
          {"threshold_multiplier", settings.threshold},
          {"ksq_convention", metrics::to_string(settings.convention)},
          {"fs_hz", s.fs_hz},
          {"fp_hz", s.fp_hz},
          {"k_r_sq", s.k_r_sq},
          {"q_bode_at_fs", s.q_bode_at_fs},
          {"q_band_lo_hz", s.q_band_lo_hz},
          {"q_band_hi_hz", s.q_band_hi_hz},
          {"q_band_median", s.q_band_median},
          {"fom", s.fom},
          {"supp_lo_hz", s.supp_lo_hz},
          {"supp_hi_hz", s.supp_hi_hz},
          {"supp_width_hz", s.supp_width_hz},
          {"fractional_supp", s.fractional_supp}};
}

metrics::ResonatorScore score_from_json(const json& doc) {
  expect_kind(doc, "score");
  return {get_num(doc, "fs_hz"),         get_num(doc, "fp_hz"),        get_num(doc, "k_r_sq"),
          get_num(doc, "q_bode_at_fs"),  get_num(doc, "q_band_lo_hz"), get_num(doc, "q_band_hi_hz"),
          get_num(doc, "q_band_median"), get_num(doc, "fom"),          get_num(doc, "supp_lo_hz"),
          get_num(doc, "supp_hi_hz"),    get_num(doc, "supp_width_hz"), get_num(doc, "fractional_supp")};
}

json fit_report(const bvd::FitResult& fit, const std::string& source) {
  json conf = json::array();
  for (const auto& c : fit.report.confidence)
    conf.push_back({{"fs_rel_sigma", num(c.fs_rel_sigma)},
                    {"r_rel_sigma", num(c.r_rel_sigma)},
                    {"q_rel_sigma", num(c.q_rel_sigma)}});
  json summary = json::array();
  for (const auto& b : fit.model.branches)
    summary.push_back({{"fs_hz", b.series_freq()}, {"q", b.quality()}});
  return {{"kind", "fit"},
          {"source", source},
          {"model", to_json(fit.model)},
          {"branch_summary", summary},
          {"residual", num(fit.report.residual)},
          {"rms_log_error", num(fit.report.rms_log_error)},
          {"iterations", fit.report.iterations},
          {"candidates", fit.report.candidates},
          {"confidence", conf}};
}

bvd::FitResult fit_from_json(const json& doc) {
  expect_kind(doc, "fit");
  bvd::FitResult out;
  if (!doc.contains("model")) throw InputError("missing field 'model'");
  out.model = bvd_model_from_json(doc.at("model"));
  out.report.residual = get_num(doc, "residual");
  out.report.rms_log_error = get_num(doc, "rms_log_error");
  out.report.iterations = get_int(doc, "iterations");
  out.report.candidates = static_cast<std::size_t>(get_int(doc, "candidates"));
  for (const auto& c : get_array(doc, "confidence"))
    out.report.confidence.push_back(
        {get_num(c, "fs_rel_sigma"), get_num(c, "r_rel_sigma"), get_num(c, "q_rel_sigma")});
  return out;
}

json pss_report(const converter::ConverterSpec& spec, const converter::PssSolution& sol) {
  json stages = json::array();
  for (const auto& s : spec.stages) stages.push_back(stage_json(s));
  json boundary = json::array();
  for (const auto& b : sol.boundary) boundary.push_back({{"i_l_a", b.i_l}, {"v_cm_v", b.v_cm}, {"v_c0_v", b.v_c0}});
  return {{"kind", "pss"},
          {"v_in_v", spec.v_in},
          {"v_out_v", spec.v_out},
          {"f_op_hz", sol.f_op},
          {"stages", stages},
          {"durations_s", sol.durations},
          {"boundary", boundary},
          {"p_in_w", sol.p_in},
          {"p_out_w", sol.p_out},
          {"p_loss_w", sol.p_loss},
          {"efficiency", sol.efficiency},
          {"periodicity_residual", sol.periodicity_residual},
          {"zvs_residuals_v", sol.zvs_residuals},
          {"residual_norm", sol.residual_norm},
          {"iterations", sol.iterations}};
}

converter::PssSolution pss_from_json(const json& doc) {
  expect_kind(doc, "pss");
  converter::PssSolution s;
  s.f_op = get_num(doc, "f_op_hz");
  s.durations = num_vector(get_array(doc, "durations_s"), "durations_s");
  for (const auto& b : get_array(doc, "boundary"))
    s.boundary.push_back({get_num(b, "i_l_a"), get_num(b, "v_cm_v"), get_num(b, "v_c0_v")});
  s.p_in = get_num(doc, "p_in_w");
  s.p_out = get_num(doc, "p_out_w");
  s.p_loss = get_num(doc, "p_loss_w");
  s.efficiency = get_num(doc, "efficiency");
  s.periodicity_residual = get_num(doc, "periodicity_residual");
  s.zvs_residuals = num_vector(get_array(doc, "zvs_residuals_v"), "zvs_residuals_v");
  s.residual_norm = get_num(doc, "residual_norm");
  s.iterations = get_int(doc, "iterations");
  return s;
}

ConverterConfig converter_config_from_json(const json& doc) {
  if (!doc.is_object()) throw InputError("converter config must be a JSON object");
  ConverterConfig c;
  c.spec.v_in = get_num_or(doc, "v_in", 40.0);
  c.spec.v_out = get_num_or(doc, "v_out", 30.0);
  c.spec.f_op = get_num_or(doc, "f_op_hz", 0.0);
  if (doc.contains("f_grid_hz")) c.f_grid_hz = num_vector(get_array(doc, "f_grid_hz"), "f_grid_hz");
  if (doc.contains("stages")) {
    for (const auto& s : get_array(doc, "stages")) c.spec.stages.push_back(stage_from_json(s, c.spec.v_in, c.spec.v_out));
  } else {
    c.spec.stages = converter::ConverterSpec::default_stages(c.spec.v_in, c.spec.v_out);
  }
  if (doc.contains("solver")) {
    const json& s = doc.at("solver");
    c.sweep.solver.tolerance = get_num_or(s, "tolerance", c.sweep.solver.tolerance);
    if (s.contains("max_iterations")) c.sweep.solver.max_iterations = get_int(s, "max_iterations");
    c.sweep.solver.fd_rel_step = get_num_or(s, "fd_rel_step", c.sweep.solver.fd_rel_step);
  }
  if (doc.contains("warm_start")) {
    if (!doc.at("warm_start").is_boolean()) throw InputError("field 'warm_start' must be a boolean");
    c.sweep.warm_start = doc.at("warm_start").get<bool>();
  }
  if (doc.contains("threads")) c.sweep.threads = static_cast<unsigned>(std::max(1, get_int(doc, "threads")));
  if (!(c.sweep.solver.tolerance > 0.0) || c.sweep.solver.max_iterations < 1 || !(c.sweep.solver.fd_rel_step > 0.0))
    throw InputError("solver settings must be positive");
  converter::ConverterSpec probe = c.spec;
  if (!(probe.f_op > 0.0)) probe.f_op = 1.0;
  probe.validate();
  return c;
}

json to_json(const ConverterConfig& c) {
  json stages = json::array();
  for (const auto& s : c.spec.stages) stages.push_back(stage_json(s));
  json doc = {{"v_in", c.spec.v_in},
              {"v_out", c.spec.v_out},
              {"stages", stages},
              {"solver",
               {{"tolerance", c.sweep.solver.tolerance},
                {"max_iterations", c.sweep.solver.max_iterations},
                {"fd_rel_step", c.sweep.solver.fd_rel_step}}},
              {"warm_start", c.sweep.warm_start},
              {"threads", c.sweep.threads}};
  if (c.spec.f_op > 0.0) doc["f_op_hz"] = c.spec.f_op;
  if (!c.f_grid_hz.empty()) doc["f_grid_hz"] = c.f_grid_hz;
  return doc;
}

json soa_json(const std::vector<metrics::SoaRow>& rows) {
  json out = json::array();
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  for (const auto& r : rows)
    out.push_back({{"reference", r.reference},
                   {"fs_mhz", opt(r.fs_mhz)},
                   {"k_r_sq", opt(r.k_r_sq)},
                   {"q", opt(r.q)},
                   {"fom", opt(r.fom)},
                   {"supp_region_mhz", opt(r.supp_region_mhz)},
                   {"fractional_supp", opt(r.fractional_supp)}});
  return out;
}

std::string soa_csv(const std::vector<metrics::SoaRow>& rows) {
  std::string out = "rank,reference,fs_mhz,k_r_sq,q,fom,supp_region_mhz,fractional_supp\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    out += std::to_string(k + 1) + ',' + r.reference + ',' + opt_cell(r.fs_mhz) + ',' + opt_cell(r.k_r_sq) + ',' +
           opt_cell(r.q) + ',' + opt_cell(r.fom) + ',' + opt_cell(r.supp_region_mhz) + ',' +
           opt_cell(r.fractional_supp) + '\n';
  }
  return out;
}

}  // namespace piezores::io
