#pragma once

#include <array>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "piezores/bvd.hpp"
#include "piezores/converter.hpp"
#include "piezores/materials.hpp"
#include "piezores/metrics.hpp"
#include "piezores/sweep.hpp"

namespace piezores::io {

using nlohmann::json;

inline constexpr const char* kSchemaVersion = "1";

enum class SweepFormat { touchstone_s1p, csv };

/// Touchstone option line, kept so a parsed file can be written back verbatim.
struct TouchstoneOptions {
  std::string freq_unit = "HZ";  // HZ, KHZ, MHZ, GHZ
  char parameter = 'S';          // S or Z
  std::string format = "MA";     // RI, MA, DB
  double ref_ohm = 50.0;
};

struct SweepFile {
  std::string source;
  SweepFormat format = SweepFormat::csv;
  ImpedanceSweep sweep;
  std::vector<std::string> comments;
  TouchstoneOptions touchstone;              // touchstone only
  std::vector<std::array<double, 3>> rows;   // touchstone only: numbers as read
};

/// Touchstone v1 one-port. S data becomes Z = R (1 + S) / (1 - S); Z data is
/// normalized to R as in the format definition and is scaled back by R.
SweepFile parse_touchstone_s1p(std::string_view text, std::string source = {});

/// Header with freq_hz, re_ohm, im_ohm (any order, extra columns ignored),
/// optional "# ref_ohm=<x>" line, other '#' lines are comments.
SweepFile parse_csv_sweep(std::string_view text, std::string source = {});

/// Chooses the parser by extension: .s1p is Touchstone, anything else CSV.
SweepFile read_sweep_file(const std::filesystem::path& path);

/// Shortest round-trip formatting; parse_csv_sweep restores identical doubles.
std::string write_csv_sweep(const ImpedanceSweep& sweep);

/// Option line and rows of a parsed Touchstone file, numbers in shortest form.
std::string write_touchstone(const SweepFile& file);

std::string format_double(double value);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

/// Canonical text: sorted keys, two-space indent, trailing newline.
std::string canonical(const json& doc);
json parse_json(std::string_view text, const std::string& source = {});

/// Adds schema_version and writes canonical text.
void write_report(json doc, const std::filesystem::path& path);

json to_json(const materials::MaterialConstantSet& m);
materials::MaterialConstantSet material_from_json(const json& doc);

json to_json(const bvd::BvdModel& model);
bvd::BvdModel bvd_model_from_json(const json& doc);

json score_report(const metrics::ResonatorScore& score, const metrics::ScoreSettings& settings,
                  const std::string& source = {});
metrics::ResonatorScore score_from_json(const json& doc);

json fit_report(const bvd::FitResult& fit, const std::string& source = {});
bvd::FitResult fit_from_json(const json& doc);

json pss_report(const converter::ConverterSpec& spec, const converter::PssSolution& solution);
converter::PssSolution pss_from_json(const json& doc);

/// Converter run configuration. Stages are {"clamped": volts} objects
/// (optional "role", "weight") or the string "open".
struct ConverterConfig {
  converter::ConverterSpec spec;
  std::vector<double> f_grid_hz;  // empty when a single f_op is given
  converter::SweepOptions sweep;
};

ConverterConfig converter_config_from_json(const json& doc);
json to_json(const ConverterConfig& config);

json soa_json(const std::vector<metrics::SoaRow>& rows);
std::string soa_csv(const std::vector<metrics::SoaRow>& rows);

}  // namespace piezores::io
