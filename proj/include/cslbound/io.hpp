#pragma once

// File formats: geometry JSON, spectrum/thermal/scan/curve CSV, fit and run
// manifest JSON. Numbers in delimited text are written in scientific notation
// with 9 significant digits, independent of locale. See docs/formats.md.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cslbound/csl_noise.hpp"
#include "cslbound/exclusion.hpp"
#include "cslbound/mass_model.hpp"
#include "cslbound/spectral_fit.hpp"
#include "cslbound/thermal_inference.hpp"

namespace cslbound::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string format_number(double v);

std::string read_text(const fs::path& path);
/// Writes through a temporary file in the same directory and renames it.
void write_text_atomic(const fs::path& path, std::string_view content);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

// Geometry -------------------------------------------------------------------

struct Geometry {
  std::string name;
  CompositeMass mass;
};

/// Throws ParseError on malformed input, naming the offending field.
Geometry parse_geometry(std::string_view text);
Geometry read_geometry(const fs::path& path);
json geometry_to_json(const Geometry& g);

// Delimited text -------------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Column index by name; throws ParseError when absent.
  std::size_t column(std::string_view name) const;
};

/// Comma-separated, one header line, '#' starts a comment line.
Table parse_table(std::string_view text, std::string_view source = "input");
std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows);

// Spectra --------------------------------------------------------------------

inline constexpr const char* kSpectrumFreqColumn = "frequency_hz";
inline constexpr const char* kSpectrumPsdColumn = "psd_phi0sq_per_hz";

/// foo.csv -> foo.json
fs::path sidecar_path(const fs::path& csv);

/// Reads the CSV and its sidecar (n_av, window, sample_rate, n_samples,
/// temperature_K, Qprime, Q). Missing optional sidecar keys stay at their
/// defaults; a missing sidecar file is a ParseError.
NoiseSpectrum read_spectrum(const fs::path& csv);
void write_spectrum(const NoiseSpectrum& s, const fs::path& csv);
json spectrum_metadata(const NoiseSpectrum& s);

json fit_to_json(const SpectralFitResult& r, const NoiseSpectrum& s);
/// Parameters and covariance back from a fit record.
SpectralFitResult fit_from_json(const json& j);

// Thermal --------------------------------------------------------------------

ThermalDataset read_thermal(const fs::path& csv);
void write_thermal(const ThermalDataset& d, const fs::path& csv);
json linear_fit_to_json(const LinearFitResult& r);
json saturation_fit_to_json(const SaturationFitResult& r);

// Scans and curves -----------------------------------------------------------

void write_scan(const std::vector<ScanPoint>& scan, const fs::path& csv);
std::vector<ScanPoint> read_scan(const fs::path& csv);
void write_curve(const ExclusionCurve& c, const fs::path& csv);
ExclusionCurve read_curve(const fs::path& csv);

// Run manifest ---------------------------------------------------------------

struct FileRecord {
  std::string path;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> outputs;
  std::string tool_version;
  std::string timestamp;  // UTC ISO 8601
  std::string status = "ok";
  std::string failed_stage;
  std::string error;
  json details = json::object();

  void add_input(const fs::path& p);
  void add_output(const fs::path& p);
};

/// SOURCE_DATE_EPOCH when set, else the current time.
std::string utc_timestamp();
json manifest_to_json(const RunManifest& m);
void write_manifest(const RunManifest& m, const fs::path& path);

std::string tool_version();

}  // namespace cslbound::io
