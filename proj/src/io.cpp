#include "cslbound/io.hpp"

#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include <openssl/evp.h>

#include "cslbound/error.hpp"

#ifndef CSLBOUND_VERSION
#define CSLBOUND_VERSION "0.0.0"
#endif

namespace cslbound::io {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view s, std::string_view where) {
  s = trim(s);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) {
    // from_chars rejects "nan"/"inf" spellings with a sign or case it does not know.
    if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
    throw ParseError(std::string(where) + ": not a number: '" + std::string(s) + "'");
  }
  return v;
}

Vec3 vec3(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ParseError(where + ": missing '" + key + "'");
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw ParseError(where + ": '" + key + "' must be a 3-vector");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!a[i].is_number()) throw ParseError(where + ": '" + key + "' must hold numbers");
    v[i] = a[i].get<double>();
  }
  return v;
}

double number(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ParseError(where + ": missing '" + key + "'");
  if (!j.at(key).is_number()) throw ParseError(where + ": '" + key + "' must be a number");
  return j.at(key).get<double>();
}

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

// JSON has no NaN; absent metadata is written as null.
json maybe(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double optional_number(const json& j, const std::string& key, double fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  if (!j.at(key).is_number()) throw ParseError("metadata: '" + key + "' must be a number");
  return j.at(key).get<double>();
}

json parse_json(std::string_view text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(where + ": " + e.what());
  }
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 8);
  if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf, p);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

// Geometry -------------------------------------------------------------------

Geometry parse_geometry(std::string_view text) {
  const json j = parse_json(text, "geometry");
  if (!j.is_object()) throw ParseError("geometry: top level must be an object");
  if (!j.contains("components") || !j["components"].is_array() || j["components"].empty()) {
    throw ParseError("geometry: 'components' must be a non-empty array");
  }
  std::vector<Component> parts;
  for (std::size_t i = 0; i < j["components"].size(); ++i) {
    const auto& c = j["components"][i];
    const std::string where = "geometry component " + std::to_string(i);
    if (!c.is_object() || !c.contains("type") || !c["type"].is_string()) throw ParseError(where + ": missing 'type'");
    const auto type = c["type"].get<std::string>();
    try {
      if (type == "cuboid") {
        Cuboid b{number(c, "density", where), vec3(c, "lengths", where), vec3(c, "center", where)};
        validate(b);
        parts.emplace_back(b);
      } else if (type == "sphere") {
        Sphere s{number(c, "density", where), number(c, "radius", where), vec3(c, "center", where)};
        validate(s);
        parts.emplace_back(s);
      } else if (type == "multilayer") {
        MultilayerStack m;
        m.rho1 = number(c, "rho1", where);
        m.rho2 = number(c, "rho2", where);
        const double n = number(c, "n_lay", where);
        if (n != std::floor(n) || n < 0 || n > 1e6) throw ParseError(where + ": 'n_lay' must be a non-negative integer");
        m.n_lay = static_cast<int>(n);
        m.thickness = number(c, "thickness", where);
        if (!c.contains("base") || !c["base"].is_array() || c["base"].size() != 2 || !c["base"][0].is_number() ||
            !c["base"][1].is_number()) {
          throw ParseError(where + ": 'base' must be [L1, L2]");
        }
        m.base1 = c["base"][0].get<double>();
        m.base2 = c["base"][1].get<double>();
        m.center = vec3(c, "center", where);
        if (c.contains("stacking_axis")) m.stacking_axis = vec3(c, "stacking_axis", where);
        validate(m);
        parts.emplace_back(m);
      } else {
        throw ParseError(where + ": unknown type '" + type + "'");
      }
    } catch (const std::invalid_argument& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  const Vec3 axis = j.contains("motion_axis") ? vec3(j, "motion_axis", "geometry") : Vec3::UnitZ();
  std::string name = j.contains("name") && j["name"].is_string() ? j["name"].get<std::string>() : "";
  try {
    return Geometry{std::move(name), CompositeMass(std::move(parts), axis)};
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("geometry: ") + e.what());
  }
}

Geometry read_geometry(const fs::path& path) { return parse_geometry(read_text(path)); }

json geometry_to_json(const Geometry& g) {
  json comps = json::array();
  for (const auto& c : g.mass.components()) {
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, Cuboid>) {
            comps.push_back({{"type", "cuboid"}, {"density", x.density}, {"lengths", vec_json(x.lengths)},
                             {"center", vec_json(x.center)}});
          } else if constexpr (std::is_same_v<T, Sphere>) {
            comps.push_back({{"type", "sphere"}, {"density", x.density}, {"radius", x.radius}, {"center", vec_json(x.center)}});
          } else {
            comps.push_back({{"type", "multilayer"}, {"rho1", x.rho1}, {"rho2", x.rho2}, {"n_lay", x.n_lay},
                             {"thickness", x.thickness}, {"base", {x.base1, x.base2}}, {"center", vec_json(x.center)},
                             {"stacking_axis", vec_json(x.stacking_axis)}});
          }
        },
        c);
  }
  return {{"name", g.name}, {"motion_axis", vec_json(g.mass.motion_axis())}, {"components", comps}};
}

// Delimited text -------------------------------------------------------------

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ParseError("missing column '" + std::string(name) + "'");
}

Table parse_table(std::string_view text, std::string_view source) {
  Table t;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    if (t.header.empty()) {
      for (auto c : cells) t.header.emplace_back(c);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ParseError(where + ": expected " + std::to_string(t.header.size()) + " fields, got " +
                       std::to_string(cells.size()));
    }
    std::vector<double> row;
    for (auto c : cells) row.push_back(parse_double(c, where));
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw ParseError(std::string(source) + ": no header line");
  return t;
}

std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ',';
      out += format_number(r[i]);
    }
    out += '\n';
  }
  return out;
}

// Spectra --------------------------------------------------------------------

fs::path sidecar_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".json");
  return p;
}

json spectrum_metadata(const NoiseSpectrum& s) {
  return {{"n_av", s.n_av},          {"window", s.window},         {"sample_rate", s.sample_rate},
          {"n_samples", s.n_samples}, {"temperature_K", maybe(s.temperature_K)}, {"Qprime", maybe(s.Qprime)},
          {"Q", maybe(s.Q)}};
}

NoiseSpectrum read_spectrum(const fs::path& csv) {
  const Table t = parse_table(read_text(csv), csv.string());
  NoiseSpectrum s;
  const auto fc = t.column(kSpectrumFreqColumn), pc = t.column(kSpectrumPsdColumn);
  for (const auto& r : t.rows) {
    s.freqs.push_back(r[fc]);
    s.psd.push_back(r[pc]);
  }
  const auto side = sidecar_path(csv);
  if (!fs::exists(side)) throw ParseError("missing metadata file " + side.string());
  const json m = parse_json(read_text(side), side.string());
  if (!m.is_object()) throw ParseError(side.string() + ": metadata must be an object");
  s.n_av = optional_number(m, "n_av", s.n_av);
  if (m.contains("window")) {
    if (!m["window"].is_string()) throw ParseError("metadata: 'window' must be a string");
    s.window = m["window"].get<std::string>();
  }
  s.sample_rate = optional_number(m, "sample_rate", s.sample_rate);
  const double ns = optional_number(m, "n_samples", 0.0);
  if (ns < 0 || ns != std::floor(ns)) throw ParseError("metadata: 'n_samples' must be a non-negative integer");
  s.n_samples = static_cast<std::size_t>(ns);
  s.temperature_K = optional_number(m, "temperature_K", s.temperature_K);
  s.Qprime = optional_number(m, "Qprime", s.Qprime);
  s.Q = optional_number(m, "Q", s.Q);
  try {
    validate(s);
  } catch (const std::invalid_argument& e) {
    throw ParseError(csv.string() + ": " + e.what());
  }
  return s;
}

void write_spectrum(const NoiseSpectrum& s, const fs::path& csv) {
  std::vector<std::vector<double>> rows;
  rows.reserve(s.freqs.size());
  for (std::size_t i = 0; i < s.freqs.size(); ++i) rows.push_back({s.freqs[i], s.psd[i]});
  write_text_atomic(csv, format_table({kSpectrumFreqColumn, kSpectrumPsdColumn}, rows));
  write_text_atomic(sidecar_path(csv), spectrum_metadata(s).dump(2) + "\n");
}

json fit_to_json(const SpectralFitResult& r, const NoiseSpectrum& s) {
  static const char* names[] = {"A", "B", "C", "f0", "f1"};
  const auto& p = r.params;
  const double values[] = {p.A, p.B, p.C, p.f0, p.f1};
  json params = json::object(), sigma = json::object();
  for (int k = 0; k < 5; ++k) {
    params[names[k]] = values[k];
    sigma[names[k]] = r.sigma(k);
  }
  json cov = json::array();
  for (int i = 0; i < 5; ++i) {
    json row = json::array();
    for (int j = 0; j < 5; ++j) row.push_back(r.covariance(i, j));
    cov.push_back(row);
  }
  json masked = json::array(), masked_f = json::array();
  for (auto i : r.masked_bins) {
    masked.push_back(i);
    masked_f.push_back(s.freqs[i]);
  }
  json out = {{"params", params},
              {"sigma", sigma},
              {"Qprime", p.Qprime},
              {"covariance", cov},
              {"null_directions", r.null_directions},
              {"lorentzian_amplitude", lorentzian_amplitude(p)},
              {"lorentzian_amplitude_sigma", lorentzian_amplitude_sigma(r)},
              {"chi2", r.chi2},
              {"dof", r.dof},
              {"chi2_per_dof", r.chi2 / r.dof},
              {"iterations", r.iterations},
              {"chi2_per_dof_history", r.chi2_per_dof_history},
              {"window", {{"begin", r.window_begin}, {"end", r.window_end},
                          {"f_lo", s.freqs[r.window_begin]}, {"f_hi", s.freqs[r.window_end - 1]}}},
              {"masked_bins", masked},
              {"masked_frequencies", masked_f},
              {"metadata", spectrum_metadata(s)}};
  if (r.residual_test) {
    const auto& t = *r.residual_test;
    out["residual_test"] = {{"pass", t.pass},        {"p_value", t.p_value}, {"statistic", t.statistic},
                            {"dof", t.dof},          {"bins", t.bins},       {"bin_width", t.bin_width},
                            {"points", t.points},    {"mean", t.mean},       {"variance", t.variance}};
  }
  return out;
}

SpectralFitResult fit_from_json(const json& j) {
  try {
    SpectralFitResult r;
    const auto& p = j.at("params");
    r.params = {p.at("A").get<double>(), p.at("B").get<double>(), p.at("C").get<double>(), p.at("f0").get<double>(),
                p.at("f1").get<double>(), j.at("Qprime").get<double>()};
    for (int a = 0; a < 5; ++a) {
      for (int b = 0; b < 5; ++b) r.covariance(a, b) = j.at("covariance").at(a).at(b).get<double>();
    }
    r.chi2 = j.at("chi2").get<double>();
    r.dof = j.at("dof").get<int>();
    r.iterations = j.at("iterations").get<int>();
    r.null_directions = j.value("null_directions", 0);
    for (const auto& m : j.at("masked_bins")) r.masked_bins.push_back(m.get<std::size_t>());
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("fit record: ") + e.what());
  }
}

// Thermal --------------------------------------------------------------------

ThermalDataset read_thermal(const fs::path& csv) {
  const Table t = parse_table(read_text(csv), csv.string());
  const auto ct = t.column("T_K"), cq = t.column("Q"), cb = t.column("B_phi0sq_per_hz"), cs = t.column("sigma_B");
  std::optional<std::size_t> cx;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i] == "sigma_x") cx = i;
  }
  ThermalDataset d;
  for (const auto& r : t.rows) {
    ThermalPoint p{r[ct], r[cq], r[cb], r[cs]};
    if (cx) p.sigma_x = r[*cx];
    try {
      validate(p);
    } catch (const std::invalid_argument& e) {
      throw ParseError(csv.string() + ": " + e.what());
    }
    d.push_back(p);
  }
  return d;
}

void write_thermal(const ThermalDataset& d, const fs::path& csv) {
  const bool with_x = std::any_of(d.begin(), d.end(), [](const auto& p) { return !std::isnan(p.sigma_x); });
  std::vector<std::vector<double>> rows;
  for (const auto& p : d) {
    rows.push_back({p.T, p.Q, p.B, p.sigma_B});
    if (with_x) rows.back().push_back(p.sigma_x);
  }
  std::vector<std::string> header{"T_K", "Q", "B_phi0sq_per_hz", "sigma_B"};
  if (with_x) header.emplace_back("sigma_x");
  write_text_atomic(csv, format_table(header, rows));
}

json linear_fit_to_json(const LinearFitResult& r) {
  return {{"B0", r.B0},
          {"B1", r.B1},
          {"sigma_B0", std::sqrt(r.covariance(0, 0))},
          {"sigma_B1", std::sqrt(r.covariance(1, 1))},
          {"covariance", {{r.covariance(0, 0), r.covariance(0, 1)}, {r.covariance(1, 0), r.covariance(1, 1)}}},
          {"chi2", r.chi2},
          {"dof", r.dof}};
}

json saturation_fit_to_json(const SaturationFitResult& r) {
  json cov = json::array();
  for (int i = 0; i < 4; ++i) {
    json row = json::array();
    for (int j = 0; j < 4; ++j) row.push_back(r.covariance(i, j));
    cov.push_back(row);
  }
  return {{"B0", r.B0},       {"Ba", r.Ba},   {"Bb", r.Bb},     {"x_co", r.x_co},
          {"n", r.n},         {"covariance", cov}, {"chi2", r.chi2}, {"dof", r.dof}, {"null_directions", r.null_directions},
          {"crossover_outside_data", r.crossover_outside_data}, {"warning", r.warning}};
}

// Scans and curves -----------------------------------------------------------

void write_scan(const std::vector<ScanPoint>& scan, const fs::path& csv) {
  std::vector<std::vector<double>> rows;
  for (const auto& p : scan) rows.push_back({p.rC, p.psd});
  write_text_atomic(csv, format_table({"rC_m", "psd_at_lambda1_N2perHz"}, rows));
}

std::vector<ScanPoint> read_scan(const fs::path& csv) {
  const Table t = parse_table(read_text(csv), csv.string());
  const auto a = t.column("rC_m"), b = t.column("psd_at_lambda1_N2perHz");
  std::vector<ScanPoint> out;
  for (const auto& r : t.rows) out.push_back({r[a], r[b]});
  return out;
}

void write_curve(const ExclusionCurve& c, const fs::path& csv) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < c.rC.size(); ++i) rows.push_back({c.rC[i], c.lambda_upper[i]});
  write_text_atomic(csv, format_table({"rC_m", "lambda_upper_per_s"}, rows));
}

ExclusionCurve read_curve(const fs::path& csv) {
  const Table t = parse_table(read_text(csv), csv.string());
  const auto a = t.column("rC_m"), b = t.column("lambda_upper_per_s");
  ExclusionCurve c;
  for (const auto& r : t.rows) {
    c.rC.push_back(r[a]);
    c.lambda_upper.push_back(r[b]);
  }
  return c;
}

// Run manifest ---------------------------------------------------------------

void RunManifest::add_input(const fs::path& p) { inputs.push_back({p.string(), sha256_file(p)}); }
void RunManifest::add_output(const fs::path& p) { outputs.push_back({p.string(), sha256_file(p)}); }

std::string utc_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH"); e && *e) {
    long long v = 0;
    const std::string_view s(e);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc{} && p == s.data() + s.size()) t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json manifest_to_json(const RunManifest& m) {
  auto files = [](const std::vector<FileRecord>& v) {
    json a = json::array();
    for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
    return a;
  };
  json j = {{"command", m.command},   {"config_hash", m.config_hash}, {"inputs", files(m.inputs)},
            {"outputs", files(m.outputs)}, {"tool_version", m.tool_version}, {"timestamp", m.timestamp},
            {"status", m.status},     {"details", m.details}};
  if (m.status != "ok") {
    j["failed_stage"] = m.failed_stage;
    j["error"] = m.error;
  }
  return j;
}

void write_manifest(const RunManifest& m, const fs::path& path) { write_text_atomic(path, manifest_to_json(m).dump(2) + "\n"); }

std::string tool_version() { return CSLBOUND_VERSION; }

}  // namespace cslbound::io
