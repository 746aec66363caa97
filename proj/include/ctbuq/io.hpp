#pragma once

// File formats: sinogram and field CSV, JSON documents for phantoms, Stage-1
// results and posterior summaries, and line-delimited chain records.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctbuq/errors.hpp"
#include "ctbuq/forward.hpp"
#include "ctbuq/inference.hpp"
#include "ctbuq/pipeline.hpp"
#include "ctbuq/priors.hpp"

namespace ctbuq::io {

using nlohmann::json;

/// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline json read_json(const std::string& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw IoError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------- CSV

namespace detail {
inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  return out;
}

inline double to_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) ++used;
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(where + ": cannot parse number '" + s + "'");
  }
}

inline std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  return s;
}
}  // namespace detail

/// Line 1: theta_max,n_theta,n_s (values); then n_theta rows of n_s values.
/// A leading line with the literal column names is accepted on input.
inline std::string sinogram_csv(const Sinogram& s) {
  std::string out = fmt(s.geometry.theta_max) + "," + std::to_string(s.geometry.n_theta) + "," +
                    std::to_string(s.geometry.n_s) + "\n";
  for (std::size_t i = 0; i < s.geometry.n_theta; ++i) {
    for (std::size_t j = 0; j < s.geometry.n_s; ++j) {
      if (j) out += ",";
      out += fmt(s.at(i, j));
    }
    out += "\n";
  }
  return out;
}

inline Sinogram parse_sinogram_csv(const std::string& text, const std::string& where = "sinogram") {
  std::istringstream in(text);
  std::string line;
  auto next = [&]() {
    while (std::getline(in, line)) {
      line = detail::strip(line);
      if (!line.empty()) return true;
    }
    return false;
  };
  if (!next()) throw IoError(where + ": empty file");
  if (line.rfind("theta_max", 0) == 0 && !next()) throw IoError(where + ": missing geometry line");
  const auto head = detail::split(line);
  if (head.size() != 3) throw IoError(where + ": geometry line needs theta_max,n_theta,n_s");
  ScanGeometry g;
  g.theta_max = detail::to_double(head[0], where);
  const double nt = detail::to_double(head[1], where), ns = detail::to_double(head[2], where);
  if (nt < 1 || ns < 1 || nt != std::floor(nt) || ns != std::floor(ns)) throw IoError(where + ": bad dimensions");
  g.n_theta = std::size_t(nt);
  g.n_s = std::size_t(ns);
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(where + ": " + e.what());
  }
  Sinogram s(g);
  for (std::size_t i = 0; i < g.n_theta; ++i) {
    if (!next()) throw IoError(where + ": expected " + std::to_string(g.n_theta) + " rows, got " + std::to_string(i));
    const auto cells = detail::split(line);
    if (cells.size() != g.n_s) {
      throw IoError(where + ": row " + std::to_string(i + 1) + " has " + std::to_string(cells.size()) +
                    " values, expected " + std::to_string(g.n_s));
    }
    for (std::size_t j = 0; j < g.n_s; ++j) s.at(i, j) = detail::to_double(cells[j], where);
  }
  if (next()) throw IoError(where + ": trailing data after " + std::to_string(g.n_theta) + " rows");
  return s;
}

inline void write_sinogram_csv(const std::string& path, const Sinogram& s) { write_text(path, sinogram_csv(s)); }
inline Sinogram read_sinogram_csv(const std::string& path) { return parse_sinogram_csv(read_text(path), path); }

/// Rows are j = 0..ny-1 (bottom to top), columns i = 0..nx-1.
inline std::string field_csv(const Field2D& f) {
  std::string out;
  for (std::size_t j = 0; j < f.grid.ny; ++j) {
    for (std::size_t i = 0; i < f.grid.nx; ++i) {
      if (i) out += ",";
      out += fmt(f.at(i, j));
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------- JSON

inline json to_json(Point2 p) { return json::array({p.x, p.y}); }
inline Point2 point_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline json to_json(const Rect& r) { return {{"xmin", r.xmin}, {"xmax", r.xmax}, {"ymin", r.ymin}, {"ymax", r.ymax}}; }
inline Rect rect_from(const json& j) {
  return {j.at("xmin").get<double>(), j.at("xmax").get<double>(), j.at("ymin").get<double>(), j.at("ymax").get<double>()};
}

inline json to_json(const MaternParams& p) {
  return {{"gamma", p.gamma}, {"tau", p.tau}, {"amplitude", p.amplitude}, {"mean", p.mean}};
}
inline MaternParams matern_from(const json& j) {
  return {j.at("gamma").get<double>(), j.at("tau").get<double>(), j.at("amplitude").get<double>(),
          j.at("mean").get<double>()};
}

inline json to_json(const GridSpec& g) {
  return {{"nx", g.nx}, {"ny", g.ny}, {"spacing", g.spacing}, {"origin", to_json(g.origin)}};
}
inline GridSpec grid_from(const json& j) {
  return {j.at("nx").get<std::size_t>(), j.at("ny").get<std::size_t>(), j.at("spacing").get<double>(),
          point_from(j.at("origin"))};
}

inline json to_json(const Field2D& f) { return {{"grid", to_json(f.grid)}, {"values", f.values}}; }
inline Field2D field_from(const json& j) {
  Field2D f(grid_from(j.at("grid")));
  f.values = j.at("values").get<std::vector<double>>();
  if (f.values.size() != f.grid.nx * f.grid.ny) throw IoError("field: value count does not match grid");
  return f;
}

inline json to_json(const ScanGeometry& g) {
  return {{"theta_max", g.theta_max}, {"n_theta", g.n_theta}, {"n_s", g.n_s}, {"detector_halfwidth", g.detector_halfwidth}};
}

inline json to_json(const Phantom& ph) {
  json j;
  j["schema"] = "ctbuq.phantom/1";
  j["levels"] = {{"a_minus", ph.levels.a_minus}, {"a_plus", ph.levels.a_plus}};
  j["inclusions"] = json::array();
  for (const auto& inc : ph.inclusions) {
    j["inclusions"].push_back({{"center", to_json(inc.center)},
                               {"params", to_json(inc.params)},
                               {"weights", inc.weights == WeightMode::exact ? "exact" : "literal"},
                               {"coeffs", inc.coeffs.values},
                               {"center_of_mass", to_json(center_of_mass(inc))}});
  }
  if (const auto* bg = std::get_if<FieldBackground>(&ph.background)) {
    j["background"] = {{"params", to_json(bg->params)}, {"log_field", to_json(bg->log_field)}};
  } else {
    j["background"] = nullptr;
  }
  return j;
}

inline Phantom phantom_from(const json& j) {
  try {
    Phantom ph;
    ph.levels = {j.at("levels").at("a_minus").get<double>(), j.at("levels").at("a_plus").get<double>()};
    for (const auto& e : j.at("inclusions")) {
      StarInclusion inc;
      inc.center = point_from(e.at("center"));
      inc.params = matern_from(e.at("params"));
      inc.weights = e.value("weights", std::string("literal")) == "exact" ? WeightMode::exact : WeightMode::literal;
      inc.coeffs = BoundaryCoeffs(e.at("coeffs").get<std::vector<double>>());
      ph.inclusions.push_back(std::move(inc));
    }
    if (j.contains("background") && !j.at("background").is_null()) {
      const auto& b = j.at("background");
      ph.background = FieldBackground{field_from(b.at("log_field")), matern_from(b.at("params"))};
    }
    return ph;
  } catch (const json::exception& e) {
    throw IoError(std::string("phantom: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("phantom: ") + e.what());
  }
}

inline json to_json(const Stage1Result& r) {
  json j;
  j["schema"] = "ctbuq.stage1/1";
  j["n_inc"] = r.n_inc;
  j["centers"] = json::array();
  for (const auto& c : r.centers) j["centers"].push_back(to_json(c));
  j["boxes"] = json::array();
  for (const auto& b : r.boxes) j["boxes"].push_back(to_json(b));
  j["pixel_boxes"] = json::array();
  for (const auto& b : r.pixel_boxes) j["pixel_boxes"].push_back({b.i0, b.i1, b.j0, b.j1});
  j["component_sizes"] = r.component_sizes;
  j["overlap_warning"] = r.overlap_warning;
  j["b1"] = r.b1;
  j["acceptance"] = r.acceptance;
  j["mean_field_image"] = to_json(r.mean_field_image);
  j["pointwise_mean_image"] = to_json(r.pointwise_mean_image);
  return j;
}

inline Stage1Result stage1_from(const json& j) {
  try {
    Stage1Result r;
    r.n_inc = j.at("n_inc").get<std::size_t>();
    for (const auto& c : j.at("centers")) r.centers.push_back(point_from(c));
    for (const auto& b : j.at("boxes")) r.boxes.push_back(rect_from(b));
    for (const auto& b : j.at("pixel_boxes")) {
      r.pixel_boxes.push_back({b.at(0).get<long>(), b.at(1).get<long>(), b.at(2).get<long>(), b.at(3).get<long>()});
    }
    r.component_sizes = j.at("component_sizes").get<std::vector<std::size_t>>();
    r.overlap_warning = j.at("overlap_warning").get<bool>();
    r.b1 = j.at("b1").get<double>();
    r.acceptance = j.at("acceptance").get<double>();
    r.mean_field_image = field_from(j.at("mean_field_image"));
    r.pointwise_mean_image = field_from(j.at("pointwise_mean_image"));
    if (r.centers.size() != r.n_inc || r.boxes.size() != r.n_inc || r.pixel_boxes.size() != r.n_inc) {
      throw IoError("stage1: inconsistent inclusion counts");
    }
    return r;
  } catch (const json::exception& e) {
    throw IoError(std::string("stage1: ") + e.what());
  }
}

inline json to_json(const RadialBand& b) {
  json rows = json::array();
  for (std::size_t k = 0; k < b.angles.size(); ++k) rows.push_back({b.angles[k], b.lo[k], b.mean[k], b.hi[k]});
  return rows;
}

inline json to_json(const PosteriorSummary& s) {
  json j;
  j["schema"] = "ctbuq.summary/1";
  j["inclusion_index"] = s.inclusion_index;
  j["box"] = to_json(s.box);
  j["n_kept"] = s.n_kept;
  j["n_modes"] = s.modes.size();
  j["mode_mass"] = s.mode_mass;
  j["global_variance"] = s.global_variance;
  j["ess"] = s.ess ? json(*s.ess) : json(nullptr);
  j["acf_first_lag_below_0.05"] = s.acf_zero_lag ? json(*s.acf_zero_lag) : json(nullptr);
  j["acceptance"] = {{"pcn", s.pcn_acceptance}, {"center", s.mh_acceptance}};
  j["step_sizes"] = {{"b1", s.b1}, {"b2", s.b2}};
  j["modes"] = json::array();
  for (const auto& m : s.modes) {
    j["modes"].push_back({{"n_samples", m.samples.size()},
                          {"mean_center", to_json(m.mean_center)},
                          {"mean_coeffs", m.mean_coeffs},
                          {"band_mean_width", m.band.mean_width()},
                          {"band", to_json(m.band)}});
  }
  return j;
}

/// Per-mode sample index sets, kept out of the main summary for size.
inline json mode_sets_json(const PosteriorSummary& s) {
  json j = json::array();
  for (const auto& m : s.modes) j.push_back(m.samples);
  return j;
}

// ---------------------------------------------------------------- chains

struct ChainHeader {
  std::size_t inclusion_index = 0;
  MaternParams params;
  WeightMode weights = WeightMode::literal;
  double b1 = 0.0;
  double b2 = 0.0;
};

inline std::string chain_jsonl(const Chain& c, const ChainHeader& h) {
  std::string out;
  json head = {{"record", "header"},
               {"schema", "ctbuq.chain/1"},
               {"inclusion_index", h.inclusion_index},
               {"params", to_json(h.params)},
               {"weights", h.weights == WeightMode::exact ? "exact" : "literal"},
               {"b1", c.b1},
               {"b2", c.b2}};
  out += head.dump() + "\n";
  for (std::size_t k = 0; k < c.states.size(); ++k) {
    const auto& s = c.states[k];
    json r = {{"sweep", k}, {"phi", s.phi}, {"coeffs", s.coeffs}};
    r["center"] = s.center ? to_json(*s.center) : json(nullptr);
    if (k < c.stats.size()) {
      r["accepted"] = {c.stats[k].pcn_accepted, c.stats[k].mh_accepted};
    }
    out += r.dump() + "\n";
  }
  return out;
}

struct ChainFile {
  ChainHeader header;
  Chain chain;
};

inline ChainFile parse_chain_jsonl(const std::string& text, const std::string& where = "chain") {
  ChainFile f;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::strip(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(where + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      if (j.contains("record") && j.at("record") == "header") {
        f.header.inclusion_index = j.value("inclusion_index", std::size_t{0});
        if (j.contains("params")) f.header.params = matern_from(j.at("params"));
        f.header.weights = j.value("weights", std::string("literal")) == "exact" ? WeightMode::exact : WeightMode::literal;
        f.chain.b1 = f.header.b1 = j.value("b1", 0.0);
        f.chain.b2 = f.header.b2 = j.value("b2", 0.0);
        have_header = true;
        continue;
      }
      ChainState s;
      s.phi = j.at("phi").get<double>();
      s.coeffs = j.at("coeffs").get<std::vector<double>>();
      if (j.contains("center") && !j.at("center").is_null()) s.center = point_from(j.at("center"));
      f.chain.states.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw IoError(where + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw IoError(where + ": missing header record");
  return f;
}

}  // namespace ctbuq::io
