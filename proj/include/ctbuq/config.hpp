#pragma once

// Experiment configuration: one versioned JSON document covering geometry,
// phantom prior, noise, both stages and the summaries. Unknown keys are
// rejected; emit() followed by parse() reproduces the configuration.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctbuq/errors.hpp"
#include "ctbuq/forward.hpp"
#include "ctbuq/pipeline.hpp"
#include "ctbuq/priors.hpp"

namespace ctbuq {

inline constexpr const char* kConfigSchema = "ctbuq.config/1";

struct ExperimentConfig {
  std::uint64_t master_seed = 1;
  std::size_t threads = 1;
  double theta_max_deg = 180.0;
  std::size_t n_theta = 100;
  std::size_t n_s = 100;
  AttenuationLevels levels;
  PriorConfig phantom;
  NoiseSpec noise{std::nullopt, 1.0};
  Stage1Config stage1;
  Stage2Config stage2;

  ScanGeometry geometry() const {
    return {theta_max_deg * std::numbers::pi / 180.0, n_theta, n_s, 1.0};
  }

  /// Pushes the shared settings (levels, margins) into each stage.
  void sync() {
    phantom.levels = levels;
    stage1.levels = levels;
    stage2.levels = levels;
    stage1.d_min_D = phantom.d_min_D;
  }

  void validate() const {
    levels.validate();
    geometry().validate();
    require(phantom.n_inc >= 1, "phantom.n_inc must be >= 1");
    for (const auto& p : phantom.inclusion_params) validate_boundary_params(p);
    for (const auto& p : stage2.prior) validate_boundary_params(p);
    require(noise.sigma.has_value() != noise.level_pct.has_value(), "noise needs exactly one of level_pct or sigma");
    if (noise.level_pct) require(*noise.level_pct > 0.0, "noise.level_pct must be positive");
    if (noise.sigma) require(*noise.sigma > 0.0, "noise.sigma must be positive");
    stage1.sampler.validate();
    stage2.sampler.validate();
    stage2.summary.validate();
    require(stage1.anneal.start >= 1.0 && stage2.anneal.start >= 1.0, "anneal.start must be >= 1");
    require(threads >= 1, "threads must be >= 1");
  }
};

namespace cfgjson {

using nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw InvalidArgument(where + ": unknown key '" + k + "'");
  }
}

template <class T>
void get_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline json weights_json(WeightMode m) { return m == WeightMode::exact ? "exact" : "literal"; }
inline WeightMode weights_from(const json& j) {
  const auto s = j.get<std::string>();
  if (s == "literal") return WeightMode::literal;
  if (s == "exact") return WeightMode::exact;
  throw InvalidArgument("weights must be 'literal' or 'exact'");
}

inline json emit(const MaternParams& p) {
  return {{"gamma", p.gamma}, {"tau", p.tau}, {"amplitude", p.amplitude}, {"mean", p.mean}};
}
inline MaternParams parse_matern(const json& j, const std::string& where, MaternParams p = {}) {
  check_keys(j, {"gamma", "tau", "amplitude", "mean"}, where);
  get_opt(j, "gamma", p.gamma);
  get_opt(j, "tau", p.tau);
  get_opt(j, "amplitude", p.amplitude);
  get_opt(j, "mean", p.mean);
  return p;
}

inline json emit(const SamplerConfig& s) {
  return {{"b1", s.b1},
          {"b2", s.b2},
          {"n_pcn", s.n_pcn},
          {"n_mh", s.n_mh},
          {"n_samples", s.n_samples},
          {"warmup_sweeps", s.warmup_sweeps},
          {"warmup_n_pcn", s.warmup_n_pcn},
          {"warmup_n_mh", s.warmup_n_mh},
          {"target_acceptance", {s.target_lo, s.target_hi}}};
}
inline SamplerConfig parse_sampler(const json& j, const std::string& where, SamplerConfig s) {
  check_keys(j, {"b1", "b2", "n_pcn", "n_mh", "n_samples", "warmup_sweeps", "warmup_n_pcn", "warmup_n_mh",
                 "target_acceptance"},
             where);
  get_opt(j, "b1", s.b1);
  get_opt(j, "b2", s.b2);
  get_opt(j, "n_pcn", s.n_pcn);
  get_opt(j, "n_mh", s.n_mh);
  get_opt(j, "n_samples", s.n_samples);
  get_opt(j, "warmup_sweeps", s.warmup_sweeps);
  get_opt(j, "warmup_n_pcn", s.warmup_n_pcn);
  get_opt(j, "warmup_n_mh", s.warmup_n_mh);
  if (j.contains("target_acceptance")) {
    const auto& t = j.at("target_acceptance");
    if (!t.is_array() || t.size() != 2) throw InvalidArgument(where + ".target_acceptance: expected [lo, hi]");
    s.target_lo = t[0].get<double>();
    s.target_hi = t[1].get<double>();
  }
  return s;
}

inline json emit(const AnnealSchedule& a) {
  return {{"levels", a.levels}, {"start", a.start}, {"sweeps", a.sweeps}};
}
inline AnnealSchedule parse_anneal(const json& j, const std::string& where, AnnealSchedule a) {
  check_keys(j, {"levels", "start", "sweeps"}, where);
  get_opt(j, "levels", a.levels);
  get_opt(j, "start", a.start);
  get_opt(j, "sweeps", a.sweeps);
  return a;
}

inline json emit_params_list(const std::vector<MaternParams>& v) {
  json a = json::array();
  for (const auto& p : v) a.push_back(emit(p));
  return a;
}
inline std::vector<MaternParams> parse_params_list(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw InvalidArgument(where + ": expected a nonempty array");
  std::vector<MaternParams> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_matern(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace cfgjson

inline nlohmann::json emit_config(const ExperimentConfig& c) {
  using namespace cfgjson;
  json j;
  j["schema"] = kConfigSchema;
  j["master_seed"] = c.master_seed;
  j["threads"] = c.threads;
  j["geometry"] = {{"theta_max_deg", c.theta_max_deg}, {"n_theta", c.n_theta}, {"n_s", c.n_s}};
  j["levels"] = {{"a_minus", c.levels.a_minus}, {"a_plus", c.levels.a_plus}};
  json ph = {{"n_inc", c.phantom.n_inc},
             {"inclusions", emit_params_list(c.phantom.inclusion_params)},
             {"n_kl", c.phantom.n_kl},
             {"weights", weights_json(c.phantom.weights)},
             {"background_grid", c.phantom.background_grid},
             {"d_min_D", c.phantom.d_min_D},
             {"d_min_boundary", c.phantom.d_min_boundary},
             {"n_check", c.phantom.n_check},
             {"max_rejections", c.phantom.max_rejections}};
  ph["background"] = c.phantom.background ? emit(*c.phantom.background) : json(nullptr);
  j["phantom"] = ph;
  j["noise"] = c.noise.level_pct ? json{{"level_pct", *c.noise.level_pct}} : json{{"sigma", *c.noise.sigma}};
  j["stage1"] = {{"prior", emit(c.stage1.prior)},
                 {"amplitude_is_sd", c.stage1.amplitude_is_sd},
                 {"grid_n", c.stage1.grid_n},
                 {"max_mode", c.stage1.max_mode},
                 {"sampler", emit(c.stage1.sampler)},
                 {"anneal", emit(c.stage1.anneal)},
                 {"burn_in_fraction", c.stage1.burn_in_fraction},
                 {"min_component_pixels", c.stage1.min_component_pixels}};
  j["stage2"] = {{"prior", emit_params_list(c.stage2.prior)},
                 {"n_kl", c.stage2.n_kl},
                 {"weights", weights_json(c.stage2.weights)},
                 {"n_poly", c.stage2.n_poly},
                 {"sampler", emit(c.stage2.sampler)},
                 {"anneal", emit(c.stage2.anneal)}};
  j["summary"] = {{"hpd_level", c.stage2.summary.hpd_level},
                  {"n_band", c.stage2.summary.n_band},
                  {"burn_in_fraction", c.stage2.summary.burn_in_fraction},
                  {"mode_grid", c.stage2.summary.mode_grid}};
  return j;
}

/// Missing keys keep the defaults of `base`.
inline ExperimentConfig parse_config(const nlohmann::json& j, ExperimentConfig c = {}) {
  using namespace cfgjson;
  try {
    check_keys(j, {"schema", "master_seed", "threads", "geometry", "levels", "phantom", "noise", "stage1", "stage2", "summary"},
               "config");
    if (!j.contains("schema") || j.at("schema") != kConfigSchema) {
      throw InvalidArgument(std::string("config: schema must be \"") + kConfigSchema + "\"");
    }
    get_opt(j, "master_seed", c.master_seed);
    get_opt(j, "threads", c.threads);
    if (j.contains("geometry")) {
      const auto& g = j.at("geometry");
      check_keys(g, {"theta_max_deg", "n_theta", "n_s"}, "geometry");
      get_opt(g, "theta_max_deg", c.theta_max_deg);
      get_opt(g, "n_theta", c.n_theta);
      get_opt(g, "n_s", c.n_s);
    }
    if (j.contains("levels")) {
      const auto& l = j.at("levels");
      check_keys(l, {"a_minus", "a_plus"}, "levels");
      get_opt(l, "a_minus", c.levels.a_minus);
      get_opt(l, "a_plus", c.levels.a_plus);
    }
    if (j.contains("phantom")) {
      const auto& p = j.at("phantom");
      check_keys(p, {"n_inc", "inclusions", "n_kl", "weights", "background", "background_grid", "d_min_D",
                     "d_min_boundary", "n_check", "max_rejections"},
                 "phantom");
      get_opt(p, "n_inc", c.phantom.n_inc);
      if (p.contains("inclusions")) c.phantom.inclusion_params = parse_params_list(p.at("inclusions"), "phantom.inclusions");
      get_opt(p, "n_kl", c.phantom.n_kl);
      if (p.contains("weights")) c.phantom.weights = weights_from(p.at("weights"));
      if (p.contains("background")) {
        if (p.at("background").is_null()) c.phantom.background.reset();
        else c.phantom.background = parse_matern(p.at("background"), "phantom.background");
      }
      get_opt(p, "background_grid", c.phantom.background_grid);
      get_opt(p, "d_min_D", c.phantom.d_min_D);
      get_opt(p, "d_min_boundary", c.phantom.d_min_boundary);
      get_opt(p, "n_check", c.phantom.n_check);
      get_opt(p, "max_rejections", c.phantom.max_rejections);
    }
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      check_keys(n, {"level_pct", "sigma"}, "noise");
      c.noise = {};
      if (n.contains("level_pct")) c.noise.level_pct = n.at("level_pct").get<double>();
      if (n.contains("sigma")) c.noise.sigma = n.at("sigma").get<double>();
    }
    if (j.contains("stage1")) {
      const auto& s = j.at("stage1");
      check_keys(s, {"prior", "amplitude_is_sd", "grid_n", "max_mode", "sampler", "anneal", "burn_in_fraction",
                     "min_component_pixels"},
                 "stage1");
      if (s.contains("prior")) c.stage1.prior = parse_matern(s.at("prior"), "stage1.prior", c.stage1.prior);
      get_opt(s, "amplitude_is_sd", c.stage1.amplitude_is_sd);
      get_opt(s, "grid_n", c.stage1.grid_n);
      get_opt(s, "max_mode", c.stage1.max_mode);
      if (s.contains("sampler")) c.stage1.sampler = parse_sampler(s.at("sampler"), "stage1.sampler", c.stage1.sampler);
      if (s.contains("anneal")) c.stage1.anneal = parse_anneal(s.at("anneal"), "stage1.anneal", c.stage1.anneal);
      get_opt(s, "burn_in_fraction", c.stage1.burn_in_fraction);
      get_opt(s, "min_component_pixels", c.stage1.min_component_pixels);
    }
    if (j.contains("stage2")) {
      const auto& s = j.at("stage2");
      check_keys(s, {"prior", "n_kl", "weights", "n_poly", "sampler", "anneal"}, "stage2");
      if (s.contains("prior")) c.stage2.prior = parse_params_list(s.at("prior"), "stage2.prior");
      get_opt(s, "n_kl", c.stage2.n_kl);
      if (s.contains("weights")) c.stage2.weights = weights_from(s.at("weights"));
      get_opt(s, "n_poly", c.stage2.n_poly);
      if (s.contains("sampler")) c.stage2.sampler = parse_sampler(s.at("sampler"), "stage2.sampler", c.stage2.sampler);
      if (s.contains("anneal")) c.stage2.anneal = parse_anneal(s.at("anneal"), "stage2.anneal", c.stage2.anneal);
    }
    if (j.contains("summary")) {
      const auto& s = j.at("summary");
      check_keys(s, {"hpd_level", "n_band", "burn_in_fraction", "mode_grid"}, "summary");
      get_opt(s, "hpd_level", c.stage2.summary.hpd_level);
      get_opt(s, "n_band", c.stage2.summary.n_band);
      get_opt(s, "burn_in_fraction", c.stage2.summary.burn_in_fraction);
      get_opt(s, "mode_grid", c.stage2.summary.mode_grid);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  c.stage2.threads = c.threads;
  c.sync();
  c.validate();
  return c;
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return emit_config(a) == emit_config(b);
}

/// Named starting points for the experiments described in the README.
inline ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  const MaternParams bg{2.5, 50.0, 1.0, std::log(0.1)};
  if (name == "single-smooth" || name == "single-rough" || name == "sparse" || name == "limited") {
    const double g = name == "single-rough" ? 2.0 : 3.0;
    c.phantom.n_inc = 1;
    c.phantom.inclusion_params = {MaternParams{g, 1.0, 0.2, std::log(0.3)}};
    c.phantom.background = bg;
    c.stage2.prior = c.phantom.inclusion_params;
    if (name == "sparse") c.n_theta = 10;
    if (name == "limited") {
      c.n_theta = 10;
      c.theta_max_deg = 45.0;
    }
  } else if (name == "multi3") {
    c.phantom.n_inc = 3;
    c.phantom.inclusion_params = {MaternParams{3.0, 1.0, 0.2, std::log(0.22)}};
    c.phantom.background = bg;
    c.stage2.prior = c.phantom.inclusion_params;
    c.stage2.summary.burn_in_fraction = 0.1;
  } else if (name == "lotus") {
    // Real-data setting; the sinogram is ingested from CSV.
    c.levels = {0.001, 0.025};
    c.stage1.prior = {3.0, 50.0, 1.0, -1.5};
    c.phantom.background.reset();
  } else {
    throw InvalidArgument("unknown preset '" + name + "'");
  }
  c.sync();
  return c;
}

inline std::vector<std::string> preset_names() {
  return {"single-smooth", "single-rough", "multi3", "sparse", "limited", "lotus"};
}

}  // namespace ctbuq
