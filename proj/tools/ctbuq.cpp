// ctbuq: phantom generation, scanning, two-stage boundary inference,
// chain diagnostics and plotting from the command line.
//
// Exit codes: 0 success, 1 I/O or parse error, 2 infeasible configuration,
// 3 numerical failure (including an empty Stage-1 detection).

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ctbuq/ctbuq.hpp"

namespace fs = std::filesystem;
using namespace ctbuq;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kIo = 1, kInfeasible = 2, kNumerical = 3 };

struct Common {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out = ".";
};

// Stream indices below the master seed.
constexpr std::uint64_t kPhantomStream = 0, kNoiseStream = 1, kStage1Stream = 2, kStage2Stream = 3;

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = c.preset.empty() ? ExperimentConfig{} : preset(c.preset);
  if (!c.config.empty()) cfg = parse_config(io::read_json(c.config), cfg);
  if (c.seed) cfg.master_seed = *c.seed;
  if (c.threads) {
    cfg.threads = *c.threads;
    cfg.stage2.threads = *c.threads;
  }
  cfg.sync();
  cfg.validate();
  return cfg;
}

std::string out_path(const Common& c, const std::string& name) {
  fs::create_directories(c.out);
  return (fs::path(c.out) / name).string();
}

void write(const Common& c, const std::string& name, const std::string& text) { io::write_text(out_path(c, name), text); }
void write(const Common& c, const std::string& name, const json& j) { io::write_json(out_path(c, name), j); }

std::string in_path(const std::string& given, const Common& c, const std::string& fallback) {
  return given.empty() ? (fs::path(c.out) / fallback).string() : given;
}

// ------------------------------------------------------------ phantom, scan

Phantom make_phantom(const ExperimentConfig& cfg) {
  Rng rng(derive_seed(cfg.master_seed, kPhantomStream));
  return sample_phantom(cfg.phantom, rng);
}

void emit_phantom(const Common& c, const Phantom& ph) {
  const Field2D raster = rasterize(ph, GridSpec::unit_box(128));
  write(c, "phantom.json", io::to_json(ph));
  write(c, "phantom.csv", io::field_csv(raster));
  write(c, "phantom.svg", svg::heatmap(raster, "phantom"));
}

json noise_json(const NoisyScan& s, const NoiseSpec& spec) {
  json j;
  j["schema"] = "ctbuq.noise/1";
  j["sigma"] = s.model.sigma_noise;
  j["n"] = s.model.dimension;
  j["level_pct"] = spec.level_pct ? json(*spec.level_pct) : json(nullptr);
  j["realized_level_pct"] = s.realized_level_pct;
  return j;
}

std::string sinogram_svg(const Sinogram& s, const std::string& title) {
  return svg::heatmap(s.values, s.geometry.n_s, s.geometry.n_theta, title);
}

NoisyScan scan(const Common& c, const ExperimentConfig& cfg, const Phantom& ph) {
  const Sinogram clean = radon_functional(ph, cfg.geometry());
  Rng rng(derive_seed(cfg.master_seed, kNoiseStream));
  NoisyScan s = add_noise(clean, cfg.noise, rng);
  io::write_sinogram_csv(out_path(c, "sinogram_clean.csv"), clean);
  io::write_sinogram_csv(out_path(c, "sinogram.csv"), s.noisy);
  write(c, "noise.json", noise_json(s, cfg.noise));
  write(c, "sinogram.svg", sinogram_svg(s.noisy, "sinogram"));
  return s;
}

// A noise file wins; otherwise sigma from the config, or the configured
// level applied to the observed sinogram.
NoiseModel noise_for(const Sinogram& y, const ExperimentConfig& cfg, const std::string& noise_file) {
  double sigma;
  if (!noise_file.empty()) {
    const json j = io::read_json(noise_file);
    if (!j.contains("sigma") || !j.at("sigma").is_number()) throw IoError(noise_file + ": missing numeric 'sigma'");
    sigma = j.at("sigma").get<double>();
  } else if (cfg.noise.sigma) {
    sigma = *cfg.noise.sigma;
  } else {
    sigma = calibrate_sigma(y, *cfg.noise.level_pct);
  }
  if (!(sigma > 0.0)) throw InvalidArgument("noise sigma must be positive");
  return {sigma, y.values.size()};
}

// ------------------------------------------------------------ stages

Stage1Result run_stage1(const Common& c, const ExperimentConfig& cfg, const Sinogram& y, const NoiseModel& noise) {
  Rng rng(derive_seed(cfg.master_seed, kStage1Stream));
  const Stage1Result r = stage1(y, noise, cfg.stage1, rng);
  write(c, "stage1.json", io::to_json(r));
  write(c, "mean_field.csv", io::field_csv(r.mean_field_image));
  write(c, "mean_field.svg", svg::heatmap(r.mean_field_image, "mean-field image"));
  write(c, "pointwise_mean.csv", io::field_csv(r.pointwise_mean_image));
  write(c, "pointwise_mean.svg", svg::heatmap(r.pointwise_mean_image, "pointwise mean"));
  if (r.overlap_warning) std::cerr << "warning: Stage-1 bounding boxes overlap\n";
  return r;
}

std::vector<svg::Overlay> truth_overlay(const std::optional<Phantom>& ph, Point2 near) {
  if (!ph || ph->inclusions.empty()) return {};
  std::size_t best = 0;
  double bd = 1e300;
  for (std::size_t k = 0; k < ph->inclusions.size(); ++k) {
    const double d = norm(center_of_mass(ph->inclusions[k]) - near);
    if (d < bd) bd = d, best = k;
  }
  return {{boundary_polygon(ph->inclusions[best], 512), "#b2182b", "true boundary"}};
}

std::string band_csv(const RadialBand& b) {
  std::string s = "angle,lo,mean,hi\n";
  for (std::size_t k = 0; k < b.angles.size(); ++k) {
    s += io::fmt(b.angles[k]) + "," + io::fmt(b.lo[k]) + "," + io::fmt(b.mean[k]) + "," + io::fmt(b.hi[k]) + "\n";
  }
  return s;
}

std::vector<double> radius_at_zero(const Chain& chain, const MaternParams& p, WeightMode wm,
                                   const std::vector<std::size_t>& idx, std::size_t burn) {
  const std::size_t n_kl = chain.states.front().coeffs.size() / 2;
  const auto w = kl_weights(p, n_kl, wm);
  std::vector<double> r;
  for (std::size_t k : idx) r.push_back(std::exp(evaluate_boundary_field(chain.states[burn + k].coeffs, w, p.mean, 0.0)));
  return r;
}

std::string acf_svg(const std::vector<double>& x, const std::string& title) {
  try {
    const auto rho = acf(x, std::min<std::size_t>(x.size() - 1, 200));
    return svg::line_plot(rho, title, -0.2, 1.0);
  } catch (const UndefinedStatistic&) {
    return svg::line_plot({}, title + " (undefined)", -0.2, 1.0);
  }
}

void emit_plots(const Common& c, const PosteriorSummary& s, const std::optional<Phantom>& ph) {
  const std::string i = std::to_string(s.inclusion_index);
  if (s.modes.empty()) return;
  const auto& m = s.modes.front();
  write(c, "boundary_" + i + ".svg",
        svg::boundary_plot(m.band, m.mean_center, truth_overlay(ph, m.mean_center), "inclusion " + i));
}

/// Returns false if any inclusion failed.
bool run_stage2(const Common& c, const ExperimentConfig& cfg, const Sinogram& y, const NoiseModel& noise,
                const Stage1Result& s1, const std::optional<Phantom>& ph) {
  const auto results = stage2(y, noise, s1, cfg.stage2, derive_seed(cfg.master_seed, kStage2Stream));
  bool ok = true;
  for (const auto& r : results) {
    const std::string i = std::to_string(r.index);
    if (!r.error.empty() || !r.summary) {
      ok = false;
      std::cerr << "inclusion " << i << " failed: " << r.error << "\n";
      write(c, "summary_" + i + ".json", json{{"schema", "ctbuq.summary/1"}, {"inclusion_index", r.index}, {"error", r.error}});
      continue;
    }
    const PosteriorSummary& s = *r.summary;
    const MaternParams& p = cfg.stage2.prior_for(r.index);
    write(c, "summary_" + i + ".json", io::to_json(s));
    write(c, "modes_" + i + ".json", io::mode_sets_json(s));
    io::ChainHeader h{r.index, p, cfg.stage2.weights, r.chain.b1, r.chain.b2};
    if (!r.chain.states.empty()) write(c, "chain_" + i + ".jsonl", io::chain_jsonl(r.chain, h));
    if (!s.modes.empty()) {
      write(c, "band_" + i + ".csv", band_csv(s.modes.front().band));
      if (!r.chain.states.empty()) {
        const std::size_t burn = r.chain.states.size() - s.n_kept;
        write(c, "acf_" + i + ".svg",
              acf_svg(radius_at_zero(r.chain, p, cfg.stage2.weights, s.modes.front().samples, burn),
                      "ACF, radius at angle 0, inclusion " + i));
      }
    }
    emit_plots(c, s, ph);
  }
  return ok;
}

std::optional<Phantom> maybe_phantom(const std::string& path) {
  if (path.empty() || !fs::exists(path)) return std::nullopt;
  return io::phantom_from(io::read_json(path));
}

// ------------------------------------------------------------ diagnose

json diagnose(const std::vector<std::string>& files, const SummaryConfig& sc, bool& warned) {
  json out;
  out["schema"] = "ctbuq.diagnostics/1";
  out["chains"] = json::array();
  std::vector<std::vector<double>> curves;
  for (const auto& f : files) {
    const io::ChainFile cf = io::parse_chain_jsonl(io::read_text(f), f);
    const Chain& ch = cf.chain;
    json e;
    e["file"] = f;
    e["n_samples"] = ch.states.size();
    const std::size_t burn = std::size_t(std::floor(sc.burn_in_fraction * double(ch.states.size())));
    if (ch.states.size() < burn + 2) {
      e["warning"] = "too few samples";
      warned = true;
      out["chains"].push_back(e);
      continue;
    }
    std::vector<Point2> centers;
    std::vector<double> phi;
    for (std::size_t k = burn; k < ch.states.size(); ++k) {
      centers.push_back(ch.states[k].center.value_or(Point2{}));
      phi.push_back(ch.states[k].phi);
    }
    Rect box{centers[0].x, centers[0].x, centers[0].y, centers[0].y};
    for (const auto& p : centers) {
      box.xmin = std::min(box.xmin, p.x), box.xmax = std::max(box.xmax, p.x);
      box.ymin = std::min(box.ymin, p.y), box.ymax = std::max(box.ymax, p.y);
    }
    const double pad = 1e-9 + 1e-3 * std::max(box.xmax - box.xmin, box.ymax - box.ymin);
    box = {box.xmin - pad, box.xmax + pad, box.ymin - pad, box.ymax + pad};
    const PosteriorSummary s = summarize_chain(ch, box, cf.header.params, cf.header.weights, sc);
    std::vector<double> r0 = radius_at_zero(ch, cf.header.params, cf.header.weights, s.modes.front().samples, burn);
    std::vector<double> cx, cy;
    for (const auto& p : centers) cx.push_back(p.x), cy.push_back(p.y);

    auto stat = [&](const char* name, const std::vector<double>& x) {
      json b;
      try {
        b["ess"] = ess(x);
        const auto rho = acf(x, std::min<std::size_t>(x.size() - 1, 200));
        b["acf"] = rho;
        b["first_lag_below_0.05"] = first_lag_below(rho) ? json(*first_lag_below(rho)) : json(nullptr);
      } catch (const UndefinedStatistic& u) {
        b["undefined"] = u.what();
        std::cerr << "warning: " << f << ": " << name << ": " << u.what() << "\n";
        warned = true;
      }
      e[name] = b;
    };
    stat("radius_angle0", r0);
    stat("center_x", cx);
    stat("center_y", cy);
    stat("phi", phi);
    e["n_modes"] = s.modes.size();
    e["first_mode_samples"] = s.modes.front().samples.size();
    e["first_mode_mean_radius"] = s.modes.front().band.mean;
    curves.push_back(s.modes.front().band.mean);
    out["chains"].push_back(e);
  }
  if (curves.size() >= 2) {
    json mc;
    mc["max_distance"] = multi_chain_mean_check(curves);
    mc["pairwise"] = json::array();
    for (std::size_t a = 0; a < curves.size(); ++a) {
      for (std::size_t b = a + 1; b < curves.size(); ++b) {
        mc["pairwise"].push_back({{"a", a}, {"b", b}, {"distance", multi_chain_mean_check({curves[a], curves[b]})}});
      }
    }
    out["multi_chain"] = mc;
  }
  return out;
}

// ------------------------------------------------------------ plot

RadialBand band_from(const json& rows) {
  RadialBand b;
  for (const auto& r : rows) {
    b.angles.push_back(r.at(0).get<double>());
    b.lo.push_back(r.at(1).get<double>());
    b.mean.push_back(r.at(2).get<double>());
    b.hi.push_back(r.at(3).get<double>());
  }
  return b;
}

int plot(const Common& c, const std::string& dir) {
  const fs::path d(dir);
  int made = 0;
  if (fs::exists(d / "sinogram.csv")) {
    write(c, "sinogram.svg", sinogram_svg(io::read_sinogram_csv((d / "sinogram.csv").string()), "sinogram"));
    ++made;
  }
  if (fs::exists(d / "stage1.json")) {
    const Stage1Result r = io::stage1_from(io::read_json((d / "stage1.json").string()));
    write(c, "mean_field.svg", svg::heatmap(r.mean_field_image, "mean-field image"));
    write(c, "pointwise_mean.svg", svg::heatmap(r.pointwise_mean_image, "pointwise mean"));
    made += 2;
  }
  const auto ph = maybe_phantom((d / "phantom.json").string());
  if (ph) {
    write(c, "phantom.svg", svg::heatmap(rasterize(*ph, GridSpec::unit_box(128)), "phantom"));
    ++made;
  }
  for (std::size_t i = 0;; ++i) {
    const fs::path p = d / ("summary_" + std::to_string(i) + ".json");
    if (!fs::exists(p)) break;
    const json j = io::read_json(p.string());
    if (!j.contains("modes") || j.at("modes").empty()) continue;
    try {
      const json& m = j.at("modes").at(0);
      const Point2 ctr = io::point_from(m.at("mean_center"));
      write(c, "boundary_" + std::to_string(i) + ".svg",
            svg::boundary_plot(band_from(m.at("band")), ctr, truth_overlay(ph, ctr), "inclusion " + std::to_string(i)));
      ++made;
    } catch (const json::exception& e) {
      throw IoError(p.string() + ": " + e.what());
    }
  }
  if (made == 0) throw IoError("plot: nothing to plot in '" + dir + "'");
  return kOk;
}

void add_common(CLI::App* a, Common& c) {
  a->add_option("--config", c.config, "experiment configuration (JSON)");
  a->add_option("--preset", c.preset, "named preset: " + [] {
    std::string s;
    for (const auto& n : preset_names()) s += (s.empty() ? "" : ", ") + n;
    return s;
  }());
  a->add_option("--seed", c.seed, "master seed");
  a->add_option("--threads", c.threads, "worker threads for Stage 2")->check(CLI::PositiveNumber);
  a->add_option("--out", c.out, "output directory");
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Two-stage CT boundary reconstruction with uncertainty bands"};
  app.require_subcommand(1);
  Common c;
  std::string phantom_file, sinogram_file, noise_file, stage1_file, in_dir;
  std::vector<std::string> chain_files;

  auto* p_phantom = app.add_subcommand("phantom", "sample a random phantom");
  add_common(p_phantom, c);
  auto* p_scan = app.add_subcommand("scan", "simulate a noisy parallel-beam sinogram");
  add_common(p_scan, c);
  p_scan->add_option("--phantom", phantom_file, "phantom JSON (default <out>/phantom.json)");
  auto* p_s1 = app.add_subcommand("stage1", "level-set sampling and inclusion localization");
  add_common(p_s1, c);
  p_s1->add_option("--sinogram", sinogram_file, "sinogram CSV (default <out>/sinogram.csv)");
  p_s1->add_option("--noise", noise_file, "noise metadata JSON");
  auto* p_s2 = app.add_subcommand("stage2", "star-shaped boundary sampling per inclusion");
  add_common(p_s2, c);
  p_s2->add_option("--sinogram", sinogram_file, "sinogram CSV (default <out>/sinogram.csv)");
  p_s2->add_option("--noise", noise_file, "noise metadata JSON");
  p_s2->add_option("--stage1", stage1_file, "Stage-1 JSON (default <out>/stage1.json)");
  p_s2->add_option("--phantom", phantom_file, "ground truth for plot overlays");
  auto* p_run = app.add_subcommand("run", "both stages; simulates the data unless --sinogram is given");
  add_common(p_run, c);
  p_run->add_option("--sinogram", sinogram_file, "observed sinogram CSV");
  p_run->add_option("--noise", noise_file, "noise metadata JSON");
  p_run->add_option("--phantom", phantom_file, "ground truth for plot overlays");
  auto* p_diag = app.add_subcommand("diagnose", "ACF, ESS and multi-chain mean check for chain files");
  add_common(p_diag, c);
  p_diag->add_option("chains", chain_files, "chain JSONL files")->required();
  auto* p_plot = app.add_subcommand("plot", "re-render SVG plots from written artifacts");
  add_common(p_plot, c);
  p_plot->add_option("--in", in_dir, "artifact directory (default <out>)");
  auto* p_cfg = app.add_subcommand("config", "print the effective configuration");
  add_common(p_cfg, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kIo;
  }

  const ExperimentConfig cfg = load_config(c);

  if (p_cfg->parsed()) {
    std::cout << emit_config(cfg).dump(2) << "\n";
    return kOk;
  }
  if (p_phantom->parsed()) {
    emit_phantom(c, make_phantom(cfg));
    return kOk;
  }
  if (p_scan->parsed()) {
    const Phantom ph = io::phantom_from(io::read_json(in_path(phantom_file, c, "phantom.json")));
    const NoisyScan s = scan(c, cfg, ph);
    std::cout << "sigma " << io::fmt(s.model.sigma_noise) << " realized level " << io::fmt(s.realized_level_pct) << "%\n";
    return kOk;
  }
  if (p_s1->parsed()) {
    const Sinogram y = io::read_sinogram_csv(in_path(sinogram_file, c, "sinogram.csv"));
    const Stage1Result r = run_stage1(c, cfg, y, noise_for(y, cfg, noise_file));
    std::cout << "detected " << r.n_inc << " inclusion(s)\n";
    return kOk;
  }
  if (p_s2->parsed()) {
    const Sinogram y = io::read_sinogram_csv(in_path(sinogram_file, c, "sinogram.csv"));
    const Stage1Result s1 = io::stage1_from(io::read_json(in_path(stage1_file, c, "stage1.json")));
    const bool ok = run_stage2(c, cfg, y, noise_for(y, cfg, noise_file), s1, maybe_phantom(phantom_file));
    return ok ? kOk : kNumerical;
  }
  if (p_run->parsed()) {
    write(c, "config.json", emit_config(cfg));
    std::optional<Phantom> ph = maybe_phantom(phantom_file);
    Sinogram y;
    NoiseModel noise;
    if (sinogram_file.empty()) {
      if (!ph) {
        ph = make_phantom(cfg);
        emit_phantom(c, *ph);
      }
      const NoisyScan s = scan(c, cfg, *ph);
      y = s.noisy;
      noise = s.model;
    } else {
      y = io::read_sinogram_csv(sinogram_file);
      write(c, "sinogram.svg", sinogram_svg(y, "sinogram"));
      noise = noise_for(y, cfg, noise_file);
    }
    const Stage1Result s1 = run_stage1(c, cfg, y, noise);
    std::cout << "detected " << s1.n_inc << " inclusion(s)\n";
    return run_stage2(c, cfg, y, noise, s1, ph) ? kOk : kNumerical;
  }
  if (p_diag->parsed()) {
    bool warned = false;
    write(c, "diagnostics.json", diagnose(chain_files, cfg.stage2.summary, warned));
    if (warned) std::cerr << "diagnostics written with warnings\n";
    return kOk;
  }
  if (p_plot->parsed()) return plot(c, in_dir.empty() ? c.out : in_dir);
  return kIo;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const InfeasibleConfiguration& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const EmptyResult& e) {
    std::cerr << "no result: " << e.what() << "\n";
    return kNumerical;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kNumerical;
  }
}
