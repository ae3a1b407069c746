// Command-line front end: simulation studies, forecast evaluation, contour
// grids, disintegration checks, and one-off score evaluations.

#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "levelscore/experiments.hpp"

namespace {

std::string resolve_out_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("LEVELSCORE_OUT"); env && *env) return env;
  return ".";
}

levelscore::Point parse_point(const std::string& csv) {
  levelscore::Point p;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      p.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw levelscore::ConfigError("--y: cannot parse coordinate '" + tok + "'");
    }
  }
  if (p.empty()) throw levelscore::ConfigError("--y: empty point");
  return p;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* c = cmd->add_option("--config", args.config_path, "JSON experiment configuration");
  if (config_required) c->required();
  cmd->add_option("--out-dir", args.out_dir,
                  "output directory (default: $LEVELSCORE_OUT or '.')");
  cmd->add_option("--seed", args.seed, "override the master seed from the config")
      ->each([&](const std::string&) { args.seed_set = true; });
  cmd->add_option("--threads", args.threads, "worker threads (default 1)");
}

levelscore::ExperimentConfig load(const CommonArgs& args) {
  auto cfg = levelscore::load_config(args.config_path);
  if (args.seed_set) cfg.master_seed = args.seed;
  return cfg;
}

int run_simstudy(const CommonArgs& args) {
  auto cfg = load(args);
  auto result = levelscore::run_simulation_study(cfg, args.threads);
  auto files = levelscore::write_simstudy_outputs(result, resolve_out_dir(args.out_dir));
  for (const auto& f : files) std::cout << "wrote " << f << '\n';
  return 0;
}

int run_evaluate(const CommonArgs& args) {
  auto cfg = load(args);
  auto result = levelscore::run_evaluation(cfg, args.threads);
  auto files = levelscore::write_evaluation_outputs(result, resolve_out_dir(args.out_dir));
  for (const auto& f : files) std::cout << "wrote " << f << '\n';
  return 0;
}

int run_check(const CommonArgs& args) {
  auto cfg = load(args);
  auto report = levelscore::check_disintegration(cfg, args.threads);
  std::string path = resolve_out_dir(args.out_dir) + "/report_disintegration.txt";
  std::filesystem::create_directories(resolve_out_dir(args.out_dir));
  levelscore::write_disintegration_report(report, path);
  std::cout << "wrote " << path << '\n';
  for (const auto& c : report.checks)
    std::cout << c.name << " rel_error=" << levelscore::format_double(c.rel_error) << '\n';
  std::cout << "crps_decomposition rel_error="
            << levelscore::format_double(report.crps_rel_error) << '\n';
  return 0;
}

int run_contours(const CommonArgs& args, const std::string& functional,
                 const std::string& candidate_label, double lo, double hi, std::size_t nodes) {
  auto cfg = load(args);
  if (cfg.dimension != 2)
    throw levelscore::DimensionError("contours: requires a 2-dimensional config");
  if (cfg.mode != levelscore::ExperimentConfig::Mode::Simulation || cfg.candidates.empty())
    throw levelscore::ConfigError("contours: needs a simulation config with candidates");

  std::size_t ci = 0;
  if (!candidate_label.empty()) {
    while (ci < cfg.candidates.size() && cfg.candidates[ci].label != candidate_label) ++ci;
    if (ci == cfg.candidates.size())
      throw levelscore::ConfigError("contours: no candidate labeled '" + candidate_label + "'");
  }
  const auto& cc = cfg.candidates[ci];
  levelscore::Candidate cand;
  cand.label = cc.label;
  if (cc.gaussian) {
    cand.density = cc.gaussian;
    cand.pool = cc.gaussian->sample(cfg.candidate_pool_size,
                                    levelscore::derive_stream_seed(cfg.master_seed, 2 + ci));
  } else {
    cand.pool = levelscore::read_pool_file(*cc.pool_path);
  }
  levelscore::GridAxis axis{lo, hi, nodes};
  std::string out = resolve_out_dir(args.out_dir);
  std::filesystem::create_directories(out);
  auto emit = [&](levelscore::FunctionalKind fk) {
    auto grid = levelscore::contour_grid(fk, cand, {axis, axis});
    std::string path = out + "/" + fk.name() + "_contour.csv";
    levelscore::write_contour_csv(grid, path);
    std::cout << "wrote " << path << '\n';
  };
  auto selected = [&](const std::string& f) {
    return functional.empty() ? cfg.wants_functional(f) : functional == f;
  };
  if (selected("density") && cand.density) emit(levelscore::FunctionalKind::density());
  if (selected("cdf")) emit(levelscore::FunctionalKind::cdf());
  if (selected("lpm"))
    for (int k : cfg.lpm_orders) emit(levelscore::FunctionalKind::lpm(k));
  return 0;
}

int run_score(const CommonArgs& args, const std::string& score_name, const std::string& y_csv,
              int k, double alpha, bool alpha_set, const std::string& candidate_pool) {
  auto cfg = load(args);
  const levelscore::Point y = parse_point(y_csv);
  if (y.size() != cfg.dimension)
    throw levelscore::ConfigError("--y: dimension does not match the config");

  levelscore::WeightMeasure weight(
      levelscore::GaussianSpec(cfg.weight.mean, cfg.weight.cov), cfg.weight.pool_size,
      levelscore::derive_stream_seed(cfg.master_seed, 1));

  std::vector<levelscore::Candidate> cands;
  if (!candidate_pool.empty()) {
    levelscore::Candidate cand;
    cand.label = std::filesystem::path(candidate_pool).stem().string();
    cand.pool = levelscore::read_pool_file(candidate_pool);
    cands.push_back(std::move(cand));
  } else {
    if (cfg.mode != levelscore::ExperimentConfig::Mode::Simulation || cfg.candidates.empty())
      throw levelscore::ConfigError(
          "score: needs --candidate-pool or a simulation config with candidates");
    for (std::size_t i = 0; i < cfg.candidates.size(); ++i) {
      const auto& cc = cfg.candidates[i];
      levelscore::Candidate cand;
      cand.label = cc.label;
      if (cc.gaussian) {
        cand.density = cc.gaussian;
        cand.pool = cc.gaussian->sample(cfg.candidate_pool_size,
                                        levelscore::derive_stream_seed(cfg.master_seed, 2 + i));
      } else {
        cand.pool = levelscore::read_pool_file(*cc.pool_path);
      }
      cands.push_back(std::move(cand));
    }
  }

  std::cout << "candidate_label,score_name,k,value,std_error\n";
  for (const levelscore::Candidate& cand : cands) {
    levelscore::ScoreValue v;
    std::string name = score_name;
    if (alpha_set) {
      if (score_name == "dqs")
        v = levelscore::density_level_score(cand, alpha, y, weight, args.threads);
      else if (score_name == "mcrps")
        v = levelscore::cdf_level_score(cand, alpha, y, weight, args.threads);
      else if (score_name == "lpms")
        v = levelscore::lpm_level_score(cand, alpha, y, k, weight, args.threads);
      else
        throw levelscore::ConfigError("--score: unknown score '" + score_name + "'");
      name += "_level:" + levelscore::format_double(alpha);
    } else {
      if (score_name == "dqs")
        v = levelscore::dqs(cand, y, weight, args.threads);
      else if (score_name == "mcrps")
        v = levelscore::mcrps(cand, y, weight, args.threads);
      else if (score_name == "lpms")
        v = levelscore::lpms(cand, y, k, weight, args.threads);
      else
        throw levelscore::ConfigError("--score: unknown score '" + score_name + "'");
    }
    std::cout << cand.label << ',' << name << ',' << k << ','
              << levelscore::format_double(v.value) << ','
              << levelscore::format_double(v.std_error) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"L2 scores and level-set scores for multivariate forecast distributions"};
  app.require_subcommand(1);

  CommonArgs sim_args, eval_args, check_args, contour_args, score_args;
  auto* sim = app.add_subcommand("simstudy", "run a simulation study and write score tables");
  add_common(sim, sim_args);
  auto* ev = app.add_subcommand("evaluate", "score externally supplied forecast pools");
  add_common(ev, eval_args);
  auto* ck = app.add_subcommand("check", "verify the disintegration identities");
  add_common(ck, check_args);

  auto* co = app.add_subcommand("contours", "tabulate functional surfaces on a 2-d grid");
  add_common(co, contour_args);
  double grid_lo = -3.0, grid_hi = 3.0;
  std::size_t grid_nodes = 41;
  std::string contour_functional, contour_candidate;
  co->add_option("--functional", contour_functional,
                 "density | cdf | lpm (default: all from config)");
  co->add_option("--candidate", contour_candidate,
                 "candidate label (default: first in config)");
  co->add_option("--grid-min", grid_lo, "grid lower bound per axis (default -3)");
  co->add_option("--grid-max", grid_hi, "grid upper bound per axis (default 3)");
  co->add_option("--grid-nodes", grid_nodes, "nodes per axis (default 41)");

  auto* sc = app.add_subcommand("score", "score the configured candidates at one observation");
  add_common(sc, score_args);
  std::string score_name, y_csv, score_candidate_pool;
  int score_k = 1;
  double score_alpha = 0.0;
  bool alpha_set = false;
  sc->add_option("--score", score_name, "dqs | mcrps | lpms")->required();
  sc->add_option("--y", y_csv, "observation, comma-separated coordinates")->required();
  sc->add_option("--k", score_k, "lower partial moment order (default 1)");
  sc->add_option("--candidate-pool", score_candidate_pool,
                 "score a single externally supplied sample pool instead of the config's "
                 "candidates");
  sc->add_option("--alpha", score_alpha, "report the level-set score at this level instead")
      ->each([&](const std::string&) { alpha_set = true; });

  try {
    app.parse(argc, argv);
    if (*sim) return run_simstudy(sim_args);
    if (*ev) return run_evaluate(eval_args);
    if (*ck) return run_check(check_args);
    if (*co)
      return run_contours(contour_args, contour_functional, contour_candidate, grid_lo,
                          grid_hi, grid_nodes);
    if (*sc)
      return run_score(score_args, score_name, y_csv, score_k, score_alpha, alpha_set,
                       score_candidate_pool);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const levelscore::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const levelscore::IngestError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
