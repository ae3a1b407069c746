#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "levelscore/levelsets.hpp"

namespace levelscore {

// ---------------------------------------------------------------------------
// Configuration

struct WeightConfig {
  Point mean;
  std::vector<double> cov;  // row-major d x d
  std::size_t pool_size = 20000;
};

struct CandidateConfig {
  std::string label;
  // Exactly one of the two is set: an analytic Gaussian or an external pool.
  std::optional<GaussianSpec> gaussian;
  std::optional<std::string> pool_path;
};

struct MethodConfig {
  std::string label;
  std::string forecast_dir;  // one pool file per period, lexicographic order
};

struct ExperimentConfig {
  enum class Mode { Simulation, Evaluation };
  Mode mode = Mode::Simulation;
  std::size_t dimension = 2;
  std::uint64_t master_seed = 0;

  // Simulation mode
  std::optional<GaussianSpec> truth;
  std::vector<CandidateConfig> candidates;
  std::size_t n_observations = 0;
  std::size_t candidate_pool_size = 20000;

  // Evaluation mode
  std::vector<MethodConfig> methods;
  std::string realizations_path;
  std::map<std::string, std::vector<double>> explicit_alphas;  // functional name -> alphas
  std::optional<std::string> alpha_reference_pool;

  WeightConfig weight;
  std::vector<double> alpha_levels = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::string> scores = {"dqs", "mcrps", "lpms"};
  std::vector<std::string> functionals = {"density", "cdf", "lpm"};
  std::vector<int> lpm_orders = {1};

  bool wants_score(const std::string& s) const {
    return std::find(scores.begin(), scores.end(), s) != scores.end();
  }
  bool wants_functional(const std::string& f) const {
    return std::find(functionals.begin(), functionals.end(), f) != functionals.end();
  }
};

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& j, const std::string& key,
                                           const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError("config: missing field '" + path + key + "'");
  return *it;
}

template <class T>
T get_field(const nlohmann::json& j, const std::string& key, const std::string& path) {
  try {
    return require_field(j, key, path).get<T>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config: bad field '" + path + key + "': " + e.what());
  }
}

inline GaussianSpec parse_gaussian(const nlohmann::json& j, const std::string& path,
                                   std::size_t expect_dim) {
  auto mean = get_field<Point>(j, "mean", path);
  auto rows = get_field<std::vector<std::vector<double>>>(j, "cov", path);
  if (mean.size() != expect_dim)
    throw ConfigError("config: '" + path + "mean' has wrong dimension");
  std::vector<double> cov;
  for (const auto& r : rows) {
    if (r.size() != rows.size())
      throw ConfigError("config: '" + path + "cov' is not square");
    cov.insert(cov.end(), r.begin(), r.end());
  }
  if (rows.size() != expect_dim)
    throw ConfigError("config: '" + path + "cov' has wrong dimension");
  try {
    return GaussianSpec(std::move(mean), std::move(cov));
  } catch (const std::exception& e) {
    throw ConfigError("config: '" + path + "': " + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::get_field;
  ExperimentConfig cfg;
  std::string mode = j.value("mode", std::string("simulation"));
  if (mode == "simulation")
    cfg.mode = ExperimentConfig::Mode::Simulation;
  else if (mode == "evaluation")
    cfg.mode = ExperimentConfig::Mode::Evaluation;
  else
    throw ConfigError("config: bad field 'mode': must be simulation or evaluation");

  cfg.dimension = get_field<std::size_t>(j, "dimension", "");
  if (cfg.dimension == 0) throw ConfigError("config: 'dimension' must be >= 1");
  cfg.master_seed = get_field<std::uint64_t>(j, "master_seed", "");

  if (j.contains("alpha_levels")) cfg.alpha_levels = j["alpha_levels"].get<std::vector<double>>();
  for (double lv : cfg.alpha_levels)
    if (!(lv > 0.0 && lv < 1.0))
      throw ConfigError("config: 'alpha_levels' entries must be in (0,1)");
  if (j.contains("scores")) cfg.scores = j["scores"].get<std::vector<std::string>>();
  for (const auto& s : cfg.scores)
    if (s != "dqs" && s != "mcrps" && s != "lpms")
      throw ConfigError("config: 'scores' entry '" + s + "' unknown");
  if (j.contains("functionals"))
    cfg.functionals = j["functionals"].get<std::vector<std::string>>();
  for (const auto& f : cfg.functionals)
    if (f != "density" && f != "cdf" && f != "lpm")
      throw ConfigError("config: 'functionals' entry '" + f + "' unknown");
  if (j.contains("k")) cfg.lpm_orders = j["k"].get<std::vector<int>>();
  for (int k : cfg.lpm_orders)
    if (k < 0) throw ConfigError("config: 'k' entries must be >= 0");

  const auto& wj = detail::require_field(j, "weight", "");
  cfg.weight.mean = get_field<Point>(wj, "mean", "weight.");
  auto wrows = get_field<std::vector<std::vector<double>>>(wj, "cov", "weight.");
  for (const auto& r : wrows) cfg.weight.cov.insert(cfg.weight.cov.end(), r.begin(), r.end());
  if (wrows.size() != cfg.dimension || cfg.weight.mean.size() != cfg.dimension)
    throw ConfigError("config: 'weight' dimension mismatch");
  cfg.weight.pool_size = wj.value("pool_size", std::size_t{20000});
  if (cfg.weight.pool_size == 0) throw ConfigError("config: 'weight.pool_size' must be >= 1");

  if (cfg.mode == ExperimentConfig::Mode::Simulation) {
    cfg.truth = detail::parse_gaussian(detail::require_field(j, "truth", ""), "truth.",
                                       cfg.dimension);
    cfg.n_observations = get_field<std::size_t>(j, "n_observations", "");
    if (cfg.n_observations == 0) throw ConfigError("config: 'n_observations' must be >= 1");
    cfg.candidate_pool_size = j.value("candidate_pool_size", std::size_t{20000});
    const auto& cands = detail::require_field(j, "candidates", "");
    std::size_t i = 0;
    for (const auto& cj : cands) {
      std::string path = "candidates[" + std::to_string(i) + "].";
      CandidateConfig cc;
      cc.label = get_field<std::string>(cj, "label", path);
      if (cj.contains("pool_path"))
        cc.pool_path = cj["pool_path"].get<std::string>();
      else
        cc.gaussian = detail::parse_gaussian(cj, path, cfg.dimension);
      cfg.candidates.push_back(std::move(cc));
      ++i;
    }
    if (cfg.candidates.empty()) throw ConfigError("config: 'candidates' must be non-empty");
  } else {
    cfg.realizations_path = get_field<std::string>(j, "realizations", "");
    const auto& ms = detail::require_field(j, "methods", "");
    std::size_t i = 0;
    for (const auto& mj : ms) {
      std::string path = "methods[" + std::to_string(i) + "].";
      MethodConfig mc;
      mc.label = get_field<std::string>(mj, "label", path);
      mc.forecast_dir = get_field<std::string>(mj, "dir", path);
      cfg.methods.push_back(std::move(mc));
      ++i;
    }
    if (cfg.methods.empty()) throw ConfigError("config: 'methods' must be non-empty");
    if (j.contains("alphas")) {
      for (auto it = j["alphas"].begin(); it != j["alphas"].end(); ++it)
        cfg.explicit_alphas[it.key()] = it.value().get<std::vector<double>>();
    }
    if (j.contains("alpha_reference_pool"))
      cfg.alpha_reference_pool = j["alpha_reference_pool"].get<std::string>();
    if (cfg.explicit_alphas.empty() && !cfg.alpha_reference_pool)
      throw ConfigError(
          "config: evaluation mode needs 'alphas' or 'alpha_reference_pool'");
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config: parse error in " + path + ": " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Tables

/// Mean scores over observations: one row per candidate, one column per alpha
/// plus a final column for the companion L2 score. `sems` holds the standard
/// error of each mean across observations.
struct ScoreTable {
  std::string score_name;       // dqs | mcrps | lpms
  std::string functional_name;  // density | cdf | lpm
  int k = 0;                    // lpm order (0 for cdf)
  std::vector<double> alphas;
  std::vector<std::string> row_labels;
  std::vector<std::vector<double>> means;  // [row][col], cols = alphas then L2
  std::vector<std::vector<double>> sems;

  std::string file_stem() const {
    std::string stem = score_name + "_" + functional_name;
    if (functional_name == "lpm" && k != 1) stem += "_k" + std::to_string(k);
    return stem;
  }
};

inline void write_table_csv(const ScoreTable& t, const std::string& path, bool stderr_table) {
  std::ofstream os(path);
  if (!os) throw IngestError("write_table_csv: cannot open " + path);
  os << "candidate";
  for (double a : t.alphas) os << ",alpha=" << format_double(a);
  os << ",l2\n";
  const auto& cells = stderr_table ? t.sems : t.means;
  for (std::size_t r = 0; r < t.row_labels.size(); ++r) {
    os << t.row_labels[r];
    for (double v : cells[r]) os << ',' << format_double(v);
    os << '\n';
  }
}

inline void write_alphas_csv(
    const std::vector<std::tuple<std::string, int, std::vector<double>, std::vector<double>>>&
        rows,
    const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IngestError("write_alphas_csv: cannot open " + path);
  os << "functional,k,level,alpha\n";
  for (const auto& [functional, k, levels, alphas] : rows)
    for (std::size_t i = 0; i < alphas.size(); ++i)
      os << functional << ',' << k << ',' << format_double(levels[i]) << ','
         << format_double(alphas[i]) << '\n';
}

inline void write_contour_csv(const ContourGrid& grid, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IngestError("write_contour_csv: cannot open " + path);
  os << "functional,k,d,nx,ny\n";
  os << grid.functional.name() << ',' << grid.functional.lpm_order << ",2,"
     << grid.axes[0].size() << ',' << grid.axes[1].size() << '\n';
  os << "x,y,psi\n";
  std::size_t idx = 0;
  for (double x : grid.axes[0])
    for (double y : grid.axes[1])
      os << format_double(x) << ',' << format_double(y) << ','
         << format_double(grid.values[idx++]) << '\n';
}

// ---------------------------------------------------------------------------
// Batch engine

namespace detail {

inline void parallel_indices(std::size_t n, unsigned threads,
                             const std::function<void(std::size_t)>& work) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto runner = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      work(i);
    }
  };
  std::vector<std::thread> ts;
  unsigned nt = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  ts.reserve(nt);
  for (unsigned t = 0; t < nt; ++t) ts.emplace_back(runner);
  for (auto& t : ts) t.join();
}

/// Psi over the weight pool for one candidate, with the aggregates every
/// batch score needs: E[Psi^2] and E[1{Psi >= alpha_j}] per alpha.
struct PsiPrecompute {
  std::vector<double> psi;      // per weight draw
  double mean_sq = 0.0;         // E[Psi^2]
  std::vector<double> lam;      // E[1{Psi >= alpha_j}]
};

template <class Eval>
PsiPrecompute precompute_psi(const SamplePool& weight_pool, const std::vector<double>& alphas,
                             unsigned threads, Eval&& eval) {
  const std::size_t m = weight_pool.size();
  PsiPrecompute pre;
  pre.psi.resize(m);
  const std::size_t n_chunks = (m + kExpectationChunk - 1) / kExpectationChunk;
  parallel_indices(n_chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kExpectationChunk;
    const std::size_t hi = std::min(lo + kExpectationChunk, m);
    for (std::size_t i = lo; i < hi; ++i) pre.psi[i] = eval(weight_pool.row(i));
  });
  // Sequential aggregates: bit-identical for any worker count.
  double sum_sq = 0.0;
  std::vector<double> lam_counts(alphas.size(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    sum_sq += pre.psi[i] * pre.psi[i];
    for (std::size_t j = 0; j < alphas.size(); ++j)
      if (pre.psi[i] >= alphas[j]) lam_counts[j] += 1.0;
  }
  pre.mean_sq = sum_sq / static_cast<double>(m);
  pre.lam.resize(alphas.size());
  for (std::size_t j = 0; j < alphas.size(); ++j)
    pre.lam[j] = lam_counts[j] / static_cast<double>(m);
  return pre;
}

inline PsiPrecompute precompute_lpm_psi(const SamplePool& candidate_pool,
                                        const SamplePool& weight_pool, int k,
                                        const std::vector<double>& alphas, unsigned threads) {
  const std::size_t d = weight_pool.dim();
  return precompute_psi(weight_pool, alphas, threads, [&](const double* zp) {
    return lpm_estimate(candidate_pool, Point(zp, zp + d), k);
  });
}

inline PsiPrecompute precompute_density_psi(const GaussianSpec& density,
                                            const SamplePool& weight_pool,
                                            const std::vector<double>& alphas,
                                            unsigned threads) {
  const std::size_t d = weight_pool.dim();
  return precompute_psi(weight_pool, alphas, threads,
                        [&](const double* zp) { return density.pdf(Point(zp, zp + d)); });
}

/// One observation against one precomputed pool-based functional family:
/// the L2 score and the level-set score at each alpha, in a single sweep over
/// the weight pool. `alphas` must be ascending.
inline void score_pool_family(const PsiPrecompute& pre, const SamplePool& weight_pool,
                              const double* y, int k, const std::vector<double>& alphas,
                              double* out /* size alphas.size() + 1, L2 last */) {
  const std::size_t m = weight_pool.size();
  const std::size_t d = weight_pool.dim();
  const std::size_t na = alphas.size();
  double kfact = 1.0;
  for (int p = 2; p <= k; ++p) kfact *= p;

  double t2 = 0.0;                      // sum Psi * theta over dominated draws
  std::vector<double> bucket(na + 1, 0.0);  // sum theta by count of alphas <= Psi
  for (std::size_t i = 0; i < m; ++i) {
    const double* z = weight_pool.row(i);
    double theta = 1.0;
    bool dominated = true;
    for (std::size_t j = 0; j < d; ++j) {
      if (z[j] < y[j]) {
        dominated = false;
        break;
      }
      double t = 1.0;
      double diff = z[j] - y[j];
      for (int p = 0; p < k; ++p) t *= diff;
      if (k >= 2) t /= kfact;
      theta *= t;
    }
    if (!dominated) continue;
    double psi = pre.psi[i];
    t2 += psi * theta;
    std::size_t idx = 0;
    while (idx < na && alphas[idx] <= psi) ++idx;
    bucket[idx] += theta;
  }
  const double dm = static_cast<double>(m);
  // Level score at alpha_j uses the suffix sum of theta over draws with
  // Psi >= alpha_j.
  double suffix = 0.0;
  for (std::size_t j = na; j-- > 0;) {
    suffix += bucket[j + 1];
    out[j] = alphas[j] * pre.lam[j] - suffix / dm;
  }
  out[na] = pre.mean_sq - 2.0 * t2 / dm;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Simulation study

struct SimStudyResult {
  std::vector<ScoreTable> tables;
  // (functional name, k, levels, alphas)
  std::vector<std::tuple<std::string, int, std::vector<double>, std::vector<double>>> alphas;
};

/// Fixed per-block observation count for the deterministic mean reduction.
inline constexpr std::size_t kObservationBlock = 256;

inline SimStudyResult run_simulation_study(const ExperimentConfig& cfg, unsigned threads = 1) {
  if (cfg.mode != ExperimentConfig::Mode::Simulation)
    throw ConfigError("run_simulation_study: config is not in simulation mode");
  const std::size_t d = cfg.dimension;
  const std::size_t n_cand = cfg.candidates.size();

  const bool want_density = cfg.wants_score("dqs") || cfg.wants_functional("density");
  const bool want_cdf = cfg.wants_score("mcrps") || cfg.wants_functional("cdf");
  const bool want_lpm = cfg.wants_score("lpms") || cfg.wants_functional("lpm");

  // Sub-stream seeds: truth obs = 0, weight = 1, candidate i = 2+i,
  // alpha-selection reference pool = 2 + n_candidates.
  const SamplePool observations =
      cfg.truth->sample(cfg.n_observations, derive_stream_seed(cfg.master_seed, 0));
  const WeightMeasure weight(GaussianSpec(cfg.weight.mean, cfg.weight.cov),
                             cfg.weight.pool_size, derive_stream_seed(cfg.master_seed, 1));

  std::vector<Candidate> candidates;
  candidates.reserve(n_cand);
  for (std::size_t i = 0; i < n_cand; ++i) {
    const CandidateConfig& cc = cfg.candidates[i];
    Candidate c;
    c.label = cc.label;
    if (cc.gaussian) {
      c.density = cc.gaussian;
      c.pool = cc.gaussian->sample(cfg.candidate_pool_size,
                                   derive_stream_seed(cfg.master_seed, 2 + i));
    } else {
      c.pool = read_pool_file(*cc.pool_path);
      if (c.pool->dim() != d)
        throw ConfigError("config: candidate pool '" + *cc.pool_path + "' has wrong dimension");
    }
    candidates.push_back(std::move(c));
  }

  // Alpha selection against the truth.
  Candidate truth_ref;
  truth_ref.label = "truth";
  truth_ref.density = cfg.truth;
  if (want_cdf || want_lpm)
    truth_ref.pool = cfg.truth->sample(cfg.candidate_pool_size,
                                       derive_stream_seed(cfg.master_seed, 2 + n_cand));

  SimStudyResult result;
  std::vector<double> alphas_density, alphas_cdf;
  std::map<int, std::vector<double>> alphas_lpm;
  if (want_density) {
    alphas_density =
        alpha_select(FunctionalKind::density(), truth_ref, observations, cfg.alpha_levels);
    result.alphas.emplace_back("density", 0, cfg.alpha_levels, alphas_density);
  }
  if (want_cdf) {
    alphas_cdf = alpha_select(FunctionalKind::cdf(), truth_ref, observations, cfg.alpha_levels);
    result.alphas.emplace_back("cdf", 0, cfg.alpha_levels, alphas_cdf);
  }
  if (want_lpm) {
    for (int k : cfg.lpm_orders) {
      alphas_lpm[k] =
          alpha_select(FunctionalKind::lpm(k), truth_ref, observations, cfg.alpha_levels);
      result.alphas.emplace_back("lpm", k, cfg.alpha_levels, alphas_lpm[k]);
    }
  }

  // Per-candidate precomputation over the weight pool.
  std::vector<detail::PsiPrecompute> pre_density(n_cand), pre_cdf(n_cand);
  std::map<int, std::vector<detail::PsiPrecompute>> pre_lpm;
  for (int k : cfg.lpm_orders) pre_lpm[k].resize(n_cand);
  for (std::size_t i = 0; i < n_cand; ++i) {
    if (want_density)
      pre_density[i] = detail::precompute_density_psi(candidates[i].require_density(),
                                                      weight.pool(), alphas_density, threads);
    if (want_cdf)
      pre_cdf[i] = detail::precompute_lpm_psi(candidates[i].require_pool(), weight.pool(), 0,
                                              alphas_cdf, threads);
    if (want_lpm)
      for (int k : cfg.lpm_orders)
        pre_lpm[k][i] = detail::precompute_lpm_psi(candidates[i].require_pool(), weight.pool(),
                                                   k, alphas_lpm[k], threads);
  }

  // Column layout per family: alphas then L2; one family stack per table.
  struct Family {
    std::string score_name, functional_name;
    int k;
    const std::vector<double>* alphas;
    const std::vector<detail::PsiPrecompute>* pre;
    bool pool_based;
  };
  std::vector<Family> families;
  if (want_density)
    families.push_back({"dqs", "density", 0, &alphas_density, &pre_density, false});
  if (want_cdf) families.push_back({"mcrps", "cdf", 0, &alphas_cdf, &pre_cdf, true});
  if (want_lpm)
    for (int k : cfg.lpm_orders)
      families.push_back({"lpms", "lpm", k, &alphas_lpm[k], &pre_lpm[k], true});

  std::vector<std::size_t> col_count(families.size());
  std::size_t total_cols = 0;
  for (std::size_t f = 0; f < families.size(); ++f) {
    col_count[f] = families[f].alphas->size() + 1;
    total_cols += col_count[f];
  }

  // Per-block accumulation (sum and sum of squares of per-observation
  // scores), merged in block order for determinism.
  const std::size_t n_obs = observations.size();
  const std::size_t n_blocks = (n_obs + kObservationBlock - 1) / kObservationBlock;
  const std::size_t stride = n_cand * total_cols;
  std::vector<std::vector<double>> block_sum(n_blocks), block_sumsq(n_blocks);

  detail::parallel_indices(n_blocks, threads, [&](std::size_t b) {
    const std::size_t lo = b * kObservationBlock;
    const std::size_t hi = std::min(lo + kObservationBlock, n_obs);
    std::vector<double> sum(stride, 0.0), sumsq(stride, 0.0);
    std::vector<double> vals(total_cols);
    for (std::size_t o = lo; o < hi; ++o) {
      const double* y = observations.row(o);
      const Point yp(y, y + d);
      const double h2y = weight.density(yp);
      for (std::size_t ci = 0; ci < n_cand; ++ci) {
        std::size_t col0 = 0;
        for (std::size_t f = 0; f < families.size(); ++f) {
          const Family& fam = families[f];
          const std::vector<double>& alphas = *fam.alphas;
          double* out = vals.data() + col0;
          if (fam.pool_based) {
            detail::score_pool_family((*fam.pre)[ci], weight.pool(), y, fam.k, alphas, out);
          } else {
            const double fy = candidates[ci].require_density().pdf(yp);
            const detail::PsiPrecompute& pre = (*fam.pre)[ci];
            for (std::size_t j = 0; j < alphas.size(); ++j)
              out[j] = alphas[j] * pre.lam[j] - (fy >= alphas[j] ? 1.0 : 0.0) * h2y;
            out[alphas.size()] = pre.mean_sq - 2.0 * fy * h2y;
          }
          col0 += col_count[f];
        }
        double* s = sum.data() + ci * total_cols;
        double* s2 = sumsq.data() + ci * total_cols;
        for (std::size_t cidx = 0; cidx < total_cols; ++cidx) {
          s[cidx] += vals[cidx];
          s2[cidx] += vals[cidx] * vals[cidx];
        }
      }
    }
    block_sum[b] = std::move(sum);
    block_sumsq[b] = std::move(sumsq);
  });

  std::vector<double> sum(stride, 0.0), sumsq(stride, 0.0);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    for (std::size_t i = 0; i < stride; ++i) {
      sum[i] += block_sum[b][i];
      sumsq[i] += block_sumsq[b][i];
    }
  }

  const double dn = static_cast<double>(n_obs);
  std::size_t col0 = 0;
  for (std::size_t f = 0; f < families.size(); ++f) {
    const Family& fam = families[f];
    ScoreTable t;
    t.score_name = fam.score_name;
    t.functional_name = fam.functional_name;
    t.k = fam.k;
    t.alphas = *fam.alphas;
    for (std::size_t ci = 0; ci < n_cand; ++ci) {
      t.row_labels.push_back(candidates[ci].label);
      std::vector<double> means(col_count[f]), sems(col_count[f]);
      for (std::size_t j = 0; j < col_count[f]; ++j) {
        double s = sum[ci * total_cols + col0 + j];
        double s2 = sumsq[ci * total_cols + col0 + j];
        double mean = s / dn;
        means[j] = mean;
        double var = n_obs > 1 ? (s2 - s * s / dn) / (dn - 1.0) : 0.0;
        sems[j] = var > 0.0 ? std::sqrt(var / dn) : 0.0;
      }
      t.means.push_back(std::move(means));
      t.sems.push_back(std::move(sems));
    }
    result.tables.push_back(std::move(t));
    col0 += col_count[f];
  }
  return result;
}

inline std::vector<std::string> write_simstudy_outputs(const SimStudyResult& result,
                                                       const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;
  for (const ScoreTable& t : result.tables) {
    std::string base = out_dir + "/" + t.file_stem();
    write_table_csv(t, base + ".csv", false);
    write_table_csv(t, base + "_stderr.csv", true);
    written.push_back(base + ".csv");
    written.push_back(base + "_stderr.csv");
  }
  write_alphas_csv(result.alphas, out_dir + "/alphas.csv");
  written.push_back(out_dir + "/alphas.csv");
  return written;
}

// ---------------------------------------------------------------------------
// Evaluation of externally supplied forecasts

struct EvaluationResult {
  std::vector<ScoreTable> tables;  // rows = methods, means over periods
  std::vector<std::tuple<std::string, int, std::vector<double>, std::vector<double>>> alphas;
  // Per-period rows for the batch CSV.
  struct Row {
    std::size_t observation_index;
    std::string candidate_label;
    std::string score_name;
    int k;
    double value;
    double std_error;
  };
  std::vector<Row> rows;
};

namespace detail {

inline std::vector<std::string> list_pool_files(const std::string& dir) {
  std::vector<std::string> files;
  if (!std::filesystem::is_directory(dir))
    throw IngestError("evaluation: forecast directory not found: " + dir);
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IngestError("evaluation: no forecast pool files in " + dir);
  return files;
}

/// L2 score and level scores with per-draw Monte-Carlo standard errors, from
/// a precomputed Psi array. Plain per-alpha sweeps; the evaluation workload is
/// dominated by the Psi precomputation anyway.
inline void score_pool_family_with_se(const PsiPrecompute& pre, const SamplePool& weight_pool,
                                      const double* y, int k,
                                      const std::vector<double>& alphas,
                                      std::vector<MeanResult>& out /* alphas then L2 */) {
  const std::size_t m = weight_pool.size();
  const std::size_t d = weight_pool.dim();
  const std::size_t na = alphas.size();
  out.assign(na + 1, MeanResult{});
  std::vector<double> sums(na + 1, 0.0), sumsqs(na + 1, 0.0);
  double kfact = 1.0;
  for (int p = 2; p <= k; ++p) kfact *= p;
  for (std::size_t i = 0; i < m; ++i) {
    const double* z = weight_pool.row(i);
    double theta = 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (z[j] < y[j]) {
        theta = 0.0;
        break;
      }
      double t = 1.0;
      double diff = z[j] - y[j];
      for (int p = 0; p < k; ++p) t *= diff;
      if (k >= 2) t /= kfact;
      theta *= t;
    }
    const double psi = pre.psi[i];
    for (std::size_t j = 0; j < na; ++j) {
      double g = psi >= alphas[j] ? alphas[j] - theta : 0.0;
      sums[j] += g;
      sumsqs[j] += g * g;
    }
    double g = psi * psi - 2.0 * psi * theta;
    sums[na] += g;
    sumsqs[na] += g * g;
  }
  const double dm = static_cast<double>(m);
  for (std::size_t j = 0; j <= na; ++j) {
    out[j].estimate = sums[j] / dm;
    double var = m > 1 ? (sumsqs[j] - sums[j] * sums[j] / dm) / (dm - 1.0) : 0.0;
    out[j].std_error = var > 0.0 ? std::sqrt(var / dm) : 0.0;
  }
}

}  // namespace detail

inline EvaluationResult run_evaluation(const ExperimentConfig& cfg, unsigned threads = 1) {
  if (cfg.mode != ExperimentConfig::Mode::Evaluation)
    throw ConfigError("run_evaluation: config is not in evaluation mode");
  const std::size_t d = cfg.dimension;

  const SamplePool realizations = read_pool_file(cfg.realizations_path);
  if (realizations.dim() != d)
    throw IngestError("evaluation: realizations pool has wrong dimension");
  const std::size_t n_periods = realizations.size();

  std::vector<std::vector<std::string>> method_files;
  for (const MethodConfig& m : cfg.methods) {
    method_files.push_back(detail::list_pool_files(m.forecast_dir));
    if (method_files.back().size() != n_periods)
      throw IngestError("evaluation: method '" + m.label + "' has " +
                        std::to_string(method_files.back().size()) + " forecast pools but " +
                        std::to_string(n_periods) + " realizations");
  }

  const WeightMeasure weight(GaussianSpec(cfg.weight.mean, cfg.weight.cov),
                             cfg.weight.pool_size, derive_stream_seed(cfg.master_seed, 1));

  const bool want_cdf = cfg.wants_score("mcrps") || cfg.wants_functional("cdf");
  const bool want_lpm = cfg.wants_score("lpms") || cfg.wants_functional("lpm");
  if (cfg.wants_score("dqs") || cfg.wants_functional("density"))
    throw CapabilityError(
        "evaluation: density-based scores need an analytic density, which externally "
        "ingested forecast pools do not carry");

  EvaluationResult result;
  std::vector<double> alphas_cdf;
  std::map<int, std::vector<double>> alphas_lpm;
  bool explicit_mode = !cfg.explicit_alphas.empty();
  auto resolve_alphas = [&](const std::string& functional, int k) {
    auto it = cfg.explicit_alphas.find(functional);
    if (it != cfg.explicit_alphas.end()) {
      auto v = it->second;
      std::sort(v.begin(), v.end());
      return v;
    }
    Candidate ref;
    ref.label = "alpha-reference";
    ref.pool = read_pool_file(*cfg.alpha_reference_pool);
    FunctionalKind fk = functional == "cdf" ? FunctionalKind::cdf() : FunctionalKind::lpm(k);
    return alpha_select(fk, ref, realizations, cfg.alpha_levels);
  };
  // With explicit alphas there is no quantile level to report.
  auto levels_for = [&](std::size_t n) {
    return explicit_mode
               ? std::vector<double>(n, std::numeric_limits<double>::quiet_NaN())
               : cfg.alpha_levels;
  };
  if (want_cdf) {
    alphas_cdf = resolve_alphas("cdf", 0);
    result.alphas.emplace_back("cdf", 0, levels_for(alphas_cdf.size()), alphas_cdf);
  }
  if (want_lpm)
    for (int k : cfg.lpm_orders) {
      alphas_lpm[k] = resolve_alphas("lpm", k);
      result.alphas.emplace_back("lpm", k, levels_for(alphas_lpm[k].size()), alphas_lpm[k]);
    }

  struct Family {
    std::string score_name, functional_name;
    int k;
    const std::vector<double>* alphas;
  };
  std::vector<Family> families;
  if (want_cdf) families.push_back({"mcrps", "cdf", 0, &alphas_cdf});
  if (want_lpm)
    for (int k : cfg.lpm_orders) families.push_back({"lpms", "lpm", k, &alphas_lpm[k]});

  const std::size_t n_methods = cfg.methods.size();
  std::vector<std::vector<std::vector<double>>> sums(n_methods), sumsqs(n_methods);
  for (std::size_t mi = 0; mi < n_methods; ++mi)
    for (const Family& fam : families) {
      sums[mi].emplace_back(fam.alphas->size() + 1, 0.0);
      sumsqs[mi].emplace_back(fam.alphas->size() + 1, 0.0);
    }

  std::vector<MeanResult> vals;
  for (std::size_t t = 0; t < n_periods; ++t) {
    const double* y = realizations.row(t);
    for (std::size_t mi = 0; mi < n_methods; ++mi) {
      SamplePool pool = read_pool_file(method_files[mi][t]);
      if (pool.dim() != d)
        throw IngestError("evaluation: forecast pool '" + method_files[mi][t] +
                          "' has wrong dimension");
      for (std::size_t f = 0; f < families.size(); ++f) {
        const Family& fam = families[f];
        detail::PsiPrecompute pre =
            detail::precompute_lpm_psi(pool, weight.pool(), fam.k, {}, threads);
        detail::score_pool_family_with_se(pre, weight.pool(), y, fam.k, *fam.alphas, vals);
        for (std::size_t j = 0; j < vals.size(); ++j) {
          sums[mi][f][j] += vals[j].estimate;
          sumsqs[mi][f][j] += vals[j].estimate * vals[j].estimate;
          EvaluationResult::Row row;
          row.observation_index = t;
          row.candidate_label = cfg.methods[mi].label;
          row.k = fam.k;
          row.value = vals[j].estimate;
          row.std_error = vals[j].std_error;
          row.score_name = j < fam.alphas->size()
                               ? fam.functional_name + "_level:" +
                                     format_double((*fam.alphas)[j])
                               : fam.score_name;
          result.rows.push_back(std::move(row));
        }
      }
    }
  }

  const double dn = static_cast<double>(n_periods);
  for (std::size_t f = 0; f < families.size(); ++f) {
    const Family& fam = families[f];
    ScoreTable table;
    table.score_name = fam.score_name;
    table.functional_name = fam.functional_name;
    table.k = fam.k;
    table.alphas = *fam.alphas;
    for (std::size_t mi = 0; mi < n_methods; ++mi) {
      table.row_labels.push_back(cfg.methods[mi].label);
      std::vector<double> means(fam.alphas->size() + 1), sems(fam.alphas->size() + 1);
      for (std::size_t j = 0; j < means.size(); ++j) {
        double s = sums[mi][f][j], s2 = sumsqs[mi][f][j];
        means[j] = s / dn;
        double var = n_periods > 1 ? (s2 - s * s / dn) / (dn - 1.0) : 0.0;
        sems[j] = var > 0.0 ? std::sqrt(var / dn) : 0.0;
      }
      table.means.push_back(std::move(means));
      table.sems.push_back(std::move(sems));
    }
    result.tables.push_back(std::move(table));
  }
  return result;
}

inline std::vector<std::string> write_evaluation_outputs(const EvaluationResult& result,
                                                         const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;
  for (const ScoreTable& t : result.tables) {
    std::string base = out_dir + "/" + t.file_stem();
    write_table_csv(t, base + ".csv", false);
    write_table_csv(t, base + "_stderr.csv", true);
    written.push_back(base + ".csv");
    written.push_back(base + "_stderr.csv");
  }
  write_alphas_csv(result.alphas, out_dir + "/alphas.csv");
  written.push_back(out_dir + "/alphas.csv");
  std::string batch = out_dir + "/period_scores.csv";
  std::ofstream os(batch);
  if (!os) throw IngestError("write_evaluation_outputs: cannot open " + batch);
  os << "observation_index,candidate_label,score_name,k,value,std_error\n";
  for (const auto& r : result.rows)
    os << r.observation_index << ',' << r.candidate_label << ',' << r.score_name << ','
       << r.k << ',' << format_double(r.value) << ',' << format_double(r.std_error) << '\n';
  written.push_back(batch);
  return written;
}

// ---------------------------------------------------------------------------
// Disintegration checks

struct DisintegrationCheck {
  std::string name;
  double direct = 0.0;
  double disintegrated = 0.0;
  double rel_error = 0.0;
};

namespace detail {

/// Alpha grid for the disintegration quadrature: 400 log-spaced nodes from
/// half the smallest positive Psi value to 1.05 * max, preceded by alpha = 0.
inline std::vector<double> disintegration_alpha_grid(const std::vector<double>& psi) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double v : psi) {
    if (v > 0.0) lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > 0.0)) throw DomainError("disintegration: Psi vanishes on the weight pool");
  lo *= 0.5;
  hi *= 1.05;
  std::vector<double> grid{0.0};
  const int n = 400;
  for (int i = 0; i < n; ++i)
    grid.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
  return grid;
}

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i)
    s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return s;
}

/// S' = 2 * integral of the level-set score over alpha, for a pool-based
/// functional. Suffix sums over draws sorted by Psi give every level score on
/// the alpha grid in O((M + G) log M).
inline DisintegrationCheck check_pool_disintegration(const std::string& name,
                                                     const PsiPrecompute& pre,
                                                     const SamplePool& weight_pool,
                                                     const Point& y, int k) {
  const std::size_t m = weight_pool.size();
  std::vector<double> theta(m);
  for (std::size_t i = 0; i < m; ++i)
    theta[i] = dirac_transform(y, weight_pool.draw(i), k);

  double t2 = 0.0;
  for (std::size_t i = 0; i < m; ++i) t2 += pre.psi[i] * theta[i];
  const double direct = pre.mean_sq - 2.0 * t2 / static_cast<double>(m);

  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pre.psi[a] < pre.psi[b]; });
  std::vector<double> psi_sorted(m), suffix_count(m + 1, 0.0), suffix_theta(m + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) psi_sorted[i] = pre.psi[order[i]];
  for (std::size_t i = m; i-- > 0;) {
    suffix_count[i] = suffix_count[i + 1] + 1.0;
    suffix_theta[i] = suffix_theta[i + 1] + theta[order[i]];
  }

  const std::vector<double> grid = disintegration_alpha_grid(pre.psi);
  std::vector<double> level(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    // First index with Psi >= alpha.
    std::size_t idx =
        std::lower_bound(psi_sorted.begin(), psi_sorted.end(), grid[g]) - psi_sorted.begin();
    level[g] = (grid[g] * suffix_count[idx] - suffix_theta[idx]) / static_cast<double>(m);
  }
  const double disintegrated = 2.0 * trapezoid(grid, level);

  DisintegrationCheck c;
  c.name = name;
  c.direct = direct;
  c.disintegrated = disintegrated;
  c.rel_error = std::abs(disintegrated - direct) / std::max(std::abs(direct), 1e-300);
  return c;
}

/// Same identity for the density score, where the observation side is the
/// atom 1{f(y) >= alpha} h^2(y) rather than an expectation.
inline DisintegrationCheck check_density_disintegration(const std::string& name,
                                                        const GaussianSpec& density,
                                                        const WeightMeasure& weight,
                                                        const Point& y) {
  const SamplePool& wp = weight.pool();
  const std::size_t m = wp.size();
  std::vector<double> psi(m);
  for (std::size_t i = 0; i < m; ++i) psi[i] = density.pdf(wp.draw(i));
  double sum_sq = 0.0;
  for (double v : psi) sum_sq += v * v;
  const double fy = density.pdf(y);
  const double h2y = weight.density(y);
  const double direct = sum_sq / static_cast<double>(m) - 2.0 * fy * h2y;

  std::vector<double> psi_sorted = psi;
  std::sort(psi_sorted.begin(), psi_sorted.end());
  std::vector<double> grid = disintegration_alpha_grid(psi);
  // The atom at f(y) must lie inside the grid for the step to be integrable.
  std::vector<double> level(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::size_t idx =
        std::lower_bound(psi_sorted.begin(), psi_sorted.end(), grid[g]) - psi_sorted.begin();
    double lam = static_cast<double>(m - idx) / static_cast<double>(m);
    level[g] = grid[g] * lam - (fy >= grid[g] ? 1.0 : 0.0) * h2y;
  }
  const double disintegrated = 2.0 * trapezoid(grid, level);

  DisintegrationCheck c;
  c.name = name;
  c.direct = direct;
  c.disintegrated = disintegrated;
  c.rel_error = std::abs(disintegrated - direct) / std::max(std::abs(direct), 1e-300);
  return c;
}

}  // namespace detail

/// H(z) = integral of h^2 up to z, tabulated by cumulative trapezoid on a
/// uniform grid. Quadrature-grade antiderivative of the weight density for
/// the univariate quantile-score identities.
class WeightCdf1D {
 public:
  WeightCdf1D(const GaussianSpec& weight_spec, double lo, double hi, std::size_t nodes)
      : lo_(lo), hi_(hi) {
    if (weight_spec.dim() != 1) throw DimensionError("WeightCdf1D: requires d == 1");
    if (nodes < 2 || !(hi > lo)) throw DomainError("WeightCdf1D: bad grid");
    h_.resize(nodes);
    cum_.resize(nodes);
    step_ = (hi - lo) / static_cast<double>(nodes - 1);
    for (std::size_t i = 0; i < nodes; ++i)
      h_[i] = weight_spec.pdf({lo + step_ * static_cast<double>(i)});
    cum_[0] = 0.0;
    for (std::size_t i = 1; i < nodes; ++i)
      cum_[i] = cum_[i - 1] + 0.5 * (h_[i] + h_[i - 1]) * step_;
  }

  double operator()(double z) const {
    if (z <= lo_) return 0.0;
    if (z >= hi_) return cum_.back();
    double pos = (z - lo_) / step_;
    std::size_t i = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(i);
    // Linear interpolation of the cumulative plus the local trapezoid slice.
    double left = cum_[i];
    double hmid = h_[i] + frac * (h_[i + 1] - h_[i]);
    return left + 0.5 * (h_[i] + hmid) * frac * step_;
  }

  double total() const { return cum_.back(); }

 private:
  double lo_, hi_, step_;
  std::vector<double> h_, cum_;
};

/// Empirical alpha-quantile of a univariate pool: inf{z : F_hat(z) >= alpha},
/// i.e. the ceil(alpha N)-th order statistic.
inline double empirical_quantile(const SamplePool& pool, double alpha) {
  if (pool.dim() != 1) throw DimensionError("empirical_quantile: requires d == 1");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw DomainError("empirical_quantile: alpha must be in (0,1]");
  std::vector<double> v(pool.data());
  std::sort(v.begin(), v.end());
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(alpha * static_cast<double>(v.size()) - 1e-12));
  if (rank == 0) rank = 1;
  return v[rank - 1];
}

struct DisintegrationReport {
  std::vector<DisintegrationCheck> checks;
  // CRPS = 2 * integral of quantile scores (univariate, quadrature route).
  double crps_quadrature = 0.0;
  double crps_from_quantile_scores = 0.0;
  double crps_rel_error = 0.0;
};

/// Verifies S' = 2 * integral over alpha of the level-set score on shared
/// pools, for all three score families, plus the univariate CRPS
/// quantile-score decomposition on a quadrature grid.
inline DisintegrationReport check_disintegration(const ExperimentConfig& cfg,
                                                 unsigned threads = 1) {
  DisintegrationReport report;

  if (cfg.dimension == 2 && cfg.mode == ExperimentConfig::Mode::Simulation) {
    const WeightMeasure weight(GaussianSpec(cfg.weight.mean, cfg.weight.cov),
                               cfg.weight.pool_size, derive_stream_seed(cfg.master_seed, 1));
    const CandidateConfig& cc = cfg.candidates.front();
    SamplePool pool = cc.gaussian
                          ? cc.gaussian->sample(cfg.candidate_pool_size,
                                                derive_stream_seed(cfg.master_seed, 2))
                          : read_pool_file(*cc.pool_path);
    const Point y = cfg.truth->sample(1, derive_stream_seed(cfg.master_seed, 0)).draw(0);

    auto pre0 = detail::precompute_lpm_psi(pool, weight.pool(), 0, {}, threads);
    report.checks.push_back(
        detail::check_pool_disintegration("mcrps/cdf_level", pre0, weight.pool(), y, 0));
    for (int k : cfg.lpm_orders) {
      auto prek = detail::precompute_lpm_psi(pool, weight.pool(), k, {}, threads);
      report.checks.push_back(detail::check_pool_disintegration(
          "lpms_k" + std::to_string(k) + "/lpm_level", prek, weight.pool(), y, k));
    }
  }

  // Density pair, univariate analytic candidate.
  {
    GaussianSpec std_normal({0.0}, {1.0});
    WeightMeasure weight1(std_normal, 20000, derive_stream_seed(cfg.master_seed, 1));
    report.checks.push_back(detail::check_density_disintegration(
        "dqs/density_level", std_normal, weight1, {0.25}));
  }

  // Univariate CRPS quantile-score decomposition, both sides by quadrature.
  {
    GaussianSpec std_normal({0.0}, {1.0});
    SamplePool pool = std_normal.sample(512, derive_stream_seed(cfg.master_seed, 3));
    const double y = 0.3;
    WeightCdf1D H(std_normal, -10.0, 10.0, 1000001);

    // Direct: integral of (F_hat(z) - 1{z >= y})^2 h^2(z) dz over a dense grid.
    const std::size_t nz = 200001;
    std::vector<double> zs(nz), integrand(nz);
    for (std::size_t i = 0; i < nz; ++i) {
      zs[i] = -10.0 + 20.0 * static_cast<double>(i) / static_cast<double>(nz - 1);
      double f = cdf_estimate(pool, {zs[i]});
      double diff = f - (zs[i] >= y ? 1.0 : 0.0);
      integrand[i] = diff * diff * std_normal.pdf({zs[i]});
    }
    report.crps_quadrature = detail::trapezoid(zs, integrand);

    // 2 * integral over alpha of the quantile score, exact in alpha: the
    // empirical quantile is constant on ((i-1)/N, i/N].
    std::vector<double> sorted(pool.data());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    const double hy = H(y);
    double total = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      double a_lo = static_cast<double>(i) / n, a_hi = static_cast<double>(i + 1) / n;
      double q = sorted[i];
      double gap = hy - H(q);
      double ind = y < q ? 1.0 : 0.0;
      // integral of (alpha - ind) over (a_lo, a_hi]
      total += (0.5 * (a_lo + a_hi) - ind) * (a_hi - a_lo) * gap;
    }
    report.crps_from_quantile_scores = 2.0 * total;
    report.crps_rel_error =
        std::abs(report.crps_from_quantile_scores - report.crps_quadrature) /
        std::max(std::abs(report.crps_quadrature), 1e-300);
  }
  return report;
}

inline void write_disintegration_report(const DisintegrationReport& report,
                                        const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IngestError("write_disintegration_report: cannot open " + path);
  os << "disintegration identity checks: S' vs 2 * integral of level-set scores\n";
  os << "(tolerances are the caller's concern; this file reports relative errors)\n\n";
  for (const auto& c : report.checks)
    os << c.name << ": direct=" << format_double(c.direct)
       << " disintegrated=" << format_double(c.disintegrated)
       << " rel_error=" << format_double(c.rel_error) << '\n';
  os << "\nunivariate CRPS quantile-score decomposition (quadrature route):\n";
  os << "crps=" << format_double(report.crps_quadrature)
     << " two_int_quantile_scores=" << format_double(report.crps_from_quantile_scores)
     << " rel_error=" << format_double(report.crps_rel_error) << '\n';
}

}  // namespace levelscore
