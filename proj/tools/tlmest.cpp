#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "tlmest/io.hpp"

// Command-line front end: generate / fit / transfer / select / experiment /
// report. Configs are JSON with unknown keys rejected; every run writes a
// manifest with the effective config, seed and version. Exit codes: 0 ok,
// 1 validation or I/O error, 2 solver non-convergence under --strict.

namespace {

using nlohmann::json;
using namespace tlmest;

namespace fs = std::filesystem;

struct StrictViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check_keys(const json& obj, const std::vector<std::string>& allowed,
                const std::string& where) {
  if (!obj.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
}

std::uint64_t effective_seed(std::uint64_t seed) {
  if (const char* env = std::getenv("TLMEST_SEED")) return std::stoull(env);
  return seed;
}

LossFamily parse_family(const std::string& s) {
  if (s == "linear") return LossFamily{LossKind::SquaredIdentity};
  if (s == "logit") return LossFamily{LossKind::LogisticLogit};
  throw std::invalid_argument("family must be 'linear' or 'logit', got '" + s + "'");
}

Regularizer parse_reg(const std::string& s) {
  if (s == "l1") return Regularizer{RegKind::L1};
  if (s == "nuclear") return Regularizer{RegKind::Nuclear};
  throw std::invalid_argument("regularizer must be 'l1' or 'nuclear', got '" + s + "'");
}

Dataset load_dataset(const std::string& path, LossFamily fam, double weight) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".bin")
    return read_dataset_bin(path, fam, weight);
  return read_dataset_csv(path, fam, weight);
}

json load_config(const std::string& path) { return read_json(path); }

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    std::uint64_t seed) {
  write_json((dir / "manifest.json").string(), manifest_json(command, config, seed));
}

fs::path ensure_outdir(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

json parameter_json(const Parameter& theta) {
  json j;
  j["rows"] = theta.rows();
  j["cols"] = theta.cols();
  std::vector<double> vals(theta.vec().data(), theta.vec().data() + theta.size());
  j["values"] = vals;  // column-major
  return j;
}

// ---- generate -----------------------------------------------------------

ScenarioConfig scenario_from_json(const json& cfg) {
  check_keys(cfg,
             {"design", "coeff_family", "p", "d1", "d2", "r", "s", "sample_sizes",
              "informative_count", "contrast_level", "goe_c", "family", "seed"},
             "generate config");
  ScenarioConfig sc;
  std::string design = cfg.value("design", "homo");
  if (design == "homo") sc.design = Design::HomoIdentity;
  else if (design == "hetero") sc.design = Design::HeteroWishart;
  else if (design == "goe") sc.design = Design::GoePerturbed;
  else throw std::invalid_argument("generate config: unknown design '" + design + "'");
  std::string fam = cfg.value("coeff_family", "l0");
  if (fam == "l0") sc.coeff_family = CoeffFamily::L0Sparse;
  else if (fam == "l1") sc.coeff_family = CoeffFamily::L1Laplace;
  else if (fam == "h_sweep") sc.coeff_family = CoeffFamily::HSweepLaplace;
  else if (fam == "low_rank") sc.coeff_family = CoeffFamily::LowRankHaar;
  else throw std::invalid_argument("generate config: unknown coeff_family '" + fam + "'");
  sc.p = cfg.value("p", 100);
  sc.d1 = cfg.value("d1", 0);
  sc.d2 = cfg.value("d2", 0);
  sc.r = cfg.value("r", 1);
  sc.s = cfg.value("s", 4);
  if (!cfg.contains("sample_sizes"))
    throw std::invalid_argument("generate config: missing 'sample_sizes'");
  for (const auto& n : cfg.at("sample_sizes"))
    sc.sample_sizes.push_back(n.get<Eigen::Index>());
  sc.informative_count = cfg.value("informative_count", 0);
  sc.contrast_level = cfg.value("contrast_level", 0.0);
  sc.goe_c = cfg.value("goe_c", 0.2);
  sc.family = parse_family(cfg.value("family", "linear")).kind;
  sc.seed = cfg.value("seed", std::uint64_t{1});
  return sc;
}

int cmd_generate(const std::string& config_path, const std::string& out) {
  json cfg = load_config(config_path);
  ScenarioConfig sc = scenario_from_json(cfg);
  sc.seed = effective_seed(sc.seed);
  sc.validate();
  GeneratedStudy study = sc.coeff_family == CoeffFamily::LowRankHaar
                             ? gen_trace_scenario(sc)
                             : gen_linear_scenario(sc);
  fs::path dir = ensure_outdir(out);
  for (std::size_t k = 0; k < study.datasets.size(); ++k) {
    std::string stem = "dataset_" + std::to_string(k);
    if (study.datasets[k].vector_shape())
      write_dataset_csv((dir / (stem + ".csv")).string(), study.datasets[k]);
    else
      write_dataset_bin((dir / (stem + ".bin")).string(), study.datasets[k]);
  }
  json truth;
  truth["true_informative"] = study.true_informative;
  json coeffs = json::array();
  for (const Parameter& t : study.true_coeffs) coeffs.push_back(parameter_json(t));
  truth["true_coeffs"] = coeffs;
  write_json((dir / "truth.json").string(), truth);
  cfg["seed"] = sc.seed;
  write_manifest(dir, "generate", cfg, sc.seed);
  return 0;
}

// ---- fit ----------------------------------------------------------------

int cmd_fit(const std::string& data, const std::string& family, const std::string& reg_name,
            double lambda, bool use_cv, std::uint64_t seed, const std::string& out,
            bool strict) {
  Regularizer reg = parse_reg(reg_name);
  Dataset d = load_dataset(data, parse_family(family), 1.0);
  seed = effective_seed(seed);
  if (use_cv) {
    TuningGrid grid;
    grid.values = default_lambda_grid(lambda_max(d, reg));
    lambda = cv_select(d, single_fitter_factory(reg), grid, seed).best_lambda;
  } else if (lambda < 0) {
    throw std::invalid_argument("fit: provide --lambda >= 0 or --cv");
  }
  SingleFitResult res = fit_single_result(d, reg, lambda);
  if (!res.converged && strict) throw StrictViolation("fit: solver did not converge");
  if (!res.converged) std::cerr << "warning: fit did not converge\n";
  fs::path dir = ensure_outdir(out);
  json est = parameter_json(res.estimate);
  est["lambda"] = lambda;
  est["converged"] = res.converged;
  write_json((dir / "estimate.json").string(), est);
  json cfg = {{"data", data},       {"family", family}, {"regularizer", reg_name},
              {"lambda", lambda},   {"cv", use_cv},     {"seed", seed}};
  write_manifest(dir, "fit", cfg, seed);
  return 0;
}

// ---- transfer -----------------------------------------------------------

int cmd_transfer(const std::string& config_path, const std::string& out, bool strict) {
  json cfg = load_config(config_path);
  check_keys(cfg,
             {"datasets", "weights", "target_index", "family", "regularizer", "lambda_pool",
              "finetune", "finetune_level", "seed"},
             "transfer config");
  if (!cfg.contains("datasets")) throw std::invalid_argument("transfer config: missing 'datasets'");
  LossFamily fam = parse_family(cfg.value("family", "linear"));
  std::vector<Dataset> datasets;
  std::vector<double> weights = cfg.value("weights", std::vector<double>{});
  std::size_t idx = 0;
  for (const auto& path : cfg.at("datasets")) {
    double w = idx < weights.size() ? weights[idx] : 1.0;
    datasets.push_back(load_dataset(path.get<std::string>(), fam, w));
    ++idx;
  }
  TransferConfig tc;
  tc.regularizer = parse_reg(cfg.value("regularizer", "l1"));
  tc.lambda_pool = cfg.value("lambda_pool", 0.0);
  std::string ft = cfg.value("finetune", "none");
  if (ft == "none") tc.finetune = FinetuneKind::None;
  else if (ft == "lagrangian") tc.finetune = FinetuneKind::Lagrangian;
  else if (ft == "constrained") tc.finetune = FinetuneKind::Constrained;
  else throw std::invalid_argument("transfer config: unknown finetune '" + ft + "'");
  tc.finetune_level = cfg.value("finetune_level", 0.0);
  std::size_t target = cfg.value("target_index", std::size_t{0});

  TransferFit fit = oracle_transfer(datasets, target, tc);
  if (strict && (!fit.pool_converged || !fit.finetune_converged))
    throw StrictViolation("transfer: solver did not converge");
  if (!fit.pool_converged || !fit.finetune_converged)
    std::cerr << "warning: transfer did not fully converge\n";
  fs::path dir = ensure_outdir(out);
  json result;
  result["primal"] = parameter_json(fit.primal);
  result["finetuned"] = parameter_json(fit.finetuned);
  result["delta"] = parameter_json(fit.delta);
  result["pool_converged"] = fit.pool_converged;
  result["finetune_converged"] = fit.finetune_converged;
  result["bracket_ok"] = fit.bracket_ok;
  write_json((dir / "result.json").string(), result);
  std::uint64_t seed = effective_seed(cfg.value("seed", std::uint64_t{0}));
  write_manifest(dir, "transfer", cfg, seed);
  return 0;
}

// ---- select -------------------------------------------------------------

int cmd_select(const std::string& config_path, const std::string& out, bool strict) {
  json cfg = load_config(config_path);
  check_keys(cfg,
             {"datasets", "weights", "family", "regularizer", "lambda_pool", "lambda_q", "tau",
              "seed"},
             "select config");
  if (!cfg.contains("datasets")) throw std::invalid_argument("select config: missing 'datasets'");
  LossFamily fam = parse_family(cfg.value("family", "linear"));
  std::vector<Dataset> datasets;
  std::vector<double> weights = cfg.value("weights", std::vector<double>{});
  std::size_t idx = 0;
  for (const auto& path : cfg.at("datasets")) {
    double w = idx < weights.size() ? weights[idx] : 1.0;
    datasets.push_back(load_dataset(path.get<std::string>(), fam, w));
    ++idx;
  }
  if (datasets.size() < 2)
    throw std::invalid_argument("select config: need a target and at least one source");
  SelectionConfig sc;
  sc.regularizer = parse_reg(cfg.value("regularizer", "l1"));
  sc.lambda_pool = cfg.value("lambda_pool", 0.0);
  sc.tau = cfg.value("tau", 1.0);
  if (cfg.contains("lambda_q") && cfg.at("lambda_q").is_array())
    sc.lambda_q = cfg.at("lambda_q").get<std::vector<double>>();
  else
    sc.lambda_q.assign(datasets.size() - 1, cfg.value("lambda_q", 0.0));

  SelectionFit fit = sc.regularizer.kind == RegKind::L1 ? dc_truncated_sparse(datasets, sc)
                                                        : dc_truncated_trace(datasets, sc);
  if (strict && !fit.converged) throw StrictViolation("select: DC loop did not converge");
  if (!fit.converged) std::cerr << "warning: select did not converge\n";
  fs::path dir = ensure_outdir(out);
  json result;
  json ests = json::array();
  for (const Parameter& t : fit.estimates) ests.push_back(parameter_json(t));
  result["estimates"] = ests;
  result["informative_flags"] = fit.informative_flags;
  result["truncation_indicators"] = fit.truncation_indicators;
  result["objective_trace"] = fit.objective_trace;
  result["dc_iterations"] = fit.dc_iterations;
  result["converged"] = fit.converged;
  write_json((dir / "result.json").string(), result);
  std::uint64_t seed = effective_seed(cfg.value("seed", std::uint64_t{0}));
  write_manifest(dir, "select", cfg, seed);
  return 0;
}

// ---- experiment ---------------------------------------------------------

int cmd_experiment(const std::string& preset, std::uint64_t seed, int jobs,
                   const std::string& out, bool timings, bool strict) {
  seed = effective_seed(seed);
  PresetOutput res = run_preset(preset, seed, jobs);
  if (strict) {
    for (const ReplicationRecord& r : res.result.records)
      if (!r.failed && !r.converged)
        throw StrictViolation("experiment: replication did not converge (estimator " +
                              r.estimator + ")");
  }
  fs::path dir = ensure_outdir(out);
  write_results_csv((dir / "results.csv").string(), res.result.records, timings);
  write_json((dir / "summary.json").string(), summary_json(res.result));
  if (!res.sweep.empty()) write_json((dir / "sweep.json").string(), sweep_json(res.sweep));
  json cfg = {{"preset", preset}, {"seed", seed}, {"jobs", jobs}, {"timings", timings}};
  write_manifest(dir, "experiment", cfg, seed);
  return 0;
}

// ---- report -------------------------------------------------------------

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  ExperimentResult merged;
  for (const std::string& path : inputs) {
    std::vector<ReplicationRecord> records = read_results_csv(path);
    for (ReplicationRecord& r : records) {
      if (merged.scenario.empty()) merged.scenario = r.scenario;
      merged.records.push_back(std::move(r));
    }
  }
  fs::path dir = ensure_outdir(out);
  write_json((dir / "summary.json").string(), summary_json(merged));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transfer-learning M-estimation toolkit"};
  app.require_subcommand(1);
  bool strict = false;
  app.add_flag("--strict", strict, "exit 2 when any solver fails to converge");

  std::string config_path, data_path, out_dir = ".", family = "linear", reg_name = "l1";
  std::string preset;
  std::vector<std::string> report_inputs;
  double lambda = -1.0;
  bool use_cv = false, timings = false;
  std::uint64_t seed = 1;
  int jobs = 1;

  CLI::App* generate = app.add_subcommand("generate", "write a simulated study to disk");
  generate->add_option("--config", config_path, "scenario config JSON")->required();
  generate->add_option("--out", out_dir, "output directory");

  CLI::App* fit = app.add_subcommand("fit", "penalized fit on a single dataset");
  fit->add_option("--data", data_path, "dataset path (.csv or .bin)")->required();
  fit->add_option("--family", family, "linear or logit");
  fit->add_option("--reg", reg_name, "l1 or nuclear");
  fit->add_option("--lambda", lambda, "penalty level");
  fit->add_flag("--cv", use_cv, "choose lambda by cross validation");
  fit->add_option("--seed", seed, "cv seed");
  fit->add_option("--out", out_dir, "output directory");

  CLI::App* transfer = app.add_subcommand("transfer", "pooled fit plus fine-tuning");
  transfer->add_option("--config", config_path, "transfer config JSON")->required();
  transfer->add_option("--out", out_dir, "output directory");

  CLI::App* select = app.add_subcommand("select", "joint fit with source selection");
  select->add_option("--config", config_path, "selection config JSON")->required();
  select->add_option("--out", out_dir, "output directory");

  CLI::App* experiment = app.add_subcommand("experiment", "run a named preset");
  experiment->add_option("--preset", preset, "table1..table4, fig3, each with -desk variant")
      ->required();
  experiment->add_option("--seed", seed, "master seed");
  experiment->add_option("--jobs", jobs, "worker threads");
  experiment->add_flag("--timings", timings, "include wall-clock seconds in the CSV");
  experiment->add_option("--out", out_dir, "output directory");

  CLI::App* report = app.add_subcommand("report", "aggregate results CSVs");
  report->add_option("--input", report_inputs, "results.csv paths")->required();
  report->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(config_path, out_dir);
    if (fit->parsed())
      return cmd_fit(data_path, family, reg_name, lambda, use_cv, seed, out_dir, strict);
    if (transfer->parsed()) return cmd_transfer(config_path, out_dir, strict);
    if (select->parsed()) return cmd_select(config_path, out_dir, strict);
    if (experiment->parsed())
      return cmd_experiment(preset, seed, jobs, out_dir, timings, strict);
    if (report->parsed()) return cmd_report(report_inputs, out_dir);
  } catch (const StrictViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
