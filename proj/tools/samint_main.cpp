// samint command-line pipeline: fit / predict / report.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <samint/samint.hpp>

#include <array>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
  // ingest
  std::string data;
  std::string response;
  std::vector<std::string> exclude;
  std::vector<double> split_fractions{0.6, 0.2, 0.2};
  long seed = 1;
  // splines
  int degree = 3;
  int knots_main = 10;
  int knots_interaction = 5;
  std::string placement = "quantile";
  // grid
  int grid_l1 = 20;
  int grid_l2 = 0;  // 0 = derive from the node budget
  double lambda1_min = 1e-4;
  double lambda1_max = 10.0;
  int node_budget = 1000;
  double alpha = 1.0;
  // solver
  double tol = 1e-5;
  int max_cycles = 100;
  int threads = 1;
  int cache_mb = 512;
  // selection
  std::string criterion = "rmse";
  int max_support = -1;
  // hierarchy
  bool hierarchy = false;
  std::vector<double> tau_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  // io
  std::string out;
  std::string model_path;
  int pd_grid = 50;
};

std::string default_out_dir() {
  const char* env = std::getenv("SAMINT_OUT");
  return env ? std::string(env) : std::string("samint_out");
}

void validate_fit_config(const RunConfig& cfg) {
  if (cfg.split_fractions.size() != 3)
    throw samint::UsageError("--split needs exactly three fractions (train,val,test)");
  for (double f : cfg.split_fractions)
    if (!(f > 0.0) || !(f < 1.0))
      throw samint::UsageError("split fractions must lie in (0, 1)");
  if (cfg.degree < 1) throw samint::UsageError("--degree must be >= 1");
  if (cfg.knots_main < 1 || cfg.knots_interaction < 1)
    throw samint::UsageError("knot counts must be >= 1");
  if (cfg.grid_l1 < 1) throw samint::UsageError("--grid-l1 must be >= 1");
  if (cfg.grid_l2 < 0) throw samint::UsageError("--grid-l2 must be >= 0");
  if (!(cfg.lambda1_min > 0.0) || cfg.lambda1_max < cfg.lambda1_min)
    throw samint::UsageError("lambda1 range must satisfy 0 < min <= max");
  if (cfg.alpha < 1.0) throw samint::UsageError("--alpha must be >= 1");
  if (!(cfg.tol > 0.0)) throw samint::UsageError("--tol must be positive");
  if (cfg.max_cycles < 1) throw samint::UsageError("--max-cycles must be >= 1");
  if (cfg.threads < 1) throw samint::UsageError("--threads must be >= 1");
  if (cfg.cache_mb < 1) throw samint::UsageError("--cache-mb must be >= 1");
  if (cfg.hierarchy) {
    if (cfg.tau_grid.empty()) throw samint::UsageError("--tau-grid must be nonempty");
    for (double t : cfg.tau_grid)
      if (!(t > 0.0) || !(t < 1.0))
        throw samint::UsageError("tau values must lie in (0, 1)");
  }
  if (cfg.criterion != "rmse" && cfg.criterion != "mae")
    throw samint::UsageError("--criterion must be rmse or mae");
  samint::knot_placement_from_string(cfg.placement);  // throws on bad value
}

json config_json(const RunConfig& cfg) {
  json j;
  j["data"] = cfg.data;
  j["response"] = cfg.response;
  j["exclude"] = cfg.exclude;
  j["split"] = cfg.split_fractions;
  j["seed"] = cfg.seed;
  j["degree"] = cfg.degree;
  j["knots_main"] = cfg.knots_main;
  j["knots_interaction"] = cfg.knots_interaction;
  j["placement"] = cfg.placement;
  j["grid_l1"] = cfg.grid_l1;
  j["grid_l2"] = cfg.grid_l2;
  j["lambda1_min"] = cfg.lambda1_min;
  j["lambda1_max"] = cfg.lambda1_max;
  j["node_budget"] = cfg.node_budget;
  j["alpha"] = cfg.alpha;
  j["tol"] = cfg.tol;
  j["max_cycles"] = cfg.max_cycles;
  j["threads"] = cfg.threads;
  j["cache_mb"] = cfg.cache_mb;
  j["criterion"] = cfg.criterion;
  j["max_support"] = cfg.max_support;
  j["hierarchy"] = cfg.hierarchy;
  j["tau_grid"] = cfg.tau_grid;
  return j;
}

samint::SplineConfig spline_config(const RunConfig& cfg) {
  samint::SplineConfig sc;
  sc.degree = cfg.degree;
  sc.n_knots_main = cfg.knots_main;
  sc.n_knots_interaction_per_axis = cfg.knots_interaction;
  sc.knot_placement = samint::knot_placement_from_string(cfg.placement);
  return sc;
}

samint::FitOptions fit_options(const RunConfig& cfg) {
  samint::FitOptions opt;
  opt.tol = cfg.tol;
  opt.max_cycles = cfg.max_cycles;
  opt.threads = cfg.threads;
  opt.cache_bytes = static_cast<std::size_t>(cfg.cache_mb) << 20;
  return opt;
}

std::shared_ptr<const samint::ModelContext> make_context(
    const samint::BlockSet& blocks, const samint::Standardizer& standardizer,
    const std::vector<std::string>& feature_names, double y_mean,
    const samint::AdditiveModel& model) {
  auto core = std::make_shared<samint::ModelContextCore>();
  core->config = blocks.config();
  core->standardizer = standardizer;
  core->feature_names = feature_names;
  core->y_mean = y_mean;
  core->main_knots.reserve(static_cast<std::size_t>(blocks.p()));
  core->interaction_knots.reserve(static_cast<std::size_t>(blocks.p()));
  for (int j = 0; j < blocks.p(); ++j) {
    core->main_knots.push_back(blocks.main_knots(j));
    core->interaction_knots.push_back(blocks.interaction_knots(j));
  }
  auto context = std::make_shared<samint::ModelContext>();
  context->core = std::move(core);
  for (const auto& [idx, coef] : model.coefficients)
    context->block_col_means[idx] = blocks.block(idx).col_means();
  return context;
}

std::string selection_csv(const std::vector<std::pair<std::string, std::string>>& rows) {
  std::string out = "field,value\n";
  for (const auto& [k, v] : rows) out += k + "," + v + "\n";
  return out;
}

int cmd_fit(RunConfig& cfg) {
  validate_fit_config(cfg);
  fs::create_directories(cfg.out);
  auto artifact = [&](const std::string& name) {
    return (fs::path(cfg.out) / name).string();
  };
  samint::write_text_file(artifact("config.json"), config_json(cfg).dump(2) + "\n");

  const std::string raw = samint::read_text_file(cfg.data);
  const std::string data_hash = samint::to_hex(samint::fnv1a64(raw));

  samint::LoadReport report;
  samint::Dataset data = samint::load_csv(cfg.data, cfg.response, cfg.exclude, &report);
  samint::write_text_file(artifact("load_report.txt"), report.to_text());

  std::array<double, 3> fractions{cfg.split_fractions[0], cfg.split_fractions[1],
                                  cfg.split_fractions[2]};
  auto parts = samint::split(data, fractions, static_cast<std::uint64_t>(cfg.seed));
  auto [standardizer, train_std] = samint::standardize(parts[0]);

  const double y_mean = parts[0].y.mean();
  Eigen::VectorXd y_train = parts[0].y.array() - y_mean;
  Eigen::VectorXd y_val = parts[1].y.array() - y_mean;
  Eigen::VectorXd y_test = parts[2].y.array() - y_mean;

  samint::BlockSet blocks(train_std.X, spline_config(cfg), nullptr,
                          std::size_t{1} << 30, &data.feature_names);
  samint::FitOptions options = fit_options(cfg);
  samint::FactorizationCache cache(options.cache_bytes);

  std::cout << "fit: n=" << data.n() << " p=" << data.p() << " train=" << parts[0].n()
            << " val=" << parts[1].n() << " test=" << parts[2].n() << "\n";

  samint::PathGrid grid = samint::build_grid(
      blocks, y_train, cfg.grid_l1, cfg.grid_l2, {cfg.lambda1_min, cfg.lambda1_max},
      cfg.alpha, options, &cache, cfg.node_budget);
  std::cout << "grid: " << grid.n_lambda1() << " x " << grid.n_lambda2()
            << " (lambda2_max=" << samint::format_double(grid.lambda2_values[0])
            << ")\n";
  samint::fit_path(grid, blocks, y_train, options, &cache);

  long failed = 0;
  for (const auto& err : grid.node_errors)
    if (!err.empty()) ++failed;
  if (failed > 0) {
    std::cerr << "warning: " << failed << " grid node(s) failed; first error: ";
    for (const auto& err : grid.node_errors)
      if (!err.empty()) {
        std::cerr << err << "\n";
        break;
      }
  }

  samint::BasisEvaluator eval_val(blocks, standardizer.apply(parts[1].X));
  std::optional<int> max_support;
  if (cfg.max_support >= 0) max_support = cfg.max_support;
  samint::Selection sel = samint::select_model(
      grid, eval_val, y_val,
      cfg.criterion == "mae" ? samint::SelectionCriterion::ValMae
                             : samint::SelectionCriterion::ValRmse,
      max_support);
  samint::save_grid_summary(grid, artifact("path_summary.csv"));

  samint::AdditiveModel model = *grid.models[grid.node(sel.l, sel.m)];
  model.context = make_context(blocks, standardizer, data.feature_names, y_mean, model);
  model.intercept = y_mean;

  samint::BasisEvaluator eval_test(blocks, standardizer.apply(parts[2].X));
  Eigen::VectorXd pred_test = eval_test.accumulate(model.coefficients);
  const double test_rmse = samint::rmse(y_test, pred_test);
  const double test_mae = samint::mae(y_test, pred_test);

  samint::Provenance prov;
  prov.seed = cfg.seed;
  prov.data_hash = data_hash;
  prov.timestamp = samint::archive_timestamp();
  prov.response_column = cfg.response;
  prov.command = "fit";
  prov.support_order = samint::support_ordering(grid, sel.l);
  samint::save_model(model, artifact("model.samint"), prov);

  const samint::NodeMetrics& nm = grid.metrics[grid.node(sel.l, sel.m)];
  samint::write_text_file(
      artifact("selection.csv"),
      selection_csv({{"lambda1", samint::format_double(sel.lambda1)},
                     {"lambda2", samint::format_double(sel.lambda2)},
                     {"alpha", samint::format_double(cfg.alpha)},
                     {"n_main", std::to_string(nm.n_main)},
                     {"n_interaction", std::to_string(nm.n_interaction)},
                     {"n_effective_covariates",
                      std::to_string(samint::effective_covariates(model))},
                     {"train_rmse", samint::format_double(nm.train_rmse)},
                     {"val_rmse", samint::format_double(sel.val_rmse)},
                     {"val_mae", samint::format_double(sel.val_mae)},
                     {"test_rmse", samint::format_double(test_rmse)},
                     {"test_mae", samint::format_double(test_mae)},
                     {"converged", model.converged ? "true" : "false"}}));
  std::cout << "selected: lambda1=" << samint::format_double(sel.lambda1)
            << " lambda2=" << samint::format_double(sel.lambda2)
            << " support=" << nm.n_main << "+" << nm.n_interaction
            << " val_rmse=" << samint::format_double(sel.val_rmse) << "\n";

  if (cfg.hierarchy) {
    samint::PenaltyParams hparams{sel.lambda1, sel.lambda2, cfg.alpha};
    samint::HierarchyResult hier = samint::fit_hierarchy_path(
        grid, hparams, blocks, y_train, eval_val, y_val, cfg.tau_grid, options,
        &cache);
    if (!samint::check_strong_hierarchy(hier.model))
      throw samint::SolverError("hierarchy model failed the hierarchy check");
    hier.model.context =
        make_context(blocks, standardizer, data.feature_names, y_mean, hier.model);
    hier.model.intercept = y_mean;

    Eigen::VectorXd hier_test = eval_test.accumulate(hier.model.coefficients);
    samint::Provenance hprov = prov;
    hprov.command = "fit --hierarchy";
    samint::save_model(hier.model, artifact("model_hierarchy.samint"), hprov);
    samint::write_text_file(artifact("hierarchy_report.csv"),
                            samint::hierarchy_report_csv(hier.rows));
    samint::write_text_file(
        artifact("hierarchy_selection.csv"),
        selection_csv(
            {{"tau", samint::format_double(hier.best_tau)},
             {"big_m", samint::format_double(hier.big_m)},
             {"lambda1", samint::format_double(hparams.lambda1)},
             {"lambda2", samint::format_double(hparams.lambda2)},
             {"n_main", std::to_string(hier.model.n_main())},
             {"n_interaction", std::to_string(hier.model.n_interaction())},
             {"n_effective_covariates",
              std::to_string(samint::effective_covariates(hier.model))},
             {"test_rmse", samint::format_double(samint::rmse(y_test, hier_test))},
             {"test_mae", samint::format_double(samint::mae(y_test, hier_test))},
             {"relaxation_converged", hier.relaxation.converged ? "true" : "false"}}));
    std::cout << "hierarchy: tau=" << samint::format_double(hier.best_tau)
              << " support=" << hier.model.n_main() << "+"
              << hier.model.n_interaction() << "\n";
  }
  std::cout << "artifacts written to " << cfg.out << "\n";
  return 0;
}

int cmd_predict(RunConfig& cfg) {
  samint::ModelArchive archive = samint::load_model(cfg.model_path);
  const samint::ModelContextCore& core = *archive.model.context->core;
  samint::PredictionFrame frame = samint::load_prediction_frame(
      cfg.data, core.feature_names, core.standardizer.means);
  Eigen::VectorXd pred = samint::predict(archive.model, frame.X);
  std::string csv = "row_id,prediction\n";
  for (Eigen::Index i = 0; i < pred.size(); ++i)
    csv += frame.row_ids[static_cast<std::size_t>(i)] + "," +
           samint::format_double(pred[i]) + "\n";
  fs::path out_path(cfg.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  samint::write_text_file(cfg.out, csv);
  std::cout << "wrote " << pred.size() << " predictions to " << cfg.out << "\n";
  return 0;
}

int cmd_report(RunConfig& cfg) {
  samint::ModelArchive archive = samint::load_model(cfg.model_path);
  const samint::AdditiveModel& model = archive.model;
  const samint::ModelContextCore& core = *model.context->core;
  if (archive.provenance.response_column.empty())
    throw samint::UsageError("model archive lacks a response column name");
  fs::create_directories(cfg.out);
  auto artifact = [&](const std::string& name) {
    return (fs::path(cfg.out) / name).string();
  };

  samint::PredictionFrame frame =
      samint::load_prediction_frame(cfg.data, core.feature_names,
                                    core.standardizer.means,
                                    archive.provenance.response_column);
  Eigen::VectorXd pred = samint::predict(model, frame.X);

  samint::write_text_file(artifact("metrics.csv"),
                          samint::metrics_csv(samint::rmse(frame.y, pred),
                                              samint::mae(frame.y, pred)));
  samint::QuintileMatrix qm = samint::quintile_confusion(frame.y, pred);
  samint::write_text_file(artifact("quintiles_counts.csv"),
                          samint::quintile_counts_csv(qm));
  samint::write_text_file(artifact("quintiles_fractions.csv"),
                          samint::quintile_fractions_csv(qm));
  Eigen::MatrixXi sparsity = samint::sparsity_pattern(model);
  samint::write_text_file(artifact("sparsity_dense.csv"),
                          samint::sparsity_dense_csv(sparsity));
  samint::write_text_file(artifact("sparsity_coords.csv"),
                          samint::sparsity_coords_csv(sparsity));
  samint::write_text_file(
      artifact("support_ordering.csv"),
      samint::support_ordering_csv(archive.provenance.support_order,
                                   core.feature_names));
  for (const auto& [idx, coef] : model.coefficients) {
    samint::PartialDependence pd = samint::partial_dependence(model, idx, cfg.pd_grid);
    std::string name = idx.is_interaction()
                           ? "pd_int_" + std::to_string(idx.j) + "_" +
                                 std::to_string(idx.k) + ".csv"
                           : "pd_main_" + std::to_string(idx.j) + ".csv";
    samint::write_text_file(artifact(name), samint::partial_dependence_csv(pd));
  }
  std::cout << "report written to " << cfg.out << " (" << model.coefficients.size()
            << " partial-dependence tables)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  cfg.out = default_out_dir();

  CLI::App app{"samint: sparse additive models with pairwise interactions"};
  app.require_subcommand(1);

  CLI::App* fit = app.add_subcommand("fit", "fit a regularization path and select a model");
  fit->set_config("--config", "", "read options from a config file");
  fit->add_option("--data", cfg.data, "training CSV with a header row")->required();
  fit->add_option("--response", cfg.response, "response column name")->required();
  fit->add_option("--exclude", cfg.exclude, "columns to drop")->delimiter(',');
  fit->add_option("--split", cfg.split_fractions,
                  "train,val,test fractions (must sum to 1)")
      ->delimiter(',')
      ->expected(3);
  fit->add_option("--seed", cfg.seed, "random seed for the split");
  fit->add_option("--degree", cfg.degree, "spline degree");
  fit->add_option("--knots-main", cfg.knots_main, "interior knots per main effect");
  fit->add_option("--knots-interaction", cfg.knots_interaction,
                  "interior knots per interaction axis");
  fit->add_option("--placement", cfg.placement, "knot placement: quantile|uniform");
  fit->add_option("--grid-l1", cfg.grid_l1, "number of lambda1 values");
  fit->add_option("--grid-l2", cfg.grid_l2,
                  "number of lambda2 values (0 = derive from budget)");
  fit->add_option("--lambda1-min", cfg.lambda1_min, "smallest lambda1");
  fit->add_option("--lambda1-max", cfg.lambda1_max, "largest lambda1");
  fit->add_option("--alpha", cfg.alpha, "interaction selection premium (>= 1)");
  fit->add_option("--tol", cfg.tol, "relative objective tolerance");
  fit->add_option("--max-cycles", cfg.max_cycles, "max descent cycles per node");
  fit->add_option("--threads", cfg.threads, "worker threads");
  fit->add_option("--cache-mb", cfg.cache_mb, "factorization cache budget (MiB)");
  fit->add_option("--criterion", cfg.criterion, "selection criterion: rmse|mae");
  fit->add_option("--max-support", cfg.max_support,
                  "cap on selected blocks (-1 = none)");
  fit->add_flag("--hierarchy", cfg.hierarchy, "also fit the strong-hierarchy variant");
  fit->add_option("--tau-grid", cfg.tau_grid, "rounding thresholds")->delimiter(',');
  fit->add_option("--out", cfg.out, "output directory (default $SAMINT_OUT)");

  CLI::App* predict = app.add_subcommand("predict", "predict with a saved model");
  predict->add_option("--model", cfg.model_path, "model archive")->required();
  predict->add_option("--data", cfg.data, "CSV with the model's covariate columns")
      ->required();
  predict->add_option("--out", cfg.out, "output CSV path");

  CLI::App* report = app.add_subcommand("report", "evaluation reports for a saved model");
  report->add_option("--model", cfg.model_path, "model archive")->required();
  report->add_option("--data", cfg.data, "labeled CSV (must contain the response)")
      ->required();
  report->add_option("--pd-grid", cfg.pd_grid, "partial-dependence grid size");
  report->add_option("--out", cfg.out, "output directory (default $SAMINT_OUT)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (fit->parsed()) return cmd_fit(cfg);
    if (predict->parsed()) {
      if (cfg.out == default_out_dir())
        cfg.out = (fs::path(cfg.out) / "predictions.csv").string();
      return cmd_predict(cfg);
    }
    if (report->parsed()) return cmd_report(cfg);
    throw samint::UsageError("no command given");
  } catch (const samint::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const samint::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const samint::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
