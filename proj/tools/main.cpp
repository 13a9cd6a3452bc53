#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mscatter/crossval.hpp"
#include "mscatter/data.hpp"
#include "mscatter/errors.hpp"
#include "mscatter/estimators.hpp"
#include "mscatter/io.hpp"
#include "mscatter/loss.hpp"
#include "mscatter/rda.hpp"
#include "mscatter/simlab.hpp"

namespace {

using namespace mscatter;

struct LossChoice {
  LossKind kind = LossKind::Gaussian;
  double nu = 3.0;
  double quantile = 0.9;
};

LossChoice parse_loss_flag(const std::string& text) {
  LossChoice choice;
  if (text == "gaussian") {
    choice.kind = LossKind::Gaussian;
    return choice;
  }
  if (text == "tyler") {
    choice.kind = LossKind::Tyler;
    return choice;
  }
  if (text == "huber" || text.rfind("huber:", 0) == 0) {
    choice.kind = LossKind::Huber;
    if (text.size() > 6) {
      choice.quantile = std::stod(text.substr(6));
      if (!(choice.quantile > 0.0 && choice.quantile < 1.0))
        throw std::invalid_argument("--loss: huber quantile must lie in (0, 1)");
    }
    return choice;
  }
  if (text.rfind("t:", 0) == 0) {
    choice.kind = LossKind::TDist;
    choice.nu = std::stod(text.substr(2));
    if (!(choice.nu > 0.0)) throw std::invalid_argument("--loss: t degrees of freedom must be positive");
    return choice;
  }
  throw std::invalid_argument("--loss: expected gaussian, t:<nu>, huber[:<quantile>] or tyler, got '" +
                              text + "'");
}

LossSpec materialize_loss(const LossChoice& choice, int p) {
  switch (choice.kind) {
    case LossKind::Gaussian: return LossSpec::gaussian(p);
    case LossKind::Huber: return LossSpec::huber(p, choice.quantile);
    case LossKind::TDist: return LossSpec::tdist(p, choice.nu);
    case LossKind::Tyler: return LossSpec::tyler(p);
  }
  throw std::invalid_argument("--loss: unknown loss");
}

DistanceKind parse_penalty_flag(const std::string& text, const LossSpec& loss) {
  // the scale-free loss pins no scale, so it pairs with the scale-invariant
  // penalty unless the caller overrides
  if (text == "auto") return loss.scale_free() ? DistanceKind::Ellipticity : DistanceKind::KL;
  if (text == "kl") return DistanceKind::KL;
  if (text == "ellipticity") return DistanceKind::Ellipticity;
  throw std::invalid_argument("--penalty: expected auto, kl or ellipticity, got '" + text + "'");
}

Proposal parse_proposal_flag(const std::string& text) {
  if (text == "pooled") return Proposal::PooledOnly;
  if (text == "prop1") return Proposal::Prop1;
  if (text == "prop2") return Proposal::Prop2;
  throw std::invalid_argument("--proposal: expected pooled, prop1 or prop2, got '" + text + "'");
}

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty() || dir == ".") return name;
  return dir.back() == '/' ? dir + name : dir + "/" + name;
}

void ensure_out_dir(const std::string& dir) {
  if (!dir.empty() && dir != ".") std::filesystem::create_directories(dir);
}

nlohmann::json loss_provenance(const LossSpec& loss, const LossChoice& choice) {
  nlohmann::json j;
  j["name"] = loss.name();
  j["dim"] = loss.dim();
  j["scale_factor"] = loss.scale_factor();
  if (loss.kind() == LossKind::Huber) {
    j["quantile"] = choice.quantile;
    j["threshold"] = loss.threshold();
  }
  if (loss.kind() == LossKind::TDist) j["nu"] = loss.nu();
  return j;
}

struct SolverOpts {
  std::string input;
  std::string out_dir = ".";
  std::string loss = "gaussian";
  std::string penalty = "auto";
  std::string proposal = "prop2";
  double tol = 1e-9;
  int max_iter = 2000;
};

void add_solver_flags(CLI::App* cmd, SolverOpts* opts) {
  cmd->add_option("--input", opts->input, "CSV with feature columns and a 'group' column")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--loss", opts->loss, "gaussian | t:<nu> | huber[:<quantile>] | tyler")
      ->capture_default_str();
  cmd->add_option("--penalty", opts->penalty, "auto | kl | ellipticity (auto: ellipticity for tyler, else kl)")->capture_default_str();
  cmd->add_option("--proposal", opts->proposal, "pooled | prop1 | prop2")->capture_default_str();
  cmd->add_option("--tol", opts->tol, "relative change stopping tolerance")->capture_default_str();
  cmd->add_option("--max-iter", opts->max_iter, "iteration cap")->capture_default_str();
  cmd->add_option("--out-dir", opts->out_dir, "output directory")->capture_default_str();
}

EstimatorConfig make_config(const SolverOpts& opts, const LossSpec& loss) {
  EstimatorConfig cfg;
  cfg.proposal = parse_proposal_flag(opts.proposal);
  cfg.losses = {loss};
  cfg.penalty = parse_penalty_flag(opts.penalty, loss);
  cfg.tol = opts.tol;
  cfg.max_iter = opts.max_iter;
  return cfg;
}

int run_estimate(const SolverOpts& opts, double beta) {
  const GroupedCsv grouped = parse_grouped(read_csv(opts.input));
  const GroupedSample data(grouped.groups);
  const LossChoice choice = parse_loss_flag(opts.loss);
  const LossSpec loss = materialize_loss(choice, data.dim());
  EstimatorConfig cfg = make_config(opts, loss);
  cfg.beta = beta;

  const FitResult fit = solve(data, cfg);

  ensure_out_dir(opts.out_dir);
  nlohmann::json j;
  j["format"] = "mscatter-estimate";
  j["version"] = 1;
  j["input"] = opts.input;
  j["class_labels"] = grouped.class_labels;
  j["feature_names"] = grouped.feature_names;
  j["proposal"] = proposal_name(cfg.proposal);
  j["penalty"] = distance_name(cfg.penalty);
  j["beta"] = cfg.beta;
  j["tol"] = cfg.tol;
  j["max_iter"] = cfg.max_iter;
  j["loss"] = loss_provenance(loss, choice);
  j["iterations"] = fit.iterations;
  j["final_residual"] = fit.final_residual;
  j["objective_trace"] = fit.objective_trace;
  std::vector<std::string> sigma_files;
  for (int k = 0; k < data.group_count(); ++k) {
    const std::string name = "sigma_" + std::to_string(k + 1) + ".csv";
    write_matrix_csv(join_path(opts.out_dir, name), fit.sigma[static_cast<size_t>(k)].matrix());
    sigma_files.push_back(name);
  }
  write_matrix_csv(join_path(opts.out_dir, "center.csv"), fit.center.matrix());
  j["sigma_files"] = sigma_files;
  j["center_file"] = "center.csv";
  atomic_write_text(join_path(opts.out_dir, "summary.json"), j.dump(2) + "\n");

  std::cout << "fitted " << data.group_count() << " groups in " << fit.iterations
            << " cycles (residual " << fit.final_residual << "); wrote "
            << join_path(opts.out_dir, "summary.json") << "\n";
  return 0;
}

int run_cv(const SolverOpts& opts, std::vector<double> betas, int folds, std::uint64_t seed) {
  const GroupedCsv grouped = parse_grouped(read_csv(opts.input));
  const GroupedSample data(grouped.groups);
  const LossChoice choice = parse_loss_flag(opts.loss);
  const LossSpec loss = materialize_loss(choice, data.dim());
  const EstimatorConfig cfg = make_config(opts, loss);

  CVGrid grid;
  grid.betas = betas.empty() ? default_beta_grid() : std::move(betas);
  grid.folds = folds;
  grid.seed = seed;
  const CVReport report = cross_validate(data, cfg, grid);

  ensure_out_dir(opts.out_dir);
  nlohmann::json j;
  j["format"] = "mscatter-cv";
  j["version"] = 1;
  j["input"] = opts.input;
  j["proposal"] = proposal_name(cfg.proposal);
  j["penalty"] = distance_name(cfg.penalty);
  j["loss"] = loss_provenance(loss, choice);
  j["tol"] = cfg.tol;
  j["max_iter"] = cfg.max_iter;
  j["folds"] = grid.folds;
  j["seed"] = grid.seed;
  j["betas"] = report.betas;
  j["cv_curve"] = report.cv_curve;
  j["per_fold"] = report.per_fold;
  j["chosen_beta"] = report.chosen_beta;
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : report.failures)
    failures.push_back({{"beta", f.beta}, {"fold", f.fold}, {"message", f.message}});
  j["failures"] = std::move(failures);
  atomic_write_text(join_path(opts.out_dir, "cv.json"), j.dump(2) + "\n");

  std::cout << "chosen beta " << report.chosen_beta << " over " << report.betas.size()
            << " grid points; wrote " << join_path(opts.out_dir, "cv.json") << "\n";
  return 0;
}

int run_rda_train(const SolverOpts& opts, bool have_beta, double beta, std::vector<double> betas,
                  int folds, std::uint64_t seed) {
  const GroupedCsv grouped = parse_grouped(read_csv(opts.input));
  const GroupedSample data(grouped.groups);
  const LossChoice choice = parse_loss_flag(opts.loss);
  const LossSpec loss = materialize_loss(choice, data.dim());
  EstimatorConfig cfg = make_config(opts, loss);

  RDAModel model;
  if (have_beta) {
    cfg.beta = beta;
    model = fit_rda(data, cfg, grouped.class_labels);
  } else {
    CVGrid grid;
    grid.betas = betas.empty() ? default_beta_grid() : std::move(betas);
    grid.folds = folds;
    grid.seed = seed;
    model = fit_rda_cv(data, cfg, grid, grouped.class_labels);
  }

  ensure_out_dir(opts.out_dir);
  const std::string path = join_path(opts.out_dir, "model.json");
  save_rda(model, path);
  std::cout << "trained on " << data.total_size() << " rows, " << model.class_count()
            << " classes, beta " << model.beta << "; wrote " << path << "\n";
  return 0;
}

int run_rda_predict(const std::string& model_path, const std::string& input,
                    const std::string& out_dir) {
  const RDAModel model = load_rda(model_path);
  const Csv csv = read_csv(input);
  std::vector<std::string> feature_names;
  const std::vector<Vector> points = parse_features(csv, &feature_names);
  if (!points.empty() && points.front().size() != model.dim())
    throw std::invalid_argument("--input: feature dimension " +
                                std::to_string(points.front().size()) +
                                " does not match the model dimension " +
                                std::to_string(model.dim()));

  Csv out;
  out.header.push_back("label");
  for (const auto& label : model.labels) out.header.push_back("score_" + label);
  for (const Vector& x : points) {
    std::vector<std::string> row;
    row.push_back(model.labels[static_cast<size_t>(classify(model, x))]);
    for (int k = 0; k < model.class_count(); ++k)
      row.push_back(format_double(
          qda_score(x, model.mu[static_cast<size_t>(k)], model.sigma[static_cast<size_t>(k)])));
    out.rows.push_back(std::move(row));
  }
  ensure_out_dir(out_dir);
  const std::string path = join_path(out_dir, "predictions.csv");
  write_csv(path, out);
  std::cout << "classified " << points.size() << " rows into " << model.class_count()
            << " classes; wrote " << path << "\n";
  return 0;
}

int run_reproduce(const std::string& table, int trials, std::uint64_t seed, int folds, double tol,
                  int max_iter, const std::string& out_dir) {
  ensure_out_dir(out_dir);
  if (table == "table3") {
    IrisSpec spec;
    spec.repetitions = trials;
    spec.folds = folds;
    spec.seed = seed;
    spec.methods = default_iris_methods();
    spec.beta_grid = default_beta_grid();
    spec.tol = tol;
    spec.max_iter = max_iter;
    const IrisResult result = run_iris(spec);
    atomic_write_text(join_path(out_dir, "table3.csv"), iris_csv(result));
    atomic_write_text(join_path(out_dir, "table3.txt"), iris_text(result));
    atomic_write_text(join_path(out_dir, "table3_provenance.json"),
                      iris_provenance_json(result));
    std::cout << iris_text(result) << "\nwrote " << join_path(out_dir, "table3.csv") << "\n";
    return 0;
  }

  SyntheticTableSpec spec;
  spec.scenario = table == "table1" ? Scenario::UnequalSpherical : Scenario::EqualSpherical;
  spec.trials = trials;
  spec.seed = seed;
  spec.methods = default_simulation_methods();
  spec.beta_grid = default_beta_grid();
  spec.tol = tol;
  spec.max_iter = max_iter;
  const SyntheticTable result = run_synthetic_table(spec);
  atomic_write_text(join_path(out_dir, table + ".csv"), synthetic_csv(result));
  atomic_write_text(join_path(out_dir, table + ".txt"), synthetic_text(result));
  atomic_write_text(join_path(out_dir, table + "_provenance.json"),
                    synthetic_provenance_json(result));
  std::cout << synthetic_text(result) << "\nwrote " << join_path(out_dir, table + ".csv") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"penalized scatter estimation and regularized discriminant analysis"};
  app.require_subcommand(1);

  SolverOpts est_opts;
  double est_beta = 0.5;
  CLI::App* cmd_est = app.add_subcommand("estimate", "fit group scatter matrices and a center");
  add_solver_flags(cmd_est, &est_opts);
  cmd_est->add_option("--beta", est_beta, "shrinkage weight in (0, 1]")->capture_default_str();

  SolverOpts cv_opts;
  std::vector<double> cv_betas;
  int cv_folds = 5;
  std::uint64_t cv_seed = 1;
  CLI::App* cmd_cv = app.add_subcommand("cv", "cross-validate the shrinkage weight");
  add_solver_flags(cmd_cv, &cv_opts);
  cmd_cv->add_option("--beta-grid", cv_betas, "comma-separated grid (default: built-in grid)")
      ->delimiter(',');
  cmd_cv->add_option("--folds", cv_folds, "fold count")->capture_default_str();
  cmd_cv->add_option("--seed", cv_seed, "fold assignment seed")->capture_default_str();

  SolverOpts train_opts;
  double train_beta = 0.5;
  std::vector<double> train_betas;
  int train_folds = 5;
  std::uint64_t train_seed = 1;
  CLI::App* cmd_train = app.add_subcommand("rda-train", "fit a discriminant model");
  add_solver_flags(cmd_train, &train_opts);
  CLI::Option* train_beta_opt =
      cmd_train->add_option("--beta", train_beta, "fixed shrinkage weight (skips selection)");
  CLI::Option* train_grid_opt =
      cmd_train->add_option("--beta-grid", train_betas, "comma-separated selection grid")
          ->delimiter(',');
  train_beta_opt->excludes(train_grid_opt);
  cmd_train->add_option("--folds", train_folds, "fold count")->capture_default_str();
  cmd_train->add_option("--seed", train_seed, "fold assignment seed")->capture_default_str();

  std::string predict_model, predict_input, predict_out = ".";
  CLI::App* cmd_predict = app.add_subcommand("rda-predict", "classify rows with a saved model");
  cmd_predict->add_option("--model", predict_model, "model file from rda-train")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_predict->add_option("--input", predict_input, "CSV of feature rows")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_predict->add_option("--out-dir", predict_out, "output directory")->capture_default_str();

  std::string rep_table, rep_out = ".";
  int rep_trials = 100, rep_folds = 5, rep_max_iter = 4000;
  std::uint64_t rep_seed = 1;
  double rep_tol = 1e-7;
  CLI::App* cmd_rep = app.add_subcommand("reproduce", "rerun the synthetic and iris studies");
  cmd_rep->add_option("table", rep_table, "table1 | table2 | table3")
      ->required()
      ->check(CLI::IsMember({"table1", "table2", "table3"}));
  cmd_rep->add_option("--trials", rep_trials, "trials per cell (repetitions for table3)")
      ->capture_default_str();
  cmd_rep->add_option("--seed", rep_seed, "master seed")->capture_default_str();
  cmd_rep->add_option("--folds", rep_folds, "fold count for table3 selection")
      ->capture_default_str();
  cmd_rep->add_option("--tol", rep_tol, "solver stopping tolerance")->capture_default_str();
  cmd_rep->add_option("--max-iter", rep_max_iter, "solver iteration cap")->capture_default_str();
  cmd_rep->add_option("--out-dir", rep_out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_est->parsed()) return run_estimate(est_opts, est_beta);
    if (cmd_cv->parsed()) return run_cv(cv_opts, cv_betas, cv_folds, cv_seed);
    if (cmd_train->parsed())
      return run_rda_train(train_opts, train_beta_opt->count() > 0, train_beta, train_betas,
                           train_folds, train_seed);
    if (cmd_predict->parsed()) return run_rda_predict(predict_model, predict_input, predict_out);
    if (cmd_rep->parsed())
      return run_reproduce(rep_table, rep_trials, rep_seed, rep_folds, rep_tol, rep_max_iter,
                           rep_out);
  } catch (const precondition_error& e) {
    std::cerr << "solver precondition failed: " << e.what() << "\n";
    return 3;
  } catch (const numerical_error& e) {
    std::cerr << "solver failed: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
