// Command-line front end: synthetic data generation, base-model fitting,
// calibrator training, evaluation, and the full experiment pipeline.
//
// Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include "gpcal/data.hpp"
#include "gpcal/experiment.hpp"
#include "gpcal/regressors.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using namespace gpcal;

void write_csv_double(std::ostream& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, res.ptr - buf);
}

struct TrainFlags {
  int inducing = 32;
  int batch = 128;
  int mc = 64;
  double lr = 1e-3;
  int steps = 5000;
  std::uint64_t seed = 0;
  bool freeze_inducing = false;
  std::string preset;

  TrainConfig resolve() const {
    TrainConfig t;
    if (!preset.empty()) t = preset_train_config(preset);
    t.n_inducing = inducing;
    t.batch_size = batch;
    t.mc_samples = mc;
    if (preset.empty()) t.learning_rate = lr;
    t.steps = steps;
    t.seed = seed;
    t.optimize_inducing = !freeze_inducing;
    return t;
  }
};

void add_train_flags(CLI::App* cmd, TrainFlags& tf) {
  cmd->add_option("--inducing", tf.inducing, "Number of inducing points");
  cmd->add_option("--batch", tf.batch, "Minibatch size");
  cmd->add_option("--mc", tf.mc, "Monte-Carlo samples per batch");
  cmd->add_option("--lr", tf.lr, "Adam learning rate");
  cmd->add_option("--steps", tf.steps, "Training steps");
  cmd->add_option("--train-seed", tf.seed, "Training RNG seed");
  cmd->add_flag("--freeze-inducing", tf.freeze_inducing,
                "Keep inducing-point locations fixed");
  cmd->add_option("--preset", tf.preset,
                  "Training preset: synthetic (lr 0.01) or uci (lr 0.001)");
}

int cmd_synth(int n, std::uint64_t seed, const std::string& out) {
  RngStream rng(seed);
  const Dataset ds = gen_synthetic(n, rng);
  write_dataset_csv(ds, out);
  std::cout << "wrote " << ds.size() << " rows to " << out << '\n';
  return 0;
}

int cmd_fit_base(const std::string& data, const std::string& model, double split,
                 std::uint64_t seed, const std::string& out_dir) {
  const Dataset ds = load_csv(data);
  RngStream rng(seed);
  auto [train, test] = train_test_split(ds, split, rng);
  std::vector<GaussianPrediction> train_preds, test_preds;
  if (model == "ols") {
    const OlsModel m = ols_fit(train);
    train_preds = ols_predict_all(m, train.features);
    test_preds = ols_predict_all(m, test.features);
  } else if (model == "bayes-ridge") {
    const BayesRidgeModel m = bayes_ridge_fit(train);
    train_preds = bayes_ridge_predict_all(m, train.features);
    test_preds = bayes_ridge_predict_all(m, test.features);
  } else {
    throw std::invalid_argument("fit-base: unknown model '" + model + "'");
  }
  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);
  write_predictions_csv(train_preds, train.targets, (dir / "pred_train.csv").string());
  write_predictions_csv(test_preds, test.targets, (dir / "pred_test.csv").string());
  std::cout << "wrote pred_train.csv (" << train_preds.size() << ") and pred_test.csv ("
            << test_preds.size() << ") to " << out_dir << '\n';
  return 0;
}

int cmd_calibrate(const std::string& train_preds_path, const std::string& method,
                  const TrainFlags& tf, const std::string& out) {
  auto [preds, ys] = load_predictions_csv(train_preds_path);
  if (method == "iso") {
    const IsotonicMap m = fit_quantile_recalibrator(preds, ys);
    save_isotonic_file(m, out);
  } else if (method == "gp-beta") {
    const FitResult fr = fit(preds, ys, tf.resolve());
    save_state_file(fr.state, out);
  } else {
    throw std::invalid_argument("calibrate: unknown method '" + method + "'");
  }
  std::cout << "wrote " << method << " model to " << out << '\n';
  return 0;
}

int cmd_evaluate(const std::string& preds_path, const std::string& method,
                 const std::string& model_path, const std::string& grid_preds_path,
                 int grid_size, double pad, int mc, std::uint64_t seed,
                 const std::string& out) {
  auto [preds, ys] = load_predictions_csv(preds_path);
  std::vector<GaussianPrediction> grid_preds = preds;
  if (!grid_preds_path.empty()) {
    grid_preds = load_predictions_csv(grid_preds_path).first;
  }
  const Eigen::VectorXd grid = make_grid(grid_preds, grid_size, pad);

  EvalReport report;
  if (method == "base" || method == "none") {
    report = evaluate(
        preds.size(),
        [&](std::size_t i) { return grid_distribution_from_gaussian(preds[i], grid); },
        ys);
  } else if (method == "iso") {
    const IsotonicMap m = load_isotonic_file(model_path);
    report = evaluate(
        preds.size(),
        [&](std::size_t i) { return calibrate_distribution_iso(m, preds[i], grid); },
        ys);
  } else if (method == "gp-beta") {
    const SvgpState state = load_state_file(model_path);
    RngStream rng(seed);
    report = evaluate(
        preds.size(),
        [&](std::size_t i) { return predict_density(state, preds[i], grid, mc, rng); },
        ys);
  } else {
    throw std::invalid_argument("evaluate: unknown method '" + method + "'");
  }
  if (out.empty()) {
    std::cout << "nll " << report.nll << "\nmse " << report.mse << "\npbl "
              << report.pbl << '\n';
  } else {
    write_report_json(report, out);
    std::cout << "wrote report to " << out << '\n';
  }
  return 0;
}

int cmd_export_maps(const std::string& model_path, const std::vector<double>& mus,
                    double var, int mc, std::uint64_t seed, const std::string& out) {
  const SvgpState state = load_state_file(model_path);
  double v = var;
  if (!(v > 0.0)) {
    // Default to the median inducing variance.
    std::vector<double> vars;
    for (const auto& z : state.inducing) vars.push_back(z.var);
    std::sort(vars.begin(), vars.end());
    v = vars[vars.size() / 2];
  }
  const Eigen::VectorXd q_grid = Eigen::VectorXd::LinSpaced(99, 0.01, 0.99);
  RngStream rng(seed);
  std::vector<Eigen::VectorXd> maps;
  for (double mu : mus) {
    maps.push_back(
        predict_calibration_map(state, GaussianPrediction(mu, v), q_grid, mc, rng));
  }
  std::ofstream os(out);
  if (!os) throw std::invalid_argument("cannot write " + out);
  os << 'q';
  for (double mu : mus) os << ",gpbeta_at_" << mu;
  os << '\n';
  for (Eigen::Index g = 0; g < q_grid.size(); ++g) {
    write_csv_double(os, q_grid[g]);
    for (const auto& m : maps) {
      os << ',';
      write_csv_double(os, m[g]);
    }
    os << '\n';
  }
  std::cout << "wrote " << maps.size() << " calibration maps to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distribution calibration for probabilistic regressors"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate the synthetic benchmark CSV");
  int synth_n = kSyntheticDefaultSize;
  std::uint64_t synth_seed = 0;
  std::string synth_out = "synthetic.csv";
  synth->add_option("--n", synth_n, "Number of instances");
  synth->add_option("--seed", synth_seed, "RNG seed")->required();
  synth->add_option("--out", synth_out, "Output CSV path");

  // fit-base
  auto* fitb = app.add_subcommand("fit-base", "Fit a base regressor, emit predictions");
  std::string fitb_data, fitb_model = "ols", fitb_out = ".";
  double fitb_split = 0.75;
  std::uint64_t fitb_seed = 0;
  fitb->add_option("--data", fitb_data, "Dataset CSV")->required();
  fitb->add_option("--model", fitb_model, "ols or bayes-ridge");
  fitb->add_option("--split", fitb_split, "Train fraction");
  fitb->add_option("--seed", fitb_seed, "Split RNG seed")->required();
  fitb->add_option("--out-dir", fitb_out, "Directory for pred_{train,test}.csv");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Fit a calibrator on train predictions");
  std::string cal_preds, cal_method = "gp-beta", cal_out = "model.json";
  TrainFlags cal_tf;
  cal->add_option("--train-preds", cal_preds, "Training predictions CSV")->required();
  cal->add_option("--method", cal_method, "gp-beta or iso");
  cal->add_option("--out", cal_out, "Model output path");
  add_train_flags(cal, cal_tf);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a method on predictions");
  std::string ev_preds, ev_method = "base", ev_model, ev_grid_preds, ev_out;
  int ev_grid_size = 4096, ev_mc = 128;
  double ev_pad = 8.0;
  std::uint64_t ev_seed = 0;
  ev->add_option("--preds", ev_preds, "Predictions CSV to evaluate on")->required();
  ev->add_option("--method", ev_method, "base, iso, or gp-beta");
  ev->add_option("--model", ev_model, "Calibrator model file (iso / gp-beta)");
  ev->add_option("--grid-preds", ev_grid_preds,
                 "Predictions CSV defining the grid (default: --preds)");
  ev->add_option("--grid-size", ev_grid_size, "Grid resolution");
  ev->add_option("--pad", ev_pad, "Grid padding in max-std units");
  ev->add_option("--mc", ev_mc, "MC samples per prediction (gp-beta)");
  ev->add_option("--seed", ev_seed, "Prediction RNG seed");
  ev->add_option("--out", ev_out, "Report JSON path (stdout summary if unset)");

  // run
  auto* run = app.add_subcommand("run", "Full pipeline from a config");
  std::string run_config, run_out_dir, run_source, run_base, run_data;
  std::vector<std::string> run_cals;
  std::uint64_t run_seed = 0;
  int run_synth_n = -1, run_grid = -1;
  TrainFlags run_tf;
  bool run_tf_given = false;
  run->add_option("--config", run_config, "Experiment config JSON");
  run->add_option("--seed", run_seed, "Master seed")->required();
  run->add_option("--out-dir", run_out_dir, "Output directory");
  run->add_option("--source", run_source, "synthetic, csv, or predictions");
  run->add_option("--data", run_data, "Dataset / predictions CSV path");
  run->add_option("--base", run_base, "ols, bayes-ridge, or external");
  run->add_option("--calibrators", run_cals, "Subset of none, iso, gp-beta");
  run->add_option("--n", run_synth_n, "Synthetic dataset size");
  run->add_option("--grid-size", run_grid, "Grid resolution");
  auto* tf_group = run->add_option_group("training");
  add_train_flags(tf_group, run_tf);
  tf_group->callback([&run_tf_given] { run_tf_given = true; });

  // export-maps
  auto* em = app.add_subcommand("export-maps", "Calibration maps at chosen outputs");
  std::string em_model, em_out = "maps.csv";
  std::vector<double> em_points;
  double em_var = -1.0;
  int em_mc = 128;
  std::uint64_t em_seed = 0;
  em->add_option("--model", em_model, "gp-beta state file")->required();
  em->add_option("--points", em_points, "Base-model mean outputs")->required();
  em->add_option("--var", em_var, "Base-model variance (default: median inducing)");
  em->add_option("--mc", em_mc, "MC samples");
  em->add_option("--seed", em_seed, "RNG seed");
  em->add_option("--out", em_out, "Output CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(synth_n, synth_seed, synth_out);
    if (*fitb) return cmd_fit_base(fitb_data, fitb_model, fitb_split, fitb_seed, fitb_out);
    if (*cal) return cmd_calibrate(cal_preds, cal_method, cal_tf, cal_out);
    if (*ev) {
      return cmd_evaluate(ev_preds, ev_method, ev_model, ev_grid_preds, ev_grid_size,
                          ev_pad, ev_mc, ev_seed, ev_out);
    }
    if (*em) return cmd_export_maps(em_model, em_points, em_var, em_mc, em_seed, em_out);
    if (*run) {
      ExperimentConfig cfg;
      if (!run_config.empty()) cfg = config_from_json_file(run_config);
      cfg.seed = run_seed;
      if (!run_out_dir.empty()) cfg.output_dir = run_out_dir;
      if (!run_source.empty()) cfg.source = [&] {
        if (run_source == "synthetic") return DataSource::kSynthetic;
        if (run_source == "csv") return DataSource::kCsv;
        if (run_source == "predictions") return DataSource::kPredictionsCsv;
        throw std::invalid_argument("run: unknown source '" + run_source + "'");
      }();
      if (!run_data.empty()) cfg.data_path = run_data;
      if (!run_base.empty()) {
        if (run_base == "ols") cfg.base_model = BaseModelKind::kOls;
        else if (run_base == "bayes-ridge") cfg.base_model = BaseModelKind::kBayesRidge;
        else if (run_base == "external") cfg.base_model = BaseModelKind::kExternal;
        else throw std::invalid_argument("run: unknown base '" + run_base + "'");
      }
      if (!run_cals.empty()) {
        cfg.calibrators = std::set<std::string>(run_cals.begin(), run_cals.end());
      }
      if (run_synth_n > 0) cfg.synthetic_n = run_synth_n;
      if (run_grid > 0) cfg.grid_size = run_grid;
      if (run_tf_given || run_config.empty()) {
        const std::uint64_t train_seed_default = cfg.train.seed;
        cfg.train = run_tf.resolve();
        if (run_tf.seed == 0) cfg.train.seed = train_seed_default ? train_seed_default
                                                                  : run_seed;
      }
      const auto reports = run_experiment(cfg);
      for (const auto& [name, rep] : reports) {
        std::cout << name << ": nll " << rep.nll << ", mse " << rep.mse << ", pbl "
                  << rep.pbl << '\n';
      }
      return 0;
    }
  } catch (const gpcal::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
