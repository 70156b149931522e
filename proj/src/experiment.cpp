#include "gpcal/experiment.hpp"

#include "gpcal/data.hpp"
#include "gpcal/regressors.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace gpcal {

namespace {

std::string coverage_key(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "coverage_%.2f", tau);
  return buf;
}

void write_double_text(std::ostream& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, res.ptr - buf);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  train.validate();
  if (grid_size < 16) throw std::invalid_argument("config: grid_size < 16");
  if (!(pad > 0.0)) throw std::invalid_argument("config: pad must be positive");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw std::invalid_argument("config: split_fraction must be in (0,1)");
  }
  if (output_dir.empty()) throw std::invalid_argument("config: output_dir unset");
  for (const auto& c : calibrators) {
    if (c != "none" && c != "iso" && c != "gp-beta") {
      throw std::invalid_argument("config: unknown calibrator '" + c + "'");
    }
  }
  if (calibrators.empty()) {
    throw std::invalid_argument("config: calibrators must not be empty");
  }
  if (source == DataSource::kPredictionsCsv && base_model != BaseModelKind::kExternal) {
    throw std::invalid_argument(
        "config: a predictions source requires the external base model");
  }
  if (source != DataSource::kPredictionsCsv && base_model == BaseModelKind::kExternal) {
    throw std::invalid_argument(
        "config: the external base model requires a predictions source");
  }
  if (source != DataSource::kSynthetic && data_path.empty()) {
    throw std::invalid_argument("config: data_path unset for a file source");
  }
  if (source == DataSource::kSynthetic && synthetic_n < 2) {
    throw std::invalid_argument("config: synthetic_n must be >= 2");
  }
  if (density_points < 0 || map_points < 0 || predict_mc_samples < 1) {
    throw std::invalid_argument("config: nonpositive export/prediction settings");
  }
}

TrainConfig preset_train_config(const std::string& name) {
  TrainConfig t;
  t.n_inducing = 32;
  t.batch_size = 128;
  t.mc_samples = 64;
  t.steps = 5000;
  if (name == "synthetic") {
    t.learning_rate = 0.01;
  } else if (name == "uci") {
    t.learning_rate = 0.001;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  return t;
}

namespace {

const char* source_name(DataSource s) {
  switch (s) {
    case DataSource::kSynthetic: return "synthetic";
    case DataSource::kCsv: return "csv";
    case DataSource::kPredictionsCsv: return "predictions";
  }
  return "synthetic";
}

DataSource source_from_name(const std::string& s) {
  if (s == "synthetic") return DataSource::kSynthetic;
  if (s == "csv") return DataSource::kCsv;
  if (s == "predictions") return DataSource::kPredictionsCsv;
  throw std::invalid_argument("config: unknown source '" + s + "'");
}

const char* base_name(BaseModelKind b) {
  switch (b) {
    case BaseModelKind::kOls: return "ols";
    case BaseModelKind::kBayesRidge: return "bayes-ridge";
    case BaseModelKind::kExternal: return "external";
  }
  return "ols";
}

BaseModelKind base_from_name(const std::string& s) {
  if (s == "ols") return BaseModelKind::kOls;
  if (s == "bayes-ridge") return BaseModelKind::kBayesRidge;
  if (s == "external") return BaseModelKind::kExternal;
  throw std::invalid_argument("config: unknown base model '" + s + "'");
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["source"] = source_name(cfg.source);
  j["data_path"] = cfg.data_path;
  j["synthetic_n"] = cfg.synthetic_n;
  j["base_model"] = base_name(cfg.base_model);
  j["calibrators"] = cfg.calibrators;
  j["train"] = {{"n_inducing", cfg.train.n_inducing},
                {"batch_size", cfg.train.batch_size},
                {"mc_samples", cfg.train.mc_samples},
                {"learning_rate", cfg.train.learning_rate},
                {"steps", cfg.train.steps},
                {"seed", cfg.train.seed},
                {"optimize_inducing", cfg.train.optimize_inducing}};
  j["grid_size"] = cfg.grid_size;
  j["pad"] = cfg.pad;
  j["split_fraction"] = cfg.split_fraction;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["density_points"] = cfg.density_points;
  j["map_points"] = cfg.map_points;
  j["predict_mc_samples"] = cfg.predict_mc_samples;
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.contains("source")) cfg.source = source_from_name(j["source"].get<std::string>());
  if (j.contains("data_path")) cfg.data_path = j["data_path"].get<std::string>();
  if (j.contains("synthetic_n")) cfg.synthetic_n = j["synthetic_n"].get<int>();
  if (j.contains("base_model")) {
    cfg.base_model = base_from_name(j["base_model"].get<std::string>());
  }
  if (j.contains("calibrators")) {
    cfg.calibrators.clear();
    for (const auto& c : j["calibrators"]) {
      cfg.calibrators.insert(c.get<std::string>());
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    if (t.contains("n_inducing")) cfg.train.n_inducing = t["n_inducing"].get<int>();
    if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"].get<int>();
    if (t.contains("mc_samples")) cfg.train.mc_samples = t["mc_samples"].get<int>();
    if (t.contains("learning_rate")) {
      cfg.train.learning_rate = t["learning_rate"].get<double>();
    }
    if (t.contains("steps")) cfg.train.steps = t["steps"].get<int>();
    if (t.contains("seed")) cfg.train.seed = t["seed"].get<std::uint64_t>();
    if (t.contains("optimize_inducing")) {
      cfg.train.optimize_inducing = t["optimize_inducing"].get<bool>();
    }
  }
  if (j.contains("grid_size")) cfg.grid_size = j["grid_size"].get<int>();
  if (j.contains("pad")) cfg.pad = j["pad"].get<double>();
  if (j.contains("split_fraction")) {
    cfg.split_fraction = j["split_fraction"].get<double>();
  }
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("density_points")) cfg.density_points = j["density_points"].get<int>();
  if (j.contains("map_points")) cfg.map_points = j["map_points"].get<int>();
  if (j.contains("predict_mc_samples")) {
    cfg.predict_mc_samples = j["predict_mc_samples"].get<int>();
  }
  return cfg;
}

}  // namespace

ExperimentConfig config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return config_from_json(j);
}

void config_to_json_file(const ExperimentConfig& cfg, const std::string& path) {
  auto out = open_out(path);
  out << config_to_json(cfg).dump(2) << '\n';
}

void write_report_json(const EvalReport& report, const std::string& path) {
  nlohmann::json j;
  j["nll"] = report.nll;
  j["mse"] = report.mse;
  j["pbl"] = report.pbl;
  for (const auto& [tau, cov] : report.coverage) j[coverage_key(tau)] = cov;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

void save_isotonic_file(const IsotonicMap& m, const std::string& path) {
  m.validate();
  nlohmann::json j;
  j["format"] = "gpcal-isotonic-map";
  j["version"] = 1;
  j["knot_x"] = m.knot_x;
  j["knot_y"] = m.knot_y;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

IsotonicMap load_isotonic_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (!j.contains("format") || j["format"] != "gpcal-isotonic-map") {
    throw std::invalid_argument("load_isotonic_file: not an isotonic map file");
  }
  IsotonicMap m;
  m.knot_x = j.at("knot_x").get<std::vector<double>>();
  m.knot_y = j.at("knot_y").get<std::vector<double>>();
  m.validate();
  return m;
}

namespace {

struct SplitPredictions {
  std::vector<GaussianPrediction> train_preds;
  Eigen::VectorXd train_y;
  std::vector<GaussianPrediction> test_preds;
  Eigen::VectorXd test_y;
};

SplitPredictions prepare_predictions(const ExperimentConfig& cfg) {
  SplitPredictions sp;
  RngStream rng(cfg.seed);
  if (cfg.source == DataSource::kPredictionsCsv) {
    auto [preds, ys] = load_predictions_csv(cfg.data_path);
    auto [ia, ib] = split_indices(preds.size(), cfg.split_fraction, rng);
    auto take = [&](const std::vector<std::size_t>& idx,
                    std::vector<GaussianPrediction>& p_out, Eigen::VectorXd& y_out) {
      p_out.reserve(idx.size());
      y_out.resize(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t r = 0; r < idx.size(); ++r) {
        p_out.push_back(preds[idx[r]]);
        y_out[static_cast<Eigen::Index>(r)] =
            ys[static_cast<Eigen::Index>(idx[r])];
      }
    };
    take(ia, sp.train_preds, sp.train_y);
    take(ib, sp.test_preds, sp.test_y);
    return sp;
  }

  const Dataset ds = cfg.source == DataSource::kSynthetic
                         ? gen_synthetic(cfg.synthetic_n, rng)
                         : load_csv(cfg.data_path);
  auto [train, test] = train_test_split(ds, cfg.split_fraction, rng);
  sp.train_y = train.targets;
  sp.test_y = test.targets;
  if (cfg.base_model == BaseModelKind::kOls) {
    const OlsModel m = ols_fit(train);
    sp.train_preds = ols_predict_all(m, train.features);
    sp.test_preds = ols_predict_all(m, test.features);
  } else {
    const BayesRidgeModel m = bayes_ridge_fit(train);
    sp.train_preds = bayes_ridge_predict_all(m, train.features);
    sp.test_preds = bayes_ridge_predict_all(m, test.features);
  }
  return sp;
}

void write_trace_csv(const std::vector<std::pair<int, double>>& trace,
                     const std::string& path) {
  auto out = open_out(path);
  out << "step,elbo\n";
  for (const auto& [step, value] : trace) {
    out << step << ',';
    write_double_text(out, value);
    out << '\n';
  }
}

}  // namespace

std::map<std::string, EvalReport> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);
  const auto path = [&](const std::string& name) {
    return (std::filesystem::path(cfg.output_dir) / name).string();
  };
  config_to_json_file(cfg, path("config.json"));

  const SplitPredictions sp = prepare_predictions(cfg);
  write_predictions_csv(sp.train_preds, sp.train_y, path("pred_train.csv"));
  write_predictions_csv(sp.test_preds, sp.test_y, path("pred_test.csv"));

  // Evaluation grid from the training predictions.
  const Eigen::VectorXd grid = make_grid(sp.train_preds, cfg.grid_size, cfg.pad);

  std::map<std::string, EvalReport> reports;
  const std::size_t n_test = sp.test_preds.size();

  std::vector<GridDistribution> base_dists(n_test);
  for (std::size_t i = 0; i < n_test; ++i) {
    base_dists[i] = grid_distribution_from_gaussian(sp.test_preds[i], grid);
  }
  reports["base"] = evaluate(base_dists, sp.test_y);
  write_report_json(reports["base"], path("report_base.json"));

  bool have_iso = cfg.calibrators.count("iso") > 0;
  IsotonicMap iso_map;
  if (have_iso) {
    iso_map = fit_quantile_recalibrator(sp.train_preds, sp.train_y);
    save_isotonic_file(iso_map, path("iso_map.json"));
    std::vector<GridDistribution> iso_dists(n_test);
    for (std::size_t i = 0; i < n_test; ++i) {
      iso_dists[i] = calibrate_distribution_iso(iso_map, sp.test_preds[i], grid);
    }
    reports["iso"] = evaluate(iso_dists, sp.test_y);
    write_report_json(reports["iso"], path("report_iso.json"));
  }

  bool have_gpb = cfg.calibrators.count("gp-beta") > 0;
  SvgpState gpb_state;
  if (have_gpb) {
    FitResult fr = fit(sp.train_preds, sp.train_y, cfg.train);
    gpb_state = std::move(fr.state);
    save_state_file(gpb_state, path("gpbeta_state.json"));
    write_trace_csv(fr.trace, path("trace.csv"));
    RngStream pred_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    reports["gp-beta"] = evaluate(
        n_test,
        [&](std::size_t i) {
          return predict_density(gpb_state, sp.test_preds[i], grid,
                                 cfg.predict_mc_samples, pred_rng);
        },
        sp.test_y);
    write_report_json(reports["gp-beta"], path("report_gpbeta.json"));
  }

  // Plot-ready exports: densities for the first few test points...
  const int n_dens = std::min<int>(cfg.density_points, static_cast<int>(n_test));
  RngStream export_rng(cfg.seed ^ 0xda3e39cb94b95bdbULL);
  for (int k = 0; k < n_dens; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    auto out = open_out(path("density_point_" + std::to_string(k) + ".csv"));
    out << "y,base";
    if (have_iso) out << ",iso";
    if (have_gpb) out << ",gpbeta";
    out << '\n';
    const GridDistribution base_d =
        grid_distribution_from_gaussian(sp.test_preds[uk], grid);
    GridDistribution iso_d, gpb_d;
    if (have_iso) iso_d = calibrate_distribution_iso(iso_map, sp.test_preds[uk], grid);
    if (have_gpb) {
      gpb_d = predict_density(gpb_state, sp.test_preds[uk], grid,
                              cfg.predict_mc_samples, export_rng);
    }
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
      write_double_text(out, grid[g]);
      out << ',';
      write_double_text(out, base_d.pdf[g]);
      if (have_iso) {
        out << ',';
        write_double_text(out, iso_d.pdf[g]);
      }
      if (have_gpb) {
        out << ',';
        write_double_text(out, gpb_d.pdf[g]);
      }
      out << '\n';
    }
  }

  // ...and calibration maps on a quantile grid, one column per method/input.
  const int n_maps = std::min<int>(cfg.map_points, static_cast<int>(n_test));
  if (n_maps > 0) {
    const Eigen::VectorXd q_grid = Eigen::VectorXd::LinSpaced(99, 0.01, 0.99);
    std::vector<Eigen::VectorXd> gpb_maps;
    if (have_gpb) {
      for (int k = 0; k < n_maps; ++k) {
        gpb_maps.push_back(predict_calibration_map(
            gpb_state, sp.test_preds[static_cast<std::size_t>(k)], q_grid,
            cfg.predict_mc_samples, export_rng));
      }
    }
    auto out = open_out(path("maps.csv"));
    out << 'q';
    if (have_iso) out << ",iso";
    for (int k = 0; k < n_maps && have_gpb; ++k) out << ",gpbeta_" << k;
    out << '\n';
    for (Eigen::Index g = 0; g < q_grid.size(); ++g) {
      write_double_text(out, q_grid[g]);
      if (have_iso) {
        out << ',';
        write_double_text(out, apply_map(iso_map, q_grid[g]));
      }
      if (have_gpb) {
        for (const auto& m : gpb_maps) {
          out << ',';
          write_double_text(out, m[g]);
        }
      }
      out << '\n';
    }
  }

  return reports;
}

}  // namespace gpcal
