#include "gpcal/experiment.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace gpcal;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny_config(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.source = DataSource::kSynthetic;
  cfg.synthetic_n = 80;
  cfg.base_model = BaseModelKind::kOls;
  cfg.calibrators = {"iso", "gp-beta"};
  cfg.train.n_inducing = 4;
  cfg.train.batch_size = 40;
  cfg.train.mc_samples = 8;
  cfg.train.learning_rate = 0.01;
  cfg.train.steps = 60;
  cfg.train.seed = 9;
  cfg.grid_size = 512;
  cfg.seed = 4;
  cfg.output_dir = out_dir;
  cfg.density_points = 2;
  cfg.map_points = 2;
  cfg.predict_mc_samples = 32;
  return cfg;
}

}  // namespace

TEST_CASE("training presets") {
  const TrainConfig synth = preset_train_config("synthetic");
  CHECK(synth.learning_rate == 0.01);
  CHECK(synth.n_inducing == 32);
  CHECK(synth.batch_size == 128);
  CHECK(synth.mc_samples == 64);
  CHECK(synth.steps == 5000);
  const TrainConfig uci = preset_train_config("uci");
  CHECK(uci.learning_rate == 0.001);
  CHECK_THROWS_AS(preset_train_config("nope"), std::invalid_argument);
}

TEST_CASE("config json round trip") {
  const std::string dir = "/tmp/gpcal_test_cfg";
  std::filesystem::create_directories(dir);
  ExperimentConfig cfg = tiny_config(dir);
  cfg.calibrators = {"gp-beta"};
  cfg.split_fraction = 0.8;
  config_to_json_file(cfg, dir + "/cfg.json");
  const ExperimentConfig back = config_from_json_file(dir + "/cfg.json");
  CHECK(back.synthetic_n == cfg.synthetic_n);
  CHECK(back.calibrators == cfg.calibrators);
  CHECK(back.split_fraction == cfg.split_fraction);
  CHECK(back.train.steps == cfg.train.steps);
  CHECK(back.train.learning_rate == cfg.train.learning_rate);
  CHECK(back.seed == cfg.seed);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config validation") {
  ExperimentConfig cfg = tiny_config("/tmp/x");
  CHECK_NOTHROW(cfg.validate());
  SUBCASE("bad calibrator") {
    cfg.calibrators = {"platt"};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("external base needs a prediction source") {
    cfg.base_model = BaseModelKind::kExternal;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("prediction source needs the external base") {
    cfg.source = DataSource::kPredictionsCsv;
    cfg.data_path = "preds.csv";
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}

TEST_CASE("experiment pipeline artifacts and determinism") {
  namespace fs = std::filesystem;
  const std::string dir_a = "/tmp/gpcal_test_run_a";
  const std::string dir_b = "/tmp/gpcal_test_run_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  const auto reports_a = run_experiment(tiny_config(dir_a));
  REQUIRE(reports_a.count("base") == 1);
  REQUIRE(reports_a.count("iso") == 1);
  REQUIRE(reports_a.count("gp-beta") == 1);

  for (const char* name :
       {"config.json", "pred_train.csv", "pred_test.csv", "report_base.json",
        "report_iso.json", "report_gpbeta.json", "trace.csv", "iso_map.json",
        "gpbeta_state.json", "density_point_0.csv", "density_point_1.csv",
        "maps.csv"}) {
    INFO(name);
    CHECK(fs::exists(fs::path(dir_a) / name));
  }

  SUBCASE("same seed, byte-identical artifacts") {
    const auto reports_b = run_experiment(tiny_config(dir_b));
    for (const char* name :
         {"report_base.json", "report_iso.json", "report_gpbeta.json",
          "trace.csv", "gpbeta_state.json", "maps.csv"}) {
      INFO(name);
      CHECK(slurp((fs::path(dir_a) / name).string()) ==
            slurp((fs::path(dir_b) / name).string()));
    }
    fs::remove_all(dir_b);
  }

  SUBCASE("calibrator none reproduces the base report") {
    ExperimentConfig cfg = tiny_config(dir_b);
    cfg.calibrators = {"none"};
    const auto reports = run_experiment(cfg);
    CHECK(reports.size() == 1);
    CHECK(reports.at("base").nll == reports_a.at("base").nll);
    CHECK(reports.at("base").mse == reports_a.at("base").mse);
    CHECK(reports.at("base").pbl == reports_a.at("base").pbl);
    CHECK_FALSE(fs::exists(fs::path(dir_b) / "report_iso.json"));
    fs::remove_all(dir_b);
  }

  fs::remove_all(dir_a);
}

TEST_CASE("isotonic map file round trip") {
  IsotonicMap m{{0.0, 0.4, 1.0}, {0.05, 0.5, 0.97}};
  const std::string path = "/tmp/gpcal_test_iso.json";
  save_isotonic_file(m, path);
  const IsotonicMap back = load_isotonic_file(path);
  CHECK(back.knot_x == m.knot_x);
  CHECK(back.knot_y == m.knot_y);
  std::filesystem::remove(path);
}
