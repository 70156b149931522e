#pragma once

#include "gpcal/core.hpp"
#include "gpcal/data.hpp"
#include "gpcal/isotonic.hpp"
#include "gpcal/metrics.hpp"
#include "gpcal/svgp.hpp"

#include <map>
#include <set>

namespace gpcal {

enum class DataSource { kSynthetic, kCsv, kPredictionsCsv };
enum class BaseModelKind { kOls, kBayesRidge, kExternal };

struct ExperimentConfig {
  DataSource source = DataSource::kSynthetic;
  std::string data_path;  // for kCsv / kPredictionsCsv
  int synthetic_n = kSyntheticDefaultSize;

  BaseModelKind base_model = BaseModelKind::kOls;
  std::set<std::string> calibrators = {"iso", "gp-beta"};  // or {"none"}

  TrainConfig train;
  int grid_size = 4096;
  double pad = 8.0;
  double split_fraction = 0.75;
  std::uint64_t seed = 0;
  std::string output_dir;

  int density_points = 3;       // test instances whose densities are exported
  int map_points = 3;           // calibration-map examples exported
  int predict_mc_samples = 128;

  void validate() const;
};

/// Training presets: "synthetic" (learning rate 0.01) and "uci"
/// (learning rate 0.001); both use 32 inducing points, batch 128,
/// 64 MC samples, 5000 steps.
TrainConfig preset_train_config(const std::string& name);

ExperimentConfig config_from_json_file(const std::string& path);
void config_to_json_file(const ExperimentConfig& cfg, const std::string& path);

/// Flat key-value serialization of a report (nll, mse, pbl, coverage_*).
void write_report_json(const EvalReport& report, const std::string& path);

/// Fits the base model on the train split, fits every requested calibrator on
/// the same split's predictions, evaluates everything on the test split, and
/// writes reports, the training trace, exported densities, and calibration
/// maps under cfg.output_dir. Returns the reports keyed by method name.
std::map<std::string, EvalReport> run_experiment(const ExperimentConfig& cfg);

/// Isotonic map serialization (version-tagged JSON, exact round-trip).
void save_isotonic_file(const IsotonicMap& m, const std::string& path);
IsotonicMap load_isotonic_file(const std::string& path);

}  // namespace gpcal
