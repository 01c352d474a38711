#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "glab/attack.hpp"
#include "glab/sprites.hpp"

namespace glab {

// One documented configuration key.
struct ConfigKey {
  const char* key;
  const char* default_value;
  const char* help;
};

// Every accepted key in canonical order.
const std::vector<ConfigKey>& config_keys();

// Flat key=value settings. Parsing rejects unknown keys, duplicate keys and
// malformed lines (ConfigError with the line number).
class Settings {
 public:
  Settings();  // all defaults

  static Settings parse(const std::string& text, const std::string& origin = "config");
  static Settings load(const std::filesystem::path& path);

  // "key=value"; ConfigError for unknown keys.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  // Canonical text: every key in config_keys() order, one per line.
  std::string to_text() const;
  std::uint64_t hash() const;

 private:
  std::map<std::string, std::string> values_;
};

enum class NcbSetting { none, copy, train };

struct ExperimentConfig {
  SpriteOptions dataset;        // count = training-set size
  std::uint64_t dataset_seed = 1;
  std::uint64_t model_seed = 7;
  bool train_model = true;
  TrainOptions training;
  NcbSetting ncb = NcbSetting::train;
  std::size_t ncb_corpus = 500;
  std::uint64_t ncb_seed = 5;
  NcbTrainOptions ncb_training;
  std::size_t capture_count = 20;
  std::uint64_t capture_seed = 11;
  LossKind capture_loss = LossKind::cross_entropy;
  AttackConfig attack;
  std::filesystem::path output_dir = "out";
  std::vector<Strategy> bench_strategies = {Strategy::ggi, Strategy::mgic};
  std::size_t threads = 0;  // 0 = OpenMP default

  static ExperimentConfig from_settings(const Settings& s);
};

// Formats a real with 17 significant digits ("inf" for the PSNR sentinel).
std::string format_real(double v);

// Pipeline stages behind the CLI subcommands. Each writes its outputs under
// output.dir plus a manifest_<stage>.txt that is itself a valid config: running
// the same stage on it reproduces every output byte for byte.
void run_train_stage(const Settings& settings);
void run_capture_stage(const Settings& settings);
void run_attack_stage(const Settings& settings);
void run_eval_stage(const Settings& settings);
void run_bench_stage(const Settings& settings);

// One attack of the benchmark, with PSNR/SSIM filled in.
struct BenchRow {
  std::size_t index = 0;
  Strategy strategy = Strategy::ggi;
  std::vector<std::size_t> true_labels;
  AttackReport report;
};

struct BenchSummary {
  Strategy strategy = Strategy::ggi;
  std::size_t images = 0;
  double mean_psnr = 0.0;
  double median_psnr = 0.0;
  double mean_ssim = 0.0;
  double median_ssim = 0.0;
  double mean_ca_error = 0.0;
  double median_ca_error = 0.0;
  double mean_final_objective = 0.0;
  double label_accuracy = 0.0;  // fraction of exact label-set matches
};

// Attacks every capture with every strategy (base config otherwise). Rows are
// ordered strategy-major; `parallel` spreads attacks over OpenMP threads
// without changing any result.
std::vector<BenchRow> run_benchmark(const ModelGraph& model, const NCBGraph* ncb,
                                    const std::vector<GradientCapture>& captures, const Dataset& truth,
                                    const std::vector<Strategy>& strategies, const AttackConfig& base,
                                    bool parallel);
std::vector<BenchSummary> summarize(const std::vector<BenchRow>& rows, const std::vector<Strategy>& strategies);

// Dispatch by subcommand name; ConfigError for unknown names.
void run_stage(const std::string& command, const Settings& settings);

}  // namespace glab
