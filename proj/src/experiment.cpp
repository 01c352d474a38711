#include "glab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <omp.h>

#include "glab/errors.hpp"
#include "glab/version.hpp"

namespace glab {

namespace fs = std::filesystem;

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"dataset.channels", "1", "image channels, 1 or 3"},
      {"dataset.height", "32", "image height"},
      {"dataset.width", "32", "image width"},
      {"dataset.classes", "8", "sprite classes used (1..8)"},
      {"dataset.mode", "single", "single | multi"},
      {"dataset.max_sprites", "3", "sprites per multi-label image, at most"},
      {"dataset.train_count", "400", "training images"},
      {"dataset.seed", "1", "training-set seed"},
      {"model.seed", "7", "weight initialisation seed"},
      {"model.train", "true", "train the model (false keeps the initial weights)"},
      {"model.epochs", "30", "training epochs"},
      {"model.lr", "0.003", "training learning rate (Adam)"},
      {"model.batch_size", "8", "training minibatch size"},
      {"model.train_seed", "3", "shuffling seed"},
      {"ncb.mode", "train", "none | copy | train"},
      {"ncb.corpus_count", "500", "captures used to train the NCB"},
      {"ncb.seed", "5", "seed of the NCB corpus images and initial weights"},
      {"ncb.epochs", "300", "NCB training epochs (full batch)"},
      {"ncb.lr", "0.01", "NCB learning rate (Adam)"},
      {"ncb.hidden", "16", "width of the NCB linear stage"},
      {"capture.count", "20", "victim images captured"},
      {"capture.seed", "11", "victim image seed"},
      {"capture.loss", "auto", "auto | cross_entropy | multi_hot_bce (auto follows dataset.mode)"},
      {"attack.strategy", "MGIC", "DLG | GGI | CPL | MGIC"},
      {"attack.alpha_tv", "0.1", "total-variation weight"},
      {"attack.alpha_l2", "1e-05", "squared-norm weight"},
      {"attack.alpha_ca", "1e-06", "Canny-position weight"},
      {"attack.alpha_cpl", "0.001", "CPL label-regularizer weight"},
      {"attack.lr", "0.01", "Adam learning rate"},
      {"attack.max_iterations", "20000", "Adam steps per restart"},
      {"attack.restarts", "1", "independent restarts"},
      {"attack.seed", "0", "seed of restart 0; restart r uses seed + r"},
      {"attack.max_labels", "auto", "label cap; auto = 2 for single, 3 for multi"},
      {"attack.label_threshold_factor", "0.99", "keep labels scoring above factor * anchor"},
      {"attack.ncb_scale", "7e8", "gradient scale fed to the NCB"},
      {"attack.clamp_pixels", "true", "clamp pixels to [0, 1] after each step"},
      {"attack.ca_mode", "nudge", "nudge | value_only"},
      {"attack.ca_nudge", "0.01", "blend weight of the one-pixel shift"},
      {"attack.ca_window", "4", "half-size of the shifted window"},
      {"attack.per_label_restarts", "false", "MGIC: one run per inferred label"},
      {"output.dir", "out", "output directory"},
      {"bench.strategies", "GGI,MGIC", "comma-separated strategies compared by bench"},
      {"run.threads", "0", "OpenMP threads (0 = runtime default)"},
  };
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool known(const std::string& key) {
  const auto& keys = config_keys();
  return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return key == k.key; });
}

}  // namespace

Settings::Settings() {
  for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

Settings Settings::parse(const std::string& text, const std::string& origin) {
  Settings s;
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> seen;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(number);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
      throw ConfigError(where + ": duplicate key \"" + key + "\"");
    }
    try {
      s.set(key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
    seen.push_back(key);
  }
  return s;
}

Settings Settings::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void Settings::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got \"" + assignment + "\"");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Settings::set(const std::string& key, const std::string& value) {
  if (!known(key)) throw ConfigError("unknown key \"" + key + "\"");
  if (value.empty()) throw ConfigError("empty value for \"" + key + "\"");
  values_[key] = value;
}

const std::string& Settings::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key \"" + key + "\"");
  return it->second;
}

std::string Settings::to_text() const {
  std::string out;
  for (const auto& k : config_keys()) out += std::string(k.key) + "=" + values_.at(k.key) + "\n";
  return out;
}

std::uint64_t Settings::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : to_text()) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// ---- typed view ----

namespace {

class Reader {
 public:
  explicit Reader(const Settings& s) : s_(s) {}

  const std::string& text(const char* key) const { return s_.get(key); }

  std::size_t count(const char* key) const {
    const std::string& v = text(key);
    std::size_t used = 0;
    unsigned long long n = 0;
    try {
      n = std::stoull(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.front() == '-') throw ConfigError(std::string(key) + ": expected a nonnegative integer, got \"" + v + "\"");
    return static_cast<std::size_t>(n);
  }

  double real(const char* key) const {
    const std::string& v = text(key);
    std::size_t used = 0;
    double d = 0.0;
    try {
      d = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || !std::isfinite(d)) throw ConfigError(std::string(key) + ": expected a real number, got \"" + v + "\"");
    return d;
  }

  bool flag(const char* key) const {
    const std::string& v = text(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(std::string(key) + ": expected true or false, got \"" + v + "\"");
  }

 private:
  const Settings& s_;
};

}  // namespace

ExperimentConfig ExperimentConfig::from_settings(const Settings& s) {
  const Reader r(s);
  ExperimentConfig c;
  c.dataset.channels = r.count("dataset.channels");
  c.dataset.height = r.count("dataset.height");
  c.dataset.width = r.count("dataset.width");
  c.dataset.class_count = r.count("dataset.classes");
  const std::string& mode = r.text("dataset.mode");
  if (mode == "single") {
    c.dataset.mode = LabelMode::single;
  } else if (mode == "multi") {
    c.dataset.mode = LabelMode::multi;
  } else {
    throw ConfigError("dataset.mode: expected single or multi, got \"" + mode + "\"");
  }
  c.dataset.max_sprites = r.count("dataset.max_sprites");
  c.dataset.count = r.count("dataset.train_count");
  c.dataset_seed = r.count("dataset.seed");

  c.model_seed = r.count("model.seed");
  c.train_model = r.flag("model.train");
  c.training.epochs = r.count("model.epochs");
  c.training.lr = r.real("model.lr");
  c.training.batch_size = r.count("model.batch_size");
  c.training.seed = r.count("model.train_seed");

  const std::string& ncb = r.text("ncb.mode");
  if (ncb == "none") {
    c.ncb = NcbSetting::none;
  } else if (ncb == "copy") {
    c.ncb = NcbSetting::copy;
  } else if (ncb == "train") {
    c.ncb = NcbSetting::train;
  } else {
    throw ConfigError("ncb.mode: expected none, copy or train, got \"" + ncb + "\"");
  }
  c.ncb_corpus = r.count("ncb.corpus_count");
  c.ncb_seed = r.count("ncb.seed");
  c.ncb_training.epochs = r.count("ncb.epochs");
  c.ncb_training.lr = r.real("ncb.lr");
  c.ncb_training.hidden = r.count("ncb.hidden");
  if (c.ncb_training.hidden == 0) throw ConfigError("ncb.hidden must be positive");
  c.ncb_training.seed = c.ncb_seed;

  c.capture_count = r.count("capture.count");
  c.capture_seed = r.count("capture.seed");
  const std::string& loss = r.text("capture.loss");
  if (loss == "auto") {
    c.capture_loss = c.dataset.mode == LabelMode::single ? LossKind::cross_entropy : LossKind::multi_hot_bce;
  } else if (loss == "cross_entropy") {
    c.capture_loss = LossKind::cross_entropy;
  } else if (loss == "multi_hot_bce") {
    c.capture_loss = LossKind::multi_hot_bce;
  } else {
    throw ConfigError("capture.loss: expected auto, cross_entropy or multi_hot_bce, got \"" + loss + "\"");
  }

  AttackConfig& a = c.attack;
  a.strategy = parse_strategy(r.text("attack.strategy"));
  a.alpha_tv = r.real("attack.alpha_tv");
  a.alpha_l2 = r.real("attack.alpha_l2");
  a.alpha_ca = r.real("attack.alpha_ca");
  a.alpha_cpl = r.real("attack.alpha_cpl");
  a.lr = r.real("attack.lr");
  a.max_iterations = r.count("attack.max_iterations");
  a.restarts = r.count("attack.restarts");
  a.seed = r.count("attack.seed");
  a.max_labels = r.text("attack.max_labels") == "auto" ? (c.dataset.mode == LabelMode::single ? 2 : 3)
                                                        : r.count("attack.max_labels");
  a.label_threshold_factor = r.real("attack.label_threshold_factor");
  a.ncb_scale = r.real("attack.ncb_scale");
  a.clamp_pixels = r.flag("attack.clamp_pixels");
  const std::string& ca = r.text("attack.ca_mode");
  if (ca == "nudge") {
    a.ca_mode = CaMode::nudge;
  } else if (ca == "value_only") {
    a.ca_mode = CaMode::value_only;
  } else {
    throw ConfigError("attack.ca_mode: expected nudge or value_only, got \"" + ca + "\"");
  }
  a.ca_nudge = r.real("attack.ca_nudge");
  a.ca_window = r.count("attack.ca_window");
  a.per_label_restarts = r.flag("attack.per_label_restarts");
  a.validate();
  c.ncb_training.input_scale = a.ncb_scale;

  c.output_dir = r.text("output.dir");
  c.bench_strategies.clear();
  std::stringstream list(r.text("bench.strategies"));
  for (std::string item; std::getline(list, item, ',');) {
    if (!trim(item).empty()) c.bench_strategies.push_back(parse_strategy(trim(item)));
  }
  if (c.bench_strategies.empty()) throw ConfigError("bench.strategies: empty list");
  c.threads = r.count("run.threads");
  return c;
}

std::string format_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- shared pipeline pieces ----

namespace {

std::string indexed(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu%s", stem, i, ext);
  return buf;
}

std::string join_labels(const std::vector<std::size_t>& labels) {
  std::string out;
  for (std::size_t k : labels) out += (out.empty() ? "" : ";") + std::to_string(k);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void write_manifest(const fs::path& dir, const std::string& stage, const Settings& s) {
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(s.hash()));
  std::string text = "# glab " + stage + " manifest\n";
  text += "# glab version " + std::string(kVersion) + ", container version " +
          std::to_string(kContainerVersion) + "\n";
  text += "# config hash " + std::string(hash) + "\n";
  text += "# rerun: glab " + stage.substr(0, stage.find('_')) + " --config <this file>\n";
  text += s.to_text();
  write_text(dir / ("manifest_" + stage + ".txt"), text);
}

void apply_threads(const ExperimentConfig& c) {
  if (c.threads > 0) omp_set_num_threads(static_cast<int>(c.threads));
}

Shape input_shape(const ExperimentConfig& c) {
  return {c.dataset.channels, c.dataset.height, c.dataset.width};
}

SpriteOptions victim_options(const ExperimentConfig& c, std::size_t count) {
  SpriteOptions o = c.dataset;
  o.count = count;
  return o;
}

struct Prepared {
  ModelGraph model;
  std::optional<NCBGraph> ncb;
  TrainResult training;
};

Prepared prepare(const ExperimentConfig& c) {
  const Dataset data = generate_sprites(c.dataset, c.dataset_seed);
  Prepared p{build_micro_cnn(input_shape(c), c.dataset.class_count, c.model_seed), std::nullopt, {}};
  if (c.train_model) p.training = train(p.model, data, c.training);
  if (c.ncb == NcbSetting::copy) {
    p.ncb = build_ncb(p.model, NcbMode::copy_weights);
  } else if (c.ncb == NcbSetting::train) {
    const Dataset corpus_images = generate_sprites(victim_options(c, c.ncb_corpus), c.ncb_seed);
    std::vector<NcbExample> corpus;
    for (std::size_t i = 0; i < corpus_images.size(); ++i) {
      std::vector<std::size_t> labels = corpus_images.label_sets[i];
      if (c.capture_loss == LossKind::cross_entropy) labels.resize(1);
      const auto cap = client_step(p.model, corpus_images.images[i], labels, c.capture_loss);
      corpus.push_back({cap.grads[cap.grads.size() - 2].value, labels});
    }
    p.ncb = build_ncb(p.model, NcbMode::train_on_gradients, corpus, c.ncb_training);
  }
  return p;
}

// Labels a victim shares: cross-entropy clients report their first sprite only.
std::vector<std::size_t> shared_labels(const ExperimentConfig& c, const std::vector<std::size_t>& labels) {
  if (c.capture_loss == LossKind::cross_entropy) return {labels.front()};
  return labels;
}

std::vector<fs::path> list_files(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw ConfigError("missing directory " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string attack_row(std::size_t index, const AttackReport& r) {
  std::size_t failed = 0;
  for (const auto& o : r.restarts) failed += o.failed;
  std::string row = std::to_string(index) + "," + join_labels(r.hypothesis.labels) + "," +
                    (r.hypothesis.method == LabelMethod::ncb ? "ncb" : "cross_entropy_sign") + "," +
                    format_real(r.final_objective) + "," + std::to_string(r.restart_index) + "," +
                    std::to_string(r.ca_g.row) + "," + std::to_string(r.ca_g.col) + "," +
                    std::to_string(r.ca_t.row) + "," + std::to_string(r.ca_t.col) + "," +
                    format_real(r.ca_error()) + "," + (r.ca_g_fallback ? "1" : "0") + "," +
                    (r.ca_t_fallback ? "1" : "0") + "," + std::to_string(r.ca_t_fallback_iterations) + "," +
                    std::to_string(r.nudges) + "," + std::to_string(failed) + "\n";
  return row;
}

constexpr const char* kAttackHeader =
    "index,labels,label_method,final_objective,restart_index,ca_g_row,ca_g_col,ca_t_row,ca_t_col,"
    "ca_error,ca_g_fallback,ca_t_fallback,ca_t_fallback_iterations,nudges,failed_restarts\n";

double mean(std::vector<double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

// ---- stages ----

void run_train_stage(const Settings& s) {
  const ExperimentConfig c = ExperimentConfig::from_settings(s);
  apply_threads(c);
  fs::create_directories(c.output_dir);
  const Prepared p = prepare(c);
  save_weights(p.model, c.output_dir / "model.weights");
  if (p.ncb) save_ncb(*p.ncb, c.output_dir / "ncb.weights");
  else fs::remove(c.output_dir / "ncb.weights");
  std::string csv = "epoch,loss\n";
  for (std::size_t e = 0; e < p.training.loss_trace.size(); ++e) {
    csv += std::to_string(e) + "," + format_real(p.training.loss_trace[e]) + "\n";
  }
  write_text(c.output_dir / "train_loss.csv", csv);
  write_manifest(c.output_dir, "train", s);
  std::cerr << "trained " << p.model.parameter_count() << " parameters, accuracy "
            << p.training.accuracy << (p.ncb ? ", NCB written" : "") << "\n";
}

void run_capture_stage(const Settings& s) {
  const ExperimentConfig c = ExperimentConfig::from_settings(s);
  const ModelGraph model = load_weights(c.output_dir / "model.weights");
  if (model.input_shape() != input_shape(c) || model.class_count() != c.dataset.class_count) {
    throw MismatchError("model.weights does not match the dataset settings");
  }
  const Dataset victims = generate_sprites(victim_options(c, c.capture_count), c.capture_seed);
  fs::create_directories(c.output_dir / "captures");
  fs::create_directories(c.output_dir / "truth");
  std::string labels = "index,labels,shared_labels\n";
  for (std::size_t i = 0; i < victims.size(); ++i) {
    const auto shared = shared_labels(c, victims.label_sets[i]);
    save_capture(client_step(model, victims.images[i], shared, c.capture_loss),
                 c.output_dir / "captures" / indexed("capture", i, ".mgig"));
    write_pnm(c.output_dir / "truth" / indexed("truth", i, c.dataset.channels == 1 ? ".pgm" : ".ppm"),
              victims.images[i]);
    labels += std::to_string(i) + "," + join_labels(victims.label_sets[i]) + "," + join_labels(shared) + "\n";
  }
  write_text(c.output_dir / "truth" / "labels.csv", labels);
  write_manifest(c.output_dir, "capture", s);
  std::cerr << "wrote " << victims.size() << " captures\n";
}

void run_attack_stage(const Settings& s) {
  const ExperimentConfig c = ExperimentConfig::from_settings(s);
  apply_threads(c);
  const ModelGraph model = load_weights(c.output_dir / "model.weights");
  std::optional<NCBGraph> ncb;
  if (c.attack.strategy == Strategy::mgic && fs::exists(c.output_dir / "ncb.weights")) {
    ncb = load_ncb(c.output_dir / "ncb.weights");
  }
  const auto files = list_files(c.output_dir / "captures", ".mgig");
  if (files.empty()) throw ConfigError("no captures in " + (c.output_dir / "captures").string());
  std::vector<GradientCapture> captures;
  for (const auto& f : files) captures.push_back(load_capture(f));
  for (const auto& cap : captures) check_capture_matches(cap, model);

  const std::string name = strategy_name(c.attack.strategy);
  const fs::path dir = c.output_dir / "recon" / name;
  fs::create_directories(dir);
  std::vector<AttackReport> reports(captures.size());
  std::vector<std::string> errors(captures.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < captures.size(); ++i) {
    try {
      reports[i] = run_attack(model, ncb ? &*ncb : nullptr, captures[i], c.attack, AttackOptions{std::nullopt, false});
    } catch (const std::exception& e) {
      errors[i] = files[i].string() + ": " + e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw AttackError(e);
  }
  std::string csv = kAttackHeader;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    write_pnm(dir / indexed("recon", i, model.input_shape()[0] == 1 ? ".pgm" : ".ppm"), reports[i].reconstruction);
    csv += attack_row(i, reports[i]);
  }
  write_text(dir / "attack.csv", csv);
  write_manifest(c.output_dir, "attack_" + name, s);
  std::cerr << name << ": reconstructed " << reports.size() << " images\n";
}

void run_eval_stage(const Settings& s) {
  const ExperimentConfig c = ExperimentConfig::from_settings(s);
  const std::string name = strategy_name(c.attack.strategy);
  const fs::path dir = c.output_dir / "recon" / name;
  const char* ext = c.dataset.channels == 1 ? ".pgm" : ".ppm";
  const auto recon = list_files(dir, ext);
  std::vector<std::string> objectives;
  {
    std::ifstream in(dir / "attack.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::stringstream row(line);
      std::string cell;
      for (int col = 0; col < 4 && std::getline(row, cell, ','); ++col) {}
      objectives.push_back(cell);
    }
  }
  std::string csv = "index,psnr,ssim,final_objective\n";
  std::vector<double> ps, ss;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    const fs::path truth = c.output_dir / "truth" / indexed("truth", i, ext);
    if (!fs::exists(truth)) throw ConfigError("missing ground truth " + truth.string());
    const Tensor a = read_pnm(recon[i]);
    const Tensor b = read_pnm(truth);
    const double p = psnr(a, b), q = ssim(a, b);
    ps.push_back(p);
    ss.push_back(q);
    csv += std::to_string(i) + "," + format_real(p) + "," + format_real(q) + "," +
           (i < objectives.size() ? objectives[i] : "") + "\n";
  }
  write_text(c.output_dir / ("eval_" + name + ".csv"), csv);
  write_manifest(c.output_dir, "eval_" + name, s);
  std::cerr << name << ": mean PSNR " << mean(ps) << " dB, mean SSIM " << mean(ss) << "\n";
}

std::vector<BenchRow> run_benchmark(const ModelGraph& model, const NCBGraph* ncb,
                                    const std::vector<GradientCapture>& captures, const Dataset& truth,
                                    const std::vector<Strategy>& strategies, const AttackConfig& base,
                                    bool parallel) {
  const std::size_t n = captures.size();
  std::vector<BenchRow> rows(n * strategies.size());
  std::vector<std::string> errors(rows.size());
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const std::size_t si = j / n, i = j % n;
    AttackConfig cfg = base;
    cfg.strategy = strategies[si];
    try {
      AttackReport r = run_attack(model, ncb, captures[i], cfg, AttackOptions{std::nullopt, false});
      r.psnr = psnr(r.reconstruction, truth.images[i]);
      r.ssim = ssim(r.reconstruction, truth.images[i]);
      rows[j] = {i, strategies[si], truth.label_sets[i], std::move(r)};
    } catch (const std::exception& e) {
      errors[j] = std::string(strategy_name(strategies[si])) + " on image " + std::to_string(i) + ": " + e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw AttackError(e);
  }
  return rows;
}

std::vector<BenchSummary> summarize(const std::vector<BenchRow>& rows, const std::vector<Strategy>& strategies) {
  std::vector<BenchSummary> out;
  for (Strategy st : strategies) {
    std::vector<double> p, q, ca, obj;
    std::size_t label_hits = 0;
    for (const auto& r : rows) {
      if (r.strategy != st) continue;
      p.push_back(r.report.psnr);
      q.push_back(r.report.ssim);
      ca.push_back(r.report.ca_error());
      obj.push_back(r.report.final_objective);
      label_hits += r.report.hypothesis.labels == r.true_labels;
    }
    out.push_back({st, p.size(), mean(p), median(p), mean(q), median(q), mean(ca), median(ca), mean(obj),
                   p.empty() ? 0.0 : static_cast<double>(label_hits) / static_cast<double>(p.size())});
  }
  return out;
}

void run_bench_stage(const Settings& s) {
  const ExperimentConfig c = ExperimentConfig::from_settings(s);
  apply_threads(c);
  const fs::path dir = c.output_dir / "bench";
  fs::create_directories(dir);
  const Prepared p = prepare(c);
  const Dataset victims = generate_sprites(victim_options(c, c.capture_count), c.capture_seed);
  std::vector<GradientCapture> captures;
  for (std::size_t i = 0; i < victims.size(); ++i) {
    captures.push_back(client_step(p.model, victims.images[i], shared_labels(c, victims.label_sets[i]), c.capture_loss));
  }
  const auto rows = run_benchmark(p.model, p.ncb ? &*p.ncb : nullptr, captures, victims, c.bench_strategies,
                                  c.attack, true);

  const char* ext = c.dataset.channels == 1 ? ".pgm" : ".ppm";
  std::string csv = "index,strategy,true_labels,inferred_labels,psnr,ssim,final_objective,ca_error,ca_g_fallback,ca_t_fallback\n";
  for (const auto& r : rows) {
    const std::string name = strategy_name(r.strategy);
    fs::create_directories(dir / "recon" / name);
    write_pnm(dir / "recon" / name / indexed("recon", r.index, ext), r.report.reconstruction);
    csv += std::to_string(r.index) + "," + name + "," + join_labels(r.true_labels) + "," +
           join_labels(r.report.hypothesis.labels) + "," + format_real(r.report.psnr) + "," +
           format_real(r.report.ssim) + "," + format_real(r.report.final_objective) + "," +
           format_real(r.report.ca_error()) + "," + (r.report.ca_g_fallback ? "1" : "0") + "," +
           (r.report.ca_t_fallback ? "1" : "0") + "\n";
  }
  write_text(dir / "bench.csv", csv);

  std::string table =
      "strategy,images,mean_psnr,median_psnr,mean_ssim,median_ssim,mean_ca_error,median_ca_error,"
      "mean_final_objective,label_set_accuracy\n";
  for (const auto& m : summarize(rows, c.bench_strategies)) {
    table += std::string(strategy_name(m.strategy)) + "," + std::to_string(m.images) + "," +
             format_real(m.mean_psnr) + "," + format_real(m.median_psnr) + "," + format_real(m.mean_ssim) + "," +
             format_real(m.median_ssim) + "," + format_real(m.mean_ca_error) + "," +
             format_real(m.median_ca_error) + "," + format_real(m.mean_final_objective) + "," +
             format_real(m.label_accuracy) + "\n";
    std::cerr << strategy_name(m.strategy) << ": mean PSNR " << m.mean_psnr << " dB, mean SSIM " << m.mean_ssim
              << ", mean CA error " << m.mean_ca_error << "\n";
  }
  write_text(dir / "summary.csv", table);
  write_manifest(c.output_dir, "bench", s);
}

void run_stage(const std::string& command, const Settings& settings) {
  if (command == "train") return run_train_stage(settings);
  if (command == "capture") return run_capture_stage(settings);
  if (command == "attack") return run_attack_stage(settings);
  if (command == "eval") return run_eval_stage(settings);
  if (command == "bench") return run_bench_stage(settings);
  throw ConfigError("unknown command \"" + command + "\" (expected train, capture, attack, eval or bench)");
}

}  // namespace glab
