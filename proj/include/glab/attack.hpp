#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "glab/capture.hpp"
#include "glab/imaging.hpp"
#include "glab/model.hpp"

namespace glab {

enum class Strategy { dlg, ggi, cpl, mgic };

const char* strategy_name(Strategy s);
// Case-insensitive; ConfigError for unknown names.
Strategy parse_strategy(std::string_view name);

// How the Canny-position penalty acts on the reconstruction.
enum class CaMode {
  nudge,       // value in the objective plus a one-pixel shift of content toward CA_g
  value_only,  // value in the objective only; contributes no update
};

struct AttackConfig {
  Strategy strategy = Strategy::mgic;
  double alpha_tv = 1e-1;
  double alpha_l2 = 1e-5;
  double alpha_ca = 1e-6;
  double alpha_cpl = 1e-3;
  double lr = 0.01;
  std::size_t max_iterations = 20000;
  std::size_t restarts = 1;
  std::uint64_t seed = 0;
  std::size_t max_labels = 2;
  double label_threshold_factor = 0.99;
  double ncb_scale = 7e8;
  bool clamp_pixels = true;
  CaMode ca_mode = CaMode::nudge;
  double ca_nudge = 0.01;         // blend weight of the shifted image per step
  std::size_t ca_window = 4;      // half-size of the shifted window
  bool per_label_restarts = false;  // MGIC: one run per inferred label instead of a joint loss

  // ConfigError naming the first invalid field.
  void validate() const;
};

enum class LabelMethod { cross_entropy_sign, ncb };

struct LabelHypothesis {
  std::vector<std::size_t> labels;  // ascending
  std::vector<double> scores;       // aligned with labels
  LabelMethod method = LabelMethod::cross_entropy_sign;
};

// The class whose head-bias gradient is negative. AmbiguousLabelError (listing
// the candidates) when the capture is not single-label cross entropy or the
// number of entries below -1e-12 is not exactly one.
LabelHypothesis infer_single_label(const GradientCapture& capture);

// Label with the most negative head-bias gradient; usable for any loss kind.
LabelHypothesis most_negative_label(const GradientCapture& capture);

// Sigmoid NCB scores of the scaled head-weight gradient.
std::vector<double> ncb_scores(const GradientCapture& capture, const NCBGraph& ncb, double scale);

// Labels scoring above factor * anchor, best first, capped at max_labels (ties
// to the lower index). The anchor is the cross-entropy-sign label's score for
// single-label cross-entropy captures (that label is always kept) and the top
// score otherwise.
LabelHypothesis select_labels(const std::vector<double>& scores, double factor, std::size_t max_labels,
                              std::optional<std::size_t> required);

LabelHypothesis infer_multi_label(const GradientCapture& capture, const NCBGraph& ncb,
                                  const AttackConfig& cfg);

// ---- regularizers ----

// Mean absolute neighbour difference (total variation divided by the number of
// differences), so its weight does not depend on the image size.
Var r_tv(const Var& x);
Var r_l2(const Var& x);
// Canny thresholds 0.8 and 0.9 of the brightest pixel.
BaselineResult canny_baseline(const Tensor& image);
double r_ca(const BaselinePoint& ca_t, const BaselinePoint& ca_g);

// CA_g: baseline point of the head-weight gradient.
BaselineResult gradient_baseline(const GradientCapture& capture, const ModelGraph& model);

// ---- objective ----

struct ObjectiveTerms {
  Var total;
  double gradient_match = 0.0;  // squared distance (DLG, CPL) or 1 - cosine (GGI, MGIC)
  double tv = 0.0;
  double l2 = 0.0;
  double ca = 0.0;
  double cpl = 0.0;
  BaselineResult ca_t;
};

// Builds the strategy's objective on the tape of `x_hat` ([C, H, W]). The dummy
// gradients come from the capture's loss kind applied to the hypothesis labels.
// `ca_g` is needed for MGIC only.
ObjectiveTerms objective(const Var& x_hat, const ModelGraph& model, const GradientCapture& capture,
                         const LabelHypothesis& hypothesis, const AttackConfig& cfg,
                         const BaselinePoint& ca_g = {});

// ---- reconstruction ----

struct RestartOutcome {
  bool failed = false;
  std::string diagnostic;
  double final_objective = 0.0;
};

struct AttackReport {
  Tensor reconstruction;
  std::vector<double> objective_trace;  // value at the start and after every step
  double final_objective = 0.0;
  double psnr = 0.0;  // filled by evaluation
  double ssim = 0.0;  // filled by evaluation
  std::size_t restart_index = 0;
  LabelHypothesis hypothesis;
  BaselinePoint ca_g;
  BaselinePoint ca_t;  // of the final reconstruction
  bool ca_g_fallback = false;
  bool ca_t_fallback = false;
  std::size_t ca_t_fallback_iterations = 0;
  std::size_t nudges = 0;
  double wall_time = 0.0;
  std::vector<RestartOutcome> restarts;

  double ca_error() const;  // Euclidean distance between ca_t and ca_g
};

struct AttackOptions {
  // Test-only starting point in place of the Gaussian draw.
  std::optional<Tensor> initial_guess;
  // Run restarts on OpenMP threads; the result is identical either way.
  bool parallel = true;
};

// Label hypothesis the strategy attacks with: NCB labels for MGIC when an NCB is
// given, otherwise the cross-entropy-sign label (most negative bias gradient
// for multi-hot captures).
LabelHypothesis strategy_hypothesis(const ModelGraph& model, const NCBGraph* ncb,
                                    const GradientCapture& capture, const AttackConfig& cfg);

// Adam reconstruction with restarts; the restart with the lowest final objective
// wins (lower index on ties). MismatchError if the capture is not from `model`;
// AttackError when every restart fails.
AttackReport run_attack(const ModelGraph& model, const NCBGraph* ncb, const GradientCapture& capture,
                        const AttackConfig& cfg, const AttackOptions& options = {});

}  // namespace glab
