#include "glab/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include <omp.h>

#include "glab/errors.hpp"
#include "glab/ops.hpp"
#include "glab/optim.hpp"

namespace glab {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::dlg: return "DLG";
    case Strategy::ggi: return "GGI";
    case Strategy::cpl: return "CPL";
    case Strategy::mgic: return "MGIC";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "dlg") return Strategy::dlg;
  if (lower == "ggi") return Strategy::ggi;
  if (lower == "cpl") return Strategy::cpl;
  if (lower == "mgic") return Strategy::mgic;
  throw ConfigError("unknown strategy \"" + std::string(name) + "\" (expected DLG, GGI, CPL or MGIC)");
}

void AttackConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("attack.") + what);
  };
  require(alpha_tv >= 0 && alpha_l2 >= 0 && alpha_ca >= 0 && alpha_cpl >= 0,
          "alpha_* must be nonnegative");
  require(lr > 0, "lr must be positive");
  require(max_iterations > 0, "max_iterations must be positive");
  require(restarts > 0, "restarts must be positive");
  require(max_labels > 0, "max_labels must be positive");
  require(label_threshold_factor > 0 && label_threshold_factor <= 1,
          "label_threshold_factor must be in (0, 1]");
  require(ncb_scale > 0, "ncb_scale must be positive");
  require(ca_nudge >= 0 && ca_nudge <= 1, "ca_nudge must be in [0, 1]");
}

// ---- labels ----

namespace {

const Tensor& head_weight_grad(const GradientCapture& c) {
  if (c.grads.size() < 2 || c.grads[c.grads.size() - 2].value.rank() != 2) {
    throw ContractError("capture does not end in a fully-connected layer");
  }
  return c.grads[c.grads.size() - 2].value;
}

const Tensor& head_bias_grad(const GradientCapture& c) {
  head_weight_grad(c);
  const Tensor& b = c.grads.back().value;
  if (b.rank() != 1 || b.size() != c.class_count) {
    throw ContractError("capture head bias gradient has shape " + shape_string(b.shape()));
  }
  return b;
}

}  // namespace

LabelHypothesis infer_single_label(const GradientCapture& capture) {
  if (capture.loss_kind != LossKind::cross_entropy) {
    throw AmbiguousLabelError("sign-based label inference needs a single-label cross-entropy capture");
  }
  const Tensor& b = head_bias_grad(capture);
  std::vector<std::size_t> negative;
  for (std::size_t k = 0; k < b.size(); ++k) {
    if (b[k] < -1e-12) negative.push_back(k);
  }
  if (negative.size() != 1) {
    std::string list;
    for (std::size_t k : negative) list += (list.empty() ? "" : ", ") + std::to_string(k);
    throw AmbiguousLabelError("expected exactly one negative head-bias gradient, found " +
                              std::to_string(negative.size()) + (list.empty() ? "" : " (" + list + ")"));
  }
  return {{negative[0]}, {b[negative[0]]}, LabelMethod::cross_entropy_sign};
}

LabelHypothesis most_negative_label(const GradientCapture& capture) {
  const Tensor& b = head_bias_grad(capture);
  const auto it = std::min_element(b.data().begin(), b.data().end());
  const auto k = static_cast<std::size_t>(it - b.data().begin());
  return {{k}, {*it}, LabelMethod::cross_entropy_sign};
}

std::vector<double> ncb_scores(const GradientCapture& capture, const NCBGraph& ncb, double scale) {
  const Tensor& g = head_weight_grad(capture);
  if (g.dim(0) != ncb.class_count() || g.dim(1) != ncb.feature_count()) {
    throw DimensionError("NCB expects a [" + std::to_string(ncb.class_count()) + ", " +
                         std::to_string(ncb.feature_count()) + "] gradient, capture has " +
                         shape_string(g.shape()));
  }
  Tensor scaled = g.reshaped(ncb.input_shape());
  for (auto& v : scaled.data()) v *= scale;
  return ncb.scores(scaled);
}

LabelHypothesis select_labels(const std::vector<double>& scores, double factor, std::size_t max_labels,
                              std::optional<std::size_t> required) {
  if (scores.empty() || max_labels == 0) throw ContractError("select_labels: nothing to select");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double anchor = required ? scores.at(*required) : scores[order[0]];
  std::vector<std::size_t> chosen;
  for (std::size_t k : order) {
    if (chosen.size() == max_labels) break;
    if (scores[k] > factor * anchor) chosen.push_back(k);
  }
  if (required && std::find(chosen.begin(), chosen.end(), *required) == chosen.end()) {
    if (chosen.size() == max_labels) chosen.pop_back();
    chosen.push_back(*required);
  }
  if (chosen.empty()) chosen.push_back(order[0]);
  std::sort(chosen.begin(), chosen.end());
  LabelHypothesis h;
  h.labels = chosen;
  for (std::size_t k : chosen) h.scores.push_back(scores[k]);
  h.method = LabelMethod::ncb;
  return h;
}

LabelHypothesis infer_multi_label(const GradientCapture& capture, const NCBGraph& ncb,
                                  const AttackConfig& cfg) {
  const auto scores = ncb_scores(capture, ncb, cfg.ncb_scale);
  std::optional<std::size_t> required;
  if (capture.loss_kind == LossKind::cross_entropy) required = most_negative_label(capture).labels[0];
  return select_labels(scores, cfg.label_threshold_factor, cfg.max_labels, required);
}

// ---- regularizers ----

Var r_tv(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("r_tv: need at least [H, W]");
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  const std::size_t planes = x.size() / (h * w);
  const std::size_t terms = planes * ((h - 1) * w + h * (w - 1));
  if (terms == 0) return scale(sum(x), 0.0);
  return scale(total_variation(x), 1.0 / static_cast<double>(terms));
}

Var r_l2(const Var& x) { return sum_squares(x); }

BaselineResult canny_baseline(const Tensor& image) {
  const GrayImage gray = to_gray(image);
  const double top = gray.max();
  return baseline_from_edges(canny(gray, 0.8 * top, 0.9 * top));
}

double r_ca(const BaselinePoint& ca_t, const BaselinePoint& ca_g) { return point_distance_sq(ca_t, ca_g); }

BaselineResult gradient_baseline(const GradientCapture& capture, const ModelGraph& model) {
  const Shape& in = model.input_shape();
  return baseline_from_gradients(head_weight_grad(capture), in[1], in[2]);
}

// ---- objective ----

ObjectiveTerms objective(const Var& x_hat, const ModelGraph& model, const GradientCapture& capture,
                         const LabelHypothesis& hypothesis, const AttackConfig& cfg,
                         const BaselinePoint& ca_g) {
  Tape& tape = x_hat.tape();
  const auto params = model.bind(tape, true);
  if (capture.grads.size() != params.size()) throw MismatchError("capture does not match the model");
  const Var logits = model.forward(x_hat, params);
  const Var loss = classification_loss(logits, hypothesis.labels, capture.loss_kind);
  const auto dummy = tape.grad(loss, params, true);
  std::vector<Var> target;
  target.reserve(params.size());
  for (const auto& g : capture.grads) target.push_back(tape.constant(g.value));

  ObjectiveTerms t;
  const bool cosine = cfg.strategy == Strategy::ggi || cfg.strategy == Strategy::mgic;
  if (cosine) {
    t.total = add_scalar(neg(cosine_similarity(dummy, target)), 1.0);
  } else {
    t.total = sum_squares(sub(dummy[0], target[0]));
    for (std::size_t i = 1; i < params.size(); ++i) t.total = add(t.total, sum_squares(sub(dummy[i], target[i])));
  }
  t.gradient_match = t.total.item();

  if (cfg.strategy == Strategy::cpl) {
    Tensor y(logits.shape(), 0.0);
    for (std::size_t k : hypothesis.labels) y[k] = 1.0;
    const Var penalty = sum_squares(sub(logits, tape.constant(y)));
    t.cpl = penalty.item();
    t.total = add(t.total, scale(penalty, cfg.alpha_cpl));
  }
  if (cosine) {
    const Var tv = r_tv(x_hat);
    t.tv = tv.item();
    t.total = add(t.total, scale(tv, cfg.alpha_tv));
  }
  if (cfg.strategy == Strategy::mgic) {
    const Var l2 = r_l2(x_hat);
    t.l2 = l2.item();
    t.total = add(t.total, scale(l2, cfg.alpha_l2));
    t.ca_t = canny_baseline(x_hat.value());
    t.ca = r_ca(t.ca_t.point, ca_g);
    t.total = add_scalar(t.total, cfg.alpha_ca * t.ca);
  }
  return t;
}

// ---- reconstruction ----

double AttackReport::ca_error() const { return std::sqrt(point_distance_sq(ca_t, ca_g)); }

LabelHypothesis strategy_hypothesis(const ModelGraph& model, const NCBGraph* ncb,
                                    const GradientCapture& capture, const AttackConfig& cfg) {
  (void)model;
  if (cfg.strategy == Strategy::mgic && ncb) return infer_multi_label(capture, *ncb, cfg);
  if (capture.loss_kind == LossKind::cross_entropy) return infer_single_label(capture);
  return most_negative_label(capture);
}

namespace {

// Moves the window around `from` one pixel toward `to` and blends the result in.
void nudge(Tensor& x, const BaselinePoint& from, const BaselinePoint& to, std::size_t half, double weight) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const long dr = (to.row > from.row) - (to.row < from.row);
  const long dc = (to.col > from.col) - (to.col < from.col);
  const long r0 = static_cast<long>(from.row) - static_cast<long>(half);
  const long c0 = static_cast<long>(from.col) - static_cast<long>(half);
  const long span = 2 * static_cast<long>(half) + 1;
  const Tensor src = x;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (long r = r0; r < r0 + span; ++r) {
      for (long q = c0; q < c0 + span; ++q) {
        const long tr = r + dr, tq = q + dc;
        if (r < 0 || q < 0 || tr < 0 || tq < 0) continue;
        if (r >= static_cast<long>(h) || tr >= static_cast<long>(h) || q >= static_cast<long>(w) ||
            tq >= static_cast<long>(w)) {
          continue;
        }
        const std::size_t dst = (ch * h + static_cast<std::size_t>(tr)) * w + static_cast<std::size_t>(tq);
        const std::size_t from_i = (ch * h + static_cast<std::size_t>(r)) * w + static_cast<std::size_t>(q);
        x[dst] = (1.0 - weight) * src[dst] + weight * src[from_i];
      }
    }
  }
}

struct RestartResult {
  RestartOutcome outcome;
  Tensor x;
  std::vector<double> trace;
  std::size_t ca_fallbacks = 0;
  std::size_t nudges = 0;
};

RestartResult run_restart(const ModelGraph& model, const GradientCapture& capture,
                          const LabelHypothesis& hypothesis, const AttackConfig& cfg,
                          const BaselinePoint& ca_g, std::uint64_t seed,
                          const std::optional<Tensor>& initial) {
  RestartResult res;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  res.x = Tensor(model.input_shape());
  if (initial) {
    if (initial->shape() != model.input_shape()) throw DimensionError("initial guess has the wrong shape");
    res.x = *initial;
  } else {
    for (auto& v : res.x.data()) v = gauss(rng);
  }
  res.x.set_requires_grad(false);
  Adam adam(res.x.size(), AdamOptions{.lr = cfg.lr});
  const bool nudging = cfg.strategy == Strategy::mgic && cfg.ca_mode == CaMode::nudge && cfg.ca_nudge > 0;
  res.trace.reserve(cfg.max_iterations + 1);
  try {
    for (std::size_t it = 0; it <= cfg.max_iterations; ++it) {
      Tape tape;
      Tensor leaf = res.x;
      leaf.set_requires_grad(it < cfg.max_iterations);
      const Var x = tape.leaf(std::move(leaf));
      const ObjectiveTerms terms = objective(x, model, capture, hypothesis, cfg, ca_g);
      res.trace.push_back(terms.total.item());
      if (terms.ca_t.fallback) ++res.ca_fallbacks;
      if (it == cfg.max_iterations) break;
      const Var wrt[] = {x};
      const auto g = tape.grad(terms.total, wrt, false);
      adam.step(res.x.data(), g[0].value().data());
      if (cfg.clamp_pixels) {
        for (auto& v : res.x.data()) v = std::clamp(v, 0.0, 1.0);
      }
      if (nudging && terms.ca > 0.0) {
        const BaselineResult now = canny_baseline(res.x);
        if (!(now.point == ca_g)) {
          nudge(res.x, now.point, ca_g, cfg.ca_window, cfg.ca_nudge);
          ++res.nudges;
        }
      }
      res.x.check_finite("attack step");
    }
    res.outcome.final_objective = res.trace.back();
  } catch (const NumericError& e) {
    res.outcome.failed = true;
    res.outcome.diagnostic = std::string("numeric failure: ") + e.what();
  } catch (const DegenerateInputError& e) {
    res.outcome.failed = true;
    res.outcome.diagnostic = std::string("degenerate gradients: ") + e.what();
  }
  return res;
}

}  // namespace

AttackReport run_attack(const ModelGraph& model, const NCBGraph* ncb, const GradientCapture& capture,
                        const AttackConfig& cfg, const AttackOptions& options) {
  cfg.validate();
  check_capture_matches(capture, model);
  const auto start = std::chrono::steady_clock::now();

  AttackReport report;
  report.hypothesis = strategy_hypothesis(model, ncb, capture, cfg);
  const BaselineResult ca_g = gradient_baseline(capture, model);
  report.ca_g = ca_g.point;
  report.ca_g_fallback = ca_g.fallback;

  // Each run: (restart seed offset, label subset).
  std::vector<LabelHypothesis> hyps;
  std::vector<std::uint64_t> seeds;
  const bool split = cfg.per_label_restarts && cfg.strategy == Strategy::mgic && report.hypothesis.labels.size() > 1;
  const std::size_t groups = split ? report.hypothesis.labels.size() : 1;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    LabelHypothesis h = report.hypothesis;
    if (split) {
      h.labels = {report.hypothesis.labels[gi]};
      h.scores = {report.hypothesis.scores[gi]};
    }
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
      hyps.push_back(h);
      seeds.push_back(cfg.seed + gi * cfg.restarts + r);
    }
  }

  const std::size_t runs = hyps.size();
  std::vector<RestartResult> results(runs);
  const bool parallel = options.parallel && runs > 1;
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (std::size_t r = 0; r < runs; ++r) {
    results[r] = run_restart(model, capture, hyps[r], cfg, ca_g.point, seeds[r], options.initial_guess);
  }

  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < runs; ++r) {
    report.restarts.push_back(results[r].outcome);
    if (results[r].outcome.failed) continue;
    if (!best || results[r].outcome.final_objective < results[*best].outcome.final_objective) best = r;
  }
  if (!best) {
    std::string why;
    for (std::size_t r = 0; r < runs; ++r) why += "\n  restart " + std::to_string(r) + ": " + results[r].outcome.diagnostic;
    throw AttackError("every restart failed:" + why);
  }
  RestartResult& win = results[*best];
  report.restart_index = *best;
  report.reconstruction = std::move(win.x);
  report.objective_trace = std::move(win.trace);
  report.final_objective = report.objective_trace.back();
  report.ca_t_fallback_iterations = win.ca_fallbacks;
  report.nudges = win.nudges;
  const BaselineResult ca_t = canny_baseline(report.reconstruction);
  report.ca_t = ca_t.point;
  report.ca_t_fallback = ca_t.fallback;
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace glab
