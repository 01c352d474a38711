#include "glab/tape.hpp"

#include <string>

#include "glab/errors.hpp"
#include "glab/ops.hpp"

namespace glab {

Tape& Var::tape() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(*this); }

void Tape::check_owned(const Var& v) const {
  if (!v.valid() || v.tape_ != this || v.id_ >= nodes_.size()) {
    throw ContractError("Var does not belong to this tape");
  }
}

Var Tape::leaf(Tensor value) {
  Node node;
  node.needs_grad = value.requires_grad();
  node.leaf = true;
  node.value = std::move(value);
  node.value.check_finite("leaf");
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  value.set_requires_grad(false);
  return leaf(std::move(value));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardRule rule, std::string_view op) {
  value.check_finite(op);
  bool needs = false;
  if (recording_) {
    for (const auto& in : inputs) {
      check_owned(in);
      needs = needs || nodes_[in.id_].needs_grad;
    }
  }
  Node node;
  node.value = std::move(value);
  node.value.set_requires_grad(false);
  node.needs_grad = needs;
  if (needs) {
    node.inputs = std::move(inputs);
    node.rule = std::move(rule);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::vector<Var> Tape::grad(const Var& output, std::span<const Var> wrt, bool create_graph) {
  check_owned(output);
  if (nodes_[output.id_].value.size() != 1) {
    throw ContractError("gradient requested of non-scalar output with shape " +
                        shape_string(nodes_[output.id_].value.shape()));
  }
  const std::size_t count = output.id_ + 1;
  std::vector<char> target(count, 0);
  for (const auto& w : wrt) {
    check_owned(w);
    if (w.id_ < count) target[w.id_] = 1;
  }
  // relevant: lies on a path from some wrt node to the output.
  std::vector<char> relevant(count, 0);
  for (std::size_t i = 0; i < count; ++i) {
    const Node& node = nodes_[i];
    if (!node.needs_grad) continue;
    if (target[i]) {
      relevant[i] = 1;
      continue;
    }
    for (const auto& in : node.inputs) {
      if (relevant[in.id_]) {
        relevant[i] = 1;
        break;
      }
    }
  }

  const bool saved = recording_;
  recording_ = create_graph;
  std::vector<Var> grads(count);
  try {
    if (relevant[output.id_]) {
      grads[output.id_] = constant(Tensor(nodes_[output.id_].value.shape(), 1.0));
    }
    for (std::size_t i = count; i-- > 0;) {
      if (!relevant[i] || !grads[i].valid()) continue;
      if (nodes_[i].leaf || !nodes_[i].rule) continue;
      const std::vector<Var> inputs = nodes_[i].inputs;
      const BackwardRule rule = nodes_[i].rule;
      std::vector<char> want(inputs.size());
      for (std::size_t j = 0; j < inputs.size(); ++j) want[j] = relevant[inputs[j].id_];
      std::vector<Var> contribs = rule(inputs, grads[i], want);
      for (std::size_t j = 0; j < inputs.size() && j < contribs.size(); ++j) {
        const std::size_t id = inputs[j].id_;
        if (!contribs[j].valid() || !relevant[id]) continue;
        if (contribs[j].shape() != nodes_[id].value.shape()) {
          throw DimensionError("backward rule produced gradient of shape " +
                               shape_string(contribs[j].shape()) + " for input of shape " +
                               shape_string(nodes_[id].value.shape()));
        }
        grads[id] = grads[id].valid() ? add(grads[id], contribs[j]) : contribs[j];
      }
      if (!target[i]) grads[i] = Var();
    }
  } catch (...) {
    recording_ = saved;
    throw;
  }
  recording_ = saved;

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (w.id_ < count && grads[w.id_].valid()) {
      result.push_back(grads[w.id_]);
    } else {
      result.push_back(constant(Tensor(nodes_[w.id_].value.shape(), 0.0)));
    }
  }
  return result;
}

void Tape::backward(const Var& output) {
  check_owned(output);
  if (consumed_) throw ContractError("tape already consumed by a backward pass; call rearm()");
  if (nodes_[output.id_].value.size() != 1) {
    throw ContractError("backward on non-scalar output with shape " +
                        shape_string(nodes_[output.id_].value.shape()));
  }
  std::vector<Var> leaves;
  for (std::size_t i = 0; i <= output.id_; ++i) {
    if (nodes_[i].leaf && nodes_[i].needs_grad) leaves.push_back(Var(this, i));
  }
  const std::size_t mark = nodes_.size();
  const std::vector<Var> grads = grad(output, leaves, false);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    nodes_[leaves[i].id_].value.accumulate_grad(grads[i].value().data());
  }
  while (nodes_.size() > mark) nodes_.pop_back();
  consumed_ = true;
}

const Tensor& Tape::value(const Var& v) const {
  check_owned(v);
  return nodes_[v.id_].value;
}

const Tensor& Tape::leaf_tensor(const Var& v) const {
  check_owned(v);
  if (!nodes_[v.id_].leaf) throw ContractError("Var is not a leaf");
  return nodes_[v.id_].value;
}

bool Tape::needs_grad(const Var& v) const {
  check_owned(v);
  return nodes_[v.id_].needs_grad;
}

void Tape::zero_grads() {
  for (auto& node : nodes_) {
    if (node.leaf && node.needs_grad) node.value.zero_grad();
  }
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
  recording_ = true;
}

}  // namespace glab
