#include "rewardchain/tape.hpp"

#include <algorithm>
#include <cmath>

namespace rc {

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::dot: return "dot";
    case Op::scale: return "scale";
    case Op::axpby_rows: return "axpby_rows";
    case Op::matmul: return "matmul";
    case Op::add_bias: return "add_bias";
    case Op::concat_rows: return "concat_rows";
    case Op::concat_cols: return "concat_cols";
    case Op::slice_rows: return "slice_rows";
    case Op::slice_cols: return "slice_cols";
    case Op::gather_rows: return "gather_rows";
    case Op::mean_rows: return "mean_rows";
    case Op::repeat_rows: return "repeat_rows";
    case Op::transpose: return "transpose";
    case Op::reshape: return "reshape";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::tanh: return "tanh";
    case Op::silu: return "silu";
    case Op::exp: return "exp";
    case Op::mul_scalar: return "mul_scalar";
    case Op::sum_squares: return "sum_squares";
    case Op::squared_error: return "squared_error";
    case Op::row_norm: return "row_norm";
    case Op::cosine_rows: return "cosine_rows";
    case Op::normalize_rows: return "normalize_rows";
    case Op::cross_entropy: return "cross_entropy";
    case Op::segment: return "segment";
    case Op::segment_output: return "segment_output";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("value() on an empty Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

void ActivationMeter::update_peaks() {
  peak_interior = std::max(peak_interior, interior_live);
  peak_total = std::max(peak_total, interior_live + boundary_live);
}

Tape::Tape(Precision precision) : precision_(precision), meter_(std::make_shared<ActivationMeter>()) {}

Tape::Tape(Tape* parent, std::shared_ptr<ActivationMeter> meter)
    : precision_(parent->precision_), debug_(parent->debug_), parent_(parent), meter_(std::move(meter)) {}

Tape::~Tape() {
  for (const Node& n : nodes_) {
    if (!n.counted) continue;
    if (n.op == Op::segment_output) {
      --meter_->boundary_live;
    } else {
      --meter_->interior_live;
    }
  }
}

void Tape::reset_meter_peaks() {
  meter_->peak_interior = meter_->interior_live;
  meter_->peak_total = meter_->interior_live + meter_->boundary_live;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  value.round_to(precision_);
  if (debug_ && !value.all_finite()) throw NonFiniteError("non-finite value in leaf tensor");
  Node n;
  n.op = Op::leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  pending_.push_back(0);
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Tape::record(Op op, Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
  value.round_to(precision_);
  if (debug_ && !value.all_finite()) {
    throw NonFiniteError(std::string("non-finite value produced by op '") + op_name(op) + "'");
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (NodeId id : inputs) {
    if (id >= nodes_.size()) throw std::out_of_range("op input refers to a node not on this tape");
    n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  if (op != Op::leaf && op != Op::segment) {
    n.counted = true;
    if (op == Op::segment_output) {
      ++meter_->boundary_live;
    } else {
      ++meter_->interior_live;
    }
    meter_->update_peaks();
  }
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  pending_.push_back(0);
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

void Tape::accumulate(NodeId id, std::span<const double> contribution) {
  Node& n = nodes_.at(id);
  if (n.alias) {
    parent_->accumulate(*n.alias, contribution);
    return;
  }
  if (!n.requires_grad) return;
  std::vector<double>& g = grads_[id];
  if (contribution.size() != n.value.numel()) {
    throw std::logic_error(std::string("gradient size mismatch at op '") + op_name(n.op) + "'");
  }
  if (g.empty()) g.assign(n.value.numel(), 0.0);
  if (precision_ == Precision::f32) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = round_f32(g[i] + round_f32(contribution[i]));
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution[i];
  }
}

void Tape::mark_pending(NodeId id) { pending_.at(id) = 1; }

void Tape::clear_grads() {
  for (auto& g : grads_) {
    g.clear();
    g.shrink_to_fit();
  }
  std::fill(pending_.begin(), pending_.end(), 0);
}

void Tape::run_reverse(std::size_t count) {
  for (std::size_t k = count; k-- > 0;) {
    Node& n = nodes_[k];
    const bool has_grad = !grads_[k].empty();
    if (!has_grad && !pending_[k]) continue;
    if (!n.backward) continue;
    if (debug_ && has_grad) {
      for (double g : grads_[k]) {
        if (!std::isfinite(g)) {
          throw NonFiniteError(std::string("non-finite gradient during backward at op '") + op_name(n.op) + "'");
        }
      }
    }
    // copied: rules read their own gradient while writing others
    const std::vector<double> gout = grads_[k];
    n.backward(*this, gout);
  }
}

GradMap Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("loss does not belong to this tape");
  const Tensor& lv = value(loss.id());
  if (lv.rank() != 0) throw std::invalid_argument("backward requires a rank-0 loss, got shape " + shape_str(lv.shape()));
  clear_grads();
  if (nodes_[loss.id()].requires_grad) {
    grads_[loss.id()].assign(1, 1.0);
    run_reverse(static_cast<std::size_t>(loss.id()) + 1);
  }
  GradMap out;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    const Node& n = nodes_[k];
    if (n.op != Op::leaf || !n.requires_grad || n.alias) continue;
    if (grads_[k].empty()) {
      out.emplace(static_cast<NodeId>(k), Tensor::zeros(n.value.shape()));
    } else {
      out.emplace(static_cast<NodeId>(k), Tensor(n.value.shape(), grads_[k]));
    }
  }
  return out;
}

std::optional<Tensor> Tape::grad(NodeId id) const {
  if (id >= nodes_.size() || grads_[id].empty()) return std::nullopt;
  return Tensor(nodes_[id].value.shape(), grads_[id]);
}

namespace {

struct SegmentState {
  SegmentFn fn;
  std::vector<NodeId> input_ids;
  std::size_t recorded_length = 0;
  std::vector<Tensor> outputs;
  std::vector<std::vector<double>> out_grads;
};

void check_outputs(const Tape& sub, const std::vector<Var>& outs) {
  for (const Var& v : outs) {
    if (v.tape() != &sub) throw std::invalid_argument("checkpoint segment returned a value from another tape");
  }
}

}  // namespace

std::vector<Var> checkpoint_segment(Tape& tape, const SegmentFn& fn, std::span<const Var> inputs) {
  bool any_grad = false;
  for (const Var& v : inputs) {
    if (v.tape() != &tape) throw std::invalid_argument("checkpoint boundary input belongs to another tape");
    any_grad = any_grad || v.requires_grad();
  }

  auto state = std::make_shared<SegmentState>();
  state->fn = fn;
  {
    Tape sub(&tape, tape.meter_);
    std::vector<Var> sub_inputs;
    sub_inputs.reserve(inputs.size());
    for (const Var& v : inputs) {
      sub_inputs.push_back(sub.leaf(v.value(), false));
      state->input_ids.push_back(v.id());
    }
    std::vector<Var> outs = fn(sub_inputs);
    check_outputs(sub, outs);
    state->recorded_length = sub.size();
    for (const Var& o : outs) state->outputs.push_back(o.value());
  }
  state->out_grads.resize(state->outputs.size());

  std::vector<Var> result;
  if (!any_grad) {
    for (const Tensor& t : state->outputs) result.push_back(tape.constant(t));
    return result;
  }

  BackwardFn replay = [state](Tape& t, std::span<const double>) {
    Tape sub(&t, t.meter_);
    std::vector<Var> sub_inputs;
    sub_inputs.reserve(state->input_ids.size());
    for (NodeId outer : state->input_ids) {
      Var v = sub.leaf(t.value(outer), t.requires_grad(outer));
      sub.nodes_[v.id()].alias = outer;
      sub_inputs.push_back(v);
    }
    std::vector<Var> outs = state->fn(sub_inputs);
    check_outputs(sub, outs);
    if (sub.size() != state->recorded_length) {
      throw std::runtime_error("checkpoint replay recorded " + std::to_string(sub.size()) + " nodes, expected " +
                               std::to_string(state->recorded_length));
    }
    for (std::size_t k = 0; k < outs.size(); ++k) {
      if (!outs[k].value().bit_equal(state->outputs[k])) {
        throw std::runtime_error("checkpoint replay produced a different output; segment is not pure");
      }
    }
    for (std::size_t k = 0; k < outs.size(); ++k) {
      if (!state->out_grads[k].empty()) sub.accumulate(outs[k].id(), state->out_grads[k]);
      state->out_grads[k].clear();
    }
    sub.run_reverse(sub.size());
  };

  Var seg = tape.record(Op::segment, Tensor::scalar(0.0), state->input_ids, std::move(replay));
  const NodeId seg_id = seg.id();
  for (std::size_t k = 0; k < state->outputs.size(); ++k) {
    BackwardFn stash = [state, k, seg_id](Tape& t, std::span<const double> g) {
      state->out_grads[k].assign(g.begin(), g.end());
      t.mark_pending(seg_id);
    };
    result.push_back(tape.record(Op::segment_output, state->outputs[k], {seg_id}, std::move(stash)));
  }
  return result;
}

std::vector<Tensor> finite_diff_grad(const ScalarFn& f, std::span<const Tensor> params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be positive");
  std::vector<Tensor> work(params.begin(), params.end());
  auto eval = [&]() {
    Tensor v = f(work);
    if (v.numel() != 1) throw std::invalid_argument("finite_diff_grad: function is not scalar-valued");
    return v.item();
  };
  std::vector<Tensor> grads;
  grads.reserve(work.size());
  for (std::size_t p = 0; p < work.size(); ++p) {
    Tensor g(work[p].shape());
    for (std::size_t i = 0; i < work[p].numel(); ++i) {
      const double orig = work[p][i];
      work[p][i] = orig + h;
      const double fp = eval();
      work[p][i] = orig - h;
      const double fm = eval();
      work[p][i] = orig;
      g[i] = (fp - fm) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace rc
