#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rewardchain/tensor.hpp"

namespace rc {

using NodeId = std::uint32_t;

enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  dot,
  scale,
  axpby_rows,
  matmul,
  add_bias,
  concat_rows,
  concat_cols,
  slice_rows,
  slice_cols,
  gather_rows,
  mean_rows,
  repeat_rows,
  transpose,
  reshape,
  sum,
  mean,
  tanh,
  silu,
  exp,
  mul_scalar,
  sum_squares,
  squared_error,
  row_norm,
  cosine_rows,
  normalize_rows,
  cross_entropy,
  segment,
  segment_output,
};

const char* op_name(Op op);

/// Raised when a NaN/Inf is trapped in debug evaluation mode.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  NodeId id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Live activation counters shared by a tape and the sub-tapes it spawns for
/// checkpoint segments. "Interior" values are intermediate op results;
/// "boundary" values are segment outputs kept on the recording tape.
struct ActivationMeter {
  std::size_t interior_live = 0;
  std::size_t boundary_live = 0;
  std::size_t peak_interior = 0;
  std::size_t peak_total = 0;

  void update_peaks();
};

/// Gradients of a scalar loss, keyed by the leaf node id.
using GradMap = std::map<NodeId, Tensor>;

/// Receives the node's output gradient and pushes contributions to inputs via
/// Tape::accumulate.
using BackwardFn = std::function<void(Tape&, std::span<const double> grad_out)>;

/// Define-by-run reverse-mode tape. Nodes are appended during the forward pass
/// and visited in strict reverse creation order by backward().
class Tape {
 public:
  explicit Tape(Precision precision = Precision::f32);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Precision precision() const { return precision_; }
  void set_debug(bool on) { debug_ = on; }
  bool debug() const { return debug_; }
  std::size_t size() const { return nodes_.size(); }
  const ActivationMeter& meter() const { return *meter_; }
  void reset_meter_peaks();

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  Op op(NodeId id) const { return nodes_.at(id).op; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }

  /// Appends an op node. `value` is rounded to the tape precision; the backward
  /// rule is dropped when no input requires a gradient.
  Var record(Op op, Tensor value, std::vector<NodeId> inputs, BackwardFn backward);

  /// Adds `contribution` into the gradient buffer of `id` (or of the outer node
  /// it aliases, for segment replays).
  void accumulate(NodeId id, std::span<const double> contribution);
  /// Marks a node for visiting during backward even without a gradient buffer.
  void mark_pending(NodeId id);

  /// Reverse sweep from a rank-0 loss. Every requires_grad leaf appears in the
  /// result; unreachable ones carry zeros.
  GradMap backward(Var loss);

  /// Gradient buffer of a node after backward(), if it received one.
  std::optional<Tensor> grad(NodeId id) const;

 private:
  friend std::vector<Var> checkpoint_segment(
      Tape& tape, const std::function<std::vector<Var>(std::span<const Var>)>& fn, std::span<const Var> inputs);

  struct Node {
    Op op = Op::leaf;
    Tensor value;
    std::vector<NodeId> inputs;
    bool requires_grad = false;
    bool counted = false;
    BackwardFn backward;
    // Segment replays: this leaf forwards its gradient to parent_->node(alias).
    std::optional<NodeId> alias;
  };

  Tape(Tape* parent, std::shared_ptr<ActivationMeter> meter);
  void clear_grads();
  void run_reverse(std::size_t stop_before_end);

  Precision precision_;
  bool debug_ = false;
  Tape* parent_ = nullptr;
  std::shared_ptr<ActivationMeter> meter_;
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  std::vector<char> pending_;
};

using SegmentFn = std::function<std::vector<Var>(std::span<const Var>)>;

/// Evaluates `fn` on private copies of `inputs` and records only the segment's
/// outputs on `tape`. During backward the segment is replayed in identical op
/// order to rebuild its interior activations, so gradients match an unsegmented
/// evaluation bit for bit. `fn` must be a pure function of its arguments; using
/// any Var from another tape inside it raises std::invalid_argument.
std::vector<Var> checkpoint_segment(Tape& tape, const SegmentFn& fn, std::span<const Var> inputs);

/// Central-difference gradient estimate (f(p + h e_i) - f(p - h e_i)) / 2h for
/// every coordinate of every parameter. `f` must return a single-element tensor.
using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;
std::vector<Tensor> finite_diff_grad(const ScalarFn& f, std::span<const Tensor> params, double h);

}  // namespace rc
