#pragma once

#include <span>
#include <vector>

#include "rewardchain/tape.hpp"

// Differentiable ops. Every binary op requires its operands to live on the same
// tape; mixing tapes throws std::invalid_argument. Rank-2 ops treat rank-1
// inputs as a single row.
namespace rc::ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// out[r, :] = a[r] * x[r, :] + b[r] * y[r, :]. Coefficient spans hold either
/// one entry per row or a single entry broadcast to all rows. Coefficients are
/// constants: no gradient flows to them.
Var axpby_rows(Var x, Var y, std::span<const double> a, std::span<const double> b);
Var axpby(Var x, Var y, double a, double b);

Var matmul(Var a, Var b);
/// a[m, n] + bias[n] broadcast over rows.
Var add_bias(Var a, Var bias);
Var linear(Var x, Var weight, Var bias);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// Rows of `table` selected by `ids` -> [ids.size(), table.cols()].
Var gather_rows(Var table, std::span<const int> ids);
Var mean_rows(Var a);
Var repeat_rows(Var row, std::size_t count);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);
Var sum_squares(Var a);
/// mean((a - b)^2) over all elements.
Var squared_error(Var a, Var b);

Var tanh(Var a);
/// Sigmoid-weighted linear unit x * sigmoid(x).
Var silu(Var a);
Var exp(Var a);
/// a * s where s is a single-element Var.
Var mul_scalar(Var a, Var s);

/// Per-row L2 norm -> [rows].
Var row_norm(Var a);
/// Per-row cosine similarity -> [rows]. Throws if any row has (near) zero norm.
Var cosine_rows(Var a, Var b);
/// a[r, :] / max(||a[r, :]||, eps).
Var normalize_rows(Var a, double eps = 1e-8);
/// Mean over rows of -log softmax(logits[r, :])[labels[r]].
Var cross_entropy(Var logits, std::span<const int> labels);

/// Constant copy of a value with no gradient path.
Var detach(Var a);

}  // namespace rc::ops
