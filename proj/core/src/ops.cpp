#include "rewardchain/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rc::ops {

namespace {

Tape& tape_of(std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw std::invalid_argument("op received an empty Var");
    if (t && v.tape() != t) throw std::invalid_argument("op operands belong to different tapes");
    t = v.tape();
  }
  return *t;
}

Tape& tape_of(std::span<const Var> vars) {
  if (vars.empty()) throw std::invalid_argument("op received no operands");
  Tape* t = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw std::invalid_argument("op received an empty Var");
    if (t && v.tape() != t) throw std::invalid_argument("op operands belong to different tapes");
    t = v.tape();
  }
  return *t;
}

void require_same_shape(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

void require_rank2ish(const Var& a, const char* what) {
  if (a.value().rank() > 2 || a.value().rank() == 0) {
    throw std::invalid_argument(std::string(what) + ": expected rank 1 or 2, got " + shape_str(a.shape()));
  }
}

Shape rows_cols(std::size_t r, std::size_t c) { return Shape{r, c}; }

using Buf = std::vector<double>;

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  const NodeId ia = a.id(), ib = b.id();
  return t.record(Op::add, std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::span<const double> g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  const NodeId ia = a.id(), ib = b.id();
  return t.record(Op::sub, std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::span<const double> g) {
    tp.accumulate(ia, g);
    Buf neg(g.begin(), g.end());
    for (double& x : neg) x = -x;
    tp.accumulate(ib, neg);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  const NodeId ia = a.id(), ib = b.id();
  return t.record(Op::mul, std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::span<const double> g) {
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    Buf da(g.size()), db(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] = g[i] * bv[i];
      db[i] = g[i] * av[i];
    }
    tp.accumulate(ia, da);
    tp.accumulate(ib, db);
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of({a});
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * s;
  const NodeId ia = a.id();
  return t.record(Op::scale, std::move(out), {ia}, [ia, s](Tape& tp, std::span<const double> g) {
    Buf d(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * s;
    tp.accumulate(ia, d);
  });
}

Var axpby_rows(Var x, Var y, std::span<const double> a, std::span<const double> b) {
  Tape& t = tape_of({x, y});
  require_same_shape(x, y, "axpby_rows");
  require_rank2ish(x, "axpby_rows");
  const std::size_t rows = x.value().rows(), cols = x.value().cols();
  auto expand = [rows](std::span<const double> c, const char* name) {
    if (c.size() == 1) return Buf(rows, c[0]);
    if (c.size() != rows) {
      throw std::invalid_argument(std::string("axpby_rows: coefficient '") + name + "' needs 1 or " +
                                  std::to_string(rows) + " entries");
    }
    return Buf(c.begin(), c.end());
  };
  Buf ca = expand(a, "a"), cb = expand(b, "b");
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      out[i] = ca[r] * x.value()[i] + cb[r] * y.value()[i];
    }
  }
  const NodeId ix = x.id(), iy = y.id();
  return t.record(Op::axpby_rows, std::move(out), {ix, iy},
                  [ix, iy, ca = std::move(ca), cb = std::move(cb), cols](Tape& tp, std::span<const double> g) {
                    Buf dx(g.size()), dy(g.size());
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      dx[i] = ca[i / cols] * g[i];
                      dy[i] = cb[i / cols] * g[i];
                    }
                    tp.accumulate(ix, dx);
                    tp.accumulate(iy, dy);
                  });
}

Var axpby(Var x, Var y, double a, double b) {
  const double ca[1] = {a};
  const double cb[1] = {b};
  return axpby_rows(x, y, ca, cb);
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of({a, b});
  if (a.value().rank() != 2 || b.value().rank() != 2) {
    throw std::invalid_argument("matmul: expected rank-2 operands, got " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  }
  const std::size_t m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(1);
  if (b.value().dim(0) != k) {
    throw std::invalid_argument("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  Tensor out(rows_cols(m, n));
  const auto& av = a.value().data();
  const auto& bv = b.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += av[i * k + p] * bv[p * n + j];
      out[i * n + j] = s;
    }
  }
  const NodeId ia = a.id(), ib = b.id();
  return t.record(Op::matmul, std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape& tp, std::span<const double> g) {
    const auto& A = tp.value(ia).data();
    const auto& B = tp.value(ib).data();
    if (tp.requires_grad(ia)) {
      Buf da(m * k);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B[p * n + j];
          da[i * k + p] = s;
        }
      }
      tp.accumulate(ia, da);
    }
    if (tp.requires_grad(ib)) {
      Buf db(k * n);
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < m; ++i) s += A[i * k + p] * g[i * n + j];
          db[p * n + j] = s;
        }
      }
      tp.accumulate(ib, db);
    }
  });
}

Var add_bias(Var a, Var bias) {
  Tape& t = tape_of({a, bias});
  require_rank2ish(a, "add_bias");
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  if (bias.value().numel() != cols) {
    throw std::invalid_argument("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                                shape_str(a.shape()));
  }
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = a.value()[r * cols + c] + bias.value()[c];
  }
  const NodeId ia = a.id(), ib = bias.id();
  return t.record(Op::add_bias, std::move(out), {ia, ib}, [ia, ib, rows, cols](Tape& tp, std::span<const double> g) {
    tp.accumulate(ia, g);
    Buf db(cols, 0.0);
    for (std::size_t c = 0; c < cols; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < rows; ++r) s += g[r * cols + c];
      db[c] = s;
    }
    tp.accumulate(ib, db);
  });
}

Var linear(Var x, Var weight, Var bias) { return add_bias(matmul(x, weight), bias); }

Var concat_rows(std::span<const Var> parts) {
  Tape& t = tape_of(parts);
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  std::vector<NodeId> ids;
  std::vector<std::size_t> counts;
  for (const Var& p : parts) {
    require_rank2ish(p, "concat_rows");
    if (p.value().cols() != cols) throw std::invalid_argument("concat_rows: column count mismatch");
    rows += p.value().rows();
    ids.push_back(p.id());
    counts.push_back(p.value().numel());
  }
  Tensor out(rows_cols(rows, cols));
  std::size_t off = 0;
  for (const Var& p : parts) {
    for (double v : p.value().data()) out[off++] = v;
  }
  return t.record(Op::concat_rows, std::move(out), ids, [ids, counts](Tape& tp, std::span<const double> g) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      tp.accumulate(ids[k], g.subspan(off, counts[k]));
      off += counts[k];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  Tape& t = tape_of(parts);
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  std::vector<NodeId> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    require_rank2ish(p, "concat_cols");
    if (p.value().rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p.value().cols();
    ids.push_back(p.id());
    widths.push_back(p.value().cols());
  }
  Tensor out(rows_cols(rows, cols));
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    const std::size_t w = p.value().cols();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < w; ++c) out[r * cols + c0 + c] = p.value()[r * w + c];
    }
    c0 += w;
  }
  return t.record(Op::concat_cols, std::move(out), ids,
                  [ids, widths, rows, cols](Tape& tp, std::span<const double> g) {
                    std::size_t c0 = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      const std::size_t w = widths[k];
                      Buf d(rows * w);
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < w; ++c) d[r * w + c] = g[r * cols + c0 + c];
                      }
                      tp.accumulate(ids[k], d);
                      c0 += w;
                    }
                  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tape& t = tape_of({a});
  require_rank2ish(a, "slice_rows");
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  if (begin >= end || end > rows) throw std::out_of_range("slice_rows: invalid range");
  Tensor out(rows_cols(end - begin, cols));
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[begin * cols + i];
  const NodeId ia = a.id();
  const std::size_t total = a.value().numel();
  return t.record(Op::slice_rows, std::move(out), {ia}, [ia, begin, cols, total](Tape& tp, std::span<const double> g) {
    Buf d(total, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) d[begin * cols + i] = g[i];
    tp.accumulate(ia, d);
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = tape_of({a});
  require_rank2ish(a, "slice_cols");
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  if (begin >= end || end > cols) throw std::out_of_range("slice_cols: invalid range");
  const std::size_t w = end - begin;
  Tensor out(rows_cols(rows, w));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = a.value()[r * cols + begin + c];
  }
  const NodeId ia = a.id();
  return t.record(Op::slice_cols, std::move(out), {ia},
                  [ia, begin, rows, cols, w](Tape& tp, std::span<const double> g) {
                    Buf d(rows * cols, 0.0);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < w; ++c) d[r * cols + begin + c] = g[r * w + c];
                    }
                    tp.accumulate(ia, d);
                  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  Tape& t = tape_of({table});
  if (table.value().rank() != 2) throw std::invalid_argument("gather_rows: table must be rank 2");
  if (ids.empty()) throw std::invalid_argument("gather_rows: empty index list");
  const std::size_t vocab = table.value().dim(0), width = table.value().dim(1);
  std::vector<int> idx(ids.begin(), ids.end());
  for (int id : idx) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("gather_rows: index " + std::to_string(id) + " outside [0, " + std::to_string(vocab) +
                              ")");
    }
  }
  Tensor out(rows_cols(idx.size(), width));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      out[r * width + c] = table.value()[static_cast<std::size_t>(idx[r]) * width + c];
    }
  }
  const NodeId it = table.id();
  return t.record(Op::gather_rows, std::move(out), {it},
                  [it, idx = std::move(idx), vocab, width](Tape& tp, std::span<const double> g) {
                    Buf d(vocab * width, 0.0);
                    for (std::size_t r = 0; r < idx.size(); ++r) {
                      for (std::size_t c = 0; c < width; ++c) {
                        d[static_cast<std::size_t>(idx[r]) * width + c] += g[r * width + c];
                      }
                    }
                    tp.accumulate(it, d);
                  });
}

Var mean_rows(Var a) {
  Tape& t = tape_of({a});
  require_rank2ish(a, "mean_rows");
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  Tensor out(rows_cols(1, cols));
  for (std::size_t c = 0; c < cols; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += a.value()[r * cols + c];
    out[c] = s / static_cast<double>(rows);
  }
  const NodeId ia = a.id();
  return t.record(Op::mean_rows, std::move(out), {ia}, [ia, rows, cols](Tape& tp, std::span<const double> g) {
    Buf d(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] = g[c] / static_cast<double>(rows);
    }
    tp.accumulate(ia, d);
  });
}

Var repeat_rows(Var row, std::size_t count) {
  Tape& t = tape_of({row});
  if (count == 0) throw std::invalid_argument("repeat_rows: count must be positive");
  if (row.value().rows() != 1) throw std::invalid_argument("repeat_rows: expected a single row");
  const std::size_t cols = row.value().cols();
  Tensor out(rows_cols(count, cols));
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row.value()[c];
  }
  const NodeId ia = row.id();
  return t.record(Op::repeat_rows, std::move(out), {ia}, [ia, count, cols](Tape& tp, std::span<const double> g) {
    Buf d(cols);
    for (std::size_t c = 0; c < cols; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < count; ++r) s += g[r * cols + c];
      d[c] = s;
    }
    tp.accumulate(ia, d);
  });
}

Var transpose(Var a) {
  Tape& t = tape_of({a});
  if (a.value().rank() != 2) throw std::invalid_argument("transpose: expected rank 2");
  const std::size_t m = a.value().dim(0), n = a.value().dim(1);
  Tensor out(rows_cols(n, m));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.value()[i * n + j];
  }
  const NodeId ia = a.id();
  return t.record(Op::transpose, std::move(out), {ia}, [ia, m, n](Tape& tp, std::span<const double> g) {
    Buf d(m * n);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] = g[j * m + i];
    }
    tp.accumulate(ia, d);
  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of({a});
  Tensor out = a.value().reshaped(std::move(shape));
  const NodeId ia = a.id();
  return t.record(Op::reshape, std::move(out), {ia},
                  [ia](Tape& tp, std::span<const double> g) { tp.accumulate(ia, g); });
}

Var sum(Var a) {
  Tape& t = tape_of({a});
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const NodeId ia = a.id();
  const std::size_t n = a.value().numel();
  return t.record(Op::sum, Tensor::scalar(s), {ia}, [ia, n](Tape& tp, std::span<const double> g) {
    tp.accumulate(ia, Buf(n, g[0]));
  });
}

Var mean(Var a) {
  Tape& t = tape_of({a});
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t n = a.value().numel();
  const NodeId ia = a.id();
  return t.record(Op::mean, Tensor::scalar(s / static_cast<double>(n)), {ia},
                  [ia, n](Tape& tp, std::span<const double> g) {
                    tp.accumulate(ia, Buf(n, g[0] / static_cast<double>(n)));
                  });
}

Var dot(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().numel(); ++i) s += a.value()[i] * b.value()[i];
  const NodeId ia = a.id(), ib = b.id();
  return t.record(Op::dot, Tensor::scalar(s), {ia, ib}, [ia, ib](Tape& tp, std::span<const double> g) {
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    Buf da(av.numel()), db(av.numel());
    for (std::size_t i = 0; i < av.numel(); ++i) {
      da[i] = g[0] * bv[i];
      db[i] = g[0] * av[i];
    }
    tp.accumulate(ia, da);
    tp.accumulate(ib, db);
  });
}

Var sum_squares(Var a) {
  Tape& t = tape_of({a});
  double s = 0.0;
  for (double v : a.value().data()) s += v * v;
  const NodeId ia = a.id();
  return t.record(Op::sum_squares, Tensor::scalar(s), {ia}, [ia](Tape& tp, std::span<const double> g) {
    const Tensor& av = tp.value(ia);
    Buf d(av.numel());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = 2.0 * av[i] * g[0];
    tp.accumulate(ia, d);
  });
}

Var squared_error(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require_same_shape(a, b, "squared_error");
  const std::size_t n = a.value().numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  const NodeId ia = a.id(), ib = b.id();
  return t.record(Op::squared_error, Tensor::scalar(s / static_cast<double>(n)), {ia, ib},
                  [ia, ib, n](Tape& tp, std::span<const double> g) {
                    const Tensor& av = tp.value(ia);
                    const Tensor& bv = tp.value(ib);
                    Buf da(n), db(n);
                    for (std::size_t i = 0; i < n; ++i) {
                      const double d = 2.0 * (av[i] - bv[i]) / static_cast<double>(n) * g[0];
                      da[i] = d;
                      db[i] = -d;
                    }
                    tp.accumulate(ia, da);
                    tp.accumulate(ib, db);
                  });
}

Var tanh(Var a) {
  Tape& t = tape_of({a});
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(a.value()[i]);
  const NodeId ia = a.id();
  Tensor saved = out;
  saved.round_to(t.precision());
  return t.record(Op::tanh, std::move(out), {ia}, [ia, saved = std::move(saved)](Tape& tp, std::span<const double> g) {
    Buf d(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * (1.0 - saved[i] * saved[i]);
    tp.accumulate(ia, d);
  });
}

Var silu(Var a) {
  Tape& t = tape_of({a});
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double x = a.value()[i];
    out[i] = x / (1.0 + std::exp(-x));
  }
  const NodeId ia = a.id();
  return t.record(Op::silu, std::move(out), {ia}, [ia](Tape& tp, std::span<const double> g) {
    const Tensor& av = tp.value(ia);
    Buf d(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = av[i];
      const double s = 1.0 / (1.0 + std::exp(-x));
      d[i] = g[i] * s * (1.0 + x * (1.0 - s));
    }
    tp.accumulate(ia, d);
  });
}

Var exp(Var a) {
  Tape& t = tape_of({a});
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(a.value()[i]);
  const NodeId ia = a.id();
  Tensor saved = out;
  saved.round_to(t.precision());
  return t.record(Op::exp, std::move(out), {ia}, [ia, saved = std::move(saved)](Tape& tp, std::span<const double> g) {
    Buf d(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * saved[i];
    tp.accumulate(ia, d);
  });
}

Var mul_scalar(Var a, Var s) {
  Tape& t = tape_of({a, s});
  if (s.value().numel() != 1) throw std::invalid_argument("mul_scalar: scale must hold one element");
  const double sv = s.value()[0];
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * sv;
  const NodeId ia = a.id(), is = s.id();
  return t.record(Op::mul_scalar, std::move(out), {ia, is}, [ia, is](Tape& tp, std::span<const double> g) {
    const Tensor& av = tp.value(ia);
    const double sv = tp.value(is)[0];
    Buf da(g.size());
    double ds = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] = g[i] * sv;
      ds += g[i] * av[i];
    }
    tp.accumulate(ia, da);
    const double dsv[1] = {ds};
    tp.accumulate(is, dsv);
  });
}

Var row_norm(Var a) {
  Tape& t = tape_of({a});
  require_rank2ish(a, "row_norm");
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  Tensor out(Shape{rows});
  Buf norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += a.value()[r * cols + c] * a.value()[r * cols + c];
    norms[r] = std::sqrt(s);
    out[r] = norms[r];
  }
  const NodeId ia = a.id();
  return t.record(Op::row_norm, std::move(out), {ia},
                  [ia, rows, cols, norms = std::move(norms)](Tape& tp, std::span<const double> g) {
                    const Tensor& av = tp.value(ia);
                    Buf d(rows * cols, 0.0);
                    for (std::size_t r = 0; r < rows; ++r) {
                      if (norms[r] == 0.0) continue;
                      for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] = g[r] * av[r * cols + c] / norms[r];
                    }
                    tp.accumulate(ia, d);
                  });
}

Var cosine_rows(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require_same_shape(a, b, "cosine_rows");
  require_rank2ish(a, "cosine_rows");
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  Buf na(rows), nb(rows), cosv(rows);
  Tensor out(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double sa = 0.0, sb = 0.0, sab = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = a.value()[r * cols + c], y = b.value()[r * cols + c];
      sa += x * x;
      sb += y * y;
      sab += x * y;
    }
    na[r] = std::sqrt(sa);
    nb[r] = std::sqrt(sb);
    if (na[r] < 1e-12 || nb[r] < 1e-12) {
      throw std::domain_error("cosine similarity undefined for a zero-norm row");
    }
    cosv[r] = sab / (na[r] * nb[r]);
    out[r] = cosv[r];
  }
  const NodeId ia = a.id(), ib = b.id();
  return t.record(Op::cosine_rows, std::move(out), {ia, ib},
                  [ia, ib, rows, cols, na = std::move(na), nb = std::move(nb), cosv = std::move(cosv)](
                      Tape& tp, std::span<const double> g) {
                    const Tensor& av = tp.value(ia);
                    const Tensor& bv = tp.value(ib);
                    Buf da(rows * cols), db(rows * cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                      const double inv = 1.0 / (na[r] * nb[r]);
                      for (std::size_t c = 0; c < cols; ++c) {
                        const std::size_t i = r * cols + c;
                        da[i] = g[r] * (bv[i] * inv - cosv[r] * av[i] / (na[r] * na[r]));
                        db[i] = g[r] * (av[i] * inv - cosv[r] * bv[i] / (nb[r] * nb[r]));
                      }
                    }
                    tp.accumulate(ia, da);
                    tp.accumulate(ib, db);
                  });
}

Var normalize_rows(Var a, double eps) {
  Tape& t = tape_of({a});
  require_rank2ish(a, "normalize_rows");
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  Buf denom(rows);
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += a.value()[r * cols + c] * a.value()[r * cols + c];
    denom[r] = std::max(std::sqrt(s), eps);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = a.value()[r * cols + c] / denom[r];
  }
  const NodeId ia = a.id();
  return t.record(Op::normalize_rows, std::move(out), {ia},
                  [ia, rows, cols, eps, denom = std::move(denom)](Tape& tp, std::span<const double> g) {
                    const Tensor& av = tp.value(ia);
                    Buf d(rows * cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                      if (denom[r] == eps) {
                        for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] = g[r * cols + c] / eps;
                        continue;
                      }
                      double yg = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) yg += av[r * cols + c] / denom[r] * g[r * cols + c];
                      for (std::size_t c = 0; c < cols; ++c) {
                        const double y = av[r * cols + c] / denom[r];
                        d[r * cols + c] = (g[r * cols + c] - y * yg) / denom[r];
                      }
                    }
                    tp.accumulate(ia, d);
                  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  Tape& t = tape_of({logits});
  if (logits.value().rank() != 2) throw std::invalid_argument("cross_entropy: logits must be rank 2");
  const std::size_t rows = logits.value().dim(0), cols = logits.value().dim(1);
  if (labels.size() != rows) throw std::invalid_argument("cross_entropy: one label per row required");
  std::vector<int> lab(labels.begin(), labels.end());
  Buf probs(rows * cols);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (lab[r] < 0 || static_cast<std::size_t>(lab[r]) >= cols) throw std::out_of_range("cross_entropy: bad label");
    double mx = logits.value()[r * cols];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, logits.value()[r * cols + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(logits.value()[r * cols + c] - mx);
    const double lse = mx + std::log(z);
    total += lse - logits.value()[r * cols + static_cast<std::size_t>(lab[r])];
    for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] = std::exp(logits.value()[r * cols + c] - lse);
  }
  const NodeId il = logits.id();
  return t.record(Op::cross_entropy, Tensor::scalar(total / static_cast<double>(rows)), {il},
                  [il, rows, cols, lab = std::move(lab), probs = std::move(probs)](Tape& tp,
                                                                                    std::span<const double> g) {
                    Buf d(rows * cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c) {
                        const double onehot = static_cast<std::size_t>(lab[r]) == c ? 1.0 : 0.0;
                        d[r * cols + c] = g[0] * (probs[r * cols + c] - onehot) / static_cast<double>(rows);
                      }
                    }
                    tp.accumulate(il, d);
                  });
}

Var detach(Var a) { return tape_of({a}).constant(a.value()); }

}  // namespace rc::ops
