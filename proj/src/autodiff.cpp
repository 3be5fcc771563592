#include "vlsa/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "vlsa/error.hpp"

namespace vlsa {

std::size_t ParamStore::add(std::string name, Matrix init, bool decay) {
  if (index_.contains(name)) throw std::logic_error("duplicate parameter " + name);
  const std::size_t id = params_.size();
  index_.emplace(name, id);
  params_.push_back(Parameter{std::move(name), std::move(init), decay});
  return id;
}

std::size_t ParamStore::id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void accumulate(Gradients& into, const Gradients& from) {
  if (into.size() < from.size()) into.resize(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].size() == 0) continue;
    if (into[i].size() == 0) {
      into[i] = from[i];
    } else {
      into[i] += from[i];
    }
  }
}

const Matrix& Var::value() const { return tape->value(id); }

Tape::Tape(const ParamStore* params, bool track_gradients) : params_(params), track_gradients_(track_gradients) {
  if (params_) param_grads_.resize(params_->size());
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(std::size_t id) {
  if (!params_ || id >= params_->size()) throw std::out_of_range("parameter id out of range");
  Node n;
  n.ref = &(*params_)[id].value;
  n.param_id = static_cast<int>(id);
  n.needs_grad = track_gradients_;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(const std::string& name) {
  if (!params_) throw std::logic_error("tape has no parameter store");
  return param(params_->id(name));
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.ref ? *n.ref : n.value;
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.size() == 0) return Matrix::Zero(value(v.id).rows(), value(v.id).cols());
  return n.grad;
}

Var Tape::record(Matrix value, std::vector<int> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (int in : inputs) n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(in)].needs_grad;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate_grad(int id, const Matrix& g) { accumulate_grad_expr(id, g); }

void Tape::backward(Var scalar_output, double seed) {
  if (scalar_output.rows() != 1 || scalar_output.cols() != 1)
    throw std::invalid_argument("backward() needs a scalar output");
  Matrix s(1, 1);
  s(0, 0) = seed;
  const std::pair<Var, Matrix> seeds[] = {{scalar_output, std::move(s)}};
  backward(seeds);
}

void Tape::backward(std::span<const std::pair<Var, Matrix>> seeds) {
  for (const auto& [v, g] : seeds) {
    if (v.tape != this) throw std::invalid_argument("seed variable from another tape");
    if (g.rows() != v.rows() || g.cols() != v.cols())
      throw std::invalid_argument("seed gradient shape mismatch");
    accumulate_grad(v.id, g);
  }
  sweep();
}

void Tape::sweep() {
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.param_id >= 0) {
      Matrix& pg = param_grads_[static_cast<std::size_t>(n.param_id)];
      if (pg.size() == 0) {
        pg = n.grad;
      } else {
        pg += n.grad;
      }
    } else if (n.backward) {
      n.backward(*this, n.value, n.grad);
    }
  }
}

namespace {

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw std::invalid_argument("variables from different tapes");
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix out(av.rows(), bv.cols());
  out.noalias() = av * bv;
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Matrix&, const Matrix& g) {
    if (t.needs_grad(ia)) t.accumulate_grad_expr(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate_grad_expr(ib, t.value(ia).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  check_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Matrix out(av.rows(), bv.rows());
  out.noalias() = av * bv.transpose();
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Matrix&, const Matrix& g) {
    if (t.needs_grad(ia)) t.accumulate_grad_expr(ia, g * t.value(ib));
    if (t.needs_grad(ib)) t.accumulate_grad_expr(ib, g.transpose() * t.value(ia));
  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value() + b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Matrix&, const Matrix& g) {
    t.accumulate_grad(ia, g);
    t.accumulate_grad(ib, g);
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value() - b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Matrix&, const Matrix& g) {
    t.accumulate_grad(ia, g);
    t.accumulate_grad_expr(ib, -g);
  });
}

Var add_row(Var a, Var row) {
  check_same_tape(a, row);
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw std::invalid_argument("add_row: shape mismatch");
  Matrix out = av.rowwise() + rv.row(0);
  const int ia = a.id, ir = row.id;
  return a.tape->record(std::move(out), {ia, ir}, [ia, ir](Tape& t, const Matrix&, const Matrix& g) {
    t.accumulate_grad(ia, g);
    if (t.needs_grad(ir)) t.accumulate_grad_expr(ir, g.colwise().sum());
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, s](Tape& t, const Matrix&, const Matrix& g) {
    t.accumulate_grad_expr(ia, g * s);
  });
}

Var hadamard(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "hadamard");
  Matrix out = a.value().cwiseProduct(b.value());
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Matrix&, const Matrix& g) {
    if (t.needs_grad(ia)) t.accumulate_grad_expr(ia, g.cwiseProduct(t.value(ib)));
    if (t.needs_grad(ib)) t.accumulate_grad_expr(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var gelu(Var a) {
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
  const int ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape& t, const Matrix&, const Matrix& g) {
    const Matrix& xv = t.value(ia);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Matrix d = xv.unaryExpr([inv_sqrt_2pi](double v) {
      return 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    });
    t.accumulate_grad_expr(ia, g.cwiseProduct(d));
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  check_same_tape(x, gain);
  check_same_tape(x, bias);
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n)
    throw std::invalid_argument("layer_norm: parameter shape mismatch");
  Matrix xhat(xv.rows(), n);
  std::vector<double> inv_std(static_cast<std::size_t>(xv.rows()));
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    xhat.row(r) = (xv.row(r).array() - mean) * is;
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return x.tape->record(std::move(out), {ix, ig, ib},
                        [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Matrix&, const Matrix& g) {
                          if (t.needs_grad(ig)) t.accumulate_grad_expr(ig, g.cwiseProduct(xhat).colwise().sum());
                          if (t.needs_grad(ib)) t.accumulate_grad_expr(ib, g.colwise().sum());
                          if (!t.needs_grad(ix)) return;
                          const Matrix dxhat = g.array().rowwise() * t.value(ig).row(0).array();
                          Matrix dx(g.rows(), g.cols());
                          for (Eigen::Index r = 0; r < g.rows(); ++r) {
                            const double m1 = dxhat.row(r).mean();
                            const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                            dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) *
                                        inv_std[static_cast<std::size_t>(r)];
                          }
                          t.accumulate_grad(ix, dx);
                        });
}

Var softmax_rows(Var x, const Matrix* additive_mask) {
  Matrix p = x.value();
  if (additive_mask) {
    check_same_shape(p, *additive_mask, "softmax_rows mask");
    p += *additive_mask;
  }
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double m = p.row(r).maxCoeff();
    p.row(r) = (p.row(r).array() - m).exp();
    p.row(r) /= p.row(r).sum();
  }
  const int ix = x.id;
  return x.tape->record(std::move(p), {ix}, [ix](Tape& t, const Matrix& out, const Matrix& g) {
    const Eigen::VectorXd dot = g.cwiseProduct(out).rowwise().sum();
    t.accumulate_grad_expr(ix, out.cwiseProduct((g.colwise() - dot)));
  });
}

Var l2_normalize_rows(Var x) {
  const Matrix& xv = x.value();
  Eigen::VectorXd norms = xv.rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r) {
    if (!(norms(r) > 0.0)) throw std::invalid_argument("l2_normalize_rows: zero-norm row " + std::to_string(r));
  }
  Matrix out = xv.array().colwise() / norms.array();
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix, norms = std::move(norms)](Tape& t, const Matrix& y, const Matrix& g) {
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = (g - (y.array().colwise() * dot.array()).matrix());
    dx.array().colwise() /= norms.array();
    t.accumulate_grad(ix, dx);
  });
}

Var slice_rows(Var x, Eigen::Index start, Eigen::Index count) {
  const Matrix& xv = x.value();
  if (start < 0 || count < 0 || start + count > xv.rows()) throw std::out_of_range("slice_rows out of range");
  Matrix out = xv.middleRows(start, count);
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix, start, count](Tape& t, const Matrix&, const Matrix& g) {
    const Matrix& src = t.value(ix);
    Matrix full = Matrix::Zero(src.rows(), src.cols());
    full.middleRows(start, count) = g;
    t.accumulate_grad(ix, full);
  });
}

Var slice_cols(Var x, Eigen::Index start, Eigen::Index count) {
  const Matrix& xv = x.value();
  if (start < 0 || count < 0 || start + count > xv.cols()) throw std::out_of_range("slice_cols out of range");
  Matrix out = xv.middleCols(start, count);
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix, start, count](Tape& t, const Matrix&, const Matrix& g) {
    const Matrix& src = t.value(ix);
    Matrix full = Matrix::Zero(src.rows(), src.cols());
    full.middleCols(start, count) = g;
    t.accumulate_grad(ix, full);
  });
}

Var gather_rows(Var x, std::span<const int> rows) {
  const Matrix& xv = x.value();
  Matrix out(static_cast<Eigen::Index>(rows.size()), xv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= xv.rows()) throw std::out_of_range("gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = xv.row(rows[i]);
  }
  const int ix = x.id;
  std::vector<int> idx(rows.begin(), rows.end());
  return x.tape->record(std::move(out), {ix}, [ix, idx = std::move(idx)](Tape& t, const Matrix&, const Matrix& g) {
    const Matrix& src = t.value(ix);
    Matrix full = Matrix::Zero(src.rows(), src.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate_grad(ix, full);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape* tape = parts.front().tape;
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  for (const Var& p : parts) {
    if (p.tape != tape) throw std::invalid_argument("variables from different tapes");
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    ids.push_back(p.id);
    offsets.push_back(rows);
    rows += p.rows();
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) out.middleRows(offsets[i], parts[i].rows()) = parts[i].value();
  return tape->record(std::move(out), ids, [ids, offsets](Tape& t, const Matrix&, const Matrix& g) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.needs_grad(ids[i])) continue;
      t.accumulate_grad_expr(ids[i], g.middleRows(offsets[i], t.value(ids[i]).rows()));
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape* tape = parts.front().tape;
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  for (const Var& p : parts) {
    if (p.tape != tape) throw std::invalid_argument("variables from different tapes");
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    ids.push_back(p.id);
    offsets.push_back(cols);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) out.middleCols(offsets[i], parts[i].cols()) = parts[i].value();
  return tape->record(std::move(out), ids, [ids, offsets](Tape& t, const Matrix&, const Matrix& g) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.needs_grad(ids[i])) continue;
      t.accumulate_grad_expr(ids[i], g.middleCols(offsets[i], t.value(ids[i]).cols()));
    }
  });
}

Var replace_rows(Var x, Var row, const std::vector<bool>& replace) {
  check_same_tape(x, row);
  const Matrix& xv = x.value();
  if (row.rows() != 1 || row.cols() != xv.cols()) throw std::invalid_argument("replace_rows: row shape mismatch");
  if (static_cast<Eigen::Index>(replace.size()) != xv.rows())
    throw std::invalid_argument("replace_rows: flag count mismatch");
  Matrix out = xv;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    if (replace[static_cast<std::size_t>(r)]) out.row(r) = row.value().row(0);
  }
  const int ix = x.id, ir = row.id;
  return x.tape->record(std::move(out), {ix, ir}, [ix, ir, replace](Tape& t, const Matrix&, const Matrix& g) {
    Matrix gx = g;
    RowVector gr = RowVector::Zero(g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      if (replace[static_cast<std::size_t>(r)]) {
        gr += g.row(r);
        gx.row(r).setZero();
      }
    }
    if (t.needs_grad(ix)) t.accumulate_grad(ix, gx);
    if (t.needs_grad(ir)) t.accumulate_grad(ir, gr);
  });
}

Var mean_rows(Var x) {
  const Matrix& xv = x.value();
  if (xv.rows() == 0) throw std::invalid_argument("mean_rows: no rows");
  Matrix out = xv.colwise().mean();
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix](Tape& t, const Matrix&, const Matrix& g) {
    const Eigen::Index n = t.value(ix).rows();
    t.accumulate_grad_expr(ix, g.replicate(n, 1) / static_cast<double>(n));
  });
}

Var sum_all(Var x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  const int ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix](Tape& t, const Matrix&, const Matrix& g) {
    const Matrix& src = t.value(ix);
    t.accumulate_grad_expr(ix, Matrix::Constant(src.rows(), src.cols(), g(0, 0)));
  });
}

Var mse(Var pred, const Matrix& target) {
  const Matrix& pv = pred.value();
  check_same_shape(pv, target, "mse");
  Matrix out(1, 1);
  if (pv.size() == 0) {
    out(0, 0) = 0.0;
    return pred.tape->constant(std::move(out));
  }
  Matrix diff = pv - target;
  out(0, 0) = diff.squaredNorm() / static_cast<double>(diff.size());
  const int ip = pred.id;
  return pred.tape->record(std::move(out), {ip}, [ip, diff = std::move(diff)](Tape& t, const Matrix&, const Matrix& g) {
    t.accumulate_grad_expr(ip, diff * (2.0 * g(0, 0) / static_cast<double>(diff.size())));
  });
}

Var cross_entropy_rows(Var logits, std::span<const int> targets) {
  const Matrix& lv = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != lv.rows())
    throw std::invalid_argument("cross_entropy_rows: target count mismatch");
  Matrix out(1, 1);
  if (lv.rows() == 0) {
    out(0, 0) = 0.0;
    return logits.tape->constant(std::move(out));
  }
  Matrix probs(lv.rows(), lv.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    const int tgt = targets[static_cast<std::size_t>(r)];
    if (tgt < 0 || tgt >= lv.cols()) throw std::out_of_range("cross_entropy_rows: target out of range");
    const double m = lv.row(r).maxCoeff();
    probs.row(r) = (lv.row(r).array() - m).exp();
    const double z = probs.row(r).sum();
    probs.row(r) /= z;
    total += (m + std::log(z)) - lv(r, tgt);
  }
  const double n = static_cast<double>(lv.rows());
  out(0, 0) = total / n;
  std::vector<int> tg(targets.begin(), targets.end());
  const int il = logits.id;
  return logits.tape->record(std::move(out), {il},
                             [il, n, probs = std::move(probs), tg = std::move(tg)](Tape& t, const Matrix&, const Matrix& g) {
                               Matrix d = probs;
                               for (std::size_t r = 0; r < tg.size(); ++r) d(static_cast<Eigen::Index>(r), tg[r]) -= 1.0;
                               t.accumulate_grad_expr(il, d * (g(0, 0) / n));
                             });
}

Var bce_with_logits_sum(Var logits, std::span<const double> labels) {
  const Matrix& z = logits.value();
  if (z.cols() != 1 || static_cast<Eigen::Index>(labels.size()) != z.rows())
    throw std::invalid_argument("bce_with_logits_sum: expects N x 1 logits and N labels");
  double total = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double v = z(r, 0);
    const double softplus = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
    total += softplus - labels[static_cast<std::size_t>(r)] * v;
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  if (z.rows() == 0) return logits.tape->constant(std::move(out));
  std::vector<double> y(labels.begin(), labels.end());
  const int il = logits.id;
  return logits.tape->record(std::move(out), {il}, [il, y = std::move(y)](Tape& t, const Matrix&, const Matrix& g) {
    const Matrix& zv = t.value(il);
    Matrix d(zv.rows(), 1);
    for (Eigen::Index r = 0; r < zv.rows(); ++r) {
      d(r, 0) = (1.0 / (1.0 + std::exp(-zv(r, 0))) - y[static_cast<std::size_t>(r)]) * g(0, 0);
    }
    t.accumulate_grad(il, d);
  });
}

}  // namespace vlsa
