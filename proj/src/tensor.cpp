#include "branchforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "branchforge/errors.hpp"
#include "branchforge/rng.hpp"
#include "branchforge/textio.hpp"

namespace branchforge {

struct Tensor::Impl {
  int rows = 0, cols = 0;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool needs_grad = false;
  std::vector<std::shared_ptr<Impl>> parents;
  std::function<void(Impl&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

namespace {

using Impl = Tensor::Impl;
using ImplPtr = std::shared_ptr<Impl>;

std::string shape_str(const Impl& t) {
  return "[" + std::to_string(t.rows) + "x" + std::to_string(t.cols) + "]";
}

[[noreturn]] void shape_fail(const char* op, const Impl& a, const Impl& b) {
  throw ShapeMismatch(std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

[[noreturn]] void shape_fail(const char* op, const Impl& a) {
  throw ShapeMismatch(std::string(op) + ": " + shape_str(a));
}

ImplPtr make_impl(int rows, int cols) {
  auto impl = std::make_shared<Impl>();
  impl->rows = rows;
  impl->cols = cols;
  impl->data.assign(static_cast<size_t>(rows) * cols, 0.0);
  return impl;
}

// Wires the result into the tape when any parent needs gradients; constant
// results stay leaf-like and cost nothing on the backward pass.
Tensor finish(ImplPtr out, std::vector<ImplPtr> parents,
              std::function<void(Impl&)> backward) {
  bool needs = false;
  for (const ImplPtr& p : parents)
    if (p->requires_grad || p->needs_grad) needs = true;
  if (needs) {
    out->needs_grad = true;
    out->parents = std::move(parents);
    out->backward_fn = std::move(backward);
  }
  return Tensor(out);
}

void accumulate(Impl& dst, const std::vector<double>& g) {
  if (!dst.requires_grad && !dst.needs_grad) return;
  dst.ensure_grad();
  for (size_t i = 0; i < g.size(); ++i) dst.grad[i] += g[i];
}

// ---- raw kernels -----------------------------------------------------------

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<size_t>(i) * n;
    const double* ai = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c (m x n) += a (m x k) . b^T where b is n x k
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c (m x n) += a^T . b where a is k x m, b is k x n
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<size_t>(p) * m;
    const double* bp = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  ImplPtr impl = make_impl(rows, cols);
  impl->requires_grad = requires_grad;
  impl->needs_grad = requires_grad;
  return Tensor(impl);
}

Tensor Tensor::from_values(int rows, int cols, std::vector<double> values,
                           bool requires_grad) {
  if (static_cast<size_t>(rows) * cols != values.size())
    throw ShapeMismatch("from_values: " + std::to_string(values.size()) +
                        " values for [" + std::to_string(rows) + "x" +
                        std::to_string(cols) + "]");
  auto impl = std::make_shared<Impl>();
  impl->rows = rows;
  impl->cols = cols;
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  impl->needs_grad = requires_grad;
  return Tensor(impl);
}

Tensor Tensor::scalar(double v) { return from_values(1, 1, {v}); }

int Tensor::rows() const { return impl_->rows; }
int Tensor::cols() const { return impl_->cols; }
int64_t Tensor::size() const { return static_cast<int64_t>(impl_->data.size()); }
std::vector<int64_t> Tensor::shape() const { return {impl_->rows, impl_->cols}; }
const std::vector<double>& Tensor::values() const { return impl_->data; }
std::vector<double>& Tensor::values_mut() { return impl_->data; }
double Tensor::at(int r, int c) const {
  return impl_->data[static_cast<size_t>(r) * impl_->cols + c];
}
double Tensor::item() const {
  if (impl_->data.size() != 1) shape_fail("item", *impl_);
  return impl_->data[0];
}
bool Tensor::requires_grad() const { return impl_->requires_grad; }
bool Tensor::needs_grad() const { return impl_->needs_grad || impl_->requires_grad; }
const std::vector<double>& Tensor::grad() const {
  impl_->ensure_grad();
  return impl_->grad;
}
std::vector<double>& Tensor::grad_mut() {
  impl_->ensure_grad();
  return impl_->grad;
}
void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

void Tensor::backward() const {
  if (impl_->data.size() != 1)
    throw ShapeMismatch("backward from non-scalar " + shape_str(*impl_));
  // Post-order over the tape, then run closures in reverse. Iterative to
  // keep deep graphs off the call stack.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> seen;
  std::vector<std::pair<Impl*, size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Impl* parent = node->parents[next++].get();
      if (!seen.count(parent) && (parent->needs_grad || parent->requires_grad)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  impl_->ensure_grad();
  impl_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

// ---- ops -------------------------------------------------------------------

namespace ops {

Tensor add(const Tensor& a, const Tensor& b) {
  const ImplPtr& x = a.impl();
  const ImplPtr& y = b.impl();
  if (x->rows != y->rows || x->cols != y->cols) shape_fail("add", *x, *y);
  ImplPtr out = make_impl(x->rows, x->cols);
  for (size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = x->data[i] + y->data[i];
  return finish(out, {x, y}, [x, y](Impl& self) {
    accumulate(*x, self.grad);
    accumulate(*y, self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const ImplPtr& x = a.impl();
  const ImplPtr& y = b.impl();
  if (x->rows != y->rows || x->cols != y->cols) shape_fail("sub", *x, *y);
  ImplPtr out = make_impl(x->rows, x->cols);
  for (size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = x->data[i] - y->data[i];
  return finish(out, {x, y}, [x, y](Impl& self) {
    accumulate(*x, self.grad);
    if (y->requires_grad || y->needs_grad) {
      y->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) y->grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const ImplPtr& x = a.impl();
  const ImplPtr& y = b.impl();
  if (x->rows != y->rows || x->cols != y->cols) shape_fail("mul", *x, *y);
  ImplPtr out = make_impl(x->rows, x->cols);
  for (size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = x->data[i] * y->data[i];
  return finish(out, {x, y}, [x, y](Impl& self) {
    if (x->requires_grad || x->needs_grad) {
      x->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        x->grad[i] += self.grad[i] * y->data[i];
    }
    if (y->requires_grad || y->needs_grad) {
      y->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        y->grad[i] += self.grad[i] * x->data[i];
    }
  });
}

Tensor scalar_mul(const Tensor& a, double c) {
  const ImplPtr& x = a.impl();
  ImplPtr out = make_impl(x->rows, x->cols);
  for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = x->data[i] * c;
  return finish(out, {x}, [x, c](Impl& self) {
    if (!x->requires_grad && !x->needs_grad) return;
    x->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      x->grad[i] += self.grad[i] * c;
  });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  const ImplPtr& x = m.impl();
  const ImplPtr& y = v.impl();
  if (y->rows != 1 || y->cols != x->cols) shape_fail("add_rowvec", *x, *y);
  ImplPtr out = make_impl(x->rows, x->cols);
  for (int r = 0; r < x->rows; ++r)
    for (int c = 0; c < x->cols; ++c)
      out->data[static_cast<size_t>(r) * x->cols + c] =
          x->data[static_cast<size_t>(r) * x->cols + c] + y->data[static_cast<size_t>(c)];
  return finish(out, {x, y}, [x, y](Impl& self) {
    accumulate(*x, self.grad);
    if (y->requires_grad || y->needs_grad) {
      y->ensure_grad();
      for (int r = 0; r < self.rows; ++r)
        for (int c = 0; c < self.cols; ++c)
          y->grad[static_cast<size_t>(c)] +=
              self.grad[static_cast<size_t>(r) * self.cols + c];
    }
  });
}

Tensor add_outer(const Tensor& col, const Tensor& row) {
  const ImplPtr& x = col.impl();
  const ImplPtr& y = row.impl();
  if (x->cols != 1 || y->rows != 1) shape_fail("add_outer", *x, *y);
  int n = x->rows, m = y->cols;
  ImplPtr out = make_impl(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      out->data[static_cast<size_t>(i) * m + j] = x->data[static_cast<size_t>(i)] +
                                                  y->data[static_cast<size_t>(j)];
  return finish(out, {x, y}, [x, y](Impl& self) {
    if (x->requires_grad || x->needs_grad) {
      x->ensure_grad();
      for (int i = 0; i < self.rows; ++i) {
        double acc = 0.0;
        for (int j = 0; j < self.cols; ++j)
          acc += self.grad[static_cast<size_t>(i) * self.cols + j];
        x->grad[static_cast<size_t>(i)] += acc;
      }
    }
    if (y->requires_grad || y->needs_grad) {
      y->ensure_grad();
      for (int j = 0; j < self.cols; ++j) {
        double acc = 0.0;
        for (int i = 0; i < self.rows; ++i)
          acc += self.grad[static_cast<size_t>(i) * self.cols + j];
        y->grad[static_cast<size_t>(j)] += acc;
      }
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const ImplPtr& x = a.impl();
  const ImplPtr& y = b.impl();
  if (x->cols != y->rows) shape_fail("matmul", *x, *y);
  ImplPtr out = make_impl(x->rows, y->cols);
  gemm_nn(x->rows, y->cols, x->cols, x->data.data(), y->data.data(),
          out->data.data());
  return finish(out, {x, y}, [x, y](Impl& self) {
    // dA = dC . B^T ; dB = A^T . dC
    if (x->requires_grad || x->needs_grad) {
      x->ensure_grad();
      gemm_nt(x->rows, x->cols, self.cols, self.grad.data(), y->data.data(),
              x->grad.data());
    }
    if (y->requires_grad || y->needs_grad) {
      y->ensure_grad();
      gemm_tn(y->rows, y->cols, x->rows, x->data.data(), self.grad.data(),
              y->grad.data());
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const ImplPtr& x = a.impl();
  const ImplPtr& y = b.impl();
  if (x->cols != y->cols) shape_fail("matmul_nt", *x, *y);
  ImplPtr out = make_impl(x->rows, y->rows);
  gemm_nt(x->rows, y->rows, x->cols, x->data.data(), y->data.data(),
          out->data.data());
  return finish(out, {x, y}, [x, y](Impl& self) {
    // C = A . B^T : dA = dC . B ; dB = dC^T . A
    if (x->requires_grad || x->needs_grad) {
      x->ensure_grad();
      gemm_nn(x->rows, x->cols, self.cols, self.grad.data(), y->data.data(),
              x->grad.data());
    }
    if (y->requires_grad || y->needs_grad) {
      y->ensure_grad();
      gemm_tn(y->rows, y->cols, self.rows, self.grad.data(), x->data.data(),
              y->grad.data());
    }
  });
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const ImplPtr& x = a.impl();
  const ImplPtr& y = b.impl();
  if (x->rows != y->rows) shape_fail("matmul_tn", *x, *y);
  ImplPtr out = make_impl(x->cols, y->cols);
  gemm_tn(x->cols, y->cols, x->rows, x->data.data(), y->data.data(),
          out->data.data());
  return finish(out, {x, y}, [x, y](Impl& self) {
    // C = A^T . B : dA = B . dC^T ; dB = A . dC
    if (x->requires_grad || x->needs_grad) {
      x->ensure_grad();
      gemm_nt(x->rows, x->cols, y->cols, y->data.data(), self.grad.data(),
              x->grad.data());
    }
    if (y->requires_grad || y->needs_grad) {
      y->ensure_grad();
      gemm_nn(y->rows, y->cols, x->cols, x->data.data(), self.grad.data(),
              y->grad.data());
    }
  });
}

Tensor transpose(const Tensor& a) {
  const ImplPtr& x = a.impl();
  ImplPtr out = make_impl(x->cols, x->rows);
  for (int r = 0; r < x->rows; ++r)
    for (int c = 0; c < x->cols; ++c)
      out->data[static_cast<size_t>(c) * x->rows + r] =
          x->data[static_cast<size_t>(r) * x->cols + c];
  return finish(out, {x}, [x](Impl& self) {
    if (!x->requires_grad && !x->needs_grad) return;
    x->ensure_grad();
    for (int r = 0; r < self.rows; ++r)
      for (int c = 0; c < self.cols; ++c)
        x->grad[static_cast<size_t>(c) * self.rows + r] +=
            self.grad[static_cast<size_t>(r) * self.cols + c];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows of nothing");
  int cols = parts[0].cols();
  int rows = 0;
  std::vector<ImplPtr> impls;
  for (const Tensor& t : parts) {
    if (t.cols() != cols) shape_fail("concat_rows", *parts[0].impl(), *t.impl());
    rows += t.rows();
    impls.push_back(t.impl());
  }
  ImplPtr out = make_impl(rows, cols);
  size_t offset = 0;
  for (const ImplPtr& p : impls) {
    std::copy(p->data.begin(), p->data.end(), out->data.begin() + offset);
    offset += p->data.size();
  }
  return finish(out, impls, [impls](Impl& self) {
    size_t off = 0;
    for (const ImplPtr& p : impls) {
      if (p->requires_grad || p->needs_grad) {
        p->ensure_grad();
        for (size_t i = 0; i < p->data.size(); ++i) p->grad[i] += self.grad[off + i];
      }
      off += p->data.size();
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols of nothing");
  int rows = parts[0].rows();
  int cols = 0;
  std::vector<ImplPtr> impls;
  for (const Tensor& t : parts) {
    if (t.rows() != rows) shape_fail("concat_cols", *parts[0].impl(), *t.impl());
    cols += t.cols();
    impls.push_back(t.impl());
  }
  ImplPtr out = make_impl(rows, cols);
  int col0 = 0;
  for (const ImplPtr& p : impls) {
    for (int r = 0; r < rows; ++r)
      std::copy(p->data.begin() + static_cast<size_t>(r) * p->cols,
                p->data.begin() + static_cast<size_t>(r + 1) * p->cols,
                out->data.begin() + static_cast<size_t>(r) * cols + col0);
    col0 += p->cols;
  }
  return finish(out, impls, [impls, rows, cols](Impl& self) {
    int c0 = 0;
    for (const ImplPtr& p : impls) {
      if (p->requires_grad || p->needs_grad) {
        p->ensure_grad();
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < p->cols; ++c)
            p->grad[static_cast<size_t>(r) * p->cols + c] +=
                self.grad[static_cast<size_t>(r) * cols + c0 + c];
      }
      c0 += p->cols;
    }
  });
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  const ImplPtr& x = a.impl();
  if (r0 < 0 || r1 > x->rows || r0 >= r1) shape_fail("slice_rows", *x);
  int rows = r1 - r0;
  ImplPtr out = make_impl(rows, x->cols);
  std::copy(x->data.begin() + static_cast<size_t>(r0) * x->cols,
            x->data.begin() + static_cast<size_t>(r1) * x->cols,
            out->data.begin());
  return finish(out, {x}, [x, r0](Impl& self) {
    if (!x->requires_grad && !x->needs_grad) return;
    x->ensure_grad();
    size_t base = static_cast<size_t>(r0) * x->cols;
    for (size_t i = 0; i < self.grad.size(); ++i) x->grad[base + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  const ImplPtr& x = a.impl();
  if (c0 < 0 || c1 > x->cols || c0 >= c1) shape_fail("slice_cols", *x);
  int cols = c1 - c0;
  ImplPtr out = make_impl(x->rows, cols);
  for (int r = 0; r < x->rows; ++r)
    std::copy(x->data.begin() + static_cast<size_t>(r) * x->cols + c0,
              x->data.begin() + static_cast<size_t>(r) * x->cols + c1,
              out->data.begin() + static_cast<size_t>(r) * cols);
  return finish(out, {x, }, [x, c0, cols](Impl& self) {
    if (!x->requires_grad && !x->needs_grad) return;
    x->ensure_grad();
    for (int r = 0; r < self.rows; ++r)
      for (int c = 0; c < cols; ++c)
        x->grad[static_cast<size_t>(r) * x->cols + c0 + c] +=
            self.grad[static_cast<size_t>(r) * cols + c];
  });
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& ids) {
  const ImplPtr& x = a.impl();
  for (int id : ids)
    if (id < 0 || id >= x->rows)
      throw ShapeMismatch("gather_rows: id " + std::to_string(id) +
                          " out of " + shape_str(*x));
  ImplPtr out = make_impl(static_cast<int>(ids.size()), x->cols);
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy(x->data.begin() + static_cast<size_t>(ids[i]) * x->cols,
              x->data.begin() + static_cast<size_t>(ids[i] + 1) * x->cols,
              out->data.begin() + i * x->cols);
  return finish(out, {x}, [x, ids](Impl& self) {
    if (!x->requires_grad && !x->needs_grad) return;
    x->ensure_grad();
    for (size_t i = 0; i < ids.size(); ++i)
      for (int c = 0; c < self.cols; ++c)
        x->grad[static_cast<size_t>(ids[i]) * x->cols + c] +=
            self.grad[i * self.cols + c];
  });
}

Tensor broadcast_row(const Tensor& v, int n) {
  const ImplPtr& x = v.impl();
  if (x->rows != 1) shape_fail("broadcast_row", *x);
  ImplPtr out = make_impl(n, x->cols);
  for (int r = 0; r < n; ++r)
    std::copy(x->data.begin(), x->data.end(),
              out->data.begin() + static_cast<size_t>(r) * x->cols);
  return finish(out, {x}, [x](Impl& self) {
    if (!x->requires_grad && !x->needs_grad) return;
    x->ensure_grad();
    for (int r = 0; r < self.rows; ++r)
      for (int c = 0; c < self.cols; ++c)
        x->grad[static_cast<size_t>(c)] +=
            self.grad[static_cast<size_t>(r) * self.cols + c];
  });
}

Tensor softmax_rows(const Tensor& a) {
  const ImplPtr& x = a.impl();
  ImplPtr out = make_impl(x->rows, x->cols);
  for (int r = 0; r < x->rows; ++r) {
    const double* xr = x->data.data() + static_cast<size_t>(r) * x->cols;
    double* yr = out->data.data() + static_cast<size_t>(r) * x->cols;
    double mx = xr[0];
    for (int c = 1; c < x->cols; ++c) mx = std::max(mx, xr[c]);
    double sum = 0.0;
    for (int c = 0; c < x->cols; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      sum += yr[c];
    }
    for (int c = 0; c < x->cols; ++c) yr[c] /= sum;
  }
  return finish(out, {x}, [x](Impl& self) {
    if (!x->requires_grad && !x->needs_grad) return;
    x->ensure_grad();
    for (int r = 0; r < self.rows; ++r) {
      const double* y = self.data.data() + static_cast<size_t>(r) * self.cols;
      const double* dy = self.grad.data() + static_cast<size_t>(r) * self.cols;
      double dot = 0.0;
      for (int c = 0; c < self.cols; ++c) dot += y[c] * dy[c];
      double* dx = x->grad.data() + static_cast<size_t>(r) * self.cols;
      for (int c = 0; c < self.cols; ++c) dx[c] += y[c] * (dy[c] - dot);
    }
  });
}

Tensor relu(const Tensor& a) {
  const ImplPtr& x = a.impl();
  ImplPtr out = make_impl(x->rows, x->cols);
  for (size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
  return finish(out, {x}, [x](Impl& self) {
    if (!x->requires_grad && !x->needs_grad) return;
    x->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (x->data[i] > 0.0) x->grad[i] += self.grad[i];
  });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  const ImplPtr& x = a.impl();
  ImplPtr out = make_impl(x->rows, x->cols);
  for (size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = x->data[i] > 0.0 ? x->data[i] : slope * x->data[i];
  return finish(out, {x}, [x, slope](Impl& self) {
    if (!x->requires_grad && !x->needs_grad) return;
    x->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      x->grad[i] += self.grad[i] * (x->data[i] > 0.0 ? 1.0 : slope);
  });
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const ImplPtr& x = a.impl();
  const ImplPtr& g = gain.impl();
  const ImplPtr& b = bias.impl();
  if (g->rows != 1 || g->cols != x->cols) shape_fail("layer_norm gain", *x, *g);
  if (b->rows != 1 || b->cols != x->cols) shape_fail("layer_norm bias", *x, *b);
  int n = x->cols;
  ImplPtr out = make_impl(x->rows, n);
  // Cache per-row mean/rstd and the normalized values for the backward pass.
  auto cache = std::make_shared<std::vector<double>>(
      static_cast<size_t>(x->rows) * (n + 1));
  for (int r = 0; r < x->rows; ++r) {
    const double* xr = x->data.data() + static_cast<size_t>(r) * n;
    double mean = 0.0;
    for (int c = 0; c < n; ++c) mean += xr[c];
    mean /= n;
    double var = 0.0;
    for (int c = 0; c < n; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= n;
    double rstd = 1.0 / std::sqrt(var + eps);
    double* hat = cache->data() + static_cast<size_t>(r) * (n + 1);
    hat[n] = rstd;
    double* yr = out->data.data() + static_cast<size_t>(r) * n;
    for (int c = 0; c < n; ++c) {
      hat[c] = (xr[c] - mean) * rstd;
      yr[c] = hat[c] * g->data[static_cast<size_t>(c)] + b->data[static_cast<size_t>(c)];
    }
  }
  return finish(out, {x, g, b}, [x, g, b, cache, n](Impl& self) {
    for (int r = 0; r < self.rows; ++r) {
      const double* hat = cache->data() + static_cast<size_t>(r) * (n + 1);
      double rstd = hat[n];
      const double* dy = self.grad.data() + static_cast<size_t>(r) * n;
      if (g->requires_grad || g->needs_grad) {
        g->ensure_grad();
        for (int c = 0; c < n; ++c) g->grad[static_cast<size_t>(c)] += dy[c] * hat[c];
      }
      if (b->requires_grad || b->needs_grad) {
        b->ensure_grad();
        for (int c = 0; c < n; ++c) b->grad[static_cast<size_t>(c)] += dy[c];
      }
      if (x->requires_grad || x->needs_grad) {
        x->ensure_grad();
        double sum_dh = 0.0, sum_dh_hat = 0.0;
        for (int c = 0; c < n; ++c) {
          double dh = dy[c] * g->data[static_cast<size_t>(c)];
          sum_dh += dh;
          sum_dh_hat += dh * hat[c];
        }
        double* dx = x->grad.data() + static_cast<size_t>(r) * n;
        for (int c = 0; c < n; ++c) {
          double dh = dy[c] * g->data[static_cast<size_t>(c)];
          dx[c] += rstd * (dh - sum_dh / n - hat[c] * sum_dh_hat / n);
        }
      }
    }
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<uint8_t>& mask) {
  const ImplPtr& x = logits.impl();
  if (targets.size() != static_cast<size_t>(x->rows) ||
      mask.size() != static_cast<size_t>(x->rows))
    throw ShapeMismatch("cross_entropy: " + std::to_string(targets.size()) +
                        " targets / " + std::to_string(mask.size()) +
                        " mask entries for " + shape_str(*x));
  int active = 0;
  for (uint8_t m : mask) active += m ? 1 : 0;
  if (active == 0) throw ShapeMismatch("cross_entropy: empty target mask");

  int n = x->cols;
  auto probs = std::make_shared<std::vector<double>>(x->data.size());
  double loss = 0.0;
  for (int r = 0; r < x->rows; ++r) {
    if (!mask[static_cast<size_t>(r)]) continue;
    const double* xr = x->data.data() + static_cast<size_t>(r) * n;
    double* pr = probs->data() + static_cast<size_t>(r) * n;
    double mx = xr[0];
    for (int c = 1; c < n; ++c) mx = std::max(mx, xr[c]);
    double sum = 0.0;
    for (int c = 0; c < n; ++c) {
      pr[c] = std::exp(xr[c] - mx);
      sum += pr[c];
    }
    for (int c = 0; c < n; ++c) pr[c] /= sum;
    int t = targets[static_cast<size_t>(r)];
    if (t < 0 || t >= n)
      throw ShapeMismatch("cross_entropy: target " + std::to_string(t) +
                          " outside vocab " + std::to_string(n));
    loss += -std::log(std::max(pr[t], 1e-300));
  }
  ImplPtr out = make_impl(1, 1);
  out->data[0] = loss / active;
  return finish(out, {x}, [x, targets, mask, probs, active, n](Impl& self) {
    if (!x->requires_grad && !x->needs_grad) return;
    x->ensure_grad();
    double scale = self.grad[0] / active;
    for (int r = 0; r < x->rows; ++r) {
      if (!mask[static_cast<size_t>(r)]) continue;
      const double* pr = probs->data() + static_cast<size_t>(r) * n;
      double* dx = x->grad.data() + static_cast<size_t>(r) * n;
      int t = targets[static_cast<size_t>(r)];
      for (int c = 0; c < n; ++c)
        dx[c] += scale * (pr[c] - (c == t ? 1.0 : 0.0));
    }
  });
}

Tensor sum_all(const Tensor& a) {
  const ImplPtr& x = a.impl();
  ImplPtr out = make_impl(1, 1);
  double acc = 0.0;
  for (double v : x->data) acc += v;
  out->data[0] = acc;
  return finish(out, {x}, [x](Impl& self) {
    if (!x->requires_grad && !x->needs_grad) return;
    x->ensure_grad();
    for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += self.grad[0];
  });
}

Tensor mean_rows(const Tensor& a) {
  const ImplPtr& x = a.impl();
  if (x->rows == 0) shape_fail("mean_rows", *x);
  ImplPtr out = make_impl(1, x->cols);
  for (int r = 0; r < x->rows; ++r)
    for (int c = 0; c < x->cols; ++c)
      out->data[static_cast<size_t>(c)] += x->data[static_cast<size_t>(r) * x->cols + c];
  for (int c = 0; c < x->cols; ++c) out->data[static_cast<size_t>(c)] /= x->rows;
  return finish(out, {x}, [x](Impl& self) {
    if (!x->requires_grad && !x->needs_grad) return;
    x->ensure_grad();
    for (int r = 0; r < x->rows; ++r)
      for (int c = 0; c < x->cols; ++c)
        x->grad[static_cast<size_t>(r) * x->cols + c] +=
            self.grad[static_cast<size_t>(c)] / x->rows;
  });
}

Tensor inject_rows(const Tensor& base, const std::vector<int>& positions,
                   const Tensor& rows) {
  const ImplPtr& x = base.impl();
  const ImplPtr& y = rows.impl();
  if (static_cast<int>(positions.size()) != y->rows)
    throw SlotMismatch(std::to_string(positions.size()) + " slots for " +
                       std::to_string(y->rows) + " rows");
  if (y->rows > 0 && y->cols != x->cols) shape_fail("inject_rows", *x, *y);
  for (int p : positions)
    if (p < 0 || p >= x->rows)
      throw SlotMismatch("slot " + std::to_string(p) + " outside " + shape_str(*x));
  ImplPtr out = make_impl(x->rows, x->cols);
  out->data = x->data;
  for (size_t i = 0; i < positions.size(); ++i)
    std::copy(y->data.begin() + static_cast<size_t>(i) * y->cols,
              y->data.begin() + static_cast<size_t>(i + 1) * y->cols,
              out->data.begin() + static_cast<size_t>(positions[i]) * x->cols);
  return finish(out, {x, y}, [x, y, positions](Impl& self) {
    std::vector<uint8_t> replaced(static_cast<size_t>(self.rows), 0);
    for (int p : positions) replaced[static_cast<size_t>(p)] = 1;
    if (x->requires_grad || x->needs_grad) {
      x->ensure_grad();
      for (int r = 0; r < self.rows; ++r) {
        if (replaced[static_cast<size_t>(r)]) continue;
        for (int c = 0; c < self.cols; ++c)
          x->grad[static_cast<size_t>(r) * self.cols + c] +=
              self.grad[static_cast<size_t>(r) * self.cols + c];
      }
    }
    if (y->requires_grad || y->needs_grad) {
      y->ensure_grad();
      for (size_t i = 0; i < positions.size(); ++i)
        for (int c = 0; c < self.cols; ++c)
          y->grad[i * static_cast<size_t>(self.cols) + c] +=
              self.grad[static_cast<size_t>(positions[i]) * self.cols + c];
    }
  });
}

}  // namespace ops

// ---- ParameterStore --------------------------------------------------------

Tensor& ParameterStore::add(const std::string& name, Tensor t) {
  if (params_.count(name)) throw ConfigError("duplicate parameter " + name);
  t.impl()->requires_grad = true;
  t.impl()->needs_grad = true;
  names_.push_back(name);
  auto [it, ok] = params_.emplace(name, std::move(t));
  moment1_[name].assign(it->second.values().size(), 0.0);
  moment2_[name].assign(it->second.values().size(), 0.0);
  return it->second;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("no parameter " + name);
  return it->second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("no parameter " + name);
  return it->second;
}

bool ParameterStore::has(const std::string& name) const {
  return params_.count(name) != 0;
}

int64_t ParameterStore::parameter_count() const {
  int64_t total = 0;
  for (const auto& [_, t] : params_) total += t.size();
  return total;
}

void ParameterStore::zero_grads() {
  for (auto& [_, t] : params_) t.zero_grad();
}

std::string ParameterStore::serialize(
    const std::vector<std::pair<std::string, std::string>>& meta) const {
  std::ostringstream out;
  out << "format_version: 1\n";
  out << "step: " << step_ << "\n";
  for (const auto& [k, v] : meta) out << "meta " << k << ' ' << v << '\n';
  for (const std::string& name : names_) {
    const Tensor& t = params_.at(name);
    out << "param " << name << ' ' << t.rows() << ' ' << t.cols();
    for (double v : t.values()) out << ' ' << double_to_hex(v);
    out << '\n';
  }
  return out.str();
}

std::pair<ParameterStore, std::map<std::string, std::string>>
ParameterStore::deserialize(const std::string& text) {
  ParameterStore store;
  std::map<std::string, std::string> meta;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("format_version", 0) == 0) continue;
    if (line.rfind("step: ", 0) == 0) {
      store.step_ = std::stoll(line.substr(6));
      continue;
    }
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string k;
      ls >> k;
      std::string v;
      std::getline(ls, v);
      if (!v.empty() && v[0] == ' ') v = v.substr(1);
      meta[k] = v;
    } else if (tag == "param") {
      std::string name;
      int rows = 0, cols = 0;
      ls >> name >> rows >> cols;
      std::vector<double> data;
      data.reserve(static_cast<size_t>(rows) * cols);
      std::string hex;
      while (ls >> hex) data.push_back(hex_to_double(hex));
      store.add(name, Tensor::from_values(rows, cols, std::move(data)));
    } else {
      throw IoError("unknown checkpoint record '" + tag + "'");
    }
  }
  return {std::move(store), std::move(meta)};
}

void adam_step(ParameterStore& store, double lr, double beta1, double beta2,
               double eps, double weight_decay) {
  store.step_ += 1;
  double t = static_cast<double>(store.step_);
  double bc1 = 1.0 - std::pow(beta1, t);
  double bc2 = 1.0 - std::pow(beta2, t);
  for (const std::string& name : store.names_) {
    Tensor& p = store.params_.at(name);
    std::vector<double>& theta = p.impl()->data;
    p.impl()->ensure_grad();
    std::vector<double>& g = p.impl()->grad;
    std::vector<double>& m1 = store.moment1_.at(name);
    std::vector<double>& m2 = store.moment2_.at(name);
    for (size_t i = 0; i < theta.size(); ++i) {
      m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
      m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
      double mhat = m1[i] / bc1;
      double vhat = m2[i] / bc2;
      double old = theta[i];
      theta[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * old);
      g[i] = 0.0;
    }
  }
}

GradCheckResult finite_diff_check(const std::function<Tensor()>& forward,
                                  ParameterStore& params, double eps,
                                  double tolerance, int sample_coords,
                                  uint64_t seed, bool throw_on_fail) {
  params.zero_grads();
  Tensor loss = forward();
  loss.backward();

  struct Coord {
    std::string name;
    size_t index;
    double analytic;
  };
  std::vector<Coord> coords;
  for (const std::string& name : params.names()) {
    const Tensor& t = params.get(name);
    const std::vector<double>& g = t.grad();
    for (size_t i = 0; i < g.size(); ++i) coords.push_back({name, i, g[i]});
  }
  params.zero_grads();

  Rng rng(seed);
  std::vector<size_t> chosen;
  if (static_cast<int>(coords.size()) <= sample_coords) {
    chosen.resize(coords.size());
    for (size_t i = 0; i < coords.size(); ++i) chosen[i] = i;
  } else {
    std::unordered_set<size_t> picked;
    while (static_cast<int>(picked.size()) < sample_coords)
      picked.insert(static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(coords.size()) - 1)));
    chosen.assign(picked.begin(), picked.end());
    std::sort(chosen.begin(), chosen.end());
  }

  GradCheckResult result;
  result.coords_checked = static_cast<int>(chosen.size());
  double worst_a = 0.0, worst_n = 0.0;
  std::string worst_name;
  for (size_t ci : chosen) {
    const Coord& coord = coords[ci];
    std::vector<double>& data = params.get(coord.name).values_mut();
    double saved = data[coord.index];
    data[coord.index] = saved + eps;
    double fp = forward().item();
    data[coord.index] = saved - eps;
    double fm = forward().item();
    data[coord.index] = saved;
    double numeric = (fp - fm) / (2.0 * eps);
    double denom = std::max({std::fabs(coord.analytic), std::fabs(numeric), 1.0});
    double rel = std::fabs(coord.analytic - numeric) / denom;
    if (rel > result.max_rel_err) {
      result.max_rel_err = rel;
      worst_a = coord.analytic;
      worst_n = numeric;
      worst_name = coord.name + "[" + std::to_string(coord.index) + "]";
    }
  }
  result.passed = result.max_rel_err < tolerance;
  if (!worst_name.empty()) {
    std::ostringstream w;
    w << worst_name << " analytic=" << worst_a << " numeric=" << worst_n
      << " rel_err=" << result.max_rel_err;
    result.worst = w.str();
  }
  if (!result.passed && throw_on_fail)
    throw CheckFailed("gradient check exceeded tolerance " +
                      std::to_string(tolerance) + ": " + result.worst);
  return result;
}

}  // namespace branchforge
