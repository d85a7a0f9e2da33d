#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace branchforge {

// Dense 2-D tensor of 64-bit reals with reverse-mode autodiff. The graph of
// an expression is the tape: each result keeps its parents and a backward
// closure, rebuilt per forward pass. Vectors are 1xN or Nx1, scalars 1x1.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor from_values(int rows, int cols, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return impl_ != nullptr; }
  int rows() const;
  int cols() const;
  int64_t size() const;
  std::vector<int64_t> shape() const;

  const std::vector<double>& values() const;
  std::vector<double>& values_mut();  // leaves only; invalid mid-graph
  double at(int r, int c) const;
  double item() const;  // 1x1

  bool requires_grad() const;
  // True when this tensor's value depends on some requires_grad leaf.
  bool needs_grad() const;
  const std::vector<double>& grad() const;
  std::vector<double>& grad_mut();
  void zero_grad();

  // Reverse-mode accumulation from this scalar into every reachable leaf.
  void backward() const;

  struct Impl;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  const std::shared_ptr<Impl>& impl() const { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

namespace ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scalar_mul(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& m, const Tensor& v);       // m: NxD, v: 1xD
Tensor add_outer(const Tensor& col, const Tensor& row);    // Nx1 + 1xM -> NxM
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a . b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T . b
Tensor transpose(const Tensor& a);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor gather_rows(const Tensor& a, const std::vector<int>& ids);  // embedding lookup
Tensor broadcast_row(const Tensor& v, int n);  // 1xD -> NxD
Tensor softmax_rows(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
// Mean cross-entropy of logits rows against target ids, restricted to rows
// with a nonzero mask entry. targets/mask must match the row count.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<uint8_t>& mask);
Tensor sum_all(const Tensor& a);
Tensor mean_rows(const Tensor& a);  // NxD -> 1xD
// Copy of `base` with rows at `positions` replaced by the rows of `rows`.
// Gradients route to `base` for untouched rows and to `rows` for replaced
// ones. Throws SlotMismatch when counts disagree.
Tensor inject_rows(const Tensor& base, const std::vector<int>& positions,
                   const Tensor& rows);

}  // namespace ops

// Named parameters with per-parameter optimizer state.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  int64_t step() const { return step_; }
  int64_t parameter_count() const;
  void zero_grads();

  // Checkpoint text: format_version, caller metadata, then one record per
  // parameter with hexadecimal float payloads (bit-exact round-trip).
  std::string serialize(
      const std::vector<std::pair<std::string, std::string>>& meta = {}) const;
  static std::pair<ParameterStore, std::map<std::string, std::string>>
  deserialize(const std::string& text);

  friend void adam_step(ParameterStore&, double, double, double, double, double);

 private:
  std::vector<std::string> names_;
  std::map<std::string, Tensor> params_;
  std::map<std::string, std::vector<double>> moment1_, moment2_;
  int64_t step_ = 0;
};

// Adaptive-moment update with decoupled weight decay; zeroes grads after the
// step. With zero gradients and decay w, every parameter shrinks by exactly
// (1 - lr * w) per step.
void adam_step(ParameterStore& store, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8,
               double weight_decay = 0.0);

struct GradCheckResult {
  double max_rel_err = 0.0;
  int coords_checked = 0;
  bool passed = false;
  std::string worst;  // description of the worst coordinates
};

// Central-difference check of d(forward)/d(params) against the analytic
// gradients, over a random subsample of coordinates. `forward` must be a
// deterministic pure function of the store. Throws CheckFailed when the
// tolerance is exceeded and throw_on_fail is set.
GradCheckResult finite_diff_check(const std::function<Tensor()>& forward,
                                  ParameterStore& params, double eps = 1e-5,
                                  double tolerance = 1e-4,
                                  int sample_coords = 200,
                                  uint64_t seed = 0x5eed1234,
                                  bool throw_on_fail = true);

}  // namespace branchforge
