#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace cvrl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace detail {

struct Node {
  Mat val;
  Mat grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool has_grad = false;
  uint64_t mark = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // snapshot of each parent's requires_grad at graph-build time, so a
  // FreezeGuard in effect during construction sticks for the whole graph
  std::vector<uint8_t> parent_needs;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

  void accumulate(const Mat& g) {
    if (!has_grad) {
      grad = g;
      has_grad = true;
    } else {
      grad += g;
    }
  }

  bool needs(size_t i) const { return parent_needs[i] != 0; }
  void push(size_t i, const Mat& g) {
    if (parent_needs[i]) parents[i]->accumulate(g);
  }
};

bool grad_enabled();

}  // namespace detail

// Reverse-mode autodiff variable over a dense double matrix. Batched data is
// stored column-major with one sample per column. Value semantics: copying a
// Var copies the handle, not the storage.
class Var {
 public:
  Var() = default;
  explicit Var(Mat v, bool requires_grad = false);
  Var(Eigen::Index rows, Eigen::Index cols, double fill);

  static Var zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad = false);
  static Var scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Mat& value() const { return node_->val; }
  Mat& value_mut() { return node_->val; }
  double item() const { return node_->val(0, 0); }
  Eigen::Index rows() const { return node_->val.rows(); }
  Eigen::Index cols() const { return node_->val.cols(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  bool has_grad() const { return node_ && node_->has_grad; }
  const Mat& grad() const;
  Mat& grad_mut();
  void zero_grad();

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  friend Var make_op(Mat val, std::vector<Var> parents, std::function<void(detail::Node&)> backprop);
  std::shared_ptr<detail::Node> node_;
};

// Builds a graph node; drops parents/backprop when gradients are disabled or
// no parent requires them.
Var make_op(Mat val, std::vector<Var> parents, std::function<void(detail::Node&)> backprop);

// Runs reverse-mode accumulation from a 1x1 loss. Grads accumulate until
// zero_grad, so distinct objectives must be separated by a zeroing pass.
void backward(const Var& loss);

// Disables graph construction within scope (pure evaluation).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Temporarily clears requires_grad on a parameter set, e.g. freezing the
// world model while optimizing actions or the actor.
class FreezeGuard {
 public:
  explicit FreezeGuard(std::span<const Var> params);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<std::pair<std::shared_ptr<detail::Node>, bool>> saved_;
};

// ---- elementwise / arithmetic ----
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);  // elementwise
Var operator-(const Var& a);
Var operator*(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator+(const Var& a, double s);
Var operator-(const Var& a, double s);
Var operator/(const Var& a, const Var& b);  // elementwise

Var tanh_(const Var& x);
Var sigmoid_(const Var& x);
Var silu_(const Var& x);
Var softplus_(const Var& x);
Var exp_(const Var& x);
Var log_(const Var& x);
Var square_(const Var& x);
Var relu_(const Var& x);
Var min_(const Var& a, const Var& b);  // elementwise, gradient to the winner

// ---- linear algebra / structure ----
Var matmul(const Var& a, const Var& b);
Var add_bias(const Var& x, const Var& b);      // b: (rows x 1), broadcast over columns
Var vcat(const Var& a, const Var& b);          // stack rows
Var rows(const Var& x, Eigen::Index r0, Eigen::Index n);
Var cols(const Var& x, Eigen::Index c0, Eigen::Index n);
Var hcat(const std::vector<Var>& xs);          // concat columns
Var transpose_(const Var& x);

// ---- reductions ----
Var sum_all(const Var& x);        // 1x1
Var mean_all(const Var& x);       // 1x1
Var sum_rows(const Var& x);       // (1 x C): per-column sum over rows
Var mean_cols(const Var& x);      // (R x 1): mean over columns
Var logsumexp_rows(const Var& x); // (1 x C), numerically stable
Var diag_as_row(const Var& x);    // (1 x N) diagonal of a square matrix

Var detach(const Var& x);

// ---- parameter update helpers ----
double global_grad_norm(std::span<const Var> params);
void zero_grads(std::span<const Var> params);

// Adam with optional global-norm gradient clipping.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Var> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-5, double clip_norm = 100.0);

  void step();
  void zero_grad();
  const std::vector<Var>& params() const { return params_; }
  int64_t step_count() const { return t_; }
  double lr() const { return lr_; }

  // optimizer state round-trips through checkpoints
  std::vector<Mat>& moment1() { return m_; }
  std::vector<Mat>& moment2() { return v_; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  std::vector<Var> params_;
  std::vector<Mat> m_, v_;
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-5, clip_norm_ = 100.0;
  int64_t t_ = 0;
};

}  // namespace cvrl
