#include "cvrl/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace cvrl {

namespace detail {

namespace {
thread_local int g_no_grad_depth = 0;
uint64_t g_mark_epoch = 0;
}  // namespace

bool grad_enabled() { return g_no_grad_depth == 0; }

}  // namespace detail

NoGradGuard::NoGradGuard() { ++detail::g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --detail::g_no_grad_depth; }

Var::Var(Mat v, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->val = std::move(v);
  node_->requires_grad = requires_grad;
}

Var::Var(Eigen::Index rows, Eigen::Index cols, double fill)
    : Var(Mat::Constant(rows, cols, fill)) {}

Var Var::zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad) {
  return Var(Mat::Zero(rows, cols), requires_grad);
}

Var Var::scalar(double v) { return Var(Mat::Constant(1, 1, v)); }

const Mat& Var::grad() const {
  static const Mat empty;
  if (!node_ || !node_->has_grad) return empty;
  return node_->grad;
}

Mat& Var::grad_mut() {
  if (!node_->has_grad) {
    node_->grad = Mat::Zero(node_->val.rows(), node_->val.cols());
    node_->has_grad = true;
  }
  return node_->grad;
}

void Var::zero_grad() {
  if (node_) {
    node_->has_grad = false;
    node_->grad.resize(0, 0);
  }
}

Var make_op(Mat val, std::vector<Var> parents, std::function<void(detail::Node&)> backprop) {
  bool needs = false;
  if (detail::grad_enabled()) {
    for (const auto& p : parents)
      if (p.requires_grad()) {
        needs = true;
        break;
      }
  }
  Var out(std::move(val), needs);
  if (needs) {
    auto& n = *out.node();
    n.parents.reserve(parents.size());
    n.parent_needs.reserve(parents.size());
    for (auto& p : parents) {
      n.parents.push_back(p.node());
      n.parent_needs.push_back(p.requires_grad() ? 1 : 0);
    }
    n.backprop = std::move(backprop);
  }
  return out;
}

void backward(const Var& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1)
    throw std::invalid_argument("backward: loss must be a defined 1x1 Var");
  if (!loss.requires_grad()) return;

  using detail::Node;
  const uint64_t mark = ++detail::g_mark_epoch;

  // iterative post-order DFS to get a reverse topological order
  std::vector<Node*> order;
  std::vector<std::pair<Node*, size_t>> stack;
  Node* root = loss.node().get();
  root->mark = mark;
  stack.emplace_back(root, 0);
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      const size_t idx = i++;
      Node* p = n->parents[idx].get();
      if (p->mark != mark && n->parent_needs[idx]) {
        p->mark = mark;
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Mat::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->has_grad) n->backprop(*n);
  }
}

FreezeGuard::FreezeGuard(std::span<const Var> params) {
  saved_.reserve(params.size());
  for (const auto& p : params) {
    saved_.emplace_back(p.node(), p.requires_grad());
    p.node()->requires_grad = false;
  }
}

FreezeGuard::~FreezeGuard() {
  for (auto& [n, rg] : saved_) n->requires_grad = rg;
}

// ---------------------------------------------------------------------------
// ops

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](detail::Node& n) {
    n.push(0, n.grad);
    n.push(1, n.grad);
  });
}

Var operator-(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](detail::Node& n) {
    n.push(0, n.grad);
    n.push(1, -n.grad);
  });
}

Var operator*(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Mat av = a.value(), bv = b.value();
  return make_op(av.cwiseProduct(bv), {a, b}, [av, bv](detail::Node& n) {
    n.push(0, n.grad.cwiseProduct(bv));
    n.push(1, n.grad.cwiseProduct(av));
  });
}

Var operator/(const Var& a, const Var& b) {
  check_same_shape(a, b, "div");
  Mat av = a.value(), bv = b.value();
  return make_op(av.cwiseQuotient(bv), {a, b}, [av, bv](detail::Node& n) {
    n.push(0, n.grad.cwiseQuotient(bv));
    n.push(1, -n.grad.cwiseProduct(av).cwiseQuotient(bv.cwiseProduct(bv)));
  });
}

Var operator-(const Var& a) {
  return make_op(-a.value(), {a}, [](detail::Node& n) { n.push(0, -n.grad); });
}

Var operator*(double s, const Var& a) {
  return make_op(s * a.value(), {a},
                 [s](detail::Node& n) { n.push(0, s * n.grad); });
}

Var operator*(const Var& a, double s) { return s * a; }

Var operator+(const Var& a, double s) {
  return make_op(a.value().array() + s, {a},
                 [](detail::Node& n) { n.push(0, n.grad); });
}

Var operator-(const Var& a, double s) { return a + (-s); }

Var tanh_(const Var& x) {
  Mat y = x.value().array().tanh();
  return make_op(y, {x}, [y](detail::Node& n) {
    n.push(0, (n.grad.array() * (1.0 - y.array().square())).matrix());
  });
}

Var sigmoid_(const Var& x) {
  Mat y = (1.0 / (1.0 + (-x.value().array()).exp())).matrix();
  return make_op(y, {x}, [y](detail::Node& n) {
    n.push(0, (n.grad.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var silu_(const Var& x) {
  Mat sig = (1.0 / (1.0 + (-x.value().array()).exp())).matrix();
  Mat y = x.value().cwiseProduct(sig);
  Mat xv = x.value();
  return make_op(y, {x}, [sig, xv](detail::Node& n) {
    // d/dx x*sig(x) = sig(x) * (1 + x * (1 - sig(x)))
    Mat d = sig.array() * (1.0 + xv.array() * (1.0 - sig.array()));
    n.push(0, n.grad.cwiseProduct(d));
  });
}

Var softplus_(const Var& x) {
  // stable: max(x, 0) + log1p(exp(-|x|))
  Mat y = x.value().array().max(0.0) + (-x.value().array().abs()).exp().log1p();
  Mat sig = (1.0 / (1.0 + (-x.value().array()).exp())).matrix();
  return make_op(y, {x}, [sig](detail::Node& n) {
    n.push(0, n.grad.cwiseProduct(sig));
  });
}

Var exp_(const Var& x) {
  Mat y = x.value().array().exp();
  return make_op(y, {x},
                 [y](detail::Node& n) { n.push(0, n.grad.cwiseProduct(y)); });
}

Var log_(const Var& x) {
  Mat xv = x.value();
  return make_op(xv.array().log(), {x}, [xv](detail::Node& n) {
    n.push(0, n.grad.cwiseQuotient(xv));
  });
}

Var square_(const Var& x) {
  Mat xv = x.value();
  return make_op(xv.array().square(), {x}, [xv](detail::Node& n) {
    n.push(0, (2.0 * n.grad.array() * xv.array()).matrix());
  });
}

Var relu_(const Var& x) {
  Mat xv = x.value();
  return make_op(xv.array().max(0.0), {x}, [xv](detail::Node& n) {
    n.push(0, (n.grad.array() * (xv.array() > 0.0).cast<double>()).matrix());
  });
}

Var min_(const Var& a, const Var& b) {
  check_same_shape(a, b, "min");
  Mat av = a.value(), bv = b.value();
  Mat mask = (av.array() <= bv.array()).cast<double>();
  return make_op(av.cwiseMin(bv), {a, b}, [mask](detail::Node& n) {
    n.push(0, n.grad.cwiseProduct(mask));
    n.push(1, (n.grad.array() * (1.0 - mask.array())).matrix());
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims mismatch");
  Mat av = a.value(), bv = b.value();
  return make_op(av * bv, {a, b}, [av, bv](detail::Node& n) {
    if (n.needs(0)) n.parents[0]->accumulate(n.grad * bv.transpose());
    if (n.needs(1)) n.parents[1]->accumulate(av.transpose() * n.grad);
  });
}

Var add_bias(const Var& x, const Var& b) {
  if (b.cols() != 1 || b.rows() != x.rows())
    throw std::invalid_argument("add_bias: bias must be (rows x 1)");
  Mat y = x.value();
  y.colwise() += Eigen::VectorXd(b.value().col(0));
  return make_op(std::move(y), {x, b}, [](detail::Node& n) {
    n.push(0, n.grad);
    if (n.needs(1)) n.parents[1]->accumulate(n.grad.rowwise().sum());
  });
}

Var vcat(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("vcat: column mismatch");
  Mat y(a.rows() + b.rows(), a.cols());
  y.topRows(a.rows()) = a.value();
  y.bottomRows(b.rows()) = b.value();
  const Eigen::Index ra = a.rows(), rb = b.rows();
  return make_op(std::move(y), {a, b}, [ra, rb](detail::Node& n) {
    n.push(0, n.grad.topRows(ra));
    n.push(1, n.grad.bottomRows(rb));
  });
}

Var rows(const Var& x, Eigen::Index r0, Eigen::Index nr) {
  if (r0 < 0 || r0 + nr > x.rows()) throw std::invalid_argument("rows: out of range");
  const Eigen::Index total = x.rows();
  return make_op(x.value().middleRows(r0, nr), {x}, [r0, nr, total](detail::Node& n) {
    if (!n.needs(0)) return;
    Mat g = Mat::Zero(total, n.grad.cols());
    g.middleRows(r0, nr) = n.grad;
    n.parents[0]->accumulate(g);
  });
}

Var cols(const Var& x, Eigen::Index c0, Eigen::Index nc) {
  if (c0 < 0 || c0 + nc > x.cols()) throw std::invalid_argument("cols: out of range");
  const Eigen::Index total = x.cols();
  return make_op(x.value().middleCols(c0, nc), {x}, [c0, nc, total](detail::Node& n) {
    if (!n.needs(0)) return;
    Mat g = Mat::Zero(n.grad.rows(), total);
    g.middleCols(c0, nc) = n.grad;
    n.parents[0]->accumulate(g);
  });
}

Var hcat(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("hcat: empty input");
  Eigen::Index nc = 0;
  for (const auto& x : xs) nc += x.cols();
  Mat y(xs[0].rows(), nc);
  std::vector<Eigen::Index> offs(xs.size());
  Eigen::Index o = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    offs[i] = o;
    y.middleCols(o, xs[i].cols()) = xs[i].value();
    o += xs[i].cols();
  }
  std::vector<Eigen::Index> widths(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) widths[i] = xs[i].cols();
  return make_op(std::move(y), xs, [offs, widths](detail::Node& n) {
    for (size_t i = 0; i < n.parents.size(); ++i)
      n.push(i, n.grad.middleCols(offs[i], widths[i]));
  });
}

Var transpose_(const Var& x) {
  return make_op(x.value().transpose(), {x}, [](detail::Node& n) {
    n.push(0, n.grad.transpose());
  });
}

Var sum_all(const Var& x) {
  const Eigen::Index r = x.rows(), c = x.cols();
  return make_op(Mat::Constant(1, 1, x.value().sum()), {x}, [r, c](detail::Node& n) {
    n.push(0, Mat::Constant(r, c, n.grad(0, 0)));
  });
}

Var mean_all(const Var& x) {
  const Eigen::Index r = x.rows(), c = x.cols();
  const double inv = 1.0 / static_cast<double>(r * c);
  return make_op(Mat::Constant(1, 1, x.value().mean()), {x}, [r, c, inv](detail::Node& n) {
    n.push(0, Mat::Constant(r, c, n.grad(0, 0) * inv));
  });
}

Var sum_rows(const Var& x) {
  const Eigen::Index r = x.rows();
  return make_op(x.value().colwise().sum(), {x}, [r](detail::Node& n) {
    if (!n.needs(0)) return;
    Mat g(r, n.grad.cols());
    g.rowwise() = n.grad.row(0);
    n.parents[0]->accumulate(g);
  });
}

Var mean_cols(const Var& x) {
  const Eigen::Index c = x.cols();
  const double inv = 1.0 / static_cast<double>(c);
  return make_op(x.value().rowwise().mean(), {x}, [c, inv](detail::Node& n) {
    if (!n.needs(0)) return;
    Mat g(n.grad.rows(), c);
    g.colwise() = Eigen::VectorXd(n.grad.col(0) * inv);
    n.parents[0]->accumulate(g);
  });
}

Var logsumexp_rows(const Var& x) {
  const Mat& xv = x.value();
  Mat out(1, xv.cols());
  Mat softmax(xv.rows(), xv.cols());
  for (Eigen::Index j = 0; j < xv.cols(); ++j) {
    const double m = xv.col(j).maxCoeff();
    Eigen::ArrayXd e = (xv.col(j).array() - m).exp();
    const double s = e.sum();
    out(0, j) = m + std::log(s);
    softmax.col(j) = (e / s).matrix();
  }
  return make_op(std::move(out), {x}, [softmax](detail::Node& n) {
    if (!n.needs(0)) return;
    Mat g = softmax;
    for (Eigen::Index j = 0; j < g.cols(); ++j) g.col(j) *= n.grad(0, j);
    n.parents[0]->accumulate(g);
  });
}

Var diag_as_row(const Var& x) {
  if (x.rows() != x.cols()) throw std::invalid_argument("diag_as_row: matrix not square");
  const Eigen::Index nx = x.rows();
  Mat y(1, nx);
  for (Eigen::Index i = 0; i < nx; ++i) y(0, i) = x.value()(i, i);
  return make_op(std::move(y), {x}, [nx](detail::Node& n) {
    if (!n.needs(0)) return;
    Mat g = Mat::Zero(nx, nx);
    for (Eigen::Index i = 0; i < nx; ++i) g(i, i) = n.grad(0, i);
    n.parents[0]->accumulate(g);
  });
}

Var detach(const Var& x) { return Var(x.value(), false); }

double global_grad_norm(std::span<const Var> params) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.has_grad()) sq += p.grad().squaredNorm();
  return std::sqrt(sq);
}

void zero_grads(std::span<const Var> params) {
  for (auto p : params) p.zero_grad();
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::vector<Var> params, double lr, double beta1, double beta2, double eps,
           double clip_norm)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      clip_norm_(clip_norm) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(Mat::Zero(p.rows(), p.cols()));
    v_.push_back(Mat::Zero(p.rows(), p.cols()));
  }
}

void Adam::step() {
  ++t_;
  double scale = 1.0;
  if (clip_norm_ > 0.0) {
    const double norm = global_grad_norm(params_);
    if (norm > clip_norm_) scale = clip_norm_ / norm;
  }
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    Mat g = scale * params_[i].grad();
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    Mat mhat = m_[i] / bc1;
    Mat vhat = v_[i] / bc2;
    params_[i].value_mut().array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
  }
}

void Adam::zero_grad() { zero_grads(params_); }

}  // namespace cvrl
