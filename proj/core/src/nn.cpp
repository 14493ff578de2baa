#include "cvrl/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace cvrl {

Var ParamRegistry::find(const std::string& name) const {
  for (size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return params_[i];
  throw std::out_of_range("ParamRegistry: no parameter named " + name);
}

size_t ParamRegistry::total_size() const {
  size_t n = 0;
  for (const auto& p : params_) n += static_cast<size_t>(p.rows() * p.cols());
  return n;
}

Mat glorot_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                   Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-limit, limit);
  return m;
}

Linear::Linear(int in, int out, Rng& rng, ParamRegistry& reg, const std::string& name) {
  weight = reg.add(name + ".weight", Var(glorot_uniform(out, in, in, out, rng)));
  bias = reg.add(name + ".bias", Var(Mat::Zero(out, 1)));
}

MLP::MLP(int in, int hidden, int out, int layers, Rng& rng, ParamRegistry& reg,
         const std::string& name, Act act)
    : hidden_act(act) {
  if (layers < 1) throw std::invalid_argument("MLP: layers must be >= 1");
  linears.reserve(layers);
  for (int i = 0; i < layers; ++i) {
    const int li = i == 0 ? in : hidden;
    const int lo = i == layers - 1 ? out : hidden;
    linears.emplace_back(li, lo, rng, reg, name + ".l" + std::to_string(i));
  }
}

Var MLP::operator()(const Var& x) const {
  Var h = x;
  for (size_t i = 0; i < linears.size(); ++i) {
    h = linears[i](h);
    if (i + 1 < linears.size()) {
      switch (hidden_act) {
        case Act::silu: h = silu_(h); break;
        case Act::tanh: h = tanh_(h); break;
        case Act::none: break;
      }
    }
  }
  return h;
}

Conv2dLayer::Conv2dLayer(const ConvDims& d, Rng& rng, ParamRegistry& reg,
                         const std::string& name)
    : dims(d) {
  const int patch = d.in_c * d.kernel * d.kernel;
  weight = reg.add(name + ".weight",
                   Var(glorot_uniform(d.out_c, patch, patch, d.out_c * d.kernel * d.kernel, rng)));
  bias = reg.add(name + ".bias", Var(Mat::Zero(d.out_c, 1)));
}

ConvT2dLayer::ConvT2dLayer(const ConvDims& d, Rng& rng, ParamRegistry& reg,
                           const std::string& name)
    : dims(d) {
  const int patch = d.out_c * d.kernel * d.kernel;
  weight = reg.add(name + ".weight",
                   Var(glorot_uniform(d.in_c, patch, d.in_c * d.kernel * d.kernel, patch, rng)));
  bias = reg.add(name + ".bias", Var(Mat::Zero(d.out_c, 1)));
}

GRUCell::GRUCell(int in, int hid, Rng& rng, ParamRegistry& reg, const std::string& name)
    : hidden(hid) {
  w_ih = reg.add(name + ".w_ih", Var(glorot_uniform(3 * hid, in, in, hid, rng)));
  w_hh = reg.add(name + ".w_hh", Var(glorot_uniform(3 * hid, hid, hid, hid, rng)));
  b_ih = reg.add(name + ".b_ih", Var(Mat::Zero(3 * hid, 1)));
  b_hh = reg.add(name + ".b_hh", Var(Mat::Zero(3 * hid, 1)));
}

Var GRUCell::operator()(const Var& x, const Var& h) const {
  Var gi = add_bias(matmul(w_ih, x), b_ih);
  Var gh = add_bias(matmul(w_hh, h), b_hh);
  Var r = sigmoid_(rows(gi, 0, hidden) + rows(gh, 0, hidden));
  Var z = sigmoid_(rows(gi, hidden, hidden) + rows(gh, hidden, hidden));
  Var nc = tanh_(rows(gi, 2 * hidden, hidden) + r * rows(gh, 2 * hidden, hidden));
  // h' = (1 - z) .* n + z .* h
  return nc - z * nc + z * h;
}

}  // namespace cvrl
