#pragma once

#include "cvrl/conv.hpp"
#include "cvrl/random.hpp"
#include "cvrl/tensor.hpp"

#include <string>
#include <vector>

namespace cvrl {

// Flat list of named learnable parameters; the unit of checkpointing and of
// optimizer ownership.
class ParamRegistry {
 public:
  Var add(const std::string& name, Var p) {
    p.set_requires_grad(true);
    names_.push_back(name);
    params_.push_back(p);
    return p;
  }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Var>& params() const { return params_; }
  Var find(const std::string& name) const;
  size_t total_size() const;

 private:
  std::vector<std::string> names_;
  std::vector<Var> params_;
};

Mat glorot_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                   Eigen::Index fan_out, Rng& rng);

struct Linear {
  Var weight;  // (out x in)
  Var bias;    // (out x 1)

  Linear() = default;
  Linear(int in, int out, Rng& rng, ParamRegistry& reg, const std::string& name);
  Var operator()(const Var& x) const { return add_bias(matmul(weight, x), bias); }
};

enum class Act { none, silu, tanh };

// Dense stack: `layers` total linear layers, hidden activations between them,
// optional activation on the output (none by default).
struct MLP {
  std::vector<Linear> linears;
  Act hidden_act = Act::silu;

  MLP() = default;
  MLP(int in, int hidden, int out, int layers, Rng& rng, ParamRegistry& reg,
      const std::string& name, Act hidden_act = Act::silu);
  Var operator()(const Var& x) const;
};

struct Conv2dLayer {
  Var weight;  // (out_c x in_c*k*k)
  Var bias;    // (out_c x 1)
  ConvDims dims;

  Conv2dLayer() = default;
  Conv2dLayer(const ConvDims& d, Rng& rng, ParamRegistry& reg, const std::string& name);
  Var operator()(const Var& x) const { return conv2d(x, weight, bias, dims); }
};

struct ConvT2dLayer {
  Var weight;  // (in_c x out_c*k*k)
  Var bias;    // (out_c x 1)
  ConvDims dims;

  ConvT2dLayer() = default;
  ConvT2dLayer(const ConvDims& d, Rng& rng, ParamRegistry& reg, const std::string& name);
  Var operator()(const Var& x) const { return conv2d_transpose(x, weight, bias, dims); }
};

// Standard GRU cell. Gate layout in the stacked weights: [reset; update; candidate].
// With all-zero weights, zero input and zero state the update is exactly zero.
struct GRUCell {
  Var w_ih;  // (3*hidden x in)
  Var w_hh;  // (3*hidden x hidden)
  Var b_ih;  // (3*hidden x 1)
  Var b_hh;  // (3*hidden x 1)
  int hidden = 0;

  GRUCell() = default;
  GRUCell(int in, int hidden, Rng& rng, ParamRegistry& reg, const std::string& name);
  Var operator()(const Var& x, const Var& h) const;
};

}  // namespace cvrl
