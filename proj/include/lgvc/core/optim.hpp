#pragma once

#include <iosfwd>
#include <vector>

#include "lgvc/core/autograd.hpp"

namespace lgvc::core {

/// Adam over a fixed parameter list. State is positional, so serialize and
/// deserialize must see the same parameter order.
class Adam {
 public:
  explicit Adam(std::vector<Var> params, double lr = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8,
                double weight_decay = 0.0);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void zero_grad();
  void step();

  /// Text state dump (step count + moment tensors) for bit-exact resume.
  void serialize(std::ostream& os) const;
  void deserialize(std::istream& is);

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  long t_ = 0;
};

}  // namespace lgvc::core
