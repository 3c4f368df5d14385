#include "lgvc/core/optim.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace lgvc::core {

Adam::Adam(std::vector<Var> params, double lr, double beta1, double beta2,
           double eps, double weight_decay)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
      eps_(eps), weight_decay_(weight_decay) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p->value.shape);
    v_.emplace_back(p->value.shape);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    if (p.grad.data.empty()) continue;
    for (std::int64_t j = 0; j < p.value.numel(); ++j) {
      const double g = p.grad[j] + weight_decay_ * p.value[j];
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
      p.value[j] -=
          lr_ * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
    }
  }
}

void Adam::serialize(std::ostream& os) const {
  os.precision(17);
  os << "adam 1 " << t_ << " " << lr_ << " " << params_.size() << "\n";
  for (size_t i = 0; i < params_.size(); ++i) {
    os << m_[i].numel();
    for (std::int64_t j = 0; j < m_[i].numel(); ++j)
      os << " " << m_[i][j] << " " << v_[i][j];
    os << "\n";
  }
}

void Adam::deserialize(std::istream& is) {
  std::string magic;
  int version = 0;
  size_t count = 0;
  is >> magic >> version >> t_ >> lr_ >> count;
  if (magic != "adam" || version != 1 || count != params_.size())
    throw std::runtime_error("optimizer state does not match parameter list");
  for (size_t i = 0; i < count; ++i) {
    std::int64_t numel = 0;
    is >> numel;
    if (numel != m_[i].numel())
      throw std::runtime_error("optimizer state shape mismatch");
    for (std::int64_t j = 0; j < numel; ++j) is >> m_[i][j] >> v_[i][j];
  }
  if (!is) throw std::runtime_error("truncated optimizer state");
}

}  // namespace lgvc::core
