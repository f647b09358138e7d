#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "regulargpt/autodiff.hpp"

namespace regulargpt {

// Standard Adam with bias correction. One state per parameter, keyed by
// position in the parameter list; the caller keeps the list order stable.
template <typename T>
class Adam {
  public:
    Adam(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Applies one step over all parameters. Throws on non-finite gradients
    // without touching any parameter; the training loop decides what to do.
    void step(std::vector<Parameter<T>*>& params) {
        for (Parameter<T>* p : params)
            if (!p->grad.all_finite())
                throw std::runtime_error("adam_step: non-finite gradient in parameter '" + p->name + "'");
        if (m_.empty()) {
            for (Parameter<T>* p : params) {
                m_.push_back(Tensor<T>::zeros(p->value.shape));
                v_.push_back(Tensor<T>::zeros(p->value.shape));
            }
        }
        ++t_;
        T c1 = T(1) - std::pow(beta1_, T(t_));
        T c2 = T(1) - std::pow(beta2_, T(t_));
        for (size_t i = 0; i < params.size(); ++i) {
            Parameter<T>& p = *params[i];
            for (size_t j = 0; j < p.value.data.size(); ++j) {
                T g = p.grad.data[j];
                m_[i].data[j] = beta1_ * m_[i].data[j] + (T(1) - beta1_) * g;
                v_[i].data[j] = beta2_ * v_[i].data[j] + (T(1) - beta2_) * g * g;
                T mhat = m_[i].data[j] / c1;
                T vhat = v_[i].data[j] / c2;
                p.value.data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    int64_t steps() const { return t_; }

  private:
    T lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

}  // namespace regulargpt
