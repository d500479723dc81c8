#pragma once

#include "posepyr/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

namespace posepyr {

template <typename T>
struct AdamState {
  ArrayX<T> m;
  ArrayX<T> v;
  std::int64_t step = 0;
};

/// A trainable tensor with its hierarchical name and Adam moments.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  AdamState<T> adam;

  Parameter(std::string n, Tensor<T> t) : name(std::move(n)), tensor(std::move(t)) {
    tensor.set_requires_grad(true);
    adam.m = ArrayX<T>::Zero(tensor.numel());
    adam.v = ArrayX<T>::Zero(tensor.numel());
  }
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update per parameter. A parameter the backward pass
/// did not reach is updated with a zero gradient.
template <typename T>
void adam_step(std::span<Parameter<T>> params, const AdamOptions& opt) {
  const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
  for (auto& p : params) {
    auto& st = p.adam;
    ++st.step;
    if (p.tensor.has_grad()) {
      const ArrayX<T>& g = p.tensor.grad();
      st.m = b1 * st.m + (T(1) - b1) * g;
      st.v = b2 * st.v + (T(1) - b2) * g.square();
    } else {
      st.m *= b1;
      st.v *= b2;
    }
    const double t = static_cast<double>(st.step);
    const T c1 = static_cast<T>(1.0 - std::pow(opt.beta1, t));
    const T c2 = static_cast<T>(1.0 - std::pow(opt.beta2, t));
    const T lr = static_cast<T>(opt.lr), eps = static_cast<T>(opt.eps);
    p.tensor.data() -= lr * (st.m / c1) / ((st.v / c2).sqrt() + eps);
  }
}

template <typename T>
void zero_grad(std::span<Parameter<T>> params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace posepyr
