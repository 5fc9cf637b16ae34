#pragma once

#include <memory>
#include <string>
#include <vector>

#include "msa/random.hpp"
#include "msa/tensor.hpp"

namespace msa::nn {

/// A trainable tensor and its gradient, addressed by a stable hierarchical name.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;
};

template <typename T>
using ParameterList = std::vector<Parameter<T>>;

/// Single-input, single-output layer with an explicit backward pass.
///
/// forward() caches whatever backward() needs; backward() must be called at
/// most once per forward(), returns dL/dinput and accumulates parameter
/// gradients. Instances are not safe for concurrent use.
template <typename T>
class Module {
public:
    virtual ~Module() = default;

    virtual Tensor<T> forward(const Tensor<T>& x) = 0;
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

    virtual void collect(ParameterList<T>& out, const std::string& prefix) { (void)out, (void)prefix; }
    virtual void init(Rng& rng) { (void)rng; }
};

template <typename T>
class Identity final : public Module<T> {
public:
    Tensor<T> forward(const Tensor<T>& x) override { return x; }
    Tensor<T> backward(const Tensor<T>& g) override { return g; }
};

inline std::string join_name(const std::string& prefix, const std::string& leaf)
{
    return prefix.empty() ? leaf : prefix + "." + leaf;
}

}  // namespace msa::nn
