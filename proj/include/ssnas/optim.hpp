#pragma once

#include "ssnas/graph.hpp"

namespace ssnas {

/// SGD with classical momentum and L2 weight decay folded into the gradient.
class SgdMomentum {
public:
    SgdMomentum(std::vector<autodiff::Var> params, double lr, double momentum,
                double weight_decay);
    void step();

private:
    std::vector<autodiff::Var> params_;
    std::vector<Tensor> velocity_;
    double lr_, momentum_, weight_decay_;
};

/// Adam with bias correction; weight decay folded into the gradient.
class Adam {
public:
    Adam(std::vector<autodiff::Var> params, double lr, double weight_decay = 0.0);
    void step();

private:
    std::vector<autodiff::Var> params_;
    std::vector<Tensor> m_, v_;
    double lr_, weight_decay_;
    long t_ = 0;
};

} // namespace ssnas
