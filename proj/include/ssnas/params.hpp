#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "ssnas/graph.hpp"

namespace ssnas {

/// Optimizer groups of Algorithm-1: network weights w, fusion parameters
/// beta, architecture parameters alpha/gamma, combination matrices G.
enum class ParamGroup { weights, fusion, alpha, gamma, gmat };

inline const char* param_group_name(ParamGroup g) {
    switch (g) {
        case ParamGroup::weights: return "weights";
        case ParamGroup::fusion: return "fusion";
        case ParamGroup::alpha: return "alpha";
        case ParamGroup::gamma: return "gamma";
        case ParamGroup::gmat: return "gmat";
    }
    return "?";
}

/// Every learnable leaf of one network is created through this registry, so
/// group membership is total by construction. Registration order is the
/// serialization order and pairs layers across the two co-trained networks.
class ParamRegistry {
public:
    struct Entry {
        std::string name;
        autodiff::Var var;
        ParamGroup group;
    };

    autodiff::Var add(ParamGroup group, std::string name, Tensor init) {
        autodiff::Var v = autodiff::Var::leaf(std::move(init), true);
        entries_.push_back({std::move(name), v, group});
        return v;
    }

    /// Registers a leaf created elsewhere (e.g. by the candidate-op factory).
    void adopt(ParamGroup group, std::string name, const autodiff::Var& v) {
        entries_.push_back({std::move(name), v, group});
    }

    /// Conv kernels with C_out >= 2 participate in the independence loss;
    /// they are compared as (C_out, fan_in) matrices.
    void register_independence(const autodiff::Var& kernel) {
        if (kernel.value().dim(0) >= 2) indep_layers_.push_back(kernel);
    }

    const std::vector<Entry>& entries() const { return entries_; }
    const std::vector<autodiff::Var>& independence_layers() const { return indep_layers_; }

    std::vector<autodiff::Var> group_vars(ParamGroup g) const {
        std::vector<autodiff::Var> out;
        for (const Entry& e : entries_)
            if (e.group == g) out.push_back(e.var);
        return out;
    }

    std::int64_t group_numel(ParamGroup g) const {
        std::int64_t n = 0;
        for (const Entry& e : entries_)
            if (e.group == g) n += e.var.value().numel();
        return n;
    }

    /// Raw bytes of one group's values, in registration order.
    std::vector<double> snapshot(ParamGroup g) const {
        std::vector<double> out;
        for (const Entry& e : entries_)
            if (e.group == g)
                out.insert(out.end(), e.var.value().data(),
                           e.var.value().data() + e.var.value().numel());
        return out;
    }

    void restore(ParamGroup g, const std::vector<double>& flat) {
        std::size_t off = 0;
        for (const Entry& e : entries_)
            if (e.group == g) {
                Tensor& v = const_cast<autodiff::Var&>(e.var).mutable_value();
                if (off + static_cast<std::size_t>(v.numel()) > flat.size())
                    throw ContractError("ParamRegistry::restore: blob too short");
                std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                          flat.begin() + static_cast<std::ptrdiff_t>(off) + v.numel(), v.data());
                off += static_cast<std::size_t>(v.numel());
            }
        if (off != flat.size()) throw ContractError("ParamRegistry::restore: blob size mismatch");
    }

    void zero_grads() {
        for (Entry& e : entries_) e.var.clear_grad();
    }

    /// Groups are pairwise disjoint and jointly cover every registered leaf.
    bool audit_partition() const {
        std::unordered_set<const autodiff::Node*> seen;
        for (const Entry& e : entries_)
            if (!seen.insert(e.var.node().get()).second) return false;
        return true;
    }

private:
    std::vector<Entry> entries_;
    std::vector<autodiff::Var> indep_layers_;
};

} // namespace ssnas
