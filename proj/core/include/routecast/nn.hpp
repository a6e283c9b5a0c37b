#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "routecast/autodiff.hpp"
#include "routecast/tensor.hpp"

namespace routecast {

/// Ordered collection of named parameter tensors. Registration order is the
/// initialization order, so a fixed seed reproduces the same model.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor init);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
    std::size_t total_elements() const;

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// One tracked tape leaf per parameter in a store, addressable by name.
class Bindings {
public:
    Bindings(Tape& tape, const ParamStore& store);
    /// Gradient-check binding: everything constant except `focus`, which is
    /// bound to the provided variable.
    Bindings(Tape& tape, const ParamStore& store, const std::string& focus, const Var& focus_var);
    const Var& operator[](const std::string& name) const;

private:
    std::unordered_map<std::string, Var> vars_;
};

Tensor glorot_uniform(Shape shape, std::mt19937_64& rng);
Tensor uniform_tensor(Shape shape, double lo, double hi, std::mt19937_64& rng);

/// x @ w + b with b broadcast over leading axes.
Var affine(const Var& x, const Var& w, const Var& b);

} // namespace routecast
