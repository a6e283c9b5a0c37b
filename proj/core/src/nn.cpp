#include "routecast/nn.hpp"

#include <cmath>

namespace routecast {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, std::move(init));
    return entries_.back().second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
}

std::size_t ParamStore::total_elements() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
}

Bindings::Bindings(Tape& tape, const ParamStore& store) {
    for (const auto& [name, tensor] : store.entries()) {
        vars_.emplace(name, tape.param(tensor));
    }
}

Bindings::Bindings(Tape& tape, const ParamStore& store, const std::string& focus, const Var& focus_var) {
    bool found = false;
    for (const auto& [name, tensor] : store.entries()) {
        if (name == focus) {
            if (!focus_var.value().same_shape(tensor)) {
                throw ShapeError("Bindings: replacement for " + name + " has shape " +
                                 focus_var.value().shape_str() + ", expected " + tensor.shape_str());
            }
            vars_.emplace(name, focus_var);
            found = true;
        } else {
            vars_.emplace(name, tape.constant(tensor));
        }
    }
    if (!found) throw ConfigError("Bindings: unknown focus parameter " + focus);
}

const Var& Bindings::operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw ConfigError("unbound parameter: " + name);
    return it->second;
}

Tensor glorot_uniform(Shape shape, std::mt19937_64& rng) {
    double fan_in = 1.0, fan_out = 1.0;
    if (shape.size() >= 2) {
        fan_in = static_cast<double>(shape[shape.size() - 2]);
        fan_out = static_cast<double>(shape[shape.size() - 1]);
    } else if (shape.size() == 1) {
        fan_in = fan_out = static_cast<double>(shape[0]);
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    return uniform_tensor(std::move(shape), -limit, limit, rng);
}

Tensor uniform_tensor(Shape shape, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(lo, hi);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = uni(rng);
    return t;
}

Var affine(const Var& x, const Var& w, const Var& b) { return add(matmul(x, w), b); }

} // namespace routecast
