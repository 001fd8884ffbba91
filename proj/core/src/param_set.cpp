#include "fedlmf/param_set.hpp"

#include <cmath>

#include "fedlmf/errors.hpp"

namespace fedlmf {

void ParameterSet::set(const std::string& name, NDArray value) {
    items_.insert_or_assign(name, std::move(value));
}

NDArray& ParameterSet::at(const std::string& name) {
    auto it = items_.find(name);
    if (it == items_.end()) throw ContractError("no parameter named '" + name + "'");
    return it->second;
}

const NDArray& ParameterSet::at(const std::string& name) const {
    auto it = items_.find(name);
    if (it == items_.end()) throw ContractError("no parameter named '" + name + "'");
    return it->second;
}

std::size_t ParameterSet::numel() const {
    std::size_t n = 0;
    for (const auto& [name, arr] : items_) n += arr.numel();
    return n;
}

std::vector<std::string> ParameterSet::names() const {
    std::vector<std::string> out;
    out.reserve(items_.size());
    for (const auto& [name, arr] : items_) out.push_back(name);
    return out;
}

std::vector<double> ParameterSet::flatten() const {
    std::vector<double> out;
    out.reserve(numel());
    for (const auto& [name, arr] : items_) out.insert(out.end(), arr.data.begin(), arr.data.end());
    return out;
}

void ParameterSet::unflatten(const std::vector<double>& flat) {
    if (flat.size() != numel()) throw ContractError("unflatten: size mismatch");
    std::size_t k = 0;
    for (auto& [name, arr] : items_) {
        for (double& v : arr.data) v = flat[k++];
    }
}

bool same_structure(const ParameterSet& a, const ParameterSet& b) {
    if (a.size() != b.size()) return false;
    auto ia = a.begin();
    auto ib = b.begin();
    for (; ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first || ia->second.shape != ib->second.shape) return false;
    }
    return true;
}

namespace {
void require_same(const ParameterSet& a, const ParameterSet& b, const char* op) {
    if (!same_structure(a, b)) throw ContractError(std::string(op) + ": parameter sets are not aggregable");
}
}  // namespace

ParameterSet zeros_like(const ParameterSet& a) {
    ParameterSet out;
    for (const auto& [name, arr] : a) out.set(name, NDArray::zeros(arr.shape));
    return out;
}

void axpy(ParameterSet& y, double alpha, const ParameterSet& x) {
    require_same(y, x, "axpy");
    auto iy = y.begin();
    auto ix = x.begin();
    for (; iy != y.end(); ++iy, ++ix) {
        for (std::size_t i = 0; i < iy->second.data.size(); ++i)
            iy->second.data[i] += alpha * ix->second.data[i];
    }
}

void scale_inplace(ParameterSet& y, double alpha) {
    for (auto& [name, arr] : y)
        for (double& v : arr.data) v *= alpha;
}

ParameterSet add(const ParameterSet& a, const ParameterSet& b) {
    ParameterSet out = a;
    axpy(out, 1.0, b);
    return out;
}

ParameterSet subtract(const ParameterSet& a, const ParameterSet& b) {
    ParameterSet out = a;
    axpy(out, -1.0, b);
    return out;
}

double dot(const ParameterSet& a, const ParameterSet& b) {
    require_same(a, b, "dot");
    double s = 0.0;
    auto ia = a.begin();
    auto ib = b.begin();
    for (; ia != a.end(); ++ia, ++ib)
        for (std::size_t i = 0; i < ia->second.data.size(); ++i)
            s += ia->second.data[i] * ib->second.data[i];
    return s;
}

double l2_norm(const ParameterSet& a) { return std::sqrt(dot(a, a)); }

double max_abs_diff(const ParameterSet& a, const ParameterSet& b) {
    require_same(a, b, "max_abs_diff");
    double m = 0.0;
    auto ia = a.begin();
    auto ib = b.begin();
    for (; ia != a.end(); ++ia, ++ib)
        for (std::size_t i = 0; i < ia->second.data.size(); ++i)
            m = std::max(m, std::fabs(ia->second.data[i] - ib->second.data[i]));
    return m;
}

ParameterSet mean_of(const std::vector<const ParameterSet*>& sets) {
    if (sets.empty()) throw ContractError("mean_of: empty list");
    ParameterSet out = zeros_like(*sets[0]);
    for (const ParameterSet* s : sets) axpy(out, 1.0, *s);
    scale_inplace(out, 1.0 / static_cast<double>(sets.size()));
    return out;
}

}  // namespace fedlmf
