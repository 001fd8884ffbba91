#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedlmf/ndarray.hpp"

namespace fedlmf {

/// Named collection of parameter arrays, ordered lexicographically by name.
/// The ordered map makes flattening and every reduction over parameters
/// deterministic. Two sets are aggregable iff names and shapes match exactly.
class ParameterSet {
public:
    using Map = std::map<std::string, NDArray>;
    using const_iterator = Map::const_iterator;
    using iterator = Map::iterator;

    ParameterSet() = default;

    void set(const std::string& name, NDArray value);
    NDArray& at(const std::string& name);
    const NDArray& at(const std::string& name) const;
    bool contains(const std::string& name) const { return items_.count(name) > 0; }

    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    std::size_t numel() const;

    iterator begin() { return items_.begin(); }
    iterator end() { return items_.end(); }
    const_iterator begin() const { return items_.begin(); }
    const_iterator end() const { return items_.end(); }

    std::vector<std::string> names() const;

    /// Deterministic flattening in name order.
    std::vector<double> flatten() const;
    /// Inverse of flatten() against this set's structure.
    void unflatten(const std::vector<double>& flat);

private:
    Map items_;
};

/// True iff names and shapes match exactly.
bool same_structure(const ParameterSet& a, const ParameterSet& b);

ParameterSet zeros_like(const ParameterSet& a);
/// y += alpha * x  (throws ContractError on structure mismatch)
void axpy(ParameterSet& y, double alpha, const ParameterSet& x);
void scale_inplace(ParameterSet& y, double alpha);
ParameterSet add(const ParameterSet& a, const ParameterSet& b);
ParameterSet subtract(const ParameterSet& a, const ParameterSet& b);
double dot(const ParameterSet& a, const ParameterSet& b);
double l2_norm(const ParameterSet& a);
/// Largest |a - b| over all entries.
double max_abs_diff(const ParameterSet& a, const ParameterSet& b);

/// Unweighted arithmetic mean of structurally identical sets.
ParameterSet mean_of(const std::vector<const ParameterSet*>& sets);

}  // namespace fedlmf
