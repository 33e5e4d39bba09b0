#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gsnn {

// Dense factorization failed even after the jitter retry. `pivot` is the
// zero-based index of the first non-positive pivot.
class FactorizationError : public std::runtime_error {
public:
    FactorizationError(const std::string& what, int pivot)
        : std::runtime_error(what), pivot_(pivot) {}
    int pivot() const noexcept { return pivot_; }

private:
    int pivot_;
};

// A flow left its domain of existence (finite-time blow-up or an argument
// outside the range of the inverse antiderivative). `value` is the offending
// coordinate value, `index` the flattened coordinate it occurred at (or -1
// for scalar evaluations).
class FlowDomainError : public std::runtime_error {
public:
    FlowDomainError(const std::string& what, double value, long index = -1)
        : std::runtime_error(what), value_(value), index_(index) {}
    double value() const noexcept { return value_; }
    long index() const noexcept { return index_; }

private:
    double value_;
    long index_;
};

// Gaussian simulation met a gate it cannot fold (cubic phase).
class UnsupportedGateError : public std::runtime_error {
public:
    UnsupportedGateError(const std::string& what, std::size_t gate_index)
        : std::runtime_error(what), gate_index_(gate_index) {}
    std::size_t gate_index() const noexcept { return gate_index_; }

private:
    std::size_t gate_index_;
};

}  // namespace gsnn
