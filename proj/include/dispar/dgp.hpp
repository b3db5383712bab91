#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dispar/dataset.hpp"

namespace dispar {

/// Synthetic data-generating processes built from structural equations with
/// continuous (Gaussian-noise linear) and binary (Bernoulli-logit) variables.
/// Equations are evaluated in declaration order; each term is a coefficient
/// times a product of previously generated variables.

enum class DgpKind { continuous, binary };

struct DgpTerm {
    double coef = 0.0;
    std::vector<std::string> vars;  // empty product = intercept
};

struct DgpEquation {
    std::string name;
    DgpKind kind = DgpKind::continuous;
    std::vector<DgpTerm> terms;
    double noise_sd = 0.0;  // continuous only
};

struct ParametricDgp {
    std::vector<DgpEquation> equations;

    void validate() const;
    Dataset generate(std::size_t n, std::uint64_t seed) const;

    /// Main-effect coefficient of `var` inside the equation for `target`
    /// (0 when absent).  Convenience for reasoning about designed paths.
    double main_coefficient(const std::string& target, const std::string& var) const;
};

}  // namespace dispar
