#pragma once

#include <functional>
#include <vector>

#include "arac/tape.hpp"

namespace arac::numerics {

// Compares reverse-mode gradients against central finite differences.
//
// f must build a scalar output on the given tape, reading the current values
// of the listed parameters (binding them as leaves), and must be
// deterministic: any sampling noise has to be frozen outside of f.
//
// Returns max over all parameter entries of |AD - FD| / max(1, |FD|).
double grad_check(const std::function<Var(Tape&)>& f, const std::vector<Tensor*>& params,
                  double h = 1e-5);

}  // namespace arac::numerics
