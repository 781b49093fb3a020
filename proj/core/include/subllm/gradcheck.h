// Copyright 2026 The subllm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "subllm/tensor.h"

namespace subllm {

struct GradcheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  // Denominator floor: |a - n| / max(|a|, |n|, floor). Keeps entries whose
  // true gradient is ~0 from reporting pure finite-difference noise.
  double floor = 1e-6;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::int64_t elements_checked = 0;
  std::size_t worst_input = 0;
  std::int64_t worst_element = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;

  std::string summary() const;
};

// Compares analytic gradients of the scalar `f()` with respect to every
// element of `inputs` (leaves with requires_grad) against central finite
// differences. `f` must be deterministic: it is evaluated twice up front
// and OracleInvalidError is thrown if the two values differ.
GradcheckReport gradcheck(const std::function<Tensor<double>()>& f,
                          std::vector<Tensor<double>> inputs,
                          const GradcheckOptions& options = {});

}  // namespace subllm
