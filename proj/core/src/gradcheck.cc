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

#include "subllm/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "subllm/errors.h"

namespace subllm {

std::string GradcheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " max_rel_error=" << max_rel_error
     << " checked=" << elements_checked << " worst=(input " << worst_input << ", element "
     << worst_element << ", analytic " << worst_analytic << ", numeric " << worst_numeric << ")";
  return os.str();
}

GradcheckReport gradcheck(const std::function<Tensor<double>()>& f,
                          std::vector<Tensor<double>> inputs,
                          const GradcheckOptions& options) {
  double first = 0.0, second = 0.0;
  {
    NoGradGuard guard;
    first = f().item();
    second = f().item();
  }
  if (first != second) {
    std::ostringstream os;
    os.precision(17);
    os << "function is not deterministic: " << first << " vs " << second;
    throw OracleInvalidError(os.str());
  }

  for (auto& t : inputs) t.zero_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(static_cast<size_t>(t.numel()), 0.0);
    }
  }

  GradcheckReport report;
  NoGradGuard guard;
  for (size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].data();
    for (std::int64_t e = 0; e < static_cast<std::int64_t>(data.size()); ++e) {
      const double saved = data[e];
      data[e] = saved + options.step;
      const double plus = f().item();
      data[e] = saved - options.step;
      const double minus = f().item();
      data[e] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[k][e];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.elements_checked;
      if (rel > report.max_rel_error || report.elements_checked == 1) {
        report.max_rel_error = rel;
        report.worst_input = k;
        report.worst_element = e;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace subllm
