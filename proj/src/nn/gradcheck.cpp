#include "sign/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace sign::nn {

GradcheckResult gradcheck(const std::function<Var()>& loss, std::span<Var> inputs,
                          const GradcheckOptions& options) {
  zero_grads(inputs);
  const auto evaluate = [&loss](std::uint64_t& pattern) {
    ActivationPatternRecorder recorder;
    Var v = loss();
    pattern = recorder.digest();
    return v;
  };
  std::uint64_t centre = 0;
  backward(evaluate(centre));
  std::vector<Tensor> analytic;
  analytic.reserve(inputs.size());
  for (Var& v : inputs) analytic.push_back(v.grad_buffer());

  GradcheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor& value = inputs[i].mutable_value();
    const std::size_t n = value.size();
    const std::size_t probes = options.max_elements == 0 ? n : std::min(n, options.max_elements);
    for (std::size_t p = 0; p < probes; ++p) {
      const std::size_t k = probes == n ? p : p * n / probes;
      const double saved = value[k];
      value[k] = saved + options.step;
      std::uint64_t up_pattern = 0, down_pattern = 0;
      const double up = evaluate(up_pattern).value().item();
      value[k] = saved - options.step;
      const double down = evaluate(down_pattern).value().item();
      value[k] = saved;

      const double numeric = (up - down) / (2.0 * options.step);
      if (up_pattern != centre || down_pattern != centre) ++result.kinks;
      const double a = analytic[i][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double err = std::abs(a - numeric) / denom;
      ++result.elements_checked;
      if (!(err <= result.max_relative_error)) {
        result.max_relative_error = std::isnan(err) ? INFINITY : err;
        std::ostringstream os;
        os.precision(10);
        os << "input " << i << ", element " << k << ": analytic " << a << " vs numeric " << numeric;
        result.worst = os.str();
      }
    }
  }
  return result;
}

}  // namespace sign::nn
