// Helpers shared by the unit tests and the acceptance binary.
#ifndef NESPPO_TESTS_SUPPORT_H_
#define NESPPO_TESTS_SUPPORT_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "nesppo/nnet.h"
#include "nesppo/numerics.h"

namespace nesppo::testing {

// Random 2-hidden-layer spec of the given kind and head.
inline NetSpec random_spec(RngStream& rng, LayerKind kind, HeadKind head) {
  const std::size_t in = 1 + static_cast<std::size_t>(rng.uniform_int(0, 5));
  const std::size_t h1 = 1 + static_cast<std::size_t>(rng.uniform_int(0, 6));
  const std::size_t h2 = 1 + static_cast<std::size_t>(rng.uniform_int(0, 6));
  std::size_t out = (head == HeadKind::kCategorical ? 2 : 1) +
                    static_cast<std::size_t>(rng.uniform_int(0, 3));
  if (head == HeadKind::kValue) out = 1;
  const Activation act = rng.uniform() < 0.5 ? Activation::kTanh : Activation::kRelu;
  return NetSpec::mlp(in, {h1, h2}, out, head, kind, act);
}

// init_params plus nonzero sigma and log_std, so every block matters.
inline ParamVector random_params(const NetSpec& spec, RngStream& rng) {
  ParamVector p = init_params(spec, rng);
  for (const auto& b : p.layout()) {
    const bool sigma = b.name.find("sigma") != std::string::npos;
    const bool log_std = b.name == "log_std";
    if (!sigma && !log_std) continue;
    for (double& v : p.block(b.name)) v = sigma ? rng.uniform(0.05, 0.5) : rng.uniform(-0.5, 0.5);
  }
  return p;
}

inline std::vector<double> random_vector(RngStream& rng, std::size_t n, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Relative error with a small floor so exact zeros compare sanely.
inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Central differences of `loss` around `params` (h = 1e-5), compared with
// `analytic`; returns the worst relative error.
inline double fd_max_rel_error(const std::function<double(const ParamVector&)>& loss,
                               const ParamVector& params, const ParamVector& analytic,
                               double h = 1e-5) {
  double worst = 0.0;
  ParamVector probe = params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double orig = probe.data()[k];
    probe.data()[k] = orig + h;
    const double up = loss(probe);
    probe.data()[k] = orig - h;
    const double down = loss(probe);
    probe.data()[k] = orig;
    worst = std::max(worst, rel_error((up - down) / (2.0 * h), analytic.data()[k]));
  }
  return worst;
}

}  // namespace nesppo::testing

#endif  // NESPPO_TESTS_SUPPORT_H_
