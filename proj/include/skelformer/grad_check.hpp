#pragma once

#include <cstdint>
#include <vector>

#include "skelformer/graph.hpp"
#include "skelformer/rng.hpp"

namespace skelformer::ad {

/// Central-finite-difference check of the engine gradients.
///
/// `build(graph, vars)` must rebuild the same scalar-valued computation from
/// the given leaf vars each call. Returns the max over checked entries of
/// |g_engine - g_fd| / max(1, |g_fd|). When max_entries_per_input > 0, a
/// seeded random subset of entries per input is probed instead of all.
template <typename S, typename Builder>
double grad_check(Builder&& build, std::vector<Mat<S>> inputs,
                  double step = 1e-5, int max_entries_per_input = -1,
                  std::uint64_t seed = 1234) {
  std::vector<Mat<S>> grads;
  grads.reserve(inputs.size());
  for (const auto& m : inputs) {
    grads.push_back(Mat<S>::Zero(m.rows(), m.cols()));
  }
  {
    Graph<S> g;
    std::vector<Var<S>> vars;
    for (size_t i = 0; i < inputs.size(); ++i) {
      vars.push_back(g.param(inputs[i], &grads[i]));
    }
    Var<S> loss = build(g, vars);
    g.backward(loss);
  }

  auto eval = [&](const std::vector<Mat<S>>& pts) -> double {
    Graph<S> g;
    std::vector<Var<S>> vars;
    for (const auto& m : pts) vars.push_back(g.param(m, nullptr));
    return static_cast<double>(build(g, vars).value()(0, 0));
  };

  Rng rng(seed);
  double max_rel = 0.0;
  std::vector<Mat<S>> pts = inputs;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Eigen::Index total = inputs[i].size();
    std::vector<Eigen::Index> entries;
    if (max_entries_per_input > 0 &&
        total > static_cast<Eigen::Index>(max_entries_per_input)) {
      for (int k = 0; k < max_entries_per_input; ++k) {
        entries.push_back(static_cast<Eigen::Index>(
            rng.uniform_index(static_cast<std::uint64_t>(total))));
      }
    } else {
      for (Eigen::Index k = 0; k < total; ++k) entries.push_back(k);
    }
    for (Eigen::Index e : entries) {
      const S saved = pts[i].data()[e];
      pts[i].data()[e] = saved + static_cast<S>(step);
      const double f_plus = eval(pts);
      pts[i].data()[e] = saved - static_cast<S>(step);
      const double f_minus = eval(pts);
      pts[i].data()[e] = saved;
      const double fd = (f_plus - f_minus) / (2.0 * step);
      const double engine = static_cast<double>(grads[i].data()[e]);
      const double rel = std::abs(engine - fd) / std::max(1.0, std::abs(fd));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace skelformer::ad
