// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include "core/nn_ops.hpp"

namespace mtvl::nc {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_param;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Central-difference check of reverse-mode gradients. Runs in float64 only;
// the function must be deterministic (it is evaluated twice at the base
// point and rejected on mismatch). When max_coords_per_param > 0, a
// deterministic subsample of coordinates is probed per parameter.
inline GradCheckReport grad_check(const std::function<Tensor<double>()>& fn,
                                  std::vector<std::pair<std::string, Tensor<double>>> params,
                                  double step = 1e-5, double tolerance = 1e-6,
                                  int64_t max_coords_per_param = 0, uint64_t coord_seed = 42) {
  FiniteCheckScope finite_on;
  require(step > 0, "grad_check: step must be positive");

  auto eval = [&]() {
    Tensor<double> v = fn();
    require(v.defined() && v.numel() == 1, "grad_check: fn must return a scalar");
    return v.item();
  };

  const double f0 = eval();
  const double f1 = eval();
  if (f0 != f1)
    throw ContractError("grad_check: fn is not deterministic (" + std::to_string(f0) +
                        " != " + std::to_string(f1) + ")");

  // analytic gradients
  for (auto& [name, p] : params) {
    require(p.requires_grad(), "grad_check: param '" + name + "' does not require grad");
    p.zero_grad();
  }
  {
    TapeScope<double> scope;
    Tensor<double> loss = fn();
    scope.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) analytic.push_back(p.grad());

  GradCheckReport report;
  report.tolerance = tolerance;
  Rng rng(coord_seed);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi].second;
    GradCheckEntry entry;
    entry.name = params[pi].first;
    std::vector<int64_t> coords;
    const int64_t n = p.numel();
    if (max_coords_per_param <= 0 || n <= max_coords_per_param) {
      coords.resize(size_t(n));
      for (int64_t i = 0; i < n; ++i) coords[size_t(i)] = i;
    } else {
      std::unordered_set<int64_t> seen;
      while (int64_t(seen.size()) < max_coords_per_param) seen.insert(rng.below(n));
      coords.assign(seen.begin(), seen.end());
      std::sort(coords.begin(), coords.end());
    }
    for (int64_t c : coords) {
      double& slot = p.values()[size_t(c)];
      const double saved = slot;
      slot = saved + step;
      const double fp = eval();
      slot = saved - step;
      const double fm = eval();
      slot = saved;
      const double fd = (fp - fm) / (2.0 * step);
      const double an = analytic[pi][size_t(c)];
      const double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      entry.coords_checked++;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.per_param.push_back(std::move(entry));
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace mtvl::nc
