#pragma once

// Central finite-difference oracle for the autodiff kernel. Runs entirely in
// double precision and only uses forward evaluations, so it is independent of
// every backward rule it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "partstyle/graph.hpp"

namespace partstyle::testing {

using Builder = std::function<Var(Graph64&, const std::vector<Var>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "input i, element j"
};

inline double eval_loss(const Builder& build, const std::vector<Tensor64>& inputs) {
  Graph64 g;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(g.input(t, false));
  return g.value(build(g, vars))[0];
}

// Relative error |a-n| / max(|a|, |n|, floor); the floor keeps near-zero
// gradients from amplifying rounding noise.
inline GradCheckResult grad_check(const Builder& build, const std::vector<Tensor64>& inputs,
                                  const std::vector<bool>& differentiable, double h = 1e-4,
                                  double floor = 1e-6) {
  Graph64 g;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(g.input(inputs[i], differentiable[i]));
  const Var loss = build(g, vars);
  g.backward(loss);

  GradCheckResult res;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!differentiable[i]) continue;
    const Tensor64 analytic = g.grad(vars[i]);
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      auto plus = inputs;
      auto minus = inputs;
      plus[i][j] += h;
      minus[i][j] -= h;
      const double numeric = (eval_loss(build, plus) - eval_loss(build, minus)) / (2.0 * h);
      const double a = analytic[j];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst = "input " + std::to_string(i) + ", element " + std::to_string(j) + " (analytic " +
                    std::to_string(a) + ", numeric " + std::to_string(numeric) + ")";
      }
    }
  }
  return res;
}

// Reduces any output to a scalar with fixed random weights so that every
// output element contributes a distinct gradient.
inline Var weighted_sum(Graph64& g, Var out, unsigned seed = 99) {
  std::mt19937_64 rng(seed);
  auto w = Tensor64::randn(g.value(out).shape(), rng);
  return g.sum(g.mul(out, g.constant(std::move(w))));
}

struct OpCase {
  std::string name;
  std::vector<Tensor64> inputs;
  std::vector<bool> differentiable;
  Builder build;
};

// Every differentiable op of the kernel on random tensors of at most 4×4
// (conv kernels are 2×2×3, attention uses 4×4 projections).
inline std::vector<OpCase> registered_op_cases(unsigned seed) {
  std::mt19937_64 rng(seed);
  auto rnd = [&](Shape s) { return Tensor64::randn(std::move(s), rng); };
  // Inputs for kinked ops stay away from the kink.
  auto away_from_zero = [&](Shape s) {
    auto t = Tensor64::randn(std::move(s), rng);
    for (auto& v : t.vec()) v = v >= 0 ? v + 0.1 : v - 0.1;
    return t;
  };
  std::vector<OpCase> cases;
  auto unary = [&](std::string name, Tensor64 x, std::function<Var(Graph64&, Var)> f) {
    cases.push_back({std::move(name), {std::move(x)}, {true},
                     [f](Graph64& g, const std::vector<Var>& v) { return weighted_sum(g, f(g, v[0])); }});
  };
  auto binary = [&](std::string name, Tensor64 a, Tensor64 b, std::function<Var(Graph64&, Var, Var)> f) {
    cases.push_back({std::move(name), {std::move(a), std::move(b)}, {true, true},
                     [f](Graph64& g, const std::vector<Var>& v) { return weighted_sum(g, f(g, v[0], v[1])); }});
  };

  binary("add", rnd({3, 4}), rnd({3, 4}), [](Graph64& g, Var a, Var b) { return g.add(a, b); });
  binary("sub", rnd({3, 4}), rnd({3, 4}), [](Graph64& g, Var a, Var b) { return g.sub(a, b); });
  binary("mul", rnd({3, 4}), rnd({3, 4}), [](Graph64& g, Var a, Var b) { return g.mul(a, b); });
  unary("scale", rnd({4, 4}), [](Graph64& g, Var a) { return g.scale(a, -1.7); });
  binary("add_row", rnd({3, 4}), rnd({4}), [](Graph64& g, Var a, Var b) { return g.add_row(a, b); });
  binary("add_col", rnd({3, 4}), rnd({3}), [](Graph64& g, Var a, Var b) { return g.add_col(a, b); });
  binary("matmul", rnd({3, 4}), rnd({4, 2}), [](Graph64& g, Var a, Var b) { return g.matmul(a, b); });
  binary("matmul_nt", rnd({3, 4}), rnd({2, 4}), [](Graph64& g, Var a, Var b) { return g.matmul_nt(a, b); });
  unary("transpose", rnd({3, 4}), [](Graph64& g, Var a) { return g.transpose(a); });
  unary("relu", away_from_zero({4, 4}), [](Graph64& g, Var a) { return g.relu(a); });
  unary("tanh", rnd({4, 4}), [](Graph64& g, Var a) { return g.tanh(a); });
  cases.push_back({"layer_norm", {rnd({3, 4}), rnd({4}), rnd({4})}, {true, true, true},
                   [](Graph64& g, const std::vector<Var>& v) {
                     return weighted_sum(g, g.layer_norm(v[0], v[1], v[2]));
                   }});
  unary("softmax", rnd({3, 4}), [](Graph64& g, Var a) { return g.softmax(a); });
  cases.push_back({"embedding", {rnd({4, 3})}, {true}, [](Graph64& g, const std::vector<Var>& v) {
                     const std::vector<int> ids = {2, 0, 2, 3};
                     return weighted_sum(g, g.embedding(v[0], ids));
                   }});
  unary("l2_normalize_rows", rnd({3, 4}), [](Graph64& g, Var a) { return g.l2_normalize_rows(a); });
  unary("mean_rows", rnd({3, 4}), [](Graph64& g, Var a) { return g.mean_rows(a); });
  binary("conv1d", rnd({2, 4}), rnd({2, 2, 3}), [](Graph64& g, Var x, Var w) { return g.conv1d(x, w, 1, 1); });
  binary("conv1d_stride2", rnd({2, 4}), rnd({2, 2, 3}),
         [](Graph64& g, Var x, Var w) { return g.conv1d(x, w, 2, 1); });
  unary("upsample_nearest", rnd({2, 2}), [](Graph64& g, Var a) { return g.upsample_nearest(a, 2); });
  unary("slice_cols", rnd({3, 4}), [](Graph64& g, Var a) { return g.slice_cols(a, 1, 3); });
  unary("sum", rnd({3, 4}), [](Graph64& g, Var a) { return g.scale(g.sum(a), 1.3); });
  unary("mean", rnd({3, 4}), [](Graph64& g, Var a) { return g.scale(g.mean(a), 1.3); });
  unary("sum_squares", rnd({3, 4}), [](Graph64& g, Var a) { return g.sum_squares(a); });
  cases.push_back({"cross_entropy", {rnd({4, 4})}, {true}, [](Graph64& g, const std::vector<Var>& v) {
                     const std::vector<int> t = {1, 3, 0, 3};
                     return g.cross_entropy(v[0], t);
                   }});
  cases.push_back({"cross_entropy_sum", {rnd({3, 4})}, {true}, [](Graph64& g, const std::vector<Var>& v) {
                     const std::vector<int> t = {2, 0, 1};
                     return g.cross_entropy(v[0], t, Graph64::Reduction::Sum);
                   }});
  // The straight-through node must route the gradient of a loss on the
  // quantized value back to the latent as if quantization were identity.
  cases.push_back({"straight_through", {rnd({3, 4}), rnd({3, 4})}, {true, false},
                   [](Graph64& g, const std::vector<Var>& v) {
                     // Forward value differs from v[0]; gradient must equal that of identity.
                     Var st = g.straight_through(g.add(v[0], g.constant(g.value(v[1]))), v[0]);
                     return weighted_sum(g, st);
                   }});
  for (bool causal : {false, true}) {
    cases.push_back({causal ? "attention_causal" : "attention", {rnd({4, 4}), rnd({3, 4}), rnd({3, 4})},
                     {true, true, true}, [causal](Graph64& g, const std::vector<Var>& v) {
                       const std::vector<std::uint8_t> mask = {1, 0, 1};
                       return weighted_sum(g, g.attention(v[0], v[1], v[2], 2, causal, mask));
                     }});
  }
  return cases;
}

}  // namespace partstyle::testing
