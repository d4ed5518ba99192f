#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eqv/rng.hpp"

namespace eqv::ad {

// A learnable tensor (matrix rows x cols, or vector with cols == 1). Tapes
// reference Params in place: forward reads `value`, backward accumulates into
// `grad`. `m`, `v`, `steps` belong to the optimizer (per-param step counts
// make sparse updates exact).
struct Param {
  std::string name;
  int rows = 0, cols = 1;
  std::vector<double> value, grad, m, v;
  int64_t steps = 0;
  uint64_t stamp = 0;  // last tape generation that touched this param

  Param() = default;
  Param(std::string name, int rows, int cols)
      : name(std::move(name)),
        rows(rows),
        cols(cols),
        value(static_cast<size_t>(rows) * cols, 0.0),
        grad(value.size(), 0.0),
        m(value.size(), 0.0),
        v(value.size(), 0.0) {}

  size_t size() const { return value.size(); }
};

struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode tape. Nodes append in evaluation order, which is already a
// topological order, so backward is a single reverse sweep. Buffers are
// arenas reused across reset() calls; steady-state training allocates
// nothing per example.
class Tape {
 public:
  void reset();

  Value leaf(std::span<const double> v);
  Value scalar(double v);
  // Bernoulli keep-mask scaled by 1/(1-rate); combine with hadamard.
  Value dropout_mask(int n, double rate, Rng& rng);

  Value param_vec(Param& p);           // vector param as a node
  Value matvec(Param& w, Value x);     // (rows x cols) * (cols) -> (rows)

  Value add(Value a, Value b);         // same shape
  Value hadamard(Value a, Value b);    // same shape
  Value concat(Value a, Value b);
  Value tanh_(Value a);
  Value sigmoid_(Value a);
  Value relu_(Value a);
  Value scale(Value a, double c);
  Value dot(Value a, Value b);         // scalar
  Value mse(Value a, Value b);         // scalar, mean over elements
  Value bce(Value p, double target);   // scalar probability input
  Value bce_logit(Value z, double target);  // scalar logit input, stable

  int size_of(Value v) const;
  std::span<const double> value_of(Value v) const;
  std::span<const double> adj_of(Value v) const;
  double scalar_value(Value v) const;

  // Seeds d(loss)/d(loss) = 1 and sweeps once. `loss` must be scalar.
  void backward(Value loss);

  // Params referenced since the last reset, in first-touch order.
  std::span<Param* const> touched() const { return touched_; }
  void zero_touched_grads();

  size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : uint8_t {
    kLeaf, kParamVec, kMatVec, kAdd, kHadamard, kConcat,
    kTanh, kSigmoid, kRelu, kScale, kDot, kMse, kBce, kBceLogit,
  };
  struct Node {
    Op op;
    int a = -1, b = -1;
    Param* p = nullptr;
    double c = 0.0;     // scale factor / loss target
    int n = 0;          // output size
    size_t off = 0;     // offset into vals_/adjs_
  };

  Value push(Op op, int n, int a, int b, Param* p, double c);
  void touch(Param& p);
  const Node& at(Value v) const;

  std::vector<Node> nodes_;
  std::vector<double> vals_, adjs_;
  std::vector<Param*> touched_;
  uint64_t generation_ = 1;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check. `build` must construct the same scalar
// loss on any fresh tape (no un-seeded randomness). Analytic gradients from
// one backward pass are compared against central differences on up to
// `coords_per_param` coordinates of each param. Errors are relative:
// |a - n| / max(1, |a|, |n|).

struct GradCheckResult {
  double max_rel_err = 0.0;
  long checked = 0;
};

GradCheckResult grad_check(std::span<Param* const> params,
                           const std::function<Value(Tape&)>& build,
                           int coords_per_param = 25, uint64_t seed = 0,
                           double eps = 1e-5);

}  // namespace eqv::ad
