#include "eqv/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "eqv/expr.hpp"  // EqvError

namespace eqv::ad {

void Tape::reset() {
  nodes_.clear();
  vals_.clear();
  adjs_.clear();
  touched_.clear();
  ++generation_;
}

const Tape::Node& Tape::at(Value v) const {
  if (!v.valid() || v.idx >= static_cast<int>(nodes_.size()))
    throw EqvError("invalid tape value handle");
  return nodes_[v.idx];
}

Value Tape::push(Op op, int n, int a, int b, Param* p, double c) {
  Node node;
  node.op = op;
  node.a = a;
  node.b = b;
  node.p = p;
  node.c = c;
  node.n = n;
  node.off = vals_.size();
  vals_.resize(vals_.size() + n);
  adjs_.resize(adjs_.size() + n, 0.0);
  nodes_.push_back(node);
  return Value{static_cast<int>(nodes_.size()) - 1};
}

void Tape::touch(Param& p) {
  if (p.stamp != generation_) {
    p.stamp = generation_;
    touched_.push_back(&p);
  }
}

Value Tape::leaf(std::span<const double> v) {
  Value out = push(Op::kLeaf, static_cast<int>(v.size()), -1, -1, nullptr, 0);
  std::copy(v.begin(), v.end(), vals_.begin() + nodes_.back().off);
  return out;
}

Value Tape::scalar(double v) { return leaf(std::span<const double>(&v, 1)); }

Value Tape::dropout_mask(int n, double rate, Rng& rng) {
  Value out = push(Op::kLeaf, n, -1, -1, nullptr, 0);
  double keep = 1.0 / (1.0 - rate);
  double* dst = vals_.data() + nodes_.back().off;
  for (int i = 0; i < n; ++i) dst[i] = rng.bernoulli(rate) ? 0.0 : keep;
  return out;
}

Value Tape::param_vec(Param& p) {
  if (p.cols != 1) throw EqvError("param_vec expects a vector param: " + p.name);
  touch(p);
  Value out = push(Op::kParamVec, p.rows, -1, -1, &p, 0);
  std::copy(p.value.begin(), p.value.end(), vals_.begin() + nodes_.back().off);
  return out;
}

Value Tape::matvec(Param& w, Value x) {
  const Node& nx = at(x);
  if (nx.n != w.cols)
    throw EqvError("matvec shape mismatch for " + w.name + ": cols " +
                   std::to_string(w.cols) + " vs input " + std::to_string(nx.n));
  touch(w);
  size_t xoff = nx.off;
  Value out = push(Op::kMatVec, w.rows, x.idx, -1, &w, 0);
  const double* xv = vals_.data() + xoff;
  double* yv = vals_.data() + nodes_.back().off;
  const double* wv = w.value.data();
  for (int i = 0; i < w.rows; ++i) {
    double s = 0.0;
    const double* row = wv + static_cast<size_t>(i) * w.cols;
    for (int j = 0; j < w.cols; ++j) s += row[j] * xv[j];
    yv[i] = s;
  }
  return out;
}

Value Tape::add(Value a, Value b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.n != nb.n) throw EqvError("add shape mismatch");
  size_t ao = na.off, bo = nb.off;
  int n = na.n;
  Value out = push(Op::kAdd, n, a.idx, b.idx, nullptr, 0);
  const double* av = vals_.data() + ao;
  const double* bv = vals_.data() + bo;
  double* yv = vals_.data() + nodes_.back().off;
  for (int i = 0; i < n; ++i) yv[i] = av[i] + bv[i];
  return out;
}

Value Tape::hadamard(Value a, Value b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.n != nb.n) throw EqvError("hadamard shape mismatch");
  size_t ao = na.off, bo = nb.off;
  int n = na.n;
  Value out = push(Op::kHadamard, n, a.idx, b.idx, nullptr, 0);
  const double* av = vals_.data() + ao;
  const double* bv = vals_.data() + bo;
  double* yv = vals_.data() + nodes_.back().off;
  for (int i = 0; i < n; ++i) yv[i] = av[i] * bv[i];
  return out;
}

Value Tape::concat(Value a, Value b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  size_t ao = na.off, bo = nb.off;
  int an = na.n, bn = nb.n;
  Value out = push(Op::kConcat, an + bn, a.idx, b.idx, nullptr, 0);
  double* yv = vals_.data() + nodes_.back().off;
  std::copy_n(vals_.data() + ao, an, yv);
  std::copy_n(vals_.data() + bo, bn, yv + an);
  return out;
}

Value Tape::tanh_(Value a) {
  const Node& na = at(a);
  size_t ao = na.off;
  int n = na.n;
  Value out = push(Op::kTanh, n, a.idx, -1, nullptr, 0);
  const double* av = vals_.data() + ao;
  double* yv = vals_.data() + nodes_.back().off;
  for (int i = 0; i < n; ++i) yv[i] = std::tanh(av[i]);
  return out;
}

static double sigmoid_stable(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

Value Tape::sigmoid_(Value a) {
  const Node& na = at(a);
  size_t ao = na.off;
  int n = na.n;
  Value out = push(Op::kSigmoid, n, a.idx, -1, nullptr, 0);
  const double* av = vals_.data() + ao;
  double* yv = vals_.data() + nodes_.back().off;
  for (int i = 0; i < n; ++i) yv[i] = sigmoid_stable(av[i]);
  return out;
}

Value Tape::relu_(Value a) {
  const Node& na = at(a);
  size_t ao = na.off;
  int n = na.n;
  Value out = push(Op::kRelu, n, a.idx, -1, nullptr, 0);
  const double* av = vals_.data() + ao;
  double* yv = vals_.data() + nodes_.back().off;
  for (int i = 0; i < n; ++i) yv[i] = av[i] > 0.0 ? av[i] : 0.0;
  return out;
}

Value Tape::scale(Value a, double c) {
  const Node& na = at(a);
  size_t ao = na.off;
  int n = na.n;
  Value out = push(Op::kScale, n, a.idx, -1, nullptr, c);
  const double* av = vals_.data() + ao;
  double* yv = vals_.data() + nodes_.back().off;
  for (int i = 0; i < n; ++i) yv[i] = c * av[i];
  return out;
}

Value Tape::dot(Value a, Value b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.n != nb.n) throw EqvError("dot shape mismatch");
  size_t ao = na.off, bo = nb.off;
  int n = na.n;
  Value out = push(Op::kDot, 1, a.idx, b.idx, nullptr, 0);
  const double* av = vals_.data() + ao;
  const double* bv = vals_.data() + bo;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += av[i] * bv[i];
  vals_[nodes_.back().off] = s;
  return out;
}

Value Tape::mse(Value a, Value b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.n != nb.n) throw EqvError("mse shape mismatch");
  size_t ao = na.off, bo = nb.off;
  int n = na.n;
  Value out = push(Op::kMse, 1, a.idx, b.idx, nullptr, 0);
  const double* av = vals_.data() + ao;
  const double* bv = vals_.data() + bo;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = av[i] - bv[i];
    s += d * d;
  }
  vals_[nodes_.back().off] = s / n;
  return out;
}

Value Tape::bce(Value p, double target) {
  const Node& np = at(p);
  if (np.n != 1) throw EqvError("bce expects a scalar probability");
  double pv = vals_[np.off];
  Value out = push(Op::kBce, 1, p.idx, -1, nullptr, target);
  vals_[nodes_.back().off] =
      -(target * std::log(pv) + (1.0 - target) * std::log(1.0 - pv));
  return out;
}

Value Tape::bce_logit(Value z, double target) {
  const Node& nz = at(z);
  if (nz.n != 1) throw EqvError("bce_logit expects a scalar logit");
  double zv = vals_[nz.off];
  Value out = push(Op::kBceLogit, 1, z.idx, -1, nullptr, target);
  // softplus(z) - target*z, computed without overflow
  double softplus = std::max(zv, 0.0) + std::log1p(std::exp(-std::abs(zv)));
  vals_[nodes_.back().off] = softplus - target * zv;
  return out;
}

int Tape::size_of(Value v) const { return at(v).n; }

std::span<const double> Tape::value_of(Value v) const {
  const Node& n = at(v);
  return {vals_.data() + n.off, static_cast<size_t>(n.n)};
}

std::span<const double> Tape::adj_of(Value v) const {
  const Node& n = at(v);
  return {adjs_.data() + n.off, static_cast<size_t>(n.n)};
}

double Tape::scalar_value(Value v) const {
  const Node& n = at(v);
  if (n.n != 1) throw EqvError("scalar_value on non-scalar node");
  return vals_[n.off];
}

void Tape::backward(Value loss) {
  const Node& ln = at(loss);
  if (ln.n != 1) throw EqvError("backward expects a scalar loss");
  adjs_[ln.off] = 1.0;

  for (int i = loss.idx; i >= 0; --i) {
    const Node& nd = nodes_[i];
    const double* g = adjs_.data() + nd.off;
    switch (nd.op) {
      case Op::kLeaf:
        break;
      case Op::kParamVec: {
        double* pg = nd.p->grad.data();
        for (int k = 0; k < nd.n; ++k) pg[k] += g[k];
        break;
      }
      case Op::kMatVec: {
        const Node& nx = nodes_[nd.a];
        const double* xv = vals_.data() + nx.off;
        double* xg = adjs_.data() + nx.off;
        Param& w = *nd.p;
        const double* wv = w.value.data();
        double* wg = w.grad.data();
        for (int r = 0; r < w.rows; ++r) {
          double gr = g[r];
          if (gr == 0.0) continue;
          const double* row = wv + static_cast<size_t>(r) * w.cols;
          double* grow = wg + static_cast<size_t>(r) * w.cols;
          for (int c = 0; c < w.cols; ++c) {
            grow[c] += gr * xv[c];
            xg[c] += gr * row[c];
          }
        }
        break;
      }
      case Op::kAdd: {
        double* ga = adjs_.data() + nodes_[nd.a].off;
        double* gb = adjs_.data() + nodes_[nd.b].off;
        for (int k = 0; k < nd.n; ++k) {
          ga[k] += g[k];
          gb[k] += g[k];
        }
        break;
      }
      case Op::kHadamard: {
        const double* av = vals_.data() + nodes_[nd.a].off;
        const double* bv = vals_.data() + nodes_[nd.b].off;
        double* ga = adjs_.data() + nodes_[nd.a].off;
        double* gb = adjs_.data() + nodes_[nd.b].off;
        for (int k = 0; k < nd.n; ++k) {
          ga[k] += g[k] * bv[k];
          gb[k] += g[k] * av[k];
        }
        break;
      }
      case Op::kConcat: {
        const Node& na = nodes_[nd.a];
        const Node& nb = nodes_[nd.b];
        double* ga = adjs_.data() + na.off;
        double* gb = adjs_.data() + nb.off;
        for (int k = 0; k < na.n; ++k) ga[k] += g[k];
        for (int k = 0; k < nb.n; ++k) gb[k] += g[na.n + k];
        break;
      }
      case Op::kTanh: {
        const double* yv = vals_.data() + nd.off;
        double* ga = adjs_.data() + nodes_[nd.a].off;
        for (int k = 0; k < nd.n; ++k) ga[k] += g[k] * (1.0 - yv[k] * yv[k]);
        break;
      }
      case Op::kSigmoid: {
        const double* yv = vals_.data() + nd.off;
        double* ga = adjs_.data() + nodes_[nd.a].off;
        for (int k = 0; k < nd.n; ++k) ga[k] += g[k] * yv[k] * (1.0 - yv[k]);
        break;
      }
      case Op::kRelu: {
        const double* xv = vals_.data() + nodes_[nd.a].off;
        double* ga = adjs_.data() + nodes_[nd.a].off;
        for (int k = 0; k < nd.n; ++k)
          if (xv[k] > 0.0) ga[k] += g[k];
        break;
      }
      case Op::kScale: {
        double* ga = adjs_.data() + nodes_[nd.a].off;
        for (int k = 0; k < nd.n; ++k) ga[k] += g[k] * nd.c;
        break;
      }
      case Op::kDot: {
        const double* av = vals_.data() + nodes_[nd.a].off;
        const double* bv = vals_.data() + nodes_[nd.b].off;
        double* ga = adjs_.data() + nodes_[nd.a].off;
        double* gb = adjs_.data() + nodes_[nd.b].off;
        int n = nodes_[nd.a].n;
        double g0 = g[0];
        for (int k = 0; k < n; ++k) {
          ga[k] += g0 * bv[k];
          gb[k] += g0 * av[k];
        }
        break;
      }
      case Op::kMse: {
        const double* av = vals_.data() + nodes_[nd.a].off;
        const double* bv = vals_.data() + nodes_[nd.b].off;
        double* ga = adjs_.data() + nodes_[nd.a].off;
        double* gb = adjs_.data() + nodes_[nd.b].off;
        int n = nodes_[nd.a].n;
        double g0 = 2.0 * g[0] / n;
        for (int k = 0; k < n; ++k) {
          double d = av[k] - bv[k];
          ga[k] += g0 * d;
          gb[k] -= g0 * d;
        }
        break;
      }
      case Op::kBce: {
        double pv = vals_[nodes_[nd.a].off];
        double* ga = adjs_.data() + nodes_[nd.a].off;
        ga[0] += g[0] * (pv - nd.c) / (pv * (1.0 - pv));
        break;
      }
      case Op::kBceLogit: {
        double zv = vals_[nodes_[nd.a].off];
        double* ga = adjs_.data() + nodes_[nd.a].off;
        ga[0] += g[0] * (sigmoid_stable(zv) - nd.c);
        break;
      }
    }
  }
}

void Tape::zero_touched_grads() {
  for (Param* p : touched_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckResult grad_check(std::span<Param* const> params,
                           const std::function<Value(Tape&)>& build,
                           int coords_per_param, uint64_t seed, double eps) {
  for (Param* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  Tape tape;
  Value loss = build(tape);
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  auto eval_loss = [&]() {
    tape.reset();
    return tape.scalar_value(build(tape));
  };

  GradCheckResult res;
  Rng rng(mix_seed(seed, 0x6c));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    size_t n = p.size();
    std::vector<size_t> coords;
    if (static_cast<int>(n) <= coords_per_param) {
      for (size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < coords_per_param; ++i) coords.push_back(rng.below(n));
    }
    for (size_t ci : coords) {
      double saved = p.value[ci];
      p.value[ci] = saved + eps;
      double fp = eval_loss();
      p.value[ci] = saved - eps;
      double fm = eval_loss();
      p.value[ci] = saved;
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic[pi][ci];
      double err = std::abs(a - numeric) /
                   std::max({1.0, std::abs(a), std::abs(numeric)});
      res.max_rel_err = std::max(res.max_rel_err, err);
      ++res.checked;
    }
  }

  // Leave params clean for whoever owns them.
  tape.reset();
  for (Param* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  return res;
}

}  // namespace eqv::ad
