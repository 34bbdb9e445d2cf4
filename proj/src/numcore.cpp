#include "tfpdet/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "tfpdet/error.hpp"

namespace tfpdet::numcore {

namespace {

thread_local bool t_grad_enabled = true;

NodePtr make_node(Shape shape, std::vector<double> values, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), 0.0);
  return node;
}

// Result node wired into the graph when any input needs gradients.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<NodePtr> inputs,
                   BackwardFn fn) {
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  auto node = make_node(std::move(shape), std::move(values), needs);
  if (needs) {
    node->parents = std::move(inputs);
    node->backward_fn = std::move(fn);
  }
  return Tensor(std::move(node));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* arg) {
  if (t.rank() != rank) {
    std::ostringstream os;
    os << op << ": " << arg << " must have rank " << rank << ", got shape " << shape_str(t.shape());
    throw DimensionError(os.str());
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, v), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return Tensor(make_node(node_->shape, node_->value, false)); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

// ---------------------------------------------------------------------------

Tensor ParameterStore::add(const std::string& name, Shape shape, InitSpec init) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Tensor t = Tensor::zeros(std::move(shape), true);
  params_.push_back({name, t, init});
  return t;
}

void ParameterStore::initialize(Rng& rng) {
  for (auto& p : params_) {
    auto values = p.tensor.mutable_values();
    if (const auto* g = std::get_if<GaussianInit>(&p.init)) {
      for (double& v : values) v = rng.normal(g->mean, g->stddev);
    } else {
      const double c = std::get<ConstantInit>(p.init).value;
      std::fill(values.begin(), values.end(), c);
    }
    p.tensor.zero_grad();
  }
}

const Parameter& ParameterStore::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw LookupError("no parameter named '" + name + "'");
}

Parameter& ParameterStore::get(const std::string& name) {
  return const_cast<Parameter&>(std::as_const(*this).get(name));
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

// ---------------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "linear", "x");
  require_rank(w, 2, "linear", "w");
  require_rank(b, 1, "linear", "b");
  const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(1);
  if (w.dim(0) != din || b.dim(0) != dout) {
    throw DimensionError("linear: x " + shape_str(x.shape()) + " incompatible with w " +
                         shape_str(w.shape()) + " and b " + shape_str(b.shape()));
  }
  const auto xv = x.values(), wv = w.values(), bv = b.values();
  std::vector<double> y(n * dout);
  for (std::size_t i = 0; i < n; ++i) {
    double* yr = &y[i * dout];
    std::copy(bv.begin(), bv.end(), yr);
    for (std::size_t k = 0; k < din; ++k) {
      const double xik = xv[i * din + k];
      if (xik == 0.0) continue;
      const double* wr = &wv[k * dout];
      for (std::size_t j = 0; j < dout; ++j) yr[j] += xik * wr[j];
    }
  }
  return make_result({n, dout}, std::move(y), {x.node(), w.node(), b.node()},
                     [n, din, dout](const Node& out, const std::vector<NodePtr>& in) {
                       const auto& dy = out.grad;
                       Node& xn = *in[0];
                       Node& wn = *in[1];
                       Node& bn = *in[2];
                       if (xn.requires_grad) {
                         for (std::size_t i = 0; i < n; ++i) {
                           const double* dyr = &dy[i * dout];
                           for (std::size_t k = 0; k < din; ++k) {
                             const double* wr = &wn.value[k * dout];
                             double acc = 0.0;
                             for (std::size_t j = 0; j < dout; ++j) acc += dyr[j] * wr[j];
                             xn.grad[i * din + k] += acc;
                           }
                         }
                       }
                       if (wn.requires_grad) {
                         for (std::size_t i = 0; i < n; ++i) {
                           const double* dyr = &dy[i * dout];
                           for (std::size_t k = 0; k < din; ++k) {
                             const double xik = xn.value[i * din + k];
                             if (xik == 0.0) continue;
                             double* gw = &wn.grad[k * dout];
                             for (std::size_t j = 0; j < dout; ++j) gw[j] += xik * dyr[j];
                           }
                         }
                       }
                       if (bn.requires_grad) {
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < dout; ++j) bn.grad[j] += dy[i * dout + j];
                         }
                       }
                     });
}

namespace {

// Output positions t in [lo, hi) whose tap j lands inside [0, T).
struct TapRange {
  std::size_t lo;
  std::size_t hi;
};

TapRange tap_range(std::size_t t_in, std::size_t t_out, std::size_t stride, std::size_t padding,
                   std::size_t j) {
  // input index = t*stride + j - padding
  const auto sp = static_cast<std::ptrdiff_t>(padding);
  const auto sj = static_cast<std::ptrdiff_t>(j);
  const auto ss = static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t lo = 0;
  if (sp > sj) lo = (sp - sj + ss - 1) / ss;
  const std::ptrdiff_t last_in = static_cast<std::ptrdiff_t>(t_in) - 1 + sp - sj;
  std::ptrdiff_t hi = last_in < 0 ? 0 : last_in / ss + 1;
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(t_out));
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

Tensor temporal_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                     std::size_t padding) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw DimensionError("temporal_conv: x must be [C×T] or [B×C×T], got " + shape_str(x.shape()));
  }
  require_rank(w, 3, "temporal_conv", "w");
  require_rank(b, 1, "temporal_conv", "b");
  if (stride == 0) throw ContractError("temporal_conv: stride must be positive");
  const bool batched = x.rank() == 3;
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t cin = x.dim(batched ? 1 : 0);
  const std::size_t t_in = x.dim(batched ? 2 : 1);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin || b.dim(0) != cout) {
    throw DimensionError("temporal_conv: x " + shape_str(x.shape()) + " incompatible with w " +
                         shape_str(w.shape()) + " and b " + shape_str(b.shape()));
  }
  if (t_in + 2 * padding < k) {
    throw ContractError("temporal_conv: empty output (T=" + std::to_string(t_in) +
                        ", padding=" + std::to_string(padding) + ", k=" + std::to_string(k) + ")");
  }
  const std::size_t t_out = (t_in + 2 * padding - k) / stride + 1;

  std::vector<TapRange> taps(k);
  for (std::size_t j = 0; j < k; ++j) taps[j] = tap_range(t_in, t_out, stride, padding, j);

  const auto xv = x.values(), wv = w.values(), bv = b.values();
  std::vector<double> y(batch * cout * t_out);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const double* xb = &xv[bi * cin * t_in];
    for (std::size_t o = 0; o < cout; ++o) {
      double* yr = &y[(bi * cout + o) * t_out];
      std::fill(yr, yr + t_out, bv[o]);
      for (std::size_t i = 0; i < cin; ++i) {
        const double* xr = xb + i * t_in;
        for (std::size_t j = 0; j < k; ++j) {
          const double wt = wv[(o * cin + i) * k + j];
          const auto [lo, hi] = taps[j];
          if (stride == 1) {
            const double* xs = xr + static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(padding);
            for (std::size_t t = lo; t < hi; ++t) yr[t] += wt * xs[t];
          } else {
            for (std::size_t t = lo; t < hi; ++t) yr[t] += wt * xr[t * stride + j - padding];
          }
        }
      }
    }
  }
  Shape out_shape = batched ? Shape{batch, cout, t_out} : Shape{cout, t_out};
  return make_result(
      std::move(out_shape), std::move(y), {x.node(), w.node(), b.node()},
      [=](const Node& out, const std::vector<NodePtr>& in) {
        const auto& dy = out.grad;
        Node& xn = *in[0];
        Node& wn = *in[1];
        Node& bn = *in[2];
        for (std::size_t bi = 0; bi < batch; ++bi) {
          const double* xb = &xn.value[bi * cin * t_in];
          for (std::size_t o = 0; o < cout; ++o) {
            const double* dyr = &dy[(bi * cout + o) * t_out];
            if (bn.requires_grad) {
              double acc = 0.0;
              for (std::size_t t = 0; t < t_out; ++t) acc += dyr[t];
              bn.grad[o] += acc;
            }
            for (std::size_t i = 0; i < cin; ++i) {
              const double* xr = xb + i * t_in;
              double* gxr = xn.requires_grad ? &xn.grad[(bi * cin + i) * t_in] : nullptr;
              for (std::size_t j = 0; j < k; ++j) {
                const std::size_t widx = (o * cin + i) * k + j;
                const auto [lo, hi] = taps[j];
                if (wn.requires_grad) {
                  double acc = 0.0;
                  for (std::size_t t = lo; t < hi; ++t) acc += dyr[t] * xr[t * stride + j - padding];
                  wn.grad[widx] += acc;
                }
                if (gxr) {
                  const double wt = wn.value[widx];
                  for (std::size_t t = lo; t < hi; ++t) gxr[t * stride + j - padding] += wt * dyr[t];
                }
              }
            }
          }
        }
      });
}

Tensor temporal_maxpool(const Tensor& x, std::size_t k, std::size_t stride) {
  require_rank(x, 2, "temporal_maxpool", "x");
  if (k == 0 || stride == 0) throw ContractError("temporal_maxpool: k and stride must be positive");
  const std::size_t c = x.dim(0), t_in = x.dim(1);
  if (t_in < k) {
    throw ContractError("temporal_maxpool: empty output (T=" + std::to_string(t_in) +
                        " < k=" + std::to_string(k) + ")");
  }
  const std::size_t t_out = (t_in - k) / stride + 1;
  const auto xv = x.values();
  std::vector<double> y(c * t_out);
  std::vector<std::size_t> arg(c * t_out);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t t = 0; t < t_out; ++t) {
      std::size_t best = ch * t_in + t * stride;
      for (std::size_t j = 1; j < k; ++j) {
        const std::size_t idx = ch * t_in + t * stride + j;
        if (xv[idx] > xv[best]) best = idx;
      }
      y[ch * t_out + t] = xv[best];
      arg[ch * t_out + t] = best;
    }
  }
  return make_result({c, t_out}, std::move(y), {x.node()},
                     [arg = std::move(arg)](const Node& out, const std::vector<NodePtr>& in) {
                       Node& xn = *in[0];
                       for (std::size_t i = 0; i < arg.size(); ++i) xn.grad[arg[i]] += out.grad[i];
                     });
}

Tensor relu(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return make_result(x.shape(), std::move(y), {x.node()},
                     [](const Node& out, const std::vector<NodePtr>& in) {
                       Node& xn = *in[0];
                       for (std::size_t i = 0; i < out.grad.size(); ++i) {
                         if (xn.value[i] > 0.0) xn.grad[i] += out.grad[i];
                       }
                     });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 3)) {
    throw DimensionError("concat_channels: incompatible ranks " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const bool batched = a.rank() == 3;
  const std::size_t batch = batched ? a.dim(0) : 1;
  const std::size_t ca = a.dim(batched ? 1 : 0), cb = b.dim(batched ? 1 : 0);
  const std::size_t t = a.dim(batched ? 2 : 1);
  if (b.dim(batched ? 2 : 1) != t || (batched && b.dim(0) != batch)) {
    throw DimensionError("concat_channels: mismatched extents " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t sa = ca * t, sb = cb * t;
  std::vector<double> y(batch * (sa + sb));
  const auto av = a.values(), bv = b.values();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    std::copy_n(&av[bi * sa], sa, &y[bi * (sa + sb)]);
    std::copy_n(&bv[bi * sb], sb, &y[bi * (sa + sb) + sa]);
  }
  Shape shape = batched ? Shape{batch, ca + cb, t} : Shape{ca + cb, t};
  return make_result(std::move(shape), std::move(y), {a.node(), b.node()},
                     [batch, sa, sb](const Node& out, const std::vector<NodePtr>& in) {
                       Node& an = *in[0];
                       Node& bn = *in[1];
                       for (std::size_t bi = 0; bi < batch; ++bi) {
                         const double* g = &out.grad[bi * (sa + sb)];
                         if (an.requires_grad) {
                           for (std::size_t i = 0; i < sa; ++i) an.grad[bi * sa + i] += g[i];
                         }
                         if (bn.requires_grad) {
                           for (std::size_t i = 0; i < sb; ++i) bn.grad[bi * sb + i] += g[sa + i];
                         }
                       }
                     });
}

std::vector<double> softmax_rows(std::span<const double> logits, std::size_t cols) {
  std::vector<double> p(logits.size());
  for (std::size_t r = 0; r * cols < logits.size(); ++r) {
    const double* row = &logits[r * cols];
    const double m = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (p[r * cols + c] = std::exp(row[c] - m));
    for (std::size_t c = 0; c < cols; ++c) p[r * cols + c] /= z;
  }
  return p;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_str(logits.shape()));
  }
  if (n == 0) throw ContractError("softmax_cross_entropy: empty batch");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= c) {
      throw IndexError("softmax_cross_entropy: label " + std::to_string(l) + " outside [0, " +
                       std::to_string(c) + ")");
    }
  }
  const auto lv = logits.values();
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = &lv[r * c];
    const double m = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
    total += m + std::log(z) - row[labels[r]];
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result({}, {total / static_cast<double>(n)}, {logits.node()},
                     [n, c, lab = std::move(lab)](const Node& out, const std::vector<NodePtr>& in) {
                       Node& xn = *in[0];
                       const double g = out.grad[0] / static_cast<double>(n);
                       const auto p = softmax_rows(xn.value, c);
                       for (std::size_t r = 0; r < n; ++r) {
                         for (std::size_t j = 0; j < c; ++j) {
                           const double onehot = static_cast<int>(j) == lab[r] ? 1.0 : 0.0;
                           xn.grad[r * c + j] += g * (p[r * c + j] - onehot);
                         }
                       }
                     });
}

Tensor smooth_l1(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("smooth_l1: pred " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  const std::size_t n = pred.numel();
  if (n == 0) throw ContractError("smooth_l1: empty input");
  const auto pv = pred.values(), tv = target.values();
  std::vector<double> d(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = pv[i] - tv[i];
    const double ad = std::abs(d[i]);
    total += ad < 1.0 ? 0.5 * d[i] * d[i] : ad - 0.5;
  }
  return make_result({}, {total / static_cast<double>(n)}, {pred.node()},
                     [n, d = std::move(d)](const Node& out, const std::vector<NodePtr>& in) {
                       Node& pn = *in[0];
                       const double g = out.grad[0] / static_cast<double>(n);
                       for (std::size_t i = 0; i < n; ++i) {
                         const double slope = std::abs(d[i]) < 1.0 ? d[i] : (d[i] > 0.0 ? 1.0 : -1.0);
                         pn.grad[i] += g * slope;
                       }
                     });
}

Tensor gather(const Tensor& x, std::span<const std::size_t> indices, Shape out_shape) {
  if (shape_numel(out_shape) != indices.size()) {
    throw DimensionError("gather: " + std::to_string(indices.size()) + " indices for shape " +
                         shape_str(out_shape));
  }
  const auto xv = x.values();
  std::vector<double> y(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= xv.size()) {
      throw IndexError("gather: index " + std::to_string(indices[i]) + " outside tensor " +
                       shape_str(x.shape()));
    }
    y[i] = xv[indices[i]];
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result(std::move(out_shape), std::move(y), {x.node()},
                     [idx = std::move(idx)](const Node& out, const std::vector<NodePtr>& in) {
                       Node& xn = *in[0];
                       for (std::size_t i = 0; i < idx.size(); ++i) xn.grad[idx[i]] += out.grad[i];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> y(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(y), {x.node()},
                     [](const Node& out, const std::vector<NodePtr>& in) {
                       Node& xn = *in[0];
                       for (std::size_t i = 0; i < out.grad.size(); ++i) xn.grad[i] += out.grad[i];
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const auto av = a.values(), bv = b.values();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(y), {a.node(), b.node()},
                     [](const Node& out, const std::vector<NodePtr>& in) {
                       for (const auto& p : in) {
                         if (!p->requires_grad) continue;
                         for (std::size_t i = 0; i < out.grad.size(); ++i) p->grad[i] += out.grad[i];
                       }
                     });
}

Tensor scale(const Tensor& a, double s) {
  const auto av = a.values();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * s;
  return make_result(a.shape(), std::move(y), {a.node()},
                     [s](const Node& out, const std::vector<NodePtr>& in) {
                       Node& an = *in[0];
                       for (std::size_t i = 0; i < out.grad.size(); ++i) an.grad[i] += s * out.grad[i];
                     });
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) throw ContractError("backward: loss does not depend on any parameter");

  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n, n->parents);
  }
}

// ---------------------------------------------------------------------------

double SgdConfig::lr_at(std::int64_t step) const {
  const auto k = lr_decay_every > 0 ? step / lr_decay_every : 0;
  return learning_rate * std::pow(lr_decay_factor, static_cast<double>(k));
}

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("sgd: learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("sgd: weight_decay must be nonnegative");
  if (!(lr_decay_factor > 0.0)) throw ConfigError("sgd: lr_decay_factor must be positive");
  if (lr_decay_every <= 0) throw ConfigError("sgd: lr_decay_every must be positive");
}

void sgd_step(ParameterStore& params, const SgdConfig& cfg, std::int64_t step, SgdState& state) {
  auto& items = params.items();
  if (state.velocity.size() != items.size()) {
    state.velocity.resize(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) state.velocity[i].assign(items[i].tensor.numel(), 0.0);
  }
  const double lr = cfg.lr_at(step);
  for (std::size_t pi = 0; pi < items.size(); ++pi) {
    auto values = items[pi].tensor.mutable_values();
    auto grad = items[pi].tensor.mutable_grad();
    auto& v = state.velocity[pi];
    for (std::size_t i = 0; i < values.size(); ++i) {
      v[i] = cfg.momentum * v[i] + grad[i] + cfg.weight_decay * values[i];
      values[i] -= lr * v[i];
      grad[i] = 0.0;
    }
  }
}

}  // namespace tfpdet::numcore
