#include "altinc/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "altinc/error.hpp"

namespace altinc::ad {

const Tensor& Var::value() const { return tape->value(id); }
bool Var::tracked() const { return tape->tracked(id); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, false, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true, false, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape != this) throw Error("operation mixes values from different tapes");
    node.inputs.push_back(in.id);
    node.tracked = node.tracked || nodes_[in.id].tracked;
  }
  if (node.tracked) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_accumulator(NodeId id) {
  Node& node = nodes_.at(id);
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape(), 0.0);
    node.has_grad = true;
  }
  return node.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_.at(v.id);
  if (node.has_grad) return node.grad;
  return Tensor(node.value.shape(), 0.0);
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw Error("backward() on a value from another tape");
  const Node& root = nodes_.at(loss.id);
  if (root.value.size() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + shape_to_string(root.value.shape()));
  }
  if (!root.tracked) return;
  grad_accumulator(loss.id)[0] += 1.0;
  for (NodeId id = loss.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.backward && node.has_grad) node.backward(node.grad, *this);
  }
}

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw Error("operation mixes values from different tapes");
}

// Exact match or single-element b.
bool check_broadcast(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return false;
  if (b.size() == 1) return true;
  throw ShapeError(std::string(op) + ": shapes " + shape_to_string(a.shape()) + " and " +
                   shape_to_string(b.shape()) + " are not compatible");
}

template <class Forward, class Deriv>
Var unary(Var a, Forward f, Deriv df) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const NodeId ia = a.id;
  std::array<Var, 1> ins{a};
  return a.tape->record(std::move(out), ins, [ia, df](const Tensor& g, Tape& t) {
    const Tensor& xv = t.value(ia);
    Tensor& ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(xv[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Half-open range of output coordinates whose tap (offset) lands inside [0, in).
std::pair<std::size_t, std::size_t> valid_range(std::size_t in, std::size_t out, std::size_t offset, std::size_t pad,
                                                std::size_t stride) {
  // input index = o * stride + offset - pad
  std::size_t lo = 0;
  if (offset < pad) lo = (pad - offset + stride - 1) / stride;
  const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(in) - 1 + static_cast<std::ptrdiff_t>(pad) -
                              static_cast<std::ptrdiff_t>(offset);
  if (last < 0) return {0, 0};
  const std::size_t hi = std::min(out, static_cast<std::size_t>(last) / stride + 1);
  return {std::min(lo, hi), hi};
}

struct ConvGeometry {
  std::size_t cin, h, w, cout, k, oh, ow, stride, pad;
};

// Offset of the input element feeding output column 0 of row oy for tap (ky, kx).
// May point before the row start; only columns in the valid range are read.
std::ptrdiff_t tap_offset(const ConvGeometry& g, std::size_t oy, std::size_t ky, std::size_t kx) {
  const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
  return iy * static_cast<std::ptrdiff_t>(g.w) + static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.pad);
}

void conv_forward(const Tensor& x, const Tensor& kern, Tensor& out, const ConvGeometry& g) {
  for (std::size_t co = 0; co < g.cout; ++co) {
    double* oplane = out.data() + co * g.oh * g.ow;
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const double* iplane = x.data() + ci * g.h * g.w;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        const auto [ylo, yhi] = valid_range(g.h, g.oh, ky, g.pad, g.stride);
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const double wv = kern[((co * g.cin + ci) * g.k + ky) * g.k + kx];
          const auto [xlo, xhi] = valid_range(g.w, g.ow, kx, g.pad, g.stride);
          for (std::size_t oy = ylo; oy < yhi; ++oy) {
            const double* irow = iplane + tap_offset(g, oy, ky, kx);
            double* orow = oplane + oy * g.ow;
            for (std::size_t ox = xlo; ox < xhi; ++ox) orow[ox] += wv * irow[ox * g.stride];
          }
        }
      }
    }
  }
}

void conv_backward(const Tensor& x, const Tensor& kern, const Tensor& gout, Tensor* gx, Tensor* gk,
                   const ConvGeometry& g) {
  for (std::size_t co = 0; co < g.cout; ++co) {
    const double* gplane = gout.data() + co * g.oh * g.ow;
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const double* iplane = x.data() + ci * g.h * g.w;
      double* giplane = gx ? gx->data() + ci * g.h * g.w : nullptr;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        const auto [ylo, yhi] = valid_range(g.h, g.oh, ky, g.pad, g.stride);
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const std::size_t kidx = ((co * g.cin + ci) * g.k + ky) * g.k + kx;
          const double wv = kern[kidx];
          const auto [xlo, xhi] = valid_range(g.w, g.ow, kx, g.pad, g.stride);
          double acc = 0.0;
          for (std::size_t oy = ylo; oy < yhi; ++oy) {
            const std::ptrdiff_t ioff = tap_offset(g, oy, ky, kx);
            const double* grow = gplane + oy * g.ow;
            const double* irow = iplane + ioff;
            for (std::size_t ox = xlo; ox < xhi; ++ox) acc += grow[ox] * irow[ox * g.stride];
            if (giplane) {
              double* girow = giplane + ioff;
              for (std::size_t ox = xlo; ox < xhi; ++ox) girow[ox * g.stride] += wv * grow[ox];
            }
          }
          if (gk) (*gk)[kidx] += acc;
        }
      }
    }
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const bool bc = check_broadcast("add", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + (bc ? y[0] : y[i]);
  const NodeId ia = a.id, ib = b.id;
  std::array<Var, 2> ins{a, b};
  return a.tape->record(std::move(out), ins, [ia, ib, bc](const Tensor& g, Tape& t) {
    if (t.tracked(ia)) {
      Tensor& ga = t.grad_accumulator(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.tracked(ib)) {
      Tensor& gb = t.grad_accumulator(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[bc ? 0 : i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const bool bc = check_broadcast("sub", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - (bc ? y[0] : y[i]);
  const NodeId ia = a.id, ib = b.id;
  std::array<Var, 2> ins{a, b};
  return a.tape->record(std::move(out), ins, [ia, ib, bc](const Tensor& g, Tape& t) {
    if (t.tracked(ia)) {
      Tensor& ga = t.grad_accumulator(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.tracked(ib)) {
      Tensor& gb = t.grad_accumulator(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[bc ? 0 : i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const bool bc = check_broadcast("mul", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * (bc ? y[0] : y[i]);
  const NodeId ia = a.id, ib = b.id;
  std::array<Var, 2> ins{a, b};
  return a.tape->record(std::move(out), ins, [ia, ib, bc](const Tensor& g, Tape& t) {
    const Tensor& xv = t.value(ia);
    const Tensor& yv = t.value(ib);
    if (t.tracked(ia)) {
      Tensor& ga = t.grad_accumulator(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (bc ? yv[0] : yv[i]);
    }
    if (t.tracked(ib)) {
      Tensor& gb = t.grad_accumulator(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[bc ? 0 : i] += g[i] * xv[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; }, [slope](double x) { return x > 0.0 ? 1.0 : slope; });
}

Var log(Var a) {
  return unary(
      a, [](double x) { return std::log(std::max(x, kEpsLog)); },
      [](double x) { return x > kEpsLog ? 1.0 / x : 0.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var sigmoid(Var a) {
  return unary(a, stable_sigmoid, [](double x) {
    const double s = stable_sigmoid(x);
    return s * (1.0 - s);
  });
}

Var softplus(Var a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }, stable_sigmoid);
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.values()) s += v;
  const NodeId ia = a.id;
  std::array<Var, 1> ins{a};
  return a.tape->record(Tensor::scalar(s), ins, [ia](const Tensor& g, Tape& t) {
    Tensor& ga = t.grad_accumulator(ia);
    for (double& v : ga.values()) v += g[0];
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

std::size_t conv_output_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (k % 2 == 0) throw ShapeError("conv2d kernel size must be odd, got " + std::to_string(k));
  if (stride == 0) throw ShapeError("conv2d stride must be positive");
  if (in + 2 * pad < k) {
    throw ShapeError("conv2d input extent " + std::to_string(in) + " with pad " + std::to_string(pad) +
                     " is smaller than kernel " + std::to_string(k));
  }
  return (in + 2 * pad - k) / stride + 1;
}

Var conv2d(Var input, Var kernel, std::optional<Var> bias, std::size_t stride, std::size_t pad) {
  require_same_tape(input, kernel);
  const Tensor& x = input.value();
  const Tensor& kern = kernel.value();
  if (x.rank() != 3 || kern.rank() != 4 || kern.dim(1) != x.dim(0) || kern.dim(2) != kern.dim(3)) {
    throw ShapeError("conv2d: input " + shape_to_string(x.shape()) + " incompatible with kernel " +
                     shape_to_string(kern.shape()));
  }
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), kern.dim(0), kern.dim(2), 0, 0, stride, pad};
  g.oh = conv_output_size(g.h, g.k, stride, pad);
  g.ow = conv_output_size(g.w, g.k, stride, pad);

  Tensor out({g.cout, g.oh, g.ow}, 0.0);
  std::vector<Var> ins{input, kernel};
  std::optional<NodeId> ib;
  if (bias) {
    require_same_tape(input, *bias);
    const Tensor& b = bias->value();
    if (b.size() != g.cout) {
      throw ShapeError("conv2d: bias " + shape_to_string(b.shape()) + " does not match " + std::to_string(g.cout) +
                       " output channels");
    }
    for (std::size_t co = 0; co < g.cout; ++co) {
      std::fill_n(out.data() + co * g.oh * g.ow, g.oh * g.ow, b[co]);
    }
    ins.push_back(*bias);
    ib = bias->id;
  }
  conv_forward(x, kern, out, g);

  const NodeId ix = input.id, ik = kernel.id;
  return input.tape->record(std::move(out), ins, [ix, ik, ib, g](const Tensor& gout, Tape& t) {
    Tensor* gx = t.tracked(ix) ? &t.grad_accumulator(ix) : nullptr;
    Tensor* gk = t.tracked(ik) ? &t.grad_accumulator(ik) : nullptr;
    if (gx || gk) conv_backward(t.value(ix), t.value(ik), gout, gx, gk, g);
    if (ib && t.tracked(*ib)) {
      Tensor& gb = t.grad_accumulator(*ib);
      const std::size_t plane = g.oh * g.ow;
      for (std::size_t co = 0; co < g.cout; ++co) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += gout[co * plane + i];
        gb[co] += s;
      }
    }
  });
}

Var softmax_channels(Var logits) {
  const Tensor& x = logits.value();
  if (x.rank() != 3) throw ShapeError("softmax_channels expects [c,h,w], got " + shape_to_string(x.shape()));
  const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < plane; ++i) {
    double mx = x[i];
    for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, x[k * plane + i]);
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double e = std::exp(x[k * plane + i] - mx);
      out[k * plane + i] = e;
      z += e;
    }
    for (std::size_t k = 0; k < c; ++k) out[k * plane + i] /= z;
  }
  std::array<Var, 1> ins{logits};
  const NodeId ix = logits.id;
  const NodeId self = logits.tape->size();
  return logits.tape->record(std::move(out), ins, [ix, self, c, plane](const Tensor& g, Tape& t) {
    const Tensor& p = t.value(self);
    Tensor& gx = t.grad_accumulator(ix);
    for (std::size_t i = 0; i < plane; ++i) {
      double dot = 0.0;
      for (std::size_t k = 0; k < c; ++k) dot += g[k * plane + i] * p[k * plane + i];
      for (std::size_t k = 0; k < c; ++k) gx[k * plane + i] += p[k * plane + i] * (g[k * plane + i] - dot);
    }
  });
}

Var gather_channels(Var probs, const LabelMap& labels) {
  const Tensor& p = probs.value();
  if (p.rank() != 3 || p.dim(1) != labels.height() || p.dim(2) != labels.width()) {
    throw ShapeError("gather_channels: map " + shape_to_string(p.shape()) + " vs labels " +
                     std::to_string(labels.height()) + "x" + std::to_string(labels.width()));
  }
  const std::size_t c = p.dim(0), plane = p.dim(1) * p.dim(2);
  std::vector<std::size_t> index;
  index.reserve(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const std::uint8_t l = labels[i];
    if (l == kIgnoreLabel) continue;
    if (l >= c) {
      throw ValueError("label " + std::to_string(l) + " at pixel (" + std::to_string(i / labels.width()) + "," +
                       std::to_string(i % labels.width()) + ") outside [0," + std::to_string(c) + ")");
    }
    index.push_back(l * plane + i);
  }
  Tensor out({index.size()});
  for (std::size_t j = 0; j < index.size(); ++j) out[j] = p[index[j]];
  std::array<Var, 1> ins{probs};
  const NodeId ip = probs.id;
  return probs.tape->record(std::move(out), ins, [ip, index = std::move(index)](const Tensor& g, Tape& t) {
    Tensor& gp = t.grad_accumulator(ip);
    for (std::size_t j = 0; j < index.size(); ++j) gp[index[j]] += g[j];
  });
}

Sgd::Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValueError("learning rate must be a finite non-negative number");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValueError("momentum must lie in [0,1)");
}

void Sgd::step(ParameterList& params, std::span<const Tensor> grads) {
  std::vector<Tensor*> ptrs;
  ptrs.reserve(params.size());
  for (auto& p : params) ptrs.push_back(&p.value);
  step(ptrs, grads);
}

void Sgd::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd: " + std::to_string(params.size()) + " parameters but " + std::to_string(grads.size()) +
                     " gradients");
  }
  if (velocity_.empty()) {
    for (Tensor* p : params) velocity_.emplace_back(p->shape(), 0.0);
  }
  if (velocity_.size() != params.size()) throw ShapeError("sgd: parameter count changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = *params[i];
    const Tensor& g = grads[i];
    Tensor& v = velocity_[i];
    if (theta.shape() != g.shape() || theta.shape() != v.shape()) {
      throw ShapeError("sgd: parameter " + shape_to_string(theta.shape()) + " vs gradient " +
                       shape_to_string(g.shape()));
    }
    for (std::size_t j = 0; j < theta.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      theta[j] -= lr_ * v[j];
    }
  }
}

}  // namespace altinc::ad
