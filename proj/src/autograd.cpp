#include "unigan/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "unigan/errors.hpp"
#include "unigan/kernels.hpp"

namespace unigan::ag {
namespace {

thread_local bool t_grad_enabled = true;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

void require_rank4(const Var& x, const char* op) {
  if (x.shape().size() != 4) {
    throw ShapeError(std::string(op) + ": expected NCHW tensor, got " + shape_to_string(x.shape()));
  }
}

// Graph edges are recorded only when some parent needs a gradient.
Var make(Tensor value, std::vector<std::shared_ptr<Node>> parents, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& p : parents) needs = needs || (p && p->requires_grad);
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

bool wants(const Node* n) { return n != nullptr && n->requires_grad; }

// y = f(x) elementwise; df(x, y) is the local derivative.
template <class F, class DF>
Var unary(const Var& x, F f, DF df) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  Node* px = x.node();
  return make(std::move(out), {x.ptr()}, [px, df](Node& self) {
    Tensor& gx = px->grad_buffer();
    const Tensor& xv = px->value;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * df(xv[i], self.value[i]);
  });
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

void Var::zero_grad() const {
  if (node_) node_->grad = Tensor();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void backward(const Var& root) {
  if (!root.defined() || root.value().size() != 1) throw ShapeError("backward() needs a one-element root");
  if (!root.requires_grad()) return;

  // Post-order DFS yields a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen{root.node()};
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (wants(parent) && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out += b.value();
  Node *pa = a.node(), *pb = b.node();
  return make(std::move(out), {a.ptr(), b.ptr()}, [pa, pb](Node& self) {
    if (wants(pa)) pa->grad_buffer() += self.grad;
    if (wants(pb)) pb->grad_buffer() += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  Node *pa = a.node(), *pb = b.node();
  return make(std::move(out), {a.ptr(), b.ptr()}, [pa, pb](Node& self) {
    if (wants(pa)) pa->grad_buffer() += self.grad;
    if (wants(pb)) {
      Tensor& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  Node *pa = a.node(), *pb = b.node();
  return make(std::move(out), {a.ptr(), b.ptr()}, [pa, pb](Node& self) {
    if (wants(pa)) {
      Tensor& g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (wants(pb)) {
      Tensor& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

Var scale(const Var& a, Scalar s) {
  return unary(a, [s](Scalar x) { return s * x; }, [s](Scalar, Scalar) { return s; });
}

Var add_scalar(const Var& a, Scalar s) {
  return unary(a, [s](Scalar x) { return x + s; }, [](Scalar, Scalar) { return 1.0; });
}

Var relu(const Var& x) {
  return unary(x, [](Scalar v) { return v > 0 ? v : 0.0; }, [](Scalar v, Scalar) { return v > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, Scalar slope) {
  return unary(
      x, [slope](Scalar v) { return v > 0 ? v : slope * v; }, [slope](Scalar v, Scalar) { return v > 0 ? 1.0 : slope; });
}

Var tanh(const Var& x) {
  return unary(x, [](Scalar v) { return std::tanh(v); }, [](Scalar, Scalar y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](Scalar v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const Scalar e = std::exp(v);
        return e / (1.0 + e);
      },
      [](Scalar, Scalar y) { return y * (1.0 - y); });
}

Var abs(const Var& x) {
  return unary(
      x, [](Scalar v) { return std::abs(v); }, [](Scalar v, Scalar) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Var square(const Var& x) {
  return unary(x, [](Scalar v) { return v * v; }, [](Scalar v, Scalar) { return 2.0 * v; });
}

Var log(const Var& x) {
  return unary(x, [](Scalar v) { return std::log(v); }, [](Scalar v, Scalar) { return 1.0 / v; });
}

Var clamp(const Var& x, Scalar lo, Scalar hi) {
  return unary(
      x, [lo, hi](Scalar v) { return std::clamp(v, lo, hi); },
      [lo, hi](Scalar v, Scalar) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(const Var& x) {
  Scalar s = 0;
  for (auto v : x.value().values()) s += v;
  Node* px = x.node();
  return make(Tensor::scalar(s), {x.ptr()}, [px](Node& self) {
    Tensor& g = px->grad_buffer();
    const Scalar go = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go;
  });
}

Var mean(const Var& x) {
  const auto n = static_cast<Scalar>(x.value().size());
  if (x.value().size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / n);
}

// ---------------------------------------------------------------------------
// Structural ops

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_channels of zero tensors");
  for (const auto& p : parts) require_rank4(p, "concat_channels");
  const auto& first = parts.front().value();
  std::int64_t channels = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    if (v.n() != first.n() || v.h() != first.h() || v.w() != first.w()) {
      throw ShapeError("concat_channels: misaligned inputs " + shape_to_string(v.shape()) + " vs " +
                       shape_to_string(first.shape()));
    }
    channels += v.c();
  }
  const auto n = first.n(), hw = first.h() * first.w();
  Tensor out({n, channels, first.h(), first.w()});
  std::vector<std::shared_ptr<Node>> parents;
  std::vector<Node*> raw;
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::int64_t b = 0; b < n; ++b) {
      std::copy_n(v.data() + b * v.c() * hw, v.c() * hw, out.data() + (b * channels + offset) * hw);
    }
    offset += v.c();
    parents.push_back(p.ptr());
    raw.push_back(p.node());
  }
  return make(std::move(out), std::move(parents), [raw, n, channels, hw](Node& self) {
    std::int64_t off = 0;
    for (Node* p : raw) {
      const auto c = p->value.c();
      if (wants(p)) {
        Tensor& g = p->grad_buffer();
        for (std::int64_t b = 0; b < n; ++b) {
          const Scalar* src = self.grad.data() + (b * channels + off) * hw;
          Scalar* dst = g.data() + b * c * hw;
          for (std::int64_t i = 0; i < c * hw; ++i) dst[i] += src[i];
        }
      }
      off += c;
    }
  });
}

Var concat_channels(std::initializer_list<Var> parts) {
  return concat_channels(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_channels(const Var& x, std::int64_t begin, std::int64_t count) {
  require_rank4(x, "slice_channels");
  const auto& v = x.value();
  if (begin < 0 || count < 1 || begin + count > v.c()) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + std::to_string(v.c()) + " channels");
  }
  const auto n = v.n(), c = v.c(), hw = v.h() * v.w();
  Tensor out({n, count, v.h(), v.w()});
  for (std::int64_t b = 0; b < n; ++b) {
    std::copy_n(v.data() + (b * c + begin) * hw, count * hw, out.data() + b * count * hw);
  }
  Node* px = x.node();
  return make(std::move(out), {x.ptr()}, [px, n, c, hw, begin, count](Node& self) {
    Tensor& g = px->grad_buffer();
    for (std::int64_t b = 0; b < n; ++b) {
      const Scalar* src = self.grad.data() + b * count * hw;
      Scalar* dst = g.data() + (b * c + begin) * hw;
      for (std::int64_t i = 0; i < count * hw; ++i) dst[i] += src[i];
    }
  });
}

namespace {
std::int64_t reflect(std::int64_t i, std::int64_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}
}  // namespace

Var reflection_pad(const Var& x, std::int64_t pad) {
  require_rank4(x, "reflection_pad");
  const auto& v = x.value();
  if (pad < 0 || pad >= v.h() || pad >= v.w()) {
    throw ShapeError("reflection_pad: pad " + std::to_string(pad) + " too large for " + shape_to_string(v.shape()));
  }
  const auto planes = v.n() * v.c(), h = v.h(), w = v.w(), oh = h + 2 * pad, ow = w + 2 * pad;
  Tensor out({v.n(), v.c(), oh, ow});
  for (std::int64_t p = 0; p < planes; ++p) {
    const Scalar* src = v.data() + p * h * w;
    Scalar* dst = out.data() + p * oh * ow;
    for (std::int64_t y = 0; y < oh; ++y) {
      const auto sy = reflect(y - pad, h);
      for (std::int64_t xx = 0; xx < ow; ++xx) dst[y * ow + xx] = src[sy * w + reflect(xx - pad, w)];
    }
  }
  Node* px = x.node();
  return make(std::move(out), {x.ptr()}, [px, planes, h, w, oh, ow, pad](Node& self) {
    Tensor& g = px->grad_buffer();
    for (std::int64_t p = 0; p < planes; ++p) {
      const Scalar* src = self.grad.data() + p * oh * ow;
      Scalar* dst = g.data() + p * h * w;
      for (std::int64_t y = 0; y < oh; ++y) {
        const auto sy = reflect(y - pad, h);
        for (std::int64_t xx = 0; xx < ow; ++xx) dst[sy * w + reflect(xx - pad, w)] += src[y * ow + xx];
      }
    }
  });
}

Var diff_w(const Var& x) {
  require_rank4(x, "diff_w");
  const auto& v = x.value();
  if (v.w() < 2) throw ShapeError("diff_w needs width >= 2");
  const auto planes = v.n() * v.c(), h = v.h(), w = v.w();
  Tensor out({v.n(), v.c(), h, w - 1});
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t y = 0; y < h; ++y) {
      const Scalar* row = v.data() + (p * h + y) * w;
      Scalar* dst = out.data() + (p * h + y) * (w - 1);
      for (std::int64_t xx = 0; xx + 1 < w; ++xx) dst[xx] = row[xx + 1] - row[xx];
    }
  }
  Node* px = x.node();
  return make(std::move(out), {x.ptr()}, [px, planes, h, w](Node& self) {
    Tensor& g = px->grad_buffer();
    for (std::int64_t p = 0; p < planes; ++p) {
      for (std::int64_t y = 0; y < h; ++y) {
        const Scalar* go = self.grad.data() + (p * h + y) * (w - 1);
        Scalar* row = g.data() + (p * h + y) * w;
        for (std::int64_t xx = 0; xx + 1 < w; ++xx) {
          row[xx + 1] += go[xx];
          row[xx] -= go[xx];
        }
      }
    }
  });
}

Var diff_h(const Var& x) {
  require_rank4(x, "diff_h");
  const auto& v = x.value();
  if (v.h() < 2) throw ShapeError("diff_h needs height >= 2");
  const auto planes = v.n() * v.c(), h = v.h(), w = v.w();
  Tensor out({v.n(), v.c(), h - 1, w});
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t y = 0; y + 1 < h; ++y) {
      const Scalar* a = v.data() + (p * h + y) * w;
      Scalar* dst = out.data() + (p * (h - 1) + y) * w;
      for (std::int64_t xx = 0; xx < w; ++xx) dst[xx] = a[w + xx] - a[xx];
    }
  }
  Node* px = x.node();
  return make(std::move(out), {x.ptr()}, [px, planes, h, w](Node& self) {
    Tensor& g = px->grad_buffer();
    for (std::int64_t p = 0; p < planes; ++p) {
      for (std::int64_t y = 0; y + 1 < h; ++y) {
        const Scalar* go = self.grad.data() + (p * (h - 1) + y) * w;
        Scalar* a = g.data() + (p * h + y) * w;
        for (std::int64_t xx = 0; xx < w; ++xx) {
          a[w + xx] += go[xx];
          a[xx] -= go[xx];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolutions and normalisation

Var conv2d(const Var& x, const Var& weight, const Var& bias, std::int64_t stride, std::int64_t pad) {
  require_rank4(x, "conv2d");
  const auto& xv = x.value();
  const auto& wv = weight.value();
  if (wv.rank() != 4 || wv.dim(2) != wv.dim(3)) throw ShapeError("conv2d: weight must be [out, in, k, k]");
  if (wv.dim(1) != xv.c()) {
    throw ShapeError("conv2d: input has " + std::to_string(xv.c()) + " channels, weight expects " +
                     std::to_string(wv.dim(1)));
  }
  kernels::ConvGeometry g{xv.n(), xv.c(), xv.h(), xv.w(), wv.dim(0), wv.dim(2), stride, pad};
  g.validate();
  Tensor out({g.batch, g.out_channels, g.out_h(), g.out_w()});
  std::span<const Scalar> b;
  if (bias.defined()) {
    if (static_cast<std::int64_t>(bias.value().size()) != g.out_channels) throw ShapeError("conv2d: bias size");
    b = bias.value().span();
  }
  kernels::conv().forward(g, xv.span(), wv.span(), b, out.span());
  Node *px = x.node(), *pw = weight.node(), *pb = bias.defined() ? bias.node() : nullptr;
  return make(std::move(out), {x.ptr(), weight.ptr(), bias.ptr()}, [px, pw, pb, g](Node& self) {
    const auto& k = kernels::conv();
    if (wants(px)) {
      Tensor tmp(px->value.shape());
      k.backward_input(g, self.grad.span(), pw->value.span(), tmp.span());
      px->grad_buffer() += tmp;
    }
    if (wants(pw) || wants(pb)) {
      Tensor scratch_w;
      std::span<Scalar> gw;
      if (wants(pw)) {
        gw = pw->grad_buffer().span();
      } else {
        scratch_w = Tensor(pw->value.shape());
        gw = scratch_w.span();
      }
      std::span<Scalar> gb;
      if (wants(pb)) gb = pb->grad_buffer().span();
      k.backward_weight(g, px->value.span(), self.grad.span(), gw, gb);
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, std::int64_t stride, std::int64_t pad,
                     std::int64_t out_h, std::int64_t out_w) {
  require_rank4(x, "conv_transpose2d");
  const auto& xv = x.value();
  const auto& wv = weight.value();
  if (wv.rank() != 4 || wv.dim(2) != wv.dim(3)) throw ShapeError("conv_transpose2d: weight must be [in, out, k, k]");
  if (wv.dim(0) != xv.c()) throw ShapeError("conv_transpose2d: channel mismatch");
  // The adjoint conv maps the transposed output back onto x.
  kernels::ConvGeometry g{xv.n(), wv.dim(1), out_h, out_w, xv.c(), wv.dim(2), stride, pad};
  g.validate();
  if (g.out_h() != xv.h() || g.out_w() != xv.w()) {
    throw ShapeError("conv_transpose2d: output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " inconsistent with input " + shape_to_string(xv.shape()));
  }
  Tensor out({g.batch, g.in_channels, out_h, out_w});
  kernels::conv().backward_input(g, xv.span(), wv.span(), out.span());
  const auto hw = out_h * out_w;
  if (bias.defined()) {
    if (static_cast<std::int64_t>(bias.value().size()) != g.in_channels) throw ShapeError("conv_transpose2d: bias size");
    for (std::int64_t n = 0; n < g.batch; ++n) {
      for (std::int64_t c = 0; c < g.in_channels; ++c) {
        Scalar* dst = out.data() + (n * g.in_channels + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) dst[i] += bias.value()[static_cast<std::size_t>(c)];
      }
    }
  }
  Node *px = x.node(), *pw = weight.node(), *pb = bias.defined() ? bias.node() : nullptr;
  return make(std::move(out), {x.ptr(), weight.ptr(), bias.ptr()}, [px, pw, pb, g, hw](Node& self) {
    const auto& k = kernels::conv();
    if (wants(px)) {
      Tensor tmp(px->value.shape());
      k.forward(g, self.grad.span(), pw->value.span(), {}, tmp.span());
      px->grad_buffer() += tmp;
    }
    if (wants(pw)) k.backward_weight(g, self.grad.span(), px->value.span(), pw->grad_buffer().span(), {});
    if (wants(pb)) {
      Tensor& gb = pb->grad_buffer();
      for (std::int64_t n = 0; n < g.batch; ++n) {
        for (std::int64_t c = 0; c < g.in_channels; ++c) {
          const Scalar* src = self.grad.data() + (n * g.in_channels + c) * hw;
          Scalar s = 0;
          for (std::int64_t i = 0; i < hw; ++i) s += src[i];
          gb[static_cast<std::size_t>(c)] += s;
        }
      }
    }
  });
}

Var avg_pool2d(const Var& x, std::int64_t k) {
  require_rank4(x, "avg_pool2d");
  const auto& v = x.value();
  if (k < 1 || v.h() % k != 0 || v.w() % k != 0) {
    throw ShapeError("avg_pool2d: " + shape_to_string(v.shape()) + " not divisible by " + std::to_string(k));
  }
  const auto planes = v.n() * v.c(), h = v.h(), w = v.w(), oh = h / k, ow = w / k;
  const Scalar inv = 1.0 / static_cast<Scalar>(k * k);
  Tensor out({v.n(), v.c(), oh, ow});
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t xx = 0; xx < w; ++xx) out[static_cast<std::size_t>((p * oh + y / k) * ow + xx / k)] += inv * v[static_cast<std::size_t>((p * h + y) * w + xx)];
  Node* px = x.node();
  return make(std::move(out), {x.ptr()}, [px, planes, h, w, oh, ow, k, inv](Node& self) {
    Tensor& g = px->grad_buffer();
    for (std::int64_t p = 0; p < planes; ++p)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t xx = 0; xx < w; ++xx) g[static_cast<std::size_t>((p * h + y) * w + xx)] += inv * self.grad[static_cast<std::size_t>((p * oh + y / k) * ow + xx / k)];
  });
}

Var global_avg_pool(const Var& x) {
  require_rank4(x, "global_avg_pool");
  const auto& v = x.value();
  const auto planes = v.n() * v.c(), hw = v.h() * v.w();
  const Scalar inv = 1.0 / static_cast<Scalar>(hw);
  Tensor out({v.n(), v.c(), 1, 1});
  for (std::int64_t p = 0; p < planes; ++p) {
    Scalar s = 0;
    for (std::int64_t i = 0; i < hw; ++i) s += v[static_cast<std::size_t>(p * hw + i)];
    out[static_cast<std::size_t>(p)] = s * inv;
  }
  Node* px = x.node();
  return make(std::move(out), {x.ptr()}, [px, planes, hw, inv](Node& self) {
    Tensor& g = px->grad_buffer();
    for (std::int64_t p = 0; p < planes; ++p)
      for (std::int64_t i = 0; i < hw; ++i) g[static_cast<std::size_t>(p * hw + i)] += inv * self.grad[static_cast<std::size_t>(p)];
  });
}

Var instance_norm(const Var& x, Scalar eps) {
  require_rank4(x, "instance_norm");
  const auto& v = x.value();
  const auto planes = v.n() * v.c(), plane = v.h() * v.w();
  Tensor out(v.shape());
  std::vector<Scalar> inv_std(static_cast<std::size_t>(planes));
  kernels::norm().forward(planes, plane, eps, v.span(), out.span(), inv_std);
  Node* px = x.node();
  return make(std::move(out), {x.ptr()}, [px, planes, plane, inv_std = std::move(inv_std)](Node& self) {
    kernels::norm().backward(planes, plane, self.value.span(), inv_std, self.grad.span(), px->grad_buffer().span());
  });
}

}  // namespace unigan::ag
