#include "quantgrid/autodiff.hpp"

#include <algorithm>
#include <numeric>

namespace quantgrid {

namespace {

using Matrix = RowMatrix<double>;
using StridedMap = Eigen::Map<Matrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const Matrix, 0, Eigen::OuterStride<>>;

// Strides of `in` laid out against `out` with trailing alignment; broadcast
// axes get stride 0.
std::vector<Index> aligned_strides(const Shape& in, const Shape& out) {
  std::vector<Index> strides(out.size(), 0);
  Index stride = 1;
  const std::size_t lead = out.size() - in.size();
  for (std::size_t i = in.size(); i-- > 0;) {
    strides[lead + i] = (in[i] == 1 && out[lead + i] != 1) ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

// Visits every linear output index together with the matching offsets into
// two operands described by strides.
template <typename F>
void for_each_offset(const Shape& out, const std::vector<Index>& sa, const std::vector<Index>& sb, F&& f) {
  const Index n = shape_size(out);
  const Index r = static_cast<Index>(out.size());
  std::vector<Index> counter(out.size(), 0);
  Index oa = 0;
  Index ob = 0;
  for (Index i = 0; i < n; ++i) {
    f(i, oa, ob);
    for (Index ax = r - 1; ax >= 0; --ax) {
      const auto a = static_cast<std::size_t>(ax);
      ++counter[a];
      oa += sa[a];
      ob += sb[a];
      if (counter[a] < out[a]) break;
      oa -= sa[a] * out[a];
      ob -= sb[a] * out[a];
      counter[a] = 0;
    }
  }
}

// dst += x * y. Fresh tensors are zeroed already, so forward passes
// accumulate too and skip Eigen's own clearing of dst.
template <typename Dst, typename X, typename Y>
void gemm(Dst&& dst, const X& x, const Y& y) {
  dst.noalias() += x * y;
}

Graph& graph_of(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw std::invalid_argument("operands belong to different graphs");
  return a.graph();
}

enum class BinaryKind { Add, Sub, Mul };

using RowArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Element count of `small` when, leading ones dropped, it equals the tail of
// `big`; 0 otherwise.
Index trailing_block(const Shape& small, const Shape& big) {
  auto first = std::find_if(small.begin(), small.end(), [](Index d) { return d != 1; });
  const auto len = static_cast<std::size_t>(small.end() - first);
  if (len == 0 || len > big.size()) return 0;
  if (!std::equal(first, small.end(), big.end() - static_cast<std::ptrdiff_t>(len))) return 0;
  return shape_size(Shape(first, small.end()));
}

// One operand has the output shape, the other repeats along leading axes.
Var binary_rowwise(BinaryKind kind, OpKind op, Var a, Var b, bool a_full, Index inner) {
  Graph& g = a.graph();
  const Tensor& full = a_full ? a.value() : b.value();
  const Tensor& part = a_full ? b.value() : a.value();
  const Index outer = full.size() / inner;
  Tensor out(full.shape());
  Eigen::Map<RowArray> o(out.data(), outer, inner);
  Eigen::Map<const RowArray> f(full.data(), outer, inner);
  Eigen::Map<const Eigen::Array<double, 1, Eigen::Dynamic>> p(part.data(), inner);
  switch (kind) {
    case BinaryKind::Add: o = f.rowwise() + p; break;
    case BinaryKind::Mul: o = f.rowwise() * p; break;
    case BinaryKind::Sub:
      if (a_full) o = f.rowwise() - p;
      else o = (-f).rowwise() + p;
      break;
  }
  const std::size_t i_full = a_full ? a.id() : b.id();
  const std::size_t i_part = a_full ? b.id() : a.id();
  // sign of d(out)/d(operand) for Sub
  const double s_full = (kind == BinaryKind::Sub && !a_full) ? -1.0 : 1.0;
  const double s_part = (kind == BinaryKind::Sub && a_full) ? -1.0 : 1.0;
  return g.push(op, std::move(out), {a.id(), b.id()},
                [kind, i_full, i_part, outer, inner, s_full, s_part](Graph& gr, std::size_t self) {
                  Eigen::Map<const RowArray> go(gr.grad(self).data(), outer, inner);
                  if (gr.requires_grad(i_full)) {
                    Eigen::Map<RowArray> gf(gr.grad_buffer(i_full).data(), outer, inner);
                    if (kind == BinaryKind::Mul) {
                      gf += go.rowwise() *
                            Eigen::Map<const Eigen::Array<double, 1, Eigen::Dynamic>>(gr.value(i_part).data(), inner);
                    } else {
                      gf += s_full * go;
                    }
                  }
                  if (gr.requires_grad(i_part)) {
                    Eigen::Map<Eigen::Array<double, 1, Eigen::Dynamic>> gp(gr.grad_buffer(i_part).data(), inner);
                    if (kind == BinaryKind::Mul) {
                      gp += (go * Eigen::Map<const RowArray>(gr.value(i_full).data(), outer, inner)).colwise().sum();
                    } else {
                      gp += s_part * go.colwise().sum();
                    }
                  }
                });
}

Var binary(BinaryKind kind, Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  const OpKind op = kind == BinaryKind::Add ? OpKind::Add : kind == BinaryKind::Sub ? OpKind::Sub : OpKind::Mul;

  auto apply = [kind](double x, double y) {
    switch (kind) {
      case BinaryKind::Add: return x + y;
      case BinaryKind::Sub: return x - y;
      case BinaryKind::Mul: return x * y;
    }
    return 0.0;
  };

  if (va.shape() == vb.shape()) {
    Tensor out(va.shape());
    switch (kind) {
      case BinaryKind::Add: out.array() = va.array() + vb.array(); break;
      case BinaryKind::Sub: out.array() = va.array() - vb.array(); break;
      case BinaryKind::Mul: out.array() = va.array() * vb.array(); break;
    }
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return g.push(op, std::move(out), {ia, ib}, [kind, ia, ib](Graph& gr, std::size_t self) {
      const auto& gout = gr.grad(self).array();
      if (gr.requires_grad(ia)) {
        auto& ga = gr.grad_buffer(ia).array();
        if (kind == BinaryKind::Mul) ga += gout * gr.value(ib).array();
        else ga += gout;
      }
      if (gr.requires_grad(ib)) {
        auto& gb = gr.grad_buffer(ib).array();
        if (kind == BinaryKind::Mul) gb += gout * gr.value(ia).array();
        else if (kind == BinaryKind::Sub) gb -= gout;
        else gb += gout;
      }
    });
  }

  const Shape out_shape = broadcast_shape(va.shape(), vb.shape());
  if (out_shape == va.shape() || out_shape == vb.shape()) {
    const bool a_full = out_shape == va.shape();
    const Index inner = trailing_block(a_full ? vb.shape() : va.shape(), out_shape);
    if (inner > 0) return binary_rowwise(kind, op, a, b, a_full, inner);
  }
  const auto sa = aligned_strides(va.shape(), out_shape);
  const auto sb = aligned_strides(vb.shape(), out_shape);
  Tensor out(out_shape);
  for_each_offset(out_shape, sa, sb, [&](Index i, Index oa, Index ob) { out[i] = apply(va[oa], vb[ob]); });

  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return g.push(op, std::move(out), {ia, ib}, [kind, ia, ib, out_shape, sa, sb](Graph& gr, std::size_t self) {
    const Tensor& gout = gr.grad(self);
    const Tensor& xa = gr.value(ia);
    const Tensor& xb = gr.value(ib);
    const bool need_a = gr.requires_grad(ia);
    const bool need_b = gr.requires_grad(ib);
    Tensor* ga = need_a ? &gr.grad_buffer(ia) : nullptr;
    Tensor* gb = need_b ? &gr.grad_buffer(ib) : nullptr;
    for_each_offset(out_shape, sa, sb, [&](Index i, Index oa, Index ob) {
      const double gi = gout[i];
      switch (kind) {
        case BinaryKind::Add:
          if (ga) (*ga)[oa] += gi;
          if (gb) (*gb)[ob] += gi;
          break;
        case BinaryKind::Sub:
          if (ga) (*ga)[oa] += gi;
          if (gb) (*gb)[ob] -= gi;
          break;
        case BinaryKind::Mul:
          if (ga) (*ga)[oa] += gi * xb[ob];
          if (gb) (*gb)[ob] += gi * xa[oa];
          break;
      }
    });
  });
}

template <typename Forward, typename Derivative>
Var unary(OpKind kind, Var a, Forward fwd, Derivative deriv) {
  Graph& g = a.graph();
  Tensor out(a.shape());
  out.array() = fwd(a.value().array());
  const std::size_t ia = a.id();
  return g.push(kind, std::move(out), {ia}, [ia, deriv](Graph& gr, std::size_t self) {
    if (!gr.requires_grad(ia)) return;
    gr.grad_buffer(ia).array() += gr.grad(self).array() * deriv(gr.value(ia).array(), gr.value(self).array());
  });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const Index da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const Index db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("shape mismatch: " + to_string(a) + " vs " + to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

const Tensor& Var::value() const { return graph_->value(id_); }

Tensor Var::grad() const {
  const auto& n = graph_->node(id_);
  return n.has_grad ? n.grad : Tensor::zeros(n.value.shape());
}

Var Graph::push(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node n{kind, std::move(inputs), std::move(value), Tensor(), false, false, std::move(backward), nullptr};
  for (std::size_t in : n.inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  if (!n.requires_grad) n.backward = nullptr;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) { return push(OpKind::Constant, std::move(value), {}, nullptr); }

Var Graph::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n{OpKind::Parameter, {}, p.value, Tensor(), false, true, nullptr, &p};
  n.backward = [](Graph& gr, std::size_t self) {
    Node& node = gr.nodes_[self];
    node.param->grad.array() += node.grad.array();
  };
  nodes_.push_back(std::move(n));
  param_nodes_[&p] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::backward(Var root) {
  if (&root.graph() != this) throw std::invalid_argument("backward root belongs to another graph");
  if (root.value().size() != 1) {
    throw ShapeError("backward requires a scalar root, got shape " + to_string(root.shape()));
  }
  for (auto& n : nodes_) n.has_grad = false;
  grad_buffer(root.id()).array().setOnes();
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2 || sa.back() != sb[sb.size() - 2]) {
    throw ShapeError("matmul shape mismatch: " + to_string(sa) + " vs " + to_string(sb));
  }
  const Index m = sa[sa.size() - 2];
  const Index k = sa.back();
  const Index n = sb.back();
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  Shape batch_out;
  try {
    batch_out = broadcast_shape(batch_a, batch_b);
  } catch (const ShapeError&) {
    throw ShapeError("matmul shape mismatch: " + to_string(sa) + " vs " + to_string(sb));
  }
  const auto stride_a = aligned_strides(batch_a, batch_out);
  const auto stride_b = aligned_strides(batch_b, batch_out);

  Shape out_shape = batch_out;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape);
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  for_each_offset(batch_out, stride_a, stride_b, [&](Index i, Index oa, Index ob) {
    gemm(Eigen::Map<Matrix>(out.data() + i * m * n, m, n), Eigen::Map<const Matrix>(va.data() + oa * m * k, m, k),
         Eigen::Map<const Matrix>(vb.data() + ob * k * n, k, n));
  });

  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return g.push(OpKind::MatMul, std::move(out), {ia, ib},
                [ia, ib, m, k, n, batch_out, stride_a, stride_b](Graph& gr, std::size_t self) {
                  const Tensor& gout = gr.grad(self);
                  const Tensor& xa = gr.value(ia);
                  const Tensor& xb = gr.value(ib);
                  Tensor* ga = gr.requires_grad(ia) ? &gr.grad_buffer(ia) : nullptr;
                  Tensor* gb = gr.requires_grad(ib) ? &gr.grad_buffer(ib) : nullptr;
                  for_each_offset(batch_out, stride_a, stride_b, [&](Index i, Index oa, Index ob) {
                    Eigen::Map<const Matrix> dc(gout.data() + i * m * n, m, n);
                    if (ga) {
                      gemm(Eigen::Map<Matrix>(ga->data() + oa * m * k, m, k), dc,
                           Eigen::Map<const Matrix>(xb.data() + ob * k * n, k, n).transpose());
                    }
                    if (gb) {
                      gemm(Eigen::Map<Matrix>(gb->data() + ob * k * n, k, n),
                           Eigen::Map<const Matrix>(xa.data() + oa * m * k, m, k).transpose(), dc);
                    }
                  });
                });
}

Var contract_per_node(Var v, Var w) {
  Graph& g = graph_of(v, w);
  const Shape& sv = v.shape();
  const Shape& sw = w.shape();
  if (sv.size() != 3 || sw.size() != 3 || sv[1] != sw[0] || sv[2] != sw[1]) {
    throw ShapeError("contract_per_node shape mismatch: " + to_string(sv) + " vs " + to_string(sw));
  }
  const Index batch = sv[0];
  const Index nodes = sv[1];
  const Index depth = sv[2];
  const Index width = sw[2];
  Tensor out(Shape{batch, nodes, width});
  const Tensor& xv = v.value();
  const Tensor& xw = w.value();
  for (Index node = 0; node < nodes; ++node) {
    gemm(StridedMap(out.data() + node * width, batch, width, Eigen::OuterStride<>(nodes * width)),
         ConstStridedMap(xv.data() + node * depth, batch, depth, Eigen::OuterStride<>(nodes * depth)),
         Eigen::Map<const Matrix>(xw.data() + node * depth * width, depth, width));
  }
  const std::size_t iv = v.id();
  const std::size_t iw = w.id();
  return g.push(OpKind::ContractPerNode, std::move(out), {iv, iw},
                [iv, iw, batch, nodes, depth, width](Graph& gr, std::size_t self) {
                  const Tensor& gout = gr.grad(self);
                  const Tensor& xv = gr.value(iv);
                  const Tensor& xw = gr.value(iw);
                  Tensor* gv = gr.requires_grad(iv) ? &gr.grad_buffer(iv) : nullptr;
                  Tensor* gw = gr.requires_grad(iw) ? &gr.grad_buffer(iw) : nullptr;
                  for (Index node = 0; node < nodes; ++node) {
                    ConstStridedMap dz(gout.data() + node * width, batch, width, Eigen::OuterStride<>(nodes * width));
                    if (gv) {
                      gemm(StridedMap(gv->data() + node * depth, batch, depth, Eigen::OuterStride<>(nodes * depth)),
                           dz, Eigen::Map<const Matrix>(xw.data() + node * depth * width, depth, width).transpose());
                    }
                    if (gw) {
                      gemm(Eigen::Map<Matrix>(gw->data() + node * depth * width, depth, width),
                           ConstStridedMap(xv.data() + node * depth, batch, depth, Eigen::OuterStride<>(nodes * depth))
                               .transpose(),
                           dz);
                    }
                  }
                });
}

Var add(Var a, Var b) { return binary(BinaryKind::Add, a, b); }
Var sub(Var a, Var b) { return binary(BinaryKind::Sub, a, b); }
Var mul(Var a, Var b) { return binary(BinaryKind::Mul, a, b); }

Var scale(Var a, double s) {
  return unary(
      OpKind::Scale, a, [s](const auto& x) { return (x * s).eval(); },
      [s](const auto& x, const auto&) { return Eigen::ArrayXd::Constant(x.size(), s); });
}

Var add_scalar(Var a, double s) {
  return unary(
      OpKind::AddScalar, a, [s](const auto& x) { return (x + s).eval(); },
      [](const auto& x, const auto&) { return Eigen::ArrayXd::Ones(x.size()); });
}

Var sigmoid(Var a) {
  return unary(
      OpKind::Sigmoid, a, [](const auto& x) { return (1.0 / (1.0 + (-x).exp())).eval(); },
      [](const auto&, const auto& y) { return (y * (1.0 - y)).eval(); });
}

Var tanh(Var a) {
  return unary(
      OpKind::Tanh, a, [](const auto& x) { return x.tanh().eval(); },
      [](const auto&, const auto& y) { return (1.0 - y.square()).eval(); });
}

Var abs(Var a) {
  // Subgradient 0 at the kink.
  return unary(
      OpKind::Abs, a, [](const auto& x) { return x.abs().eval(); },
      [](const auto& x, const auto&) { return x.sign().eval(); });
}

Var max_scalar(Var a, double s) {
  return unary(
      OpKind::MaxScalar, a, [s](const auto& x) { return x.max(s).eval(); },
      [s](const auto& x, const auto&) { return (x > s).template cast<double>().eval(); });
}

Var concat_last(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of zero operands");
  Graph& g = parts.front().graph();
  const Shape& first = parts.front().shape();
  if (first.empty()) throw ShapeError("concat of rank-0 operands");
  Index total = 0;
  std::vector<Index> widths;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (&p.graph() != &g) throw std::invalid_argument("operands belong to different graphs");
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      throw ShapeError("concat shape mismatch: " + to_string(first) + " vs " + to_string(s));
    }
    widths.push_back(s.back());
    ids.push_back(p.id());
    total += s.back();
  }
  Shape out_shape = first;
  out_shape.back() = total;
  Tensor out(out_shape);
  const Index outer = out.size() / total;
  auto om = out.flat_matrix(total);
  Index off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    om.block(0, off, outer, widths[i]) = parts[i].value().flat_matrix(widths[i]);
    off += widths[i];
  }
  return g.push(OpKind::Concat, std::move(out), ids, [ids, widths, total, outer](Graph& gr, std::size_t self) {
    auto gm = gr.grad(self).flat_matrix(total);
    Index off = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (gr.requires_grad(ids[i])) gr.grad_buffer(ids[i]).flat_matrix(widths[i]) += gm.block(0, off, outer, widths[i]);
      off += widths[i];
    }
  });
}

Var concat_last(std::initializer_list<Var> parts) {
  return concat_last(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice(Var a, Index axis, Index begin, Index end) {
  const Tensor& x = a.value();
  const Index ax = x.normalize_axis(axis);
  const Shape& s = x.shape();
  if (begin < 0 || end > s[static_cast<std::size_t>(ax)] || begin >= end) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range on axis " +
                     std::to_string(ax) + " of " + to_string(s));
  }
  Index outer = 1;
  for (Index i = 0; i < ax; ++i) outer *= s[static_cast<std::size_t>(i)];
  Index inner = 1;
  for (std::size_t i = static_cast<std::size_t>(ax) + 1; i < s.size(); ++i) inner *= s[i];
  const Index extent = s[static_cast<std::size_t>(ax)];
  const Index len = end - begin;
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(ax)] = len;
  Tensor out(out_shape);
  for (Index o = 0; o < outer; ++o) {
    out.array().segment(o * len * inner, len * inner) = x.array().segment((o * extent + begin) * inner, len * inner);
  }
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::Slice, std::move(out), {ia}, [=](Graph& gr, std::size_t self) {
    if (!gr.requires_grad(ia)) return;
    auto& ga = gr.grad_buffer(ia).array();
    const auto& gout = gr.grad(self).array();
    for (Index o = 0; o < outer; ++o) {
      ga.segment((o * extent + begin) * inner, len * inner) += gout.segment(o * len * inner, len * inner);
    }
  });
}

Var sum(Var a) {
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::Sum, Tensor::scalar(a.value().array().sum()), {ia}, [ia](Graph& gr, std::size_t self) {
    if (gr.requires_grad(ia)) gr.grad_buffer(ia).array() += gr.grad(self)[0];
  });
}

Var mean(Var a) {
  const std::size_t ia = a.id();
  const double n = static_cast<double>(a.value().size());
  return a.graph().push(OpKind::Mean, Tensor::scalar(a.value().array().mean()), {ia},
                        [ia, n](Graph& gr, std::size_t self) {
                          if (gr.requires_grad(ia)) gr.grad_buffer(ia).array() += gr.grad(self)[0] / n;
                        });
}

Var reshape(Var a, Shape shape) {
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::Reshape, a.value().reshaped(std::move(shape)), {ia},
                        [ia](Graph& gr, std::size_t self) {
                          if (gr.requires_grad(ia)) gr.grad_buffer(ia).array() += gr.grad(self).array();
                        });
}

Var permute(Var a, std::vector<Index> perm) {
  const Shape& s = a.shape();
  std::vector<Index> check = perm;
  std::sort(check.begin(), check.end());
  std::vector<Index> identity(s.size());
  std::iota(identity.begin(), identity.end(), Index{0});
  if (check != identity) throw ShapeError("invalid permutation for shape " + to_string(s));

  std::vector<Index> in_strides(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) in_strides[i - 1] = in_strides[i] * s[i];
  Shape out_shape(s.size());
  std::vector<Index> strides(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    out_shape[i] = s[static_cast<std::size_t>(perm[i])];
    strides[i] = in_strides[static_cast<std::size_t>(perm[i])];
  }
  const std::vector<Index> unused(s.size(), 0);
  Tensor out(out_shape);
  const Tensor& x = a.value();
  for_each_offset(out_shape, strides, unused, [&](Index i, Index oa, Index) { out[i] = x[oa]; });
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::Permute, std::move(out), {ia}, [=](Graph& gr, std::size_t self) {
    if (!gr.requires_grad(ia)) return;
    Tensor& ga = gr.grad_buffer(ia);
    const Tensor& gout = gr.grad(self);
    for_each_offset(out_shape, strides, unused, [&](Index i, Index oa, Index) { ga[oa] += gout[i]; });
  });
}

Var gather_rows(Var table, std::span<const Index> rows) {
  const Tensor& t = table.value();
  if (t.rank() != 2) throw ShapeError("gather_rows expects a rank-2 table, got " + to_string(t.shape()));
  const Index width = t.dim(1);
  std::vector<Index> idx(rows.begin(), rows.end());
  if (idx.empty()) throw ShapeError("gather_rows with no indices");
  Tensor out(Shape{static_cast<Index>(idx.size()), width});
  auto om = out.matrix();
  auto tm = t.matrix();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= t.dim(0)) {
      throw std::out_of_range("row index " + std::to_string(idx[r]) + " outside table of " +
                              std::to_string(t.dim(0)) + " rows");
    }
    om.row(static_cast<Index>(r)) = tm.row(idx[r]);
  }
  const std::size_t it = table.id();
  return table.graph().push(OpKind::GatherRows, std::move(out), {it}, [it, idx](Graph& gr, std::size_t self) {
    if (!gr.requires_grad(it)) return;
    auto gt = gr.grad_buffer(it).matrix();
    auto gm = gr.grad(self).matrix();
    for (std::size_t r = 0; r < idx.size(); ++r) gt.row(idx[r]) += gm.row(static_cast<Index>(r));
  });
}

}  // namespace quantgrid
