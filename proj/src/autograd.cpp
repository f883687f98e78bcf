#include "fsgan/autograd.hpp"

#include "fsgan/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace fsgan {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Var& a, const Var& b, const char* what)
{
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

void require_rank(const Var& a, std::size_t rank, const char* what)
{
    if (a.shape().size() != rank)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(a.shape()));
}

Var::Node& parent(Var::Node& self, std::size_t i) { return *self.parents[i]; }

} // namespace

Tensor& Var::Node::ensure_grad()
{
    if (grad.data.size() != value.data.size()) grad = Tensor(value.shape, 0.0);
    return grad;
}

Var Var::constant(Tensor value) { return leaf(std::move(value), false); }

Var Var::leaf(Tensor value, bool requires_grad)
{
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
}

Var Var::op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn)
{
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node_);
        n->backward = std::move(backward_fn);
    }
    return Var(std::move(n));
}

double Var::item() const
{
    if (value().size() != 1) throw ShapeError("item() on a tensor with " + std::to_string(value().size()) + " elements");
    return value().data[0];
}

void Var::zero_grad()
{
    if (node_) node_->grad = Tensor();
}

Var Var::detach() const { return constant(value()); }

Var Var::clone_leaf() const { return leaf(value(), requires_grad()); }

void backward(const Var& root)
{
    if (!root.defined() || root.value().size() != 1) throw ShapeError("backward() needs a scalar root");
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Var::Node*> order;
    std::unordered_set<Var::Node*> seen;
    std::vector<std::pair<Var::Node*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Var::Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->ensure_grad().data[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Var::Node* n = *it;
        if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
        // Interior gradients are no longer needed once propagated.
        if (n->backward && n != root.node().get()) n->grad = Tensor();
    }
}

namespace ops {

Var add(const Var& a, const Var& b)
{
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
    return Var::op(std::move(out), {a, b}, [](Var::Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            auto& p = parent(self, k);
            if (!p.requires_grad) continue;
            auto& g = p.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i];
        }
    });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var scale(const Var& a, double factor)
{
    Tensor out = a.value();
    for (auto& v : out.data) v *= factor;
    return Var::op(std::move(out), {a}, [factor](Var::Node& self) {
        auto& g = parent(self, 0).ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += factor * self.grad.data[i];
    });
}

Var sum(const Var& a)
{
    double s = 0.0;
    for (double v : a.value().data) s += v;
    return Var::op(Tensor({}, {s}), {a}, [](Var::Node& self) {
        auto& g = parent(self, 0).ensure_grad();
        const double up = self.grad.data[0];
        for (auto& v : g.data) v += up;
    });
}

Var mean(const Var& a)
{
    if (a.value().size() == 0) throw DomainError("mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var softplus(const Var& a)
{
    Tensor out = a.value();
    for (auto& v : out.data) v = v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    return Var::op(std::move(out), {a}, [](Var::Node& self) {
        auto& p = parent(self, 0);
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = p.value.data[i];
            const double sig = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            g.data[i] += sig * self.grad.data[i];
        }
    });
}

Var tanh(const Var& a)
{
    Tensor out = a.value();
    for (auto& v : out.data) v = std::tanh(v);
    return Var::op(std::move(out), {a}, [](Var::Node& self) {
        auto& g = parent(self, 0).ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = self.value.data[i];
            g.data[i] += (1.0 - y * y) * self.grad.data[i];
        }
    });
}

namespace {
thread_local KinkProbe* active_probe = nullptr;
}

KinkProbe::KinkProbe() : previous_(active_probe) { active_probe = this; }
KinkProbe::~KinkProbe() { active_probe = previous_; }

void KinkProbe::fold(std::span<const double> inputs)
{
    for (double v : inputs) hash_ = (hash_ ^ static_cast<std::uint64_t>(v > 0)) * 1099511628211ull;
}

Var leaky_relu(const Var& a, double slope)
{
    if (active_probe) active_probe->fold(a.value().data);
    Tensor out = a.value();
    for (auto& v : out.data) v = v > 0 ? v : slope * v;
    return Var::op(std::move(out), {a}, [slope](Var::Node& self) {
        auto& p = parent(self, 0);
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            g.data[i] += (p.value.data[i] > 0 ? 1.0 : slope) * self.grad.data[i];
    });
}

Var reshape(const Var& a, Shape shape)
{
    if (numel(shape) != a.value().size())
        throw ShapeError("reshape " + shape_string(a.shape()) + " -> " + shape_string(shape));
    Tensor out(std::move(shape), a.value().data);
    return Var::op(std::move(out), {a}, [](Var::Node& self) {
        auto& g = parent(self, 0).ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i];
    });
}

Var mul_const(const Var& a, const Tensor& factor)
{
    if (factor.shape != a.shape())
        throw ShapeError("mul_const: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(factor.shape));
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= factor.data[i];
    return Var::op(std::move(out), {a}, [factor](Var::Node& self) {
        auto& g = parent(self, 0).ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += factor.data[i] * self.grad.data[i];
    });
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows)
{
    Tensor out = a.value().gather_rows(rows);
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return Var::op(std::move(out), {a}, [idx = std::move(idx)](Var::Node& self) {
        auto& g = parent(self, 0).ensure_grad();
        const auto n = self.value.row_size();
        for (std::size_t k = 0; k < idx.size(); ++k)
            for (std::size_t j = 0; j < n; ++j) g.data[idx[k] * n + j] += self.grad.data[k * n + j];
    });
}

Var concat_rows(const Var& a, const Var& b)
{
    Shape sa = a.shape(), sb = b.shape();
    if (sa.empty() || sa.size() != sb.size() || !std::equal(sa.begin() + 1, sa.end(), sb.begin() + 1))
        throw ShapeError("concat_rows: incompatible shapes " + shape_string(sa) + " and " + shape_string(sb));
    Shape s = sa;
    s[0] += sb[0];
    std::vector<double> d = a.value().data;
    d.insert(d.end(), b.value().data.begin(), b.value().data.end());
    const std::size_t split = a.value().size();
    return Var::op(Tensor(s, std::move(d)), {a, b}, [split](Var::Node& self) {
        auto& pa = parent(self, 0);
        auto& pb = parent(self, 1);
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < split; ++i) g.data[i] += self.grad.data[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[split + i];
        }
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias)
{
    require_rank(x, 2, "linear");
    require_rank(weight, 2, "linear weight");
    const auto batch = x.shape()[0], in = x.shape()[1], out = weight.shape()[0];
    if (weight.shape()[1] != in || bias.value().size() != out)
        throw ShapeError("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                         shape_string(weight.shape()));
    Tensor y({batch, out});
    {
        ConstMapMat X(x.value().data.data(), batch, in);
        ConstMapMat Wm(weight.value().data.data(), out, in);
        MapMat Y(y.data.data(), batch, out);
        Y.noalias() = X * Wm.transpose();
        Eigen::Map<const Eigen::RowVectorXd> b(bias.value().data.data(), out);
        Y.rowwise() += b;
    }
    return Var::op(std::move(y), {x, weight, bias}, [batch, in, out](Var::Node& self) {
        ConstMapMat dY(self.grad.data.data(), batch, out);
        auto& px = parent(self, 0);
        auto& pw = parent(self, 1);
        auto& pb = parent(self, 2);
        if (px.requires_grad) {
            MapMat dX(px.ensure_grad().data.data(), batch, in);
            dX.noalias() += dY * ConstMapMat(pw.value.data.data(), out, in);
        }
        if (pw.requires_grad) {
            MapMat dW(pw.ensure_grad().data.data(), out, in);
            dW.noalias() += dY.transpose() * ConstMapMat(px.value.data.data(), batch, in);
        }
        if (pb.requires_grad) {
            Eigen::Map<Eigen::RowVectorXd> db(pb.ensure_grad().data.data(), out);
            db += dY.colwise().sum();
        }
    });
}

namespace {

struct ConvGeometry {
    std::size_t channels, height, width, out_channels, kernel, pad, out_height, out_width;
    std::size_t col_rows() const { return channels * kernel * kernel; }
    std::size_t col_cols() const { return out_height * out_width; }
};

void im2col(const double* img, const ConvGeometry& g, double* col)
{
    const auto oh = g.out_height, ow = g.out_width;
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t ki = 0; ki < g.kernel; ++ki)
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                double* dst = col + ((c * g.kernel + ki) * g.kernel + kj) * oh * ow;
                for (std::size_t y = 0; y < oh; ++y) {
                    const auto iy = static_cast<std::ptrdiff_t>(y + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    for (std::size_t x = 0; x < ow; ++x) {
                        const auto ix = static_cast<std::ptrdiff_t>(x + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                                            ix < static_cast<std::ptrdiff_t>(g.width);
                        dst[y * ow + x] =
                            inside ? img[(c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)]
                                   : 0.0;
                    }
                }
            }
}

void col2im_add(const double* col, const ConvGeometry& g, double* img)
{
    const auto oh = g.out_height, ow = g.out_width;
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t ki = 0; ki < g.kernel; ++ki)
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                const double* src = col + ((c * g.kernel + ki) * g.kernel + kj) * oh * ow;
                for (std::size_t y = 0; y < oh; ++y) {
                    const auto iy = static_cast<std::ptrdiff_t>(y + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    for (std::size_t x = 0; x < ow; ++x) {
                        const auto ix = static_cast<std::ptrdiff_t>(x + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
                        img[(c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)] +=
                            src[y * ow + x];
                    }
                }
            }
}

} // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, std::size_t pad)
{
    require_rank(x, 4, "conv2d");
    require_rank(weight, 4, "conv2d weight");
    const auto& xs = x.shape();
    const auto& ws = weight.shape();
    if (ws[1] != xs[1] || ws[2] != ws[3] || bias.value().size() != ws[0])
        throw ShapeError("conv2d: input " + shape_string(xs) + " incompatible with weight " + shape_string(ws));
    if (xs[2] + 2 * pad < ws[2] || xs[3] + 2 * pad < ws[3]) throw ShapeError("conv2d: kernel larger than padded input");

    ConvGeometry g{xs[1], xs[2], xs[3], ws[0], ws[2], pad, xs[2] + 2 * pad - ws[2] + 1, xs[3] + 2 * pad - ws[3] + 1};
    const auto batch = xs[0];
    const bool direct = g.kernel == 1 && g.pad == 0;
    const auto in_size = g.channels * g.height * g.width;
    const auto out_size = g.out_channels * g.col_cols();
    const auto col_size = g.col_rows() * g.col_cols();

    Tensor y({batch, g.out_channels, g.out_height, g.out_width});
    std::vector<double> cols;
    if (!direct) cols.resize(batch * col_size);

    ConstMapMat Wm(weight.value().data.data(), g.out_channels, g.col_rows());
    Eigen::Map<const Eigen::VectorXd> b(bias.value().data.data(), g.out_channels);
    for (std::size_t n = 0; n < batch; ++n) {
        const double* col = x.value().data.data() + n * in_size;
        if (!direct) {
            im2col(col, g, cols.data() + n * col_size);
            col = cols.data() + n * col_size;
        }
        MapMat Y(y.data.data() + n * out_size, g.out_channels, g.col_cols());
        Y.noalias() = Wm * ConstMapMat(col, g.col_rows(), g.col_cols());
        Y.colwise() += b;
    }
    if (!(weight.requires_grad() || bias.requires_grad() || x.requires_grad())) return Var::constant(std::move(y));
    if (!weight.requires_grad()) cols.clear();

    return Var::op(std::move(y), {x, weight, bias},
                   [g, batch, direct, in_size, out_size, col_size, cols = std::move(cols)](Var::Node& self) {
                       auto& px = parent(self, 0);
                       auto& pw = parent(self, 1);
                       auto& pb = parent(self, 2);
                       ConstMapMat Wm(pw.value.data.data(), g.out_channels, g.col_rows());
                       std::vector<double> dcol(direct ? 0 : col_size);
                       for (std::size_t n = 0; n < batch; ++n) {
                           ConstMapMat dY(self.grad.data.data() + n * out_size, g.out_channels, g.col_cols());
                           if (pw.requires_grad) {
                               const double* col = direct ? px.value.data.data() + n * in_size : cols.data() + n * col_size;
                               MapMat dW(pw.ensure_grad().data.data(), g.out_channels, g.col_rows());
                               dW.noalias() += dY * ConstMapMat(col, g.col_rows(), g.col_cols()).transpose();
                           }
                           if (pb.requires_grad) {
                               Eigen::Map<Eigen::VectorXd> db(pb.ensure_grad().data.data(), g.out_channels);
                               db += dY.rowwise().sum();
                           }
                           if (px.requires_grad) {
                               double* dx = px.ensure_grad().data.data() + n * in_size;
                               if (direct) {
                                   MapMat dX(dx, g.col_rows(), g.col_cols());
                                   dX.noalias() += Wm.transpose() * dY;
                               } else {
                                   MapMat dC(dcol.data(), g.col_rows(), g.col_cols());
                                   dC.noalias() = Wm.transpose() * dY;
                                   col2im_add(dcol.data(), g, dx);
                               }
                           }
                       }
                   });
}

Var upsample2x(const Var& x)
{
    require_rank(x, 4, "upsample2x");
    const auto& s = x.shape();
    const auto planes = s[0] * s[1], h = s[2], w = s[3];
    Tensor y({s[0], s[1], 2 * h, 2 * w});
    const auto& in = x.value().data;
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < 2 * h; ++i)
            for (std::size_t j = 0; j < 2 * w; ++j) y.data[(p * 2 * h + i) * 2 * w + j] = in[(p * h + i / 2) * w + j / 2];
    return Var::op(std::move(y), {x}, [planes, h, w](Var::Node& self) {
        auto& g = parent(self, 0).ensure_grad();
        for (std::size_t p = 0; p < planes; ++p)
            for (std::size_t i = 0; i < 2 * h; ++i)
                for (std::size_t j = 0; j < 2 * w; ++j)
                    g.data[(p * h + i / 2) * w + j / 2] += self.grad.data[(p * 2 * h + i) * 2 * w + j];
    });
}

Var avgpool2x(const Var& x)
{
    require_rank(x, 4, "avgpool2x");
    const auto& s = x.shape();
    if (s[2] % 2 || s[3] % 2) throw ShapeError("avgpool2x: odd spatial size " + shape_string(s));
    const auto planes = s[0] * s[1], oh = s[2] / 2, ow = s[3] / 2, w = s[3];
    Tensor y({s[0], s[1], oh, ow});
    const auto& in = x.value().data;
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                const double* r0 = in.data() + (p * 2 * oh + 2 * i) * w + 2 * j;
                const double* r1 = r0 + w;
                y.data[(p * oh + i) * ow + j] = 0.25 * ((r0[0] + r0[1]) + (r1[0] + r1[1]));
            }
    return Var::op(std::move(y), {x}, [planes, oh, ow, w](Var::Node& self) {
        auto& g = parent(self, 0).ensure_grad();
        for (std::size_t p = 0; p < planes; ++p)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    const double d = 0.25 * self.grad.data[(p * oh + i) * ow + j];
                    double* r0 = g.data.data() + (p * 2 * oh + 2 * i) * w + 2 * j;
                    r0[0] += d;
                    r0[1] += d;
                    r0[w] += d;
                    r0[w + 1] += d;
                }
    });
}

} // namespace ops
} // namespace fsgan
