#pragma once

// Minimal tape-free reverse-mode automatic differentiation over Tensor.
//
// Every op returns a Var whose node remembers its parents and a backward
// closure. Nodes only record a closure when at least one parent requires a
// gradient, so forward passes through frozen models build no graph.

#include "fsgan/tensor.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace fsgan {

class Var {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward;

        Tensor& ensure_grad();
    };

    Var() = default;

    static Var constant(Tensor value);
    static Var leaf(Tensor value, bool requires_grad);

    /// Builds an op result. `backward` is dropped unless some parent requires a gradient.
    static Var op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape; }
    double item() const;

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    /// Gradient accumulated by backward(); empty tensor if none was produced.
    const Tensor& grad() const { return node_->grad; }
    void zero_grad();

    /// Same value, cut from the graph.
    Var detach() const;
    /// Deep copy of a leaf (value, requires_grad); the graph is not copied.
    Var clone_leaf() const;

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    std::shared_ptr<Node> node_;
};

/// Accumulates d(root)/d(leaf) into every reachable leaf that requires a gradient.
/// `root` must hold a single element.
void backward(const Var& root);

namespace ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var sum(const Var& a);
Var mean(const Var& a);
Var softplus(const Var& a);
Var tanh(const Var& a);
Var leaky_relu(const Var& a, double slope);

/// While alive, folds the sign pattern of every leaky_relu input evaluated on this
/// thread into a fingerprint. Two evaluations with equal fingerprints took the same
/// linear piece everywhere.
class KinkProbe {
public:
    KinkProbe();
    ~KinkProbe();
    KinkProbe(const KinkProbe&) = delete;
    KinkProbe& operator=(const KinkProbe&) = delete;
    std::uint64_t fingerprint() const { return hash_; }
    void fold(std::span<const double> inputs);

private:
    std::uint64_t hash_ = 1469598103934665603ull;
    KinkProbe* previous_ = nullptr;
};
Var reshape(const Var& a, Shape shape);
/// Elementwise product with a constant tensor of the same shape.
Var mul_const(const Var& a, const Tensor& factor);
Var gather_rows(const Var& a, std::span<const std::size_t> rows);
/// Concatenation along the leading dimension.
Var concat_rows(const Var& a, const Var& b);

/// x: (B, in), weight: (out, in), bias: (out) -> (B, out)
Var linear(const Var& x, const Var& weight, const Var& bias);
/// Stride-1 convolution, square kernel, symmetric zero padding.
/// x: (B, C, H, W), weight: (O, C, k, k), bias: (O) -> (B, O, H', W')
Var conv2d(const Var& x, const Var& weight, const Var& bias, std::size_t pad);
/// Nearest-neighbour 2x upsampling of (B, C, H, W).
Var upsample2x(const Var& x);
/// 2x2 average pooling of (B, C, H, W), H and W even.
Var avgpool2x(const Var& x);

} // namespace ops
} // namespace fsgan
