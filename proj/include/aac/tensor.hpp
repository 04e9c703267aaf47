#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace aac {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

// Called with the producing node's output values and the gradient flowing into
// it. Closures capture their inputs and push gradient into them.
using BackwardFn = std::function<void(std::span<const double> out, std::span<const double> grad_out)>;

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool leaf = true;
    bool consumed = false;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;
};

}  // namespace detail

/// Dense row-major tensor of doubles that can participate in reverse-mode
/// differentiation. Copies are shallow: they alias the same storage and
/// gradient buffer.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from(Shape shape, std::vector<double> data);
    static Tensor scalar(double value);
    /// Leaf with requires_grad set.
    static Tensor parameter(Shape shape, std::vector<double> data);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t size() const { return data().size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const;
    /// Mutable view of the values. Only leaves may be written in place.
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t i) const { return data()[i]; }
    double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool is_leaf() const;

    bool has_grad() const;
    std::span<const double> grad() const;
    /// Gradient buffer, allocated (zero-filled) on first access.
    std::span<double> grad_buffer();
    void zero_grad();

    /// Runs reverse accumulation from this scalar. The recorded graph is
    /// consumed: a second call without a fresh forward pass throws.
    void backward() const;

    /// Detached copy of the values (new leaf, no grad).
    Tensor detach() const;

    const detail::Node* node() const noexcept { return node_.get(); }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend Tensor make_op(Shape, std::vector<double>, const std::vector<Tensor>&, detail::BackwardFn);
    friend class Tape;
};

/// Builds the result of a differentiable primitive. The node joins the graph
/// only when grad mode is on and some input requires grad.
Tensor make_op(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
               detail::BackwardFn backward);

/// Topologically ordered record of the primitives reachable from a root.
class Tape {
public:
    static Tape record(const Tensor& root);
    std::size_t size() const noexcept { return nodes_.size(); }
    void run_backward();

private:
    std::vector<std::shared_ptr<detail::Node>> nodes_;  // inputs before consumers
};

bool grad_enabled() noexcept;

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

using Rng = std::mt19937_64;

/// Derives an independent stream seed from (a, b): splitmix64 finalizer over
/// a combined word.
constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// x[m×n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean over rows: [m×n] -> [1×n].
Tensor mean_rows(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor softmax(const Tensor& x);  // last axis
Tensor log_softmax(const Tensor& x);  // last axis

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
Tensor gelu(const Tensor& x);
Tensor embedding(const Tensor& table, std::span<const int> ids);
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

/// 64-bit FNV-1a over the raw bytes of the values.
std::uint64_t hash_values(std::span<const double> values, std::uint64_t seed = 14695981039346656037ULL);

}  // namespace aac
