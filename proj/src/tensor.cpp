#include "aac/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace aac {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void require_2d(const Tensor& t, const char* op) {
    if (t.ndim() != 2) throw std::invalid_argument(std::string(op) + ": expected 2-D tensor, got " + shape_str(t.shape()));
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<double> data) {
    if (shape_size(shape) != data.size())
        throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) + " does not match " +
                                    std::to_string(data.size()) + " values");
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    auto n = shape_size(shape);
    return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
    Tensor t = from(std::move(shape), std::move(data));
    t.node_->requires_grad = true;
    return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::rows() const {
    const auto& s = shape();
    return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
    const auto& s = shape();
    return s.empty() ? 1 : s.back();
}

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() {
    if (!node_->leaf) throw std::logic_error("mutable_data: tensor is not a leaf");
    return node_->data;
}

double Tensor::item() const {
    if (size() != 1) throw std::logic_error("item: tensor is not a scalar " + shape_str(shape()));
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
    if (!node_->leaf) throw std::logic_error("set_requires_grad: only leaves can be toggled");
    node_->requires_grad = on;
}

bool Tensor::is_leaf() const { return node_->leaf; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::grad_buffer() {
    if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), node_->data); }

void Tensor::backward() const {
    if (!defined()) throw std::logic_error("backward: undefined tensor");
    if (size() != 1) throw std::logic_error("backward: loss must be a scalar, got " + shape_str(shape()));
    if (node_->consumed) throw std::logic_error("backward: tape already consumed; run a fresh forward pass");
    if (!node_->requires_grad) throw std::logic_error("backward: loss is not on a tape");
    Tape tape = Tape::record(*this);
    if (node_->grad.empty()) node_->grad.assign(1, 0.0);
    node_->grad[0] += 1.0;
    tape.run_backward();
}

Tensor make_op(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
               detail::BackwardFn backward) {
    Tensor out = Tensor::from(std::move(shape), std::move(data));
    if (!g_grad_enabled) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->leaf = false;
    out.node_->backward = std::move(backward);
    out.node_->parents.reserve(inputs.size());
    for (const auto& in : inputs)
        if (in.requires_grad()) out.node_->parents.push_back(in.node_);
    return out;
}

// ---- Tape -----------------------------------------------------------------

Tape Tape::record(const Tensor& root) {
    Tape tape;
    std::unordered_set<const detail::Node*> visited;
    // Iterative post-order DFS.
    std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
    stack.emplace_back(root.node_, 0);
    visited.insert(root.node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            auto parent = node->parents[next++];
            if (!parent->leaf && visited.insert(parent.get()).second) stack.emplace_back(parent, 0);
        } else {
            tape.nodes_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void Tape::run_backward() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        auto& node = **it;
        if (node.leaf) continue;
        if (node.consumed) throw std::logic_error("backward: tape already consumed");
        if (node.backward && !node.grad.empty()) node.backward(node.data, node.grad);
        node.consumed = true;
        node.backward = nullptr;
        node.parents.clear();
    }
}

// ---- helpers for primitives -----------------------------------------------

namespace {

// Gradient accumulator for an input captured by a backward closure.
std::span<double> grad_of(Tensor t) {
    return t.requires_grad() ? t.grad_buffer() : std::span<double>{};
}

}  // namespace

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw std::invalid_argument("matmul: dimension mismatch " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
    std::vector<double> c(m * n, 0.0);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = pa[i * k + p];
            const double* bp = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    return make_op({m, n}, std::move(c), {a, b}, [a, b, m, k, n](std::span<const double>, std::span<const double> g) {
        auto ga = grad_of(a);
        auto gb = grad_of(b);
        const double* pa = a.data().data();
        const double* pb = b.data().data();
        if (!ga.empty()) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double* bp = pb + p * n;
                    const double* gi = g.data() + i * n;
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
                    ga[i * k + p] += s;
                }
        }
        if (!gb.empty()) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = pa[i * k + p];
                    double* gbp = gb.data() + p * n;
                    const double* gi = g.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) gbp[j] += aip * gi[j];
                }
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    auto d = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = d[i * n + j];
    return make_op({n, m}, std::move(out), {a}, [a, m, n](std::span<const double>, std::span<const double> g) {
        auto ga = grad_of(a);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
    return make_op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double>, std::span<const double> g) {
        auto ga = grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
        auto gb = grad_of(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
    return make_op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double>, std::span<const double> g) {
        auto ga = grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
        auto gb = grad_of(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
    return make_op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double>, std::span<const double> g) {
        auto da = a.data(), db = b.data();
        auto ga = grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * db[i];
        auto gb = grad_of(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * da[i];
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    auto da = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * s;
    return make_op(a.shape(), std::move(out), {a}, [a, s](std::span<const double>, std::span<const double> g) {
        auto ga = grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * s;
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_2d(x, "add_bias");
    const std::size_t m = x.rows(), n = x.cols();
    if (bias.size() != n)
        throw std::invalid_argument("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
    std::vector<double> out(x.data().begin(), x.data().end());
    auto db = bias.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += db[j];
    return make_op(x.shape(), std::move(out), {x, bias}, [x, bias, m, n](std::span<const double>, std::span<const double> g) {
        auto gx = grad_of(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
        auto gb = grad_of(bias);
        if (!gb.empty())
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_op({1}, {s}, {a}, [a](std::span<const double>, std::span<const double> g) {
        auto ga = grad_of(a);
        for (auto& v : ga) v += g[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mean_rows(const Tensor& a) {
    require_2d(a, "mean_rows");
    const std::size_t m = a.rows(), n = a.cols();
    if (m == 0) throw std::invalid_argument("mean_rows: no rows");
    std::vector<double> out(n, 0.0);
    auto d = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += d[i * n + j];
    const double inv = 1.0 / static_cast<double>(m);
    for (auto& v : out) v *= inv;
    return make_op({1, n}, std::move(out), {a}, [a, m, n, inv](std::span<const double>, std::span<const double> g) {
        auto ga = grad_of(a);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j] * inv;
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size())
        throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_op(std::move(shape), std::move(out), {a}, [a](std::span<const double>, std::span<const double> g) {
        auto ga = grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    });
}

namespace {

// Iteration geometry for reductions along one axis of a row-major tensor.
struct AxisGeometry {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisGeometry axis_geometry(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) throw std::invalid_argument("axis out of range for " + shape_str(shape));
    AxisGeometry g;
    for (std::size_t i = 0; i < axis; ++i) g.outer *= shape[i];
    g.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) g.inner *= shape[i];
    return g;
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
    const auto geo = axis_geometry(x.shape(), axis);
    auto d = x.data();
    std::vector<double> out(d.size());
    for (std::size_t o = 0; o < geo.outer; ++o)
        for (std::size_t in = 0; in < geo.inner; ++in) {
            const std::size_t base = o * geo.extent * geo.inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t e = 0; e < geo.extent; ++e) mx = std::max(mx, d[base + e * geo.inner]);
            double s = 0.0;
            for (std::size_t e = 0; e < geo.extent; ++e) {
                const double v = std::exp(d[base + e * geo.inner] - mx);
                out[base + e * geo.inner] = v;
                s += v;
            }
            for (std::size_t e = 0; e < geo.extent; ++e) out[base + e * geo.inner] /= s;
        }
    return make_op(x.shape(), std::move(out), {x}, [x, geo](std::span<const double> y, std::span<const double> g) {
        auto gx = grad_of(x);
        for (std::size_t o = 0; o < geo.outer; ++o)
            for (std::size_t in = 0; in < geo.inner; ++in) {
                const std::size_t base = o * geo.extent * geo.inner + in;
                double dot = 0.0;
                for (std::size_t e = 0; e < geo.extent; ++e) dot += g[base + e * geo.inner] * y[base + e * geo.inner];
                for (std::size_t e = 0; e < geo.extent; ++e) {
                    const std::size_t i = base + e * geo.inner;
                    gx[i] += y[i] * (g[i] - dot);
                }
            }
    });
}

Tensor softmax(const Tensor& x) { return softmax(x, x.ndim() - 1); }

Tensor log_softmax(const Tensor& x) {
    const std::size_t n = x.cols();
    const std::size_t m = x.size() / n;
    auto d = x.data();
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = d.data() + i * n;
        double mx = *std::max_element(row, row + n);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
    }
    return make_op(x.shape(), std::move(out), {x}, [x, m, n](std::span<const double> y, std::span<const double> g) {
        auto gx = grad_of(x);
        for (std::size_t i = 0; i < m; ++i) {
            double gs = 0.0;
            for (std::size_t j = 0; j < n; ++j) gs += g[i * n + j];
            for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] - std::exp(y[i * n + j]) * gs;
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t n = x.cols();
    if (n < 2) throw std::invalid_argument("layer_norm: normalized axis needs length >= 2");
    if (gamma.size() != n || beta.size() != n) throw std::invalid_argument("layer_norm: affine parameter size mismatch");
    const std::size_t m = x.size() / n;
    auto d = x.data();
    auto gm = gamma.data(), bt = beta.data();
    std::vector<double> out(d.size());
    std::vector<double> xhat(d.size());
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = d.data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        const double denom = std::sqrt(var + eps);
        const double is = denom > 0.0 ? 1.0 / denom : 0.0;
        inv_std[i] = is;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (row[j] - mu) * is;
            xhat[i * n + j] = h;
            out[i * n + j] = h * gm[j] + bt[j];
        }
    }
    return make_op(x.shape(), std::move(out), {x, gamma, beta},
                   [x, gamma, beta, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                       std::span<const double>, std::span<const double> g) {
                       auto gx = grad_of(x);
                       auto gg = grad_of(gamma);
                       auto gb = grad_of(beta);
                       auto gm = gamma.data();
                       const double nn = static_cast<double>(n);
                       for (std::size_t i = 0; i < m; ++i) {
                           const double* gi = g.data() + i * n;
                           const double* hi = xhat.data() + i * n;
                           if (!gg.empty())
                               for (std::size_t j = 0; j < n; ++j) gg[j] += gi[j] * hi[j];
                           if (!gb.empty())
                               for (std::size_t j = 0; j < n; ++j) gb[j] += gi[j];
                           if (!gx.empty()) {
                               double s1 = 0.0, s2 = 0.0;
                               for (std::size_t j = 0; j < n; ++j) {
                                   const double dh = gi[j] * gm[j];
                                   s1 += dh;
                                   s2 += dh * hi[j];
                               }
                               for (std::size_t j = 0; j < n; ++j) {
                                   const double dh = gi[j] * gm[j];
                                   gx[i * n + j] += inv_std[i] * (dh - s1 / nn - hi[j] * s2 / nn);
                               }
                           }
                       }
                   });
}

Tensor gelu(const Tensor& x) {
    auto d = x.data();
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] * 0.5 * std::erfc(-d[i] / std::numbers::sqrt2);
    return make_op(x.shape(), std::move(out), {x}, [x](std::span<const double>, std::span<const double> g) {
        auto gx = grad_of(x);
        auto d = x.data();
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const double cdf = 0.5 * std::erfc(-d[i] / std::numbers::sqrt2);
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * d[i] * d[i]);
            gx[i] += g[i] * (cdf + d[i] * pdf);
        }
    });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
    require_2d(table, "embedding");
    const std::size_t v = table.rows(), dim = table.cols();
    std::vector<int> idx(ids.begin(), ids.end());
    std::vector<double> out(idx.size() * dim);
    auto t = table.data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= v)
            throw std::out_of_range("embedding: id " + std::to_string(idx[r]) + " outside table of " + std::to_string(v));
        std::copy_n(t.data() + static_cast<std::size_t>(idx[r]) * dim, dim, out.data() + r * dim);
    }
    const std::size_t n = idx.size();
    return make_op({n, dim}, std::move(out), {table},
                   [table, idx = std::move(idx), dim](std::span<const double>, std::span<const double> g) {
                       auto gt = grad_of(table);
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                           double* dst = gt.data() + static_cast<std::size_t>(idx[r]) * dim;
                           for (std::size_t j = 0; j < dim; ++j) dst[j] += g[r * dim + j];
                       }
                   });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
    if (!training || p == 0.0) return x;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - p);
    auto d = x.data();
    std::vector<double> mask(d.size());
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        mask[i] = uni(rng) < p ? 0.0 : keep_scale;
        out[i] = d[i] * mask[i];
    }
    return make_op(x.shape(), std::move(out), {x}, [x, mask = std::move(mask)](std::span<const double>, std::span<const double> g) {
        auto gx = grad_of(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * mask[i];
    });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
    require_2d(x, "slice_cols");
    const std::size_t m = x.rows(), n = x.cols();
    require(begin + count <= n, "slice_cols: range out of bounds");
    std::vector<double> out(m * count);
    auto d = x.data();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(d.data() + i * n + begin, count, out.data() + i * count);
    return make_op({m, count}, std::move(out), {x}, [x, m, n, begin, count](std::span<const double>, std::span<const double> g) {
        auto gx = grad_of(x);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < count; ++j) gx[i * n + begin + j] += g[i * count + j];
    });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
    require_2d(x, "slice_rows");
    const std::size_t m = x.rows(), n = x.cols();
    require(begin + count <= m, "slice_rows: range out of bounds");
    std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                            x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
    return make_op({count, n}, std::move(out), {x}, [x, n, begin](std::span<const double>, std::span<const double> g) {
        auto gx = grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[begin * n + i] += g[i];
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const std::size_t m = parts.front().rows();
    std::vector<std::size_t> offsets;
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_cols");
        require(p.rows() == m, "concat_cols: row count mismatch");
        offsets.push_back(total);
        total += p.cols();
    }
    std::vector<double> out(m * total);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::size_t c = parts[k].cols();
        auto d = parts[k].data();
        for (std::size_t i = 0; i < m; ++i) std::copy_n(d.data() + i * c, c, out.data() + i * total + offsets[k]);
    }
    return make_op({m, total}, std::move(out), parts,
                   [parts, offsets = std::move(offsets), m, total](std::span<const double>, std::span<const double> g) {
                       for (std::size_t k = 0; k < parts.size(); ++k) {
                           auto gp = grad_of(parts[k]);
                           if (gp.empty()) continue;
                           const std::size_t c = parts[k].cols();
                           for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + offsets[k] + j];
                       }
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    const std::size_t n = parts.front().cols();
    std::size_t m = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat_rows");
        require(p.cols() == n, "concat_rows: column count mismatch");
        m += p.rows();
    }
    std::vector<double> out;
    out.reserve(m * n);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return make_op({m, n}, std::move(out), parts, [parts](std::span<const double>, std::span<const double> g) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            auto gp = grad_of(p);
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
            off += p.size();
        }
    });
}

std::uint64_t hash_values(std::span<const double> values, std::uint64_t seed) {
    std::uint64_t h = seed;
    const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
    for (std::size_t i = 0; i < values.size_bytes(); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace aac
