#pragma once

#include <malloc.h>

#include <array>
#include <atomic>
#include <chrono>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <unordered_map>
#include <unordered_set>

#include "arranger/blas.hpp"
#include "arranger/tensor.hpp"

namespace arranger {

// Differentiable graph primitives. Layer-level operations that the rest of
// the library exposes (relu, lrelu, batchnorm, recurrent cells, gradient
// norms) are composed from these, which keeps every backward pass -- and the
// backward pass of a backward pass -- inside the same op set.
enum class Op {
    Input,
    Parameter,
    Constant,
    MatMul,
    Add,
    Mul,
    Affine,     // a*x + b, scalar attributes
    Tanh,
    LRelu,      // x > 0 ? x : slope * x (slope 0 = relu)
    GtMask,     // x > 0 ? hi : lo (locally constant; no gradient)
    Rsqrt,      // 1/sqrt(x + eps)
    Conv2d,     // valid, NHWC, weight (kh, kw, cin, cout)
    TransConv2d,// valid, NHWC, weight (kh, kw, cout, cin)
    ConvWGrad,  // weight gradient of Conv2d, bilinear in its two inputs
    Reshape,
    Concat,
    Slice,
    Reduce,     // sum/mean over masked axes (reduced axes removed)
    Broadcast,  // inverse of Reduce: tile over masked axes, times scale
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Parameter: return "parameter";
        case Op::Constant: return "constant";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::Mul: return "mul";
        case Op::Affine: return "affine";
        case Op::Tanh: return "tanh";
        case Op::LRelu: return "lrelu";
        case Op::GtMask: return "gtmask";
        case Op::Rsqrt: return "rsqrt";
        case Op::Conv2d: return "conv2d";
        case Op::TransConv2d: return "transconv2d";
        case Op::ConvWGrad: return "convwgrad";
        case Op::Reshape: return "reshape";
        case Op::Concat: return "concat";
        case Op::Slice: return "slice";
        case Op::Reduce: return "reduce";
        case Op::Broadcast: return "broadcast";
    }
    return "?";
}

template <class T>
struct Node;

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

template <class T>
struct Node {
    Op op;
    Shape shape;
    std::vector<NodePtr<T>> inputs;
    uint64_t id;
    std::string name;  // inputs and parameters

    // Op attributes (only the fields relevant to `op` are meaningful).
    bool trans_a = false, trans_b = false;
    int64_t stride_h = 1, stride_w = 1;
    int64_t kernel_h = 0, kernel_w = 0;
    double a = 1.0, b = 0.0;             // Affine: a*x+b, GtMask: hi/lo, Rsqrt/others: eps in b
    std::vector<uint8_t> axes;           // Reduce/Broadcast mask, 1 = reduced axis
    bool mean = false;                   // Reduce: mean instead of sum
    double scale = 1.0;                  // Broadcast
    int64_t axis = 0, start = 0, len = 0;  // Concat/Slice

    Tensor<T> literal;                          // Constant
    std::shared_ptr<Tensor<T>> storage;         // Parameter

    std::string debug_name() const {
        std::string s = op_name(op);
        s += "#" + std::to_string(id);
        if (!name.empty()) s += "(" + name + ")";
        return s;
    }
};

namespace detail {
inline uint64_t next_node_id() {
    static std::atomic<uint64_t> counter{0};
    return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

template <class T>
NodePtr<T> make_node(Op op, Shape shape, std::vector<NodePtr<T>> inputs) {
    auto n = std::make_shared<Node<T>>();
    n->op = op;
    n->shape = std::move(shape);
    n->inputs = std::move(inputs);
    n->id = detail::next_node_id();
    return n;
}

// ---------------------------------------------------------------------------
// Graph builders (shape inference happens here, before any execution)
// ---------------------------------------------------------------------------

template <class T>
NodePtr<T> input(std::string name, Shape shape) {
    auto n = make_node<T>(Op::Input, std::move(shape), {});
    n->name = std::move(name);
    return n;
}

template <class T>
NodePtr<T> parameter(std::string name, std::shared_ptr<Tensor<T>> storage) {
    auto n = make_node<T>(Op::Parameter, storage->shape(), {});
    n->name = std::move(name);
    n->storage = std::move(storage);
    return n;
}

template <class T>
NodePtr<T> constant(Tensor<T> value) {
    auto n = make_node<T>(Op::Constant, value.shape(), {});
    n->literal = std::move(value);
    return n;
}

template <class T>
NodePtr<T> zeros_like_shape(const Shape& s) {
    return constant(Tensor<T>::zeros(s));
}

template <class T>
NodePtr<T> matmul(NodePtr<T> x, NodePtr<T> w, bool trans_a = false, bool trans_b = false) {
    if (x->shape.size() != 2 || w->shape.size() != 2)
        throw ShapeError("matmul: operands must be rank 2, got " + shape_str(x->shape) + " and " +
                         shape_str(w->shape));
    int64_t m = trans_a ? x->shape[1] : x->shape[0];
    int64_t ka = trans_a ? x->shape[0] : x->shape[1];
    int64_t kb = trans_b ? w->shape[1] : w->shape[0];
    int64_t nn = trans_b ? w->shape[0] : w->shape[1];
    if (ka != kb)
        throw ShapeError("matmul " + x->debug_name() + "x" + w->debug_name() +
                         ": inner dims disagree, " + shape_str(x->shape) + " vs " +
                         shape_str(w->shape));
    auto n = make_node<T>(Op::MatMul, Shape{m, nn}, {std::move(x), std::move(w)});
    n->trans_a = trans_a;
    n->trans_b = trans_b;
    return n;
}

namespace detail {
template <class T>
void check_elemwise_pair(const char* what, const NodePtr<T>& x, const NodePtr<T>& y) {
    if (!shapes_equal(x->shape, y->shape) && !is_suffix_shape(x->shape, y->shape))
        throw ShapeError(std::string(what) + ": shape " + shape_str(y->shape) +
                         " is neither equal to nor a suffix of " + shape_str(x->shape));
}
}  // namespace detail

/// Elementwise sum; `y` may be a trailing-suffix shape of `x` (bias add).
template <class T>
NodePtr<T> add(NodePtr<T> x, NodePtr<T> y) {
    detail::check_elemwise_pair("add", x, y);
    Shape s = x->shape;
    return make_node<T>(Op::Add, std::move(s), {std::move(x), std::move(y)});
}

/// Elementwise product; `y` may be a trailing-suffix shape of `x`.
template <class T>
NodePtr<T> mul(NodePtr<T> x, NodePtr<T> y) {
    detail::check_elemwise_pair("mul", x, y);
    Shape s = x->shape;
    return make_node<T>(Op::Mul, std::move(s), {std::move(x), std::move(y)});
}

template <class T>
NodePtr<T> affine(NodePtr<T> x, double a, double b) {
    Shape s = x->shape;
    auto n = make_node<T>(Op::Affine, std::move(s), {std::move(x)});
    n->a = a;
    n->b = b;
    return n;
}

template <class T>
NodePtr<T> tanh_(NodePtr<T> x) {
    Shape s = x->shape;
    return make_node<T>(Op::Tanh, std::move(s), {std::move(x)});
}

template <class T>
NodePtr<T> lrelu_op(NodePtr<T> x, double slope) {
    Shape s = x->shape;
    auto n = make_node<T>(Op::LRelu, std::move(s), {std::move(x)});
    n->a = slope;
    return n;
}

template <class T>
NodePtr<T> gt_mask(NodePtr<T> x, double hi, double lo) {
    Shape s = x->shape;
    auto n = make_node<T>(Op::GtMask, std::move(s), {std::move(x)});
    n->a = hi;
    n->b = lo;
    return n;
}

template <class T>
NodePtr<T> rsqrt(NodePtr<T> x, double eps = 0.0) {
    Shape s = x->shape;
    auto n = make_node<T>(Op::Rsqrt, std::move(s), {std::move(x)});
    n->b = eps;
    return n;
}

namespace detail {
inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t s) { return (in - k) / s + 1; }
inline int64_t tconv_out_dim(int64_t in, int64_t k, int64_t s) { return (in - 1) * s + k; }
}  // namespace detail

/// Valid (no padding) convolution, NHWC. Weight layout (kh, kw, cin, cout).
template <class T>
NodePtr<T> conv2d(NodePtr<T> x, NodePtr<T> w, int64_t stride_h, int64_t stride_w) {
    if (x->shape.size() != 4 || w->shape.size() != 4)
        throw ShapeError("conv2d: need rank-4 input and weight, got " + shape_str(x->shape) +
                         " and " + shape_str(w->shape));
    int64_t kh = w->shape[0], kw = w->shape[1];
    if (w->shape[2] != x->shape[3])
        throw ShapeError("conv2d " + x->debug_name() + ": input channels " +
                         std::to_string(x->shape[3]) + " != weight channels " +
                         std::to_string(w->shape[2]));
    if (kh > x->shape[1] || kw > x->shape[2])
        throw ShapeError("conv2d " + x->debug_name() + ": kernel " + shape_str(w->shape) +
                         " larger than input " + shape_str(x->shape));
    Shape out{x->shape[0], detail::conv_out_dim(x->shape[1], kh, stride_h),
              detail::conv_out_dim(x->shape[2], kw, stride_w), w->shape[3]};
    auto n = make_node<T>(Op::Conv2d, std::move(out), {std::move(x), std::move(w)});
    n->stride_h = stride_h;
    n->stride_w = stride_w;
    n->kernel_h = kh;
    n->kernel_w = kw;
    return n;
}

/// Valid transposed convolution, NHWC. Weight layout (kh, kw, cout, cin);
/// output spatial size is (in - 1) * stride + kernel.
template <class T>
NodePtr<T> transconv2d(NodePtr<T> x, NodePtr<T> w, int64_t stride_h, int64_t stride_w) {
    if (x->shape.size() != 4 || w->shape.size() != 4)
        throw ShapeError("transconv2d: need rank-4 input and weight, got " + shape_str(x->shape) +
                         " and " + shape_str(w->shape));
    int64_t kh = w->shape[0], kw = w->shape[1];
    if (w->shape[3] != x->shape[3])
        throw ShapeError("transconv2d " + x->debug_name() + ": input channels " +
                         std::to_string(x->shape[3]) + " != weight channels " +
                         std::to_string(w->shape[3]));
    Shape out{x->shape[0], detail::tconv_out_dim(x->shape[1], kh, stride_h),
              detail::tconv_out_dim(x->shape[2], kw, stride_w), w->shape[2]};
    auto n = make_node<T>(Op::TransConv2d, std::move(out), {std::move(x), std::move(w)});
    n->stride_h = stride_h;
    n->stride_w = stride_w;
    n->kernel_h = kh;
    n->kernel_w = kw;
    return n;
}

/// Weight gradient of conv2d: given conv input `x` (N,H,W,Ci) and output
/// cotangent `g` (N,Ho,Wo,Co), produces (kh,kw,Ci,Co). Bilinear, so it is a
/// first-class differentiable op (needed for double backprop).
template <class T>
NodePtr<T> conv_wgrad(NodePtr<T> x, NodePtr<T> g, int64_t kernel_h, int64_t kernel_w,
                      int64_t stride_h, int64_t stride_w) {
    if (x->shape.size() != 4 || g->shape.size() != 4)
        throw ShapeError("convwgrad: need rank-4 operands");
    if (x->shape[0] != g->shape[0])
        throw ShapeError("convwgrad: batch mismatch " + shape_str(x->shape) + " vs " +
                         shape_str(g->shape));
    if (detail::conv_out_dim(x->shape[1], kernel_h, stride_h) < g->shape[1] ||
        detail::conv_out_dim(x->shape[2], kernel_w, stride_w) < g->shape[2])
        throw ShapeError("convwgrad: cotangent spatial dims too large for input");
    Shape out{kernel_h, kernel_w, x->shape[3], g->shape[3]};
    auto n = make_node<T>(Op::ConvWGrad, std::move(out), {std::move(x), std::move(g)});
    n->stride_h = stride_h;
    n->stride_w = stride_w;
    n->kernel_h = kernel_h;
    n->kernel_w = kernel_w;
    return n;
}

template <class T>
NodePtr<T> reshape(NodePtr<T> x, Shape s) {
    if (arranger::numel(s) != arranger::numel(x->shape))
        throw ShapeError("reshape " + x->debug_name() + ": cannot view " + shape_str(x->shape) +
                         " as " + shape_str(s));
    return make_node<T>(Op::Reshape, std::move(s), {std::move(x)});
}

template <class T>
NodePtr<T> concat(std::vector<NodePtr<T>> xs, int64_t axis) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    Shape s = xs[0]->shape;
    if (axis < 0 || axis >= static_cast<int64_t>(s.size()))
        throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
    for (size_t i = 1; i < xs.size(); ++i) {
        const Shape& si = xs[i]->shape;
        if (si.size() != s.size())
            throw ShapeError("concat: rank mismatch " + shape_str(s) + " vs " + shape_str(si));
        for (size_t d = 0; d < s.size(); ++d) {
            if (static_cast<int64_t>(d) == axis) continue;
            if (si[d] != s[d])
                throw ShapeError("concat: dim " + std::to_string(d) + " mismatch " + shape_str(s) +
                                 " vs " + shape_str(si));
        }
        s[axis] += si[axis];
    }
    auto n = make_node<T>(Op::Concat, std::move(s), std::move(xs));
    n->axis = axis;
    return n;
}

/// Concatenate feature maps on the channel (last) axis.
template <class T>
NodePtr<T> concat_channels(std::vector<NodePtr<T>> xs) {
    if (xs.empty()) throw ShapeError("concat_channels: no inputs");
    return concat(std::move(xs), static_cast<int64_t>(xs[0]->shape.size()) - 1);
}

template <class T>
NodePtr<T> slice(NodePtr<T> x, int64_t axis, int64_t start, int64_t len) {
    const Shape& s = x->shape;
    if (axis < 0 || axis >= static_cast<int64_t>(s.size()))
        throw ShapeError("slice: axis out of range");
    if (start < 0 || len <= 0 || start + len > s[axis])
        throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of bounds for axis " +
                         std::to_string(axis) + " of " + shape_str(s));
    Shape out = s;
    out[axis] = len;
    auto n = make_node<T>(Op::Slice, std::move(out), {std::move(x)});
    n->axis = axis;
    n->start = start;
    n->len = len;
    return n;
}

/// Sum or mean over the axes where mask = 1; reduced axes are removed.
template <class T>
NodePtr<T> reduce_axes(NodePtr<T> x, std::vector<uint8_t> mask, bool mean) {
    if (mask.size() != x->shape.size())
        throw ShapeError("reduce: mask rank " + std::to_string(mask.size()) + " != tensor rank " +
                         std::to_string(x->shape.size()));
    Shape out;
    for (size_t d = 0; d < mask.size(); ++d)
        if (!mask[d]) out.push_back(x->shape[d]);
    auto n = make_node<T>(Op::Reduce, std::move(out), {std::move(x)});
    n->axes = std::move(mask);
    n->mean = mean;
    return n;
}

template <class T>
NodePtr<T> reduce_sum(NodePtr<T> x, std::vector<uint8_t> mask) {
    return reduce_axes(std::move(x), std::move(mask), false);
}

template <class T>
NodePtr<T> reduce_mean(NodePtr<T> x, std::vector<uint8_t> mask) {
    return reduce_axes(std::move(x), std::move(mask), true);
}

/// Tile `x` over the masked axes of `target` (inverse of reduce), times scale.
template <class T>
NodePtr<T> broadcast(NodePtr<T> x, Shape target, std::vector<uint8_t> mask, double scale = 1.0) {
    if (mask.size() != target.size()) throw ShapeError("broadcast: mask rank != target rank");
    Shape kept;
    for (size_t d = 0; d < mask.size(); ++d)
        if (!mask[d]) kept.push_back(target[d]);
    if (!shapes_equal(kept, x->shape))
        throw ShapeError("broadcast: " + shape_str(x->shape) + " does not match unmasked dims of " +
                         shape_str(target));
    auto n = make_node<T>(Op::Broadcast, std::move(target), {std::move(x)});
    n->axes = std::move(mask);
    n->scale = scale;
    return n;
}

// ---------------------------------------------------------------------------
// Composite helpers
// ---------------------------------------------------------------------------

template <class T>
NodePtr<T> relu(NodePtr<T> x) {
    return lrelu_op(std::move(x), 0.0);
}

template <class T>
NodePtr<T> lrelu(NodePtr<T> x, double slope = 0.2) {
    return lrelu_op(std::move(x), slope);
}

template <class T>
NodePtr<T> sub(NodePtr<T> x, NodePtr<T> y) {
    return add(std::move(x), affine(std::move(y), -1.0, 0.0));
}

template <class T>
NodePtr<T> square(NodePtr<T> x) {
    return mul(x, x);
}

/// sqrt(x + eps), composed so its derivative is exact under autodiff.
template <class T>
NodePtr<T> sqrt_(NodePtr<T> x, double eps = 0.0) {
    return mul(affine(x, 1.0, eps), rsqrt(x, eps));
}

template <class T>
NodePtr<T> sum_all(NodePtr<T> x) {
    return reduce_axes(x, std::vector<uint8_t>(x->shape.size(), 1), false);
}

template <class T>
NodePtr<T> mean_all(NodePtr<T> x) {
    return reduce_axes(x, std::vector<uint8_t>(x->shape.size(), 1), true);
}

/// Per-sample L2 norm over all but the first axis: (N, ...) -> (N).
template <class T>
NodePtr<T> gradient_norm(NodePtr<T> x, double eps = 1e-12) {
    std::vector<uint8_t> mask(x->shape.size(), 1);
    mask[0] = 0;
    auto sq = reduce_axes(mul(x, x), std::move(mask), false);
    return sqrt_(sq, eps);
}

/// Zero-pad at the end of `axis` (used where conv discards trailing rows).
template <class T>
NodePtr<T> pad_end(NodePtr<T> x, int64_t axis, int64_t count) {
    if (count == 0) return x;
    Shape zs = x->shape;
    zs[axis] = count;
    return concat<T>({x, zeros_like_shape<T>(zs)}, axis);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

template <class T>
using Bindings = std::map<std::string, Tensor<T>>;

namespace detail {

// Gathers conv patches: (N,H,W,C) -> (N*Ho*Wo, kh*kw*C), row-major patches.
template <class T>
void im2col(const Tensor<T>& x, int64_t kh, int64_t kw, int64_t sh, int64_t sw, int64_t ho,
            int64_t wo, std::vector<T>& cols) {
    const int64_t n = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
    (void)h;
    cols.resize(static_cast<size_t>(n * ho * wo * kh * kw * c));
    const T* src = x.data();
    T* dst = cols.data();
    for (int64_t in = 0; in < n; ++in) {
        for (int64_t oh = 0; oh < ho; ++oh) {
            for (int64_t ow = 0; ow < wo; ++ow) {
                for (int64_t u = 0; u < kh; ++u) {
                    const T* row = src + (((in * h) + oh * sh + u) * w + ow * sw) * c;
                    std::memcpy(dst, row, static_cast<size_t>(kw * c) * sizeof(T));
                    dst += kw * c;
                }
            }
        }
    }
}

// Scatter-add of patch columns back to an image: inverse layout of im2col
// over the *output* of a transposed convolution.
template <class T>
void col2im_add(const std::vector<T>& cols, int64_t n, int64_t hin, int64_t win, int64_t kh,
                int64_t kw, int64_t sh, int64_t sw, Tensor<T>& out) {
    const int64_t ho = out.shape()[1], wo = out.shape()[2], c = out.shape()[3];
    (void)ho;
    const T* src = cols.data();
    T* dst = out.data();
    for (int64_t in = 0; in < n; ++in) {
        for (int64_t ih = 0; ih < hin; ++ih) {
            for (int64_t iw = 0; iw < win; ++iw) {
                for (int64_t u = 0; u < kh; ++u) {
                    T* row = dst + (((in * ho) + ih * sh + u) * wo + iw * sw) * c;
                    const int64_t len = kw * c;
                    for (int64_t t = 0; t < len; ++t) row[t] += src[t];
                    src += len;
                }
            }
        }
    }
}

}  // namespace detail

#ifdef ARRANGER_PROFILE_OPS
inline std::array<double, 32>& profile_data() {
    static std::array<double, 32> data{};
    return data;
}
#endif

namespace detail {

// Large activation buffers churn every step; keep them on the heap free
// list instead of handing them back to the kernel each time.
inline void tune_allocator() {
#ifdef __GLIBC__
    static const bool done = [] {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 256 << 20);
        return true;
    }();
    (void)done;
#endif
}

}  // namespace detail

/// Evaluates graphs with memoization. One Session corresponds to one
/// forward(+backward) execution; rebind inputs by creating a new Session.
template <class T>
class Session {
public:
    Session() { detail::tune_allocator(); }
    explicit Session(Bindings<T> bindings) : bindings_(std::move(bindings)) {
        detail::tune_allocator();
    }

    Bindings<T>& bindings() { return bindings_; }

    bool has_value(const NodePtr<T>& n) const { return values_.count(n.get()) != 0; }

    const Tensor<T>& eval(const NodePtr<T>& target) {
        // Iterative post-order so deep double-backprop graphs cannot
        // overflow the call stack.
        std::vector<std::pair<const Node<T>*, size_t>> stack;
        if (!values_.count(target.get())) {
            stack.emplace_back(target.get(), 0);
            while (!stack.empty()) {
                auto& [node, next_child] = stack.back();
                if (values_.count(node)) {
                    stack.pop_back();
                    continue;
                }
                if (next_child < node->inputs.size()) {
                    const Node<T>* child = node->inputs[next_child].get();
                    ++next_child;
                    if (!values_.count(child)) stack.emplace_back(child, 0);
                    continue;
                }
                values_.emplace(node, compute(*node));
                stack.pop_back();
            }
        }
        return values_.at(target.get());
    }

private:
    const Tensor<T>& value_of(const Node<T>& n, size_t i) const {
        return values_.at(n.inputs[i].get());
    }

    Tensor<T> compute(const Node<T>& n) {
#ifdef ARRANGER_PROFILE_OPS
        struct Probe {
            const Node<T>& node;
            std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
            ~Probe() {
                profile_data()[static_cast<size_t>(node.op)] +=
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                        .count();
            }
        } probe{n};
#endif
        switch (n.op) {
            case Op::Input: {
                auto it = bindings_.find(n.name);
                if (it == bindings_.end())
                    throw Error("forward: unbound input '" + n.name + "'");
                if (!shapes_equal(it->second.shape(), n.shape))
                    throw ShapeError("forward: binding for '" + n.name + "' has shape " +
                                     shape_str(it->second.shape()) + ", node expects " +
                                     shape_str(n.shape));
                return it->second;
            }
            case Op::Parameter:
                return *n.storage;
            case Op::Constant:
                return n.literal;
            case Op::MatMul: return eval_matmul(n);
            case Op::Add: return eval_elemwise(n, /*is_add=*/true);
            case Op::Mul: return eval_elemwise(n, /*is_add=*/false);
            case Op::Affine: {
                Tensor<T> out = Tensor<T>::uninitialized(n.shape);
                const Tensor<T>& x = value_of(n, 0);
                const T a = static_cast<T>(n.a), b = static_cast<T>(n.b);
                for (int64_t i = 0; i < x.numel(); ++i) out[i] = a * x[i] + b;
                return out;
            }
            case Op::Tanh: {
                Tensor<T> out = Tensor<T>::uninitialized(n.shape);
                const Tensor<T>& x = value_of(n, 0);
                for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::tanh(x[i]);
                return out;
            }
            case Op::LRelu: {
                Tensor<T> out = Tensor<T>::uninitialized(n.shape);
                const Tensor<T>& x = value_of(n, 0);
                const T slope = static_cast<T>(n.a);
                for (int64_t i = 0; i < x.numel(); ++i)
                    out[i] = x[i] > T(0) ? x[i] : slope * x[i];
                return out;
            }
            case Op::GtMask: {
                Tensor<T> out = Tensor<T>::uninitialized(n.shape);
                const Tensor<T>& x = value_of(n, 0);
                const T hi = static_cast<T>(n.a), lo = static_cast<T>(n.b);
                for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] > T(0) ? hi : lo;
                return out;
            }
            case Op::Rsqrt: {
                Tensor<T> out = Tensor<T>::uninitialized(n.shape);
                const Tensor<T>& x = value_of(n, 0);
                const T eps = static_cast<T>(n.b);
                for (int64_t i = 0; i < x.numel(); ++i)
                    out[i] = T(1) / std::sqrt(x[i] + eps);
                return out;
            }
            case Op::Conv2d: return eval_conv(n);
            case Op::TransConv2d: return eval_tconv(n);
            case Op::ConvWGrad: return eval_wgrad(n);
            case Op::Reshape:
                return value_of(n, 0).reshaped(n.shape);
            case Op::Concat: return eval_concat(n);
            case Op::Slice: return eval_slice(n);
            case Op::Reduce: return eval_reduce(n);
            case Op::Broadcast: return eval_broadcast(n);
        }
        throw Error("forward: unknown op");
    }

    Tensor<T> eval_matmul(const Node<T>& n) {
        const Tensor<T>& a = value_of(n, 0);
        const Tensor<T>& b = value_of(n, 1);
        const int64_t m = n.shape[0], nn = n.shape[1];
        const int64_t k = n.trans_a ? a.shape()[0] : a.shape()[1];
        Tensor<T> out = Tensor<T>::uninitialized(n.shape);
        detail::gemm(n.trans_a, n.trans_b, m, nn, k, T(1), a.data(), a.shape()[1], b.data(),
                     b.shape()[1], T(0), out.data(), nn);
        return out;
    }

    Tensor<T> eval_elemwise(const Node<T>& n, bool is_add) {
        const Tensor<T>& x = value_of(n, 0);
        const Tensor<T>& y = value_of(n, 1);
        Tensor<T> out = Tensor<T>::uninitialized(n.shape);
        const int64_t total = x.numel(), yn = y.numel();
        const T* xp = x.data();
        const T* yp = y.data();
        T* op = out.data();
        if (yn == total) {
            if (is_add)
                for (int64_t i = 0; i < total; ++i) op[i] = xp[i] + yp[i];
            else
                for (int64_t i = 0; i < total; ++i) op[i] = xp[i] * yp[i];
        } else if (yn == 1) {
            const T v = yp[0];
            if (is_add)
                for (int64_t i = 0; i < total; ++i) op[i] = xp[i] + v;
            else
                for (int64_t i = 0; i < total; ++i) op[i] = xp[i] * v;
        } else {
            // y is a suffix shape: process in blocks of its length
            for (int64_t base = 0; base < total; base += yn) {
                if (is_add)
                    for (int64_t j = 0; j < yn; ++j) op[base + j] = xp[base + j] + yp[j];
                else
                    for (int64_t j = 0; j < yn; ++j) op[base + j] = xp[base + j] * yp[j];
            }
        }
        return out;
    }

    Tensor<T> eval_conv(const Node<T>& n) {
        const Tensor<T>& x = value_of(n, 0);
        const Tensor<T>& w = value_of(n, 1);
        const int64_t ho = n.shape[1], wo = n.shape[2], co = n.shape[3];
        const int64_t m = n.shape[0] * ho * wo;
        const int64_t k = n.kernel_h * n.kernel_w * x.shape()[3];
        detail::im2col(x, n.kernel_h, n.kernel_w, n.stride_h, n.stride_w, ho, wo, scratch_);
        Tensor<T> out = Tensor<T>::uninitialized(n.shape);
        detail::gemm(false, false, m, co, k, T(1), scratch_.data(), k, w.data(), co, T(0),
                     out.data(), co);
        return out;
    }

    Tensor<T> eval_tconv(const Node<T>& n) {
        const Tensor<T>& x = value_of(n, 0);
        const Tensor<T>& w = value_of(n, 1);
        const int64_t nb = x.shape()[0], hin = x.shape()[1], win = x.shape()[2],
                      ci = x.shape()[3];
        const int64_t co = n.shape[3];
        const int64_t m = nb * hin * win;
        const int64_t kk = n.kernel_h * n.kernel_w * co;
        // cols[m, (u,v,co)] = sum_ci x[m, ci] * w[(u,v,co), ci]
        scratch_.resize(static_cast<size_t>(m * kk));
        detail::gemm(false, true, m, kk, ci, T(1), x.data(), ci, w.data(), ci, T(0),
                     scratch_.data(), kk);
        Tensor<T> out(n.shape);
        detail::col2im_add(scratch_, nb, hin, win, n.kernel_h, n.kernel_w, n.stride_h, n.stride_w,
                           out);
        return out;
    }

    Tensor<T> eval_wgrad(const Node<T>& n) {
        const Tensor<T>& x = value_of(n, 0);
        const Tensor<T>& g = value_of(n, 1);
        const int64_t ho = g.shape()[1], wo = g.shape()[2], co = g.shape()[3];
        const int64_t m = g.shape()[0] * ho * wo;
        const int64_t k = n.kernel_h * n.kernel_w * x.shape()[3];
        detail::im2col(x, n.kernel_h, n.kernel_w, n.stride_h, n.stride_w, ho, wo, scratch_);
        Tensor<T> out = Tensor<T>::uninitialized(n.shape);
        detail::gemm(true, false, k, co, m, T(1), scratch_.data(), k, g.data(), co, T(0),
                     out.data(), co);
        return out;
    }

    Tensor<T> eval_concat(const Node<T>& n) {
        Tensor<T> out = Tensor<T>::uninitialized(n.shape);
        const int64_t axis = n.axis;
        int64_t outer = 1;
        for (int64_t d = 0; d < axis; ++d) outer *= n.shape[d];
        int64_t inner = 1;
        for (size_t d = axis + 1; d < n.shape.size(); ++d) inner *= n.shape[d];
        const int64_t out_block = n.shape[axis] * inner;
        int64_t offset = 0;
        for (size_t i = 0; i < n.inputs.size(); ++i) {
            const Tensor<T>& x = value_of(n, i);
            const int64_t blk = x.shape()[axis] * inner;
            for (int64_t o = 0; o < outer; ++o)
                std::memcpy(out.data() + o * out_block + offset, x.data() + o * blk,
                            static_cast<size_t>(blk) * sizeof(T));
            offset += blk;
        }
        return out;
    }

    Tensor<T> eval_slice(const Node<T>& n) {
        const Tensor<T>& x = value_of(n, 0);
        Tensor<T> out = Tensor<T>::uninitialized(n.shape);
        const Shape& xs = x.shape();
        int64_t outer = 1;
        for (int64_t d = 0; d < n.axis; ++d) outer *= xs[d];
        int64_t inner = 1;
        for (size_t d = n.axis + 1; d < xs.size(); ++d) inner *= xs[d];
        const int64_t in_block = xs[n.axis] * inner, out_block = n.len * inner;
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(out.data() + o * out_block, x.data() + o * in_block + n.start * inner,
                        static_cast<size_t>(out_block) * sizeof(T));
        return out;
    }

    Tensor<T> eval_reduce(const Node<T>& n) {
        const Tensor<T>& x = value_of(n, 0);
        const Shape& xs = x.shape();
        const size_t rank = xs.size();
        const int64_t total = x.numel();
        int64_t reduced_count = 1;
        for (size_t d = 0; d < rank; ++d)
            if (n.axes[d]) reduced_count *= xs[d];
        const T inv = n.mean ? T(1) / static_cast<T>(reduced_count) : T(1);

        // fast path: everything reduced to a scalar
        bool all_reduced = true;
        for (uint8_t m : n.axes) all_reduced = all_reduced && m;
        if (all_reduced) {
            double acc = 0;
            const T* xp = x.data();
            for (int64_t i = 0; i < total; ++i) acc += static_cast<double>(xp[i]);
            Tensor<T> out = Tensor<T>::uninitialized(n.shape.empty() ? Shape{} : n.shape);
            out[0] = static_cast<T>(acc) * inv;
            return out;
        }
        // fast path: kept axes form a contiguous suffix (batchnorm statistics)
        {
            size_t first_kept = rank;
            for (size_t d = 0; d < rank; ++d)
                if (!n.axes[d]) {
                    first_kept = d;
                    break;
                }
            bool suffix = true;
            for (size_t d = first_kept; d < rank; ++d) suffix = suffix && !n.axes[d];
            if (suffix && first_kept < rank) {
                int64_t inner = 1;
                for (size_t d = first_kept; d < rank; ++d) inner *= xs[d];
                std::vector<double> acc(static_cast<size_t>(inner), 0.0);
                const T* xp = x.data();
                for (int64_t base = 0; base < total; base += inner)
                    for (int64_t j = 0; j < inner; ++j)
                        acc[static_cast<size_t>(j)] += static_cast<double>(xp[base + j]);
                Tensor<T> out = Tensor<T>::uninitialized(n.shape);
                for (int64_t j = 0; j < inner; ++j)
                    out[j] = static_cast<T>(acc[static_cast<size_t>(j)]) * inv;
                return out;
            }
        }
        // fast path: kept axes form a contiguous prefix (per-sample norms)
        {
            size_t last_kept = 0;
            bool any = false;
            for (size_t d = 0; d < rank; ++d)
                if (!n.axes[d]) {
                    last_kept = d;
                    any = true;
                }
            bool prefix = any;
            for (size_t d = 0; d <= last_kept && prefix; ++d) prefix = !n.axes[d];
            if (prefix) {
                int64_t outer = 1;
                for (size_t d = 0; d <= last_kept; ++d) outer *= xs[d];
                const int64_t inner = total / outer;
                Tensor<T> out = Tensor<T>::uninitialized(n.shape);
                const T* xp = x.data();
                for (int64_t o = 0; o < outer; ++o) {
                    double acc = 0;
                    for (int64_t j = 0; j < inner; ++j)
                        acc += static_cast<double>(xp[o * inner + j]);
                    out[o] = static_cast<T>(acc) * inv;
                }
                return out;
            }
        }

        Tensor<T> out(n.shape.empty() ? Shape{} : n.shape);
        std::fill(out.vec().begin(), out.vec().end(), T(0));
        // Per-axis contribution of the input index to the output flat index.
        std::vector<int64_t> ostride(rank, 0);
        {
            int64_t acc = 1;
            for (size_t d = rank; d-- > 0;) {
                if (!n.axes[d]) {
                    ostride[d] = acc;
                    acc *= xs[d];
                }
            }
        }
        std::vector<int64_t> idx(rank, 0);
        int64_t oflat = 0;
        for (int64_t i = 0; i < total; ++i) {
            out[oflat] += x[i];
            for (size_t d = rank; d-- > 0;) {
                if (++idx[d] < xs[d]) {
                    oflat += ostride[d];
                    break;
                }
                idx[d] = 0;
                oflat -= ostride[d] * (xs[d] - 1);
            }
        }
        if (n.mean)
            for (auto& v : out.vec()) v *= inv;
        return out;
    }

    Tensor<T> eval_broadcast(const Node<T>& n) {
        const Tensor<T>& x = value_of(n, 0);
        Tensor<T> out = Tensor<T>::uninitialized(n.shape);
        const Shape& os = n.shape;
        const size_t rank = os.size();
        const int64_t total = out.numel();
        const T sc = static_cast<T>(n.scale);

        // fast path: scalar to anything
        if (x.numel() == 1) {
            const T v = x[0] * sc;
            std::fill(out.vec().begin(), out.vec().end(), v);
            return out;
        }
        // fast path: kept axes form a contiguous suffix (tile x over blocks)
        {
            size_t first_kept = rank;
            for (size_t d = 0; d < rank; ++d)
                if (!n.axes[d]) {
                    first_kept = d;
                    break;
                }
            bool suffix = first_kept < rank;
            for (size_t d = first_kept; d < rank; ++d) suffix = suffix && !n.axes[d];
            if (suffix) {
                const int64_t inner = x.numel();
                T* op = out.data();
                const T* xp = x.data();
                for (int64_t base = 0; base < total; base += inner)
                    for (int64_t j = 0; j < inner; ++j) op[base + j] = xp[j] * sc;
                return out;
            }
        }
        // fast path: kept axes form a contiguous prefix (repeat each entry)
        {
            size_t last_kept = 0;
            bool any = false;
            for (size_t d = 0; d < rank; ++d)
                if (!n.axes[d]) {
                    last_kept = d;
                    any = true;
                }
            bool prefix = any;
            for (size_t d = 0; d <= last_kept && prefix; ++d) prefix = !n.axes[d];
            if (prefix) {
                const int64_t outer = x.numel();
                const int64_t inner = total / outer;
                T* op = out.data();
                for (int64_t o = 0; o < outer; ++o) {
                    const T v = x[o] * sc;
                    for (int64_t j = 0; j < inner; ++j) op[o * inner + j] = v;
                }
                return out;
            }
        }
        std::vector<int64_t> xstride(rank, 0);
        {
            int64_t acc = 1;
            for (size_t d = rank; d-- > 0;) {
                if (!n.axes[d]) {
                    xstride[d] = acc;
                    acc *= os[d];
                }
            }
        }
        std::vector<int64_t> idx(rank, 0);
        int64_t xflat = 0;
        for (int64_t i = 0; i < total; ++i) {
            out[i] = x[xflat] * sc;
            for (size_t d = rank; d-- > 0;) {
                if (++idx[d] < os[d]) {
                    xflat += xstride[d];
                    break;
                }
                idx[d] = 0;
                xflat -= xstride[d] * (os[d] - 1);
            }
        }
        return out;
    }

    Bindings<T> bindings_;
    std::unordered_map<const Node<T>*, Tensor<T>> values_;
    std::vector<T> scratch_;
};

/// forward(graph, bindings): evaluate one output node against bindings.
template <class T>
Tensor<T> forward(const NodePtr<T>& out, const Bindings<T>& bindings) {
    Session<T> s(bindings);
    return s.eval(out);
}

// ---------------------------------------------------------------------------
// Reverse-mode differentiation
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void topo_from(const NodePtr<T>& root, std::vector<NodePtr<T>>& order,
               std::unordered_set<const Node<T>*>& seen) {
    std::vector<std::pair<NodePtr<T>, size_t>> stack{{root, 0}};
    if (seen.count(root.get())) return;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (seen.count(node.get())) {
            stack.pop_back();
            continue;
        }
        if (next < node->inputs.size()) {
            auto child = node->inputs[next];
            ++next;
            if (!seen.count(child.get())) stack.emplace_back(std::move(child), 0);
            continue;
        }
        seen.insert(node.get());
        order.push_back(node);
        stack.pop_back();
    }
}

// Cotangent of the suffix-broadcast operand of add/mul.
template <class T>
NodePtr<T> fold_to_suffix(NodePtr<T> g, const Shape& suffix) {
    const size_t lead = g->shape.size() - suffix.size();
    if (lead == 0) return g;
    std::vector<uint8_t> mask(g->shape.size(), 0);
    for (size_t d = 0; d < lead; ++d) mask[d] = 1;
    return reduce_axes(std::move(g), std::move(mask), false);
}

}  // namespace detail

/// Builds gradient nodes of a scalar `loss` with respect to `wrts`.
/// The returned nodes live in the same graph, built from the same primitive
/// op set, so they can be differentiated again (double backpropagation).
template <class T>
std::vector<NodePtr<T>> grad(const NodePtr<T>& loss, const std::vector<NodePtr<T>>& wrts) {
    if (arranger::numel(loss->shape) != 1)
        throw ShapeError("backward: loss " + loss->debug_name() + " is not scalar, shape " +
                         shape_str(loss->shape));

    std::vector<NodePtr<T>> order;
    std::unordered_set<const Node<T>*> seen;
    detail::topo_from(loss, order, seen);

    std::unordered_set<const Node<T>*> wrt_set;
    for (auto& w : wrts) wrt_set.insert(w.get());

    // A node is "active" if a wrt is reachable from it; only active paths
    // get cotangent nodes.
    std::unordered_map<const Node<T>*, bool> active;
    for (const auto& node : order) {  // children precede parents
        bool a = wrt_set.count(node.get()) != 0;
        for (const auto& in : node->inputs)
            if (!a && active[in.get()]) a = true;
        active[node.get()] = a;
    }

    std::unordered_map<const Node<T>*, NodePtr<T>> adj;
    auto accumulate = [&](const NodePtr<T>& node, NodePtr<T> contribution) {
        auto it = adj.find(node.get());
        if (it == adj.end())
            adj.emplace(node.get(), std::move(contribution));
        else
            it->second = add(it->second, std::move(contribution));
    };

    if (active[loss.get()])
        adj.emplace(loss.get(), constant(Tensor<T>::full(loss->shape, T(1))));

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const NodePtr<T>& node = *it;
        auto ait = adj.find(node.get());
        if (ait == adj.end() || !active[node.get()]) continue;
        NodePtr<T> g = ait->second;
        auto want = [&](size_t i) { return active[node->inputs[i].get()]; };

        switch (node->op) {
            case Op::Input:
            case Op::Parameter:
            case Op::Constant:
            case Op::GtMask:  // derivative is zero almost everywhere
                break;
            case Op::LRelu:
                if (want(0))
                    accumulate(node->inputs[0],
                               mul(g, gt_mask(node->inputs[0], 1.0, node->a)));
                break;
            case Op::MatMul: {
                const auto& a = node->inputs[0];
                const auto& b = node->inputs[1];
                if (want(0))
                    accumulate(a, node->trans_a ? matmul(b, g, node->trans_b, true)
                                                : matmul(g, b, false, !node->trans_b));
                if (want(1))
                    accumulate(b, node->trans_b ? matmul(g, a, true, node->trans_a)
                                                : matmul(a, g, !node->trans_a, false));
                break;
            }
            case Op::Add: {
                if (want(0)) accumulate(node->inputs[0], g);
                if (want(1))
                    accumulate(node->inputs[1], detail::fold_to_suffix(g, node->inputs[1]->shape));
                break;
            }
            case Op::Mul: {
                if (want(0)) accumulate(node->inputs[0], mul(g, node->inputs[1]));
                if (want(1))
                    accumulate(node->inputs[1],
                               detail::fold_to_suffix(mul(g, node->inputs[0]),
                                                      node->inputs[1]->shape));
                break;
            }
            case Op::Affine:
                if (want(0)) accumulate(node->inputs[0], affine(g, node->a, 0.0));
                break;
            case Op::Tanh: {
                // dx = g * (1 - y^2), with y this tanh node
                NodePtr<T> self = node;
                if (want(0))
                    accumulate(node->inputs[0], mul(g, affine(mul(self, self), -1.0, 1.0)));
                break;
            }
            case Op::Rsqrt: {
                // y = (x+eps)^(-1/2); dx = -0.5 * y^3 * g
                NodePtr<T> self = node;
                if (want(0))
                    accumulate(node->inputs[0],
                               mul(g, affine(mul(mul(self, self), self), -0.5, 0.0)));
                break;
            }
            case Op::Conv2d: {
                const auto& x = node->inputs[0];
                const auto& w = node->inputs[1];
                if (want(0)) {
                    NodePtr<T> gx = transconv2d(g, w, node->stride_h, node->stride_w);
                    // Trailing rows/cols the conv never touched get zero grad.
                    gx = pad_end(gx, 1, x->shape[1] - gx->shape[1]);
                    gx = pad_end(gx, 2, x->shape[2] - gx->shape[2]);
                    accumulate(x, gx);
                }
                if (want(1))
                    accumulate(w, conv_wgrad(x, g, node->kernel_h, node->kernel_w, node->stride_h,
                                             node->stride_w));
                break;
            }
            case Op::TransConv2d: {
                const auto& x = node->inputs[0];
                const auto& w = node->inputs[1];
                if (want(0)) accumulate(x, conv2d(g, w, node->stride_h, node->stride_w));
                if (want(1))
                    accumulate(w, conv_wgrad(g, x, node->kernel_h, node->kernel_w, node->stride_h,
                                             node->stride_w));
                break;
            }
            case Op::ConvWGrad: {
                const auto& x = node->inputs[0];
                const auto& gg = node->inputs[1];
                if (want(0)) {
                    NodePtr<T> gx = transconv2d(gg, g, node->stride_h, node->stride_w);
                    gx = pad_end(gx, 1, x->shape[1] - gx->shape[1]);
                    gx = pad_end(gx, 2, x->shape[2] - gx->shape[2]);
                    accumulate(x, gx);
                }
                if (want(1)) accumulate(gg, conv2d(x, g, node->stride_h, node->stride_w));
                break;
            }
            case Op::Reshape:
                if (want(0)) accumulate(node->inputs[0], reshape(g, node->inputs[0]->shape));
                break;
            case Op::Concat: {
                int64_t offset = 0;
                for (size_t i = 0; i < node->inputs.size(); ++i) {
                    const int64_t len = node->inputs[i]->shape[node->axis];
                    if (want(i)) accumulate(node->inputs[i], slice(g, node->axis, offset, len));
                    offset += len;
                }
                break;
            }
            case Op::Slice: {
                if (want(0)) {
                    const auto& x = node->inputs[0];
                    std::vector<NodePtr<T>> parts;
                    if (node->start > 0) {
                        Shape zs = x->shape;
                        zs[node->axis] = node->start;
                        parts.push_back(zeros_like_shape<T>(zs));
                    }
                    parts.push_back(g);
                    const int64_t tail = x->shape[node->axis] - node->start - node->len;
                    if (tail > 0) {
                        Shape zs = x->shape;
                        zs[node->axis] = tail;
                        parts.push_back(zeros_like_shape<T>(zs));
                    }
                    accumulate(x, parts.size() == 1 ? parts[0]
                                                    : concat(std::move(parts), node->axis));
                }
                break;
            }
            case Op::Reduce: {
                if (want(0)) {
                    const auto& x = node->inputs[0];
                    double scale = 1.0;
                    if (node->mean) {
                        int64_t cnt = 1;
                        for (size_t d = 0; d < node->axes.size(); ++d)
                            if (node->axes[d]) cnt *= x->shape[d];
                        scale = 1.0 / static_cast<double>(cnt);
                    }
                    accumulate(x, broadcast(g, x->shape, node->axes, scale));
                }
                break;
            }
            case Op::Broadcast: {
                if (want(0)) {
                    NodePtr<T> gx = reduce_axes(g, node->axes, false);
                    if (node->scale != 1.0) gx = affine(gx, node->scale, 0.0);
                    accumulate(node->inputs[0], gx);
                }
                break;
            }
        }
    }

    std::vector<NodePtr<T>> out;
    out.reserve(wrts.size());
    for (const auto& w : wrts) {
        auto it = adj.find(w.get());
        out.push_back(it != adj.end() ? it->second : zeros_like_shape<T>(w->shape));
    }
    return out;
}

/// backward(graph, loss): gradients for the given leaves, evaluated in the
/// session that already ran the forward pass.
template <class T>
std::map<std::string, Tensor<T>> backward(Session<T>& session, const NodePtr<T>& loss,
                                          const std::vector<NodePtr<T>>& wrts) {
    if (!session.has_value(loss))
        throw Error("backward before forward: loss " + loss->debug_name() + " not evaluated");
    auto gs = grad(loss, wrts);
    std::map<std::string, Tensor<T>> out;
    for (size_t i = 0; i < wrts.size(); ++i) out[wrts[i]->name] = session.eval(gs[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification
// ---------------------------------------------------------------------------

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
};

/// Compares analytic gradients against central finite differences for every
/// element of every listed leaf (Parameter or Input). Relative error uses
/// max(|analytic|, |numeric|, floor) as denominator.
template <class T>
GradCheckReport gradient_check(const NodePtr<T>& loss, const std::vector<NodePtr<T>>& leaves,
                               const Bindings<T>& bindings, double eps = 1e-4,
                               double denom_floor = 1e-6) {
    GradCheckReport report;
    auto grads = grad(loss, leaves);

    Bindings<T> work = bindings;
    auto eval_loss = [&]() -> double {
        Session<T> s(work);
        return static_cast<double>(s.eval(loss)[0]);
    };

    for (size_t li = 0; li < leaves.size(); ++li) {
        const NodePtr<T>& leaf = leaves[li];
        Tensor<T>* target = nullptr;
        if (leaf->op == Op::Parameter)
            target = leaf->storage.get();
        else if (leaf->op == Op::Input)
            target = &work.at(leaf->name);
        else
            throw Error("gradient_check: leaf " + leaf->debug_name() +
                        " is neither parameter nor input");

        Tensor<T> analytic = [&]() {
            Session<T> s(work);
            return s.eval(grads[li]);
        }();

        GradCheckEntry entry;
        entry.name = leaf->name.empty() ? leaf->debug_name() : leaf->name;
        for (int64_t i = 0; i < target->numel(); ++i) {
            const T saved = (*target)[i];
            (*target)[i] = saved + static_cast<T>(eps);
            const double up = eval_loss();
            (*target)[i] = saved - static_cast<T>(eps);
            const double down = eval_loss();
            (*target)[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = static_cast<double>(analytic[i]);
            const double abs_err = std::abs(a - numeric);
            const double rel =
                abs_err / std::max({std::abs(a), std::abs(numeric), denom_floor});
            entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace arranger
