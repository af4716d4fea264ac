#pragma once

#include <map>
#include <memory>

#include "arranger/graph.hpp"

namespace arranger::nn {

/// Named parameter collection. Entries are either trainable parameters or
/// persistent buffers (batchnorm running statistics). Iteration order is the
/// map order, which makes initialization and checkpoints deterministic.
template <class T>
class ParamStore {
public:
    struct Entry {
        std::shared_ptr<Tensor<T>> value;
        bool trainable = true;
    };

    std::shared_ptr<Tensor<T>> create(const std::string& name, Tensor<T> init,
                                      bool trainable = true) {
        if (entries_.count(name)) throw Error("ParamStore: duplicate entry '" + name + "'");
        auto p = std::make_shared<Tensor<T>>(std::move(init));
        entries_[name] = Entry{p, trainable};
        return p;
    }

    std::shared_ptr<Tensor<T>> find(const std::string& name) const {
        auto it = entries_.find(name);
        return it == entries_.end() ? nullptr : it->second.value;
    }

    const std::map<std::string, Entry>& entries() const { return entries_; }
    std::map<std::string, Entry>& entries() { return entries_; }

    size_t size() const { return entries_.size(); }

    int64_t total_elements() const {
        int64_t n = 0;
        for (const auto& [k, e] : entries_) n += e.value->numel();
        return n;
    }

private:
    std::map<std::string, Entry> entries_;
};

/// Collects (label, shape) pairs while a model graph is built; the model
/// tests assert these against the published layer tables.
struct ShapeLog {
    std::vector<std::pair<std::string, Shape>> rows;
    void note(const std::string& label, const Shape& s) { rows.emplace_back(label, s); }
    const Shape* find(const std::string& label) const {
        for (const auto& [l, s] : rows)
            if (l == label) return &s;
        return nullptr;
    }
};

enum class Mode { Train, Infer };

/// Deferred batchnorm statistics update: nodes are recorded during graph
/// construction and folded into the running buffers after the step ran.
template <class T>
struct BnUpdate {
    NodePtr<T> batch_mean;
    NodePtr<T> batch_var;
    std::shared_ptr<Tensor<T>> running_mean;
    std::shared_ptr<Tensor<T>> running_var;
    T momentum;
};

/// Per-step build context: mode, batchnorm hooks, optional shape log.
template <class T>
struct BuildCtx {
    Mode mode = Mode::Train;
    std::vector<BnUpdate<T>>* bn_updates = nullptr;
    ShapeLog* shapes = nullptr;

    void note(const std::string& label, const Shape& s) {
        if (shapes) shapes->note(label, s);
    }
};

/// Applies recorded batchnorm updates to the running buffers.
template <class T>
void flush_bn_updates(Session<T>& session, const std::vector<BnUpdate<T>>& updates) {
    for (const auto& u : updates) {
        const Tensor<T>& m = session.eval(u.batch_mean);
        const Tensor<T>& v = session.eval(u.batch_var);
        for (int64_t i = 0; i < m.numel(); ++i) {
            (*u.running_mean)[i] = u.momentum * (*u.running_mean)[i] + (T(1) - u.momentum) * m[i];
            (*u.running_var)[i] = u.momentum * (*u.running_var)[i] + (T(1) - u.momentum) * v[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <class T>
struct Dense {
    NodePtr<T> w, b;
    int64_t in = 0, out = 0;

    Dense() = default;
    Dense(ParamStore<T>& store, const std::string& prefix, int64_t in_dim, int64_t out_dim,
          Rng& rng, T stddev = T(0.02))
        : in(in_dim), out(out_dim) {
        w = parameter(prefix + ".w",
                      store.create(prefix + ".w", Tensor<T>::randn({in_dim, out_dim}, rng, stddev)));
        b = parameter(prefix + ".b", store.create(prefix + ".b", Tensor<T>::zeros({out_dim})));
    }

    NodePtr<T> operator()(NodePtr<T> x) const { return add(matmul(std::move(x), w), b); }
};

template <class T>
struct Conv2d {
    NodePtr<T> w, b;
    int64_t stride_h = 1, stride_w = 1;

    Conv2d() = default;
    Conv2d(ParamStore<T>& store, const std::string& prefix, int64_t kh, int64_t kw, int64_t cin,
           int64_t cout, int64_t sh, int64_t sw, Rng& rng, T stddev = T(0.02))
        : stride_h(sh), stride_w(sw) {
        w = parameter(prefix + ".w", store.create(prefix + ".w",
                                                  Tensor<T>::randn({kh, kw, cin, cout}, rng, stddev)));
        b = parameter(prefix + ".b", store.create(prefix + ".b", Tensor<T>::zeros({cout})));
    }

    NodePtr<T> operator()(NodePtr<T> x) const {
        return add(conv2d(std::move(x), w, stride_h, stride_w), b);
    }
};

template <class T>
struct TransConv2d {
    NodePtr<T> w, b;
    int64_t stride_h = 1, stride_w = 1;

    TransConv2d() = default;
    TransConv2d(ParamStore<T>& store, const std::string& prefix, int64_t kh, int64_t kw,
                int64_t cin, int64_t cout, int64_t sh, int64_t sw, Rng& rng, T stddev = T(0.02))
        : stride_h(sh), stride_w(sw) {
        w = parameter(prefix + ".w", store.create(prefix + ".w",
                                                  Tensor<T>::randn({kh, kw, cout, cin}, rng, stddev)));
        b = parameter(prefix + ".b", store.create(prefix + ".b", Tensor<T>::zeros({cout})));
    }

    NodePtr<T> operator()(NodePtr<T> x) const {
        return add(transconv2d(std::move(x), w, stride_h, stride_w), b);
    }
};

/// Batch normalization over all axes but the last (channel) one.
/// Train mode normalizes with batch statistics and records a running-average
/// update (momentum 0.9); inference mode normalizes with the running buffers.
template <class T>
struct BatchNorm {
    NodePtr<T> gamma, beta;
    std::shared_ptr<Tensor<T>> running_mean, running_var;
    T momentum = T(0.9);
    double eps = 1e-5;

    BatchNorm() = default;
    BatchNorm(ParamStore<T>& store, const std::string& prefix, int64_t channels) {
        gamma = parameter(prefix + ".gamma",
                          store.create(prefix + ".gamma", Tensor<T>::full({channels}, T(1))));
        beta = parameter(prefix + ".beta",
                         store.create(prefix + ".beta", Tensor<T>::zeros({channels})));
        running_mean =
            store.create(prefix + ".running_mean", Tensor<T>::zeros({channels}), false);
        running_var =
            store.create(prefix + ".running_var", Tensor<T>::full({channels}, T(1)), false);
    }

    NodePtr<T> operator()(NodePtr<T> x, BuildCtx<T>& ctx) const {
        std::vector<uint8_t> mask(x->shape.size(), 1);
        mask.back() = 0;
        NodePtr<T> mean_node, var_node;
        if (ctx.mode == Mode::Train) {
            mean_node = reduce_mean(x, mask);
            auto centered0 = sub(x, mean_node);
            var_node = reduce_mean(mul(centered0, centered0), mask);
            if (ctx.bn_updates)
                ctx.bn_updates->push_back(
                    BnUpdate<T>{mean_node, var_node, running_mean, running_var, momentum});
        } else {
            mean_node = constant(*running_mean);
            var_node = constant(*running_var);
        }
        auto centered = sub(x, mean_node);
        auto normalized = mul(centered, rsqrt(var_node, eps));
        return add(mul(normalized, gamma), beta);
    }
};

/// Plain tanh recurrent cell, h_t = tanh(x_t W_x + h_{t-1} W_h + b),
/// unrolled into graph primitives so it stays differentiable to any order.
template <class T>
struct RecurrentCell {
    NodePtr<T> wx, wh, b;
    int64_t hidden = 0;

    RecurrentCell() = default;
    RecurrentCell(ParamStore<T>& store, const std::string& prefix, int64_t in_dim,
                  int64_t hidden_dim, Rng& rng, T stddev = T(0.02))
        : hidden(hidden_dim) {
        wx = parameter(prefix + ".wx", store.create(prefix + ".wx",
                                                    Tensor<T>::randn({in_dim, hidden_dim}, rng, stddev)));
        wh = parameter(prefix + ".wh",
                       store.create(prefix + ".wh",
                                    Tensor<T>::randn({hidden_dim, hidden_dim}, rng, stddev)));
        b = parameter(prefix + ".b", store.create(prefix + ".b", Tensor<T>::zeros({hidden_dim})));
    }

    NodePtr<T> step(NodePtr<T> x, NodePtr<T> h_prev) const {
        return tanh_(add(add(matmul(std::move(x), wx), matmul(std::move(h_prev), wh)), b));
    }

    NodePtr<T> initial_state(int64_t batch) const {
        return constant(Tensor<T>::zeros({batch, hidden}));
    }
};

/// Channel replication: (N,H,W,1) -> (N,H,W,c) by broadcasting.
template <class T>
NodePtr<T> replicate_channels(NodePtr<T> x, int64_t c) {
    if (x->shape.back() != 1) throw ShapeError("replicate_channels: expected single channel");
    Shape target = x->shape;
    target.back() = c;
    std::vector<uint8_t> mask(target.size(), 0);
    mask.back() = 1;
    Shape squeezed(x->shape.begin(), x->shape.end() - 1);
    return broadcast(reshape(std::move(x), squeezed), std::move(target), std::move(mask));
}

}  // namespace arranger::nn
