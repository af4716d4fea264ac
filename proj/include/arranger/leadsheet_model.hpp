#pragma once

#include "arranger/nn.hpp"
#include "arranger/pianoroll.hpp"

namespace arranger {

// Stage 1: unconditional lead-sheet generation. Two temporal recurrent
// generators (one shared, one per track) drive per-track convolutional bar
// decoders; a phrase-level convolutional critic scores whole eight-bar,
// two-track phrases.

inline constexpr int64_t kLeadTracks = 2;
inline constexpr int64_t kNoisePart = 32;   // each of the four noise parts
inline constexpr int64_t kTemporalOut = 4;  // temporal generator output per bar
inline constexpr int64_t kTemporalHidden = 32;
inline constexpr int64_t kBarLatent = 2 * kNoisePart + 2 * kTemporalOut;  // 72

/// The four noise parts: shared/private x static/temporal, 32-d each, so a
/// bar decoder sees 128 dimensions of z across its four sources.
template <class T>
struct LeadSheetNoise {
    Tensor<T> shared_static;                 // (N, 32)
    std::vector<Tensor<T>> private_static;   // per track (N, 32)
    Tensor<T> shared_temporal;               // (N, 32)
    std::vector<Tensor<T>> private_temporal; // per track (N, 32)

    static LeadSheetNoise sample(Rng& rng, int64_t batch) {
        LeadSheetNoise n;
        n.shared_static = Tensor<T>::randn({batch, kNoisePart}, rng);
        for (int64_t t = 0; t < kLeadTracks; ++t)
            n.private_static.push_back(Tensor<T>::randn({batch, kNoisePart}, rng));
        n.shared_temporal = Tensor<T>::randn({batch, kNoisePart}, rng);
        for (int64_t t = 0; t < kLeadTracks; ++t)
            n.private_temporal.push_back(Tensor<T>::randn({batch, kNoisePart}, rng));
        return n;
    }

    void bind(Bindings<T>& b) const {
        b["z.shared_static"] = shared_static;
        b["z.shared_temporal"] = shared_temporal;
        for (int64_t t = 0; t < kLeadTracks; ++t) {
            b["z.private_static." + std::to_string(t)] = private_static[static_cast<size_t>(t)];
            b["z.private_temporal." + std::to_string(t)] =
                private_temporal[static_cast<size_t>(t)];
        }
    }
};

/// Two stacked tanh recurrent layers (hidden 32) with a tanh projection to
/// 4 outputs per bar; the same 32-d noise is fed at each of the 8 steps.
template <class T>
struct TemporalGenerator {
    nn::RecurrentCell<T> layer1, layer2;
    nn::Dense<T> proj;

    TemporalGenerator() = default;
    TemporalGenerator(nn::ParamStore<T>& store, const std::string& prefix, Rng& rng) {
        layer1 = nn::RecurrentCell<T>(store, prefix + ".rnn1", kNoisePart, kTemporalHidden, rng);
        layer2 = nn::RecurrentCell<T>(store, prefix + ".rnn2", kTemporalHidden, kTemporalHidden,
                                      rng);
        proj = nn::Dense<T>(store, prefix + ".proj", kTemporalHidden, kTemporalOut, rng);
    }

    std::vector<NodePtr<T>> forward(NodePtr<T> z, int64_t steps = kBarsPerPhrase) const {
        const int64_t batch = z->shape[0];
        NodePtr<T> h1 = layer1.initial_state(batch);
        NodePtr<T> h2 = layer2.initial_state(batch);
        std::vector<NodePtr<T>> out;
        out.reserve(static_cast<size_t>(steps));
        for (int64_t t = 0; t < steps; ++t) {
            h1 = layer1.step(z, h1);
            h2 = layer2.step(h1, h2);
            out.push_back(tanh_(proj(h2)));
        }
        return out;
    }

    void collect(std::vector<NodePtr<T>>& params) const {
        for (auto& p : {layer1.wx, layer1.wh, layer1.b, layer2.wx, layer2.wh, layer2.b, proj.w,
                        proj.b})
            params.push_back(p);
    }
};

/// Transposed-convolution decoder from a 72-d latent to one 48x84 track-bar
/// (tanh output). One instance per track; all bars of a track share it.
template <class T>
struct BarDecoder {
    std::array<nn::TransConv2d<T>, 7> convs;
    std::array<nn::BatchNorm<T>, 7> bns;

    BarDecoder() = default;
    BarDecoder(nn::ParamStore<T>& store, const std::string& prefix, Rng& rng) {
        struct Spec {
            int64_t kh, kw, cin, cout, sh, sw;
        };
        const std::array<Spec, 7> specs{{
            {1, 1, kBarLatent, 1024, 1, 1},
            {2, 1, 512, 512, 2, 1},
            {2, 1, 512, 256, 2, 1},
            {2, 1, 256, 256, 2, 1},
            {3, 1, 256, 128, 3, 1},
            {1, 7, 128, 64, 1, 1},
            {1, 12, 64, 1, 1, 12},
        }};
        for (size_t i = 0; i < specs.size(); ++i) {
            const auto& s = specs[i];
            convs[i] = nn::TransConv2d<T>(store, prefix + ".t" + std::to_string(i), s.kh, s.kw,
                                          s.cin, s.cout, s.sh, s.sw, rng);
            bns[i] = nn::BatchNorm<T>(store, prefix + ".bn" + std::to_string(i), s.cout);
        }
    }

    NodePtr<T> operator()(NodePtr<T> z72, nn::BuildCtx<T>& ctx,
                          const std::string& log_prefix = "") const {
        auto log = [&](int i, const NodePtr<T>& n) {
            if (!log_prefix.empty()) ctx.note(log_prefix + ".t" + std::to_string(i), n->shape);
        };
        const int64_t batch = z72->shape[0];
        NodePtr<T> x = reshape(std::move(z72), {batch, 1, 1, kBarLatent});
        x = relu(bns[0](convs[0](x), ctx));
        log(0, x);
        x = reshape(x, {batch, 2, 1, 512});
        for (int i = 1; i <= 5; ++i) {
            x = relu(bns[static_cast<size_t>(i)](convs[static_cast<size_t>(i)](x), ctx));
            log(i, x);
        }
        x = tanh_(bns[6](convs[6](x), ctx));
        log(6, x);
        return x;  // (N, 48, 84, 1)
    }

    void collect(std::vector<NodePtr<T>>& params) const {
        for (const auto& c : convs) {
            params.push_back(c.w);
            params.push_back(c.b);
        }
        for (const auto& b : bns) {
            params.push_back(b.gamma);
            params.push_back(b.beta);
        }
    }
};

template <class T>
struct LeadSheetGenerator {
    TemporalGenerator<T> shared_temporal;
    std::array<TemporalGenerator<T>, kLeadTracks> private_temporal;
    std::array<BarDecoder<T>, kLeadTracks> decoders;
    std::vector<NodePtr<T>> params;

    LeadSheetGenerator() = default;
    LeadSheetGenerator(nn::ParamStore<T>& store, Rng& rng) {
        shared_temporal = TemporalGenerator<T>(store, "g.temp.shared", rng);
        for (int64_t t = 0; t < kLeadTracks; ++t) {
            private_temporal[static_cast<size_t>(t)] =
                TemporalGenerator<T>(store, "g.temp.track" + std::to_string(t), rng);
            decoders[static_cast<size_t>(t)] =
                BarDecoder<T>(store, "g.bar.track" + std::to_string(t), rng);
        }
        shared_temporal.collect(params);
        for (const auto& tg : private_temporal) tg.collect(params);
        for (const auto& d : decoders) d.collect(params);
    }

    /// Noise input nodes matching LeadSheetNoise::bind.
    struct NoiseNodes {
        NodePtr<T> shared_static, shared_temporal;
        std::array<NodePtr<T>, kLeadTracks> private_static, private_temporal;
    };

    static NoiseNodes noise_inputs(int64_t batch) {
        NoiseNodes n;
        n.shared_static = input<T>("z.shared_static", {batch, kNoisePart});
        n.shared_temporal = input<T>("z.shared_temporal", {batch, kNoisePart});
        for (int64_t t = 0; t < kLeadTracks; ++t) {
            n.private_static[static_cast<size_t>(t)] =
                input<T>("z.private_static." + std::to_string(t), {batch, kNoisePart});
            n.private_temporal[static_cast<size_t>(t)] =
                input<T>("z.private_temporal." + std::to_string(t), {batch, kNoisePart});
        }
        return n;
    }

    /// Builds the full phrase from explicit per-bar temporal outputs
    /// (test hook: freezing these across bars must yield identical bars).
    /// The eight bars of a track share one decoder, so they fold into the
    /// batch dimension: one decoder application per track, batch statistics
    /// pooled over bars and samples.
    NodePtr<T> build_from_temporal(const NoiseNodes& noise,
                                   const std::vector<NodePtr<T>>& shared_out,
                                   const std::array<std::vector<NodePtr<T>>, kLeadTracks>& priv_out,
                                   nn::BuildCtx<T>& ctx) const {
        const int64_t batch = noise.shared_static->shape[0];
        std::array<NodePtr<T>, kLeadTracks> track_rolls;
        for (int64_t t = 0; t < kLeadTracks; ++t) {
            std::vector<NodePtr<T>> latents;  // bar-major: [bar0 batch; bar1 batch; ...]
            for (int64_t bar = 0; bar < kBarsPerPhrase; ++bar)
                latents.push_back(
                    concat<T>({noise.shared_static, noise.private_static[static_cast<size_t>(t)],
                               shared_out[static_cast<size_t>(bar)],
                               priv_out[static_cast<size_t>(t)][static_cast<size_t>(bar)]},
                              1));
            auto folded = concat<T>(std::move(latents), 0);  // (8N, 72)
            track_rolls[static_cast<size_t>(t)] = decoders[static_cast<size_t>(t)](
                folded, ctx, "g.bar.track" + std::to_string(t));  // (8N, 48, 84, 1)
        }
        std::vector<NodePtr<T>> bars;
        for (int64_t bar = 0; bar < kBarsPerPhrase; ++bar) {
            std::vector<NodePtr<T>> tracks;
            for (int64_t t = 0; t < kLeadTracks; ++t)
                tracks.push_back(
                    slice(track_rolls[static_cast<size_t>(t)], 0, bar * batch, batch));
            auto bar_node = concat_channels<T>(std::move(tracks));  // (N,48,84,2)
            bars.push_back(reshape(bar_node, {batch, 1, kStepsPerBar, kPitches, kLeadTracks}));
        }
        auto phrase = concat<T>(std::move(bars), 1);  // (N,8,48,84,2)
        ctx.note("g.phrase", phrase->shape);
        return phrase;
    }

    NodePtr<T> build(const NoiseNodes& noise, nn::BuildCtx<T>& ctx) const {
        auto shared_out = shared_temporal.forward(noise.shared_temporal);
        std::array<std::vector<NodePtr<T>>, kLeadTracks> priv_out;
        for (int64_t t = 0; t < kLeadTracks; ++t)
            priv_out[static_cast<size_t>(t)] = private_temporal[static_cast<size_t>(t)].forward(
                noise.private_temporal[static_cast<size_t>(t)]);
        return build_from_temporal(noise, shared_out, priv_out, ctx);
    }
};

/// Convolutional critic over whole (8,48,84,2) phrases: the 8 bars are
/// stacked in time to a 384-step roll, convolved down to a scalar score per
/// sample. No batch normalization (gradient-penalty training).
template <class T>
struct PhraseDiscriminator {
    std::array<nn::Conv2d<T>, 6> convs;
    nn::Dense<T> dense1, dense2;
    std::vector<NodePtr<T>> params;

    PhraseDiscriminator() = default;
    PhraseDiscriminator(nn::ParamStore<T>& store, Rng& rng) {
        struct Spec {
            int64_t kh, kw, cin, cout, sh, sw;
        };
        const std::array<Spec, 6> specs{{
            {1, 12, kLeadTracks, 128, 1, 12},
            {1, 7, 128, 128, 1, 7},
            {3, 1, 128, 128, 3, 1},
            {4, 1, 128, 256, 4, 1},
            {4, 1, 256, 512, 4, 1},
            {8, 1, 512, 512, 8, 1},
        }};
        for (size_t i = 0; i < specs.size(); ++i) {
            const auto& s = specs[i];
            convs[i] = nn::Conv2d<T>(store, "d.c" + std::to_string(i), s.kh, s.kw, s.cin, s.cout,
                                     s.sh, s.sw, rng);
        }
        dense1 = nn::Dense<T>(store, "d.fc1", 512, 1024, rng);
        dense2 = nn::Dense<T>(store, "d.fc2", 1024, 1, rng);
        for (const auto& c : convs) {
            params.push_back(c.w);
            params.push_back(c.b);
        }
        for (const auto& d : {dense1, dense2}) {
            params.push_back(d.w);
            params.push_back(d.b);
        }
    }

    /// phrase: (N, 8, 48, 84, 2) in [-1, 1]; returns per-sample scores (N, 1).
    NodePtr<T> operator()(NodePtr<T> phrase, nn::BuildCtx<T>& ctx) const {
        const Shape& s = phrase->shape;
        if (s.size() != 5 || s[1] != kBarsPerPhrase || s[2] != kStepsPerBar || s[3] != kPitches ||
            s[4] != kLeadTracks)
            throw ShapeError("PhraseDiscriminator: expected (N,8,48,84,2), got " + shape_str(s));
        const int64_t batch = s[0];
        NodePtr<T> x =
            reshape(std::move(phrase), {batch, kBarsPerPhrase * kStepsPerBar, kPitches, 2});
        for (size_t i = 0; i < convs.size(); ++i) {
            x = lrelu(convs[i](x), 0.2);
            ctx.note("d.c" + std::to_string(i), x->shape);
        }
        x = reshape(x, {batch, 512});
        x = lrelu(dense1(x), 0.2);
        ctx.note("d.fc1", x->shape);
        x = dense2(x);
        ctx.note("d.fc2", x->shape);
        return x;  // (N, 1)
    }
};

}  // namespace arranger
