#pragma once

#include "arranger/features.hpp"
#include "arranger/nn.hpp"

namespace arranger {

// Stage 3: conditional one-bar arrangement. A per-variant encoder turns the
// harmonic feature into a ladder of 16-channel maps; five private
// transposed-conv trunks (one per track) concatenate those maps at fixed
// depths; the conditioned critic sees all five tracks plus the condition.
// Channel arithmetic at every concatenation site is asserted when the graph
// is built (528 = 512+16, 272 = 256+16, 144 = 128+16, 80 = 64+16, 6 = 5+1).

inline constexpr int64_t kArrTracks = 5;
inline constexpr int64_t kArrNoise = 128;      // per-track z
inline constexpr int64_t kArrNoiseShared = 64; // shared half of z

template <class T>
struct ArrangementNoise {
    Tensor<T> shared;                  // (N, 64)
    std::vector<Tensor<T>> private_;   // per track (N, 64)

    static ArrangementNoise sample(Rng& rng, int64_t batch) {
        ArrangementNoise n;
        n.shared = Tensor<T>::randn({batch, kArrNoiseShared}, rng);
        for (int64_t t = 0; t < kArrTracks; ++t)
            n.private_.push_back(Tensor<T>::randn({batch, kArrNoiseShared}, rng));
        return n;
    }

    void bind(Bindings<T>& b) const {
        b["z.shared"] = shared;
        for (int64_t t = 0; t < kArrTracks; ++t)
            b["z.private." + std::to_string(t)] = private_[static_cast<size_t>(t)];
    }
};

namespace detail {

inline void check_concat_channels(const char* where, int64_t main, int64_t cond, int64_t got) {
    if (main + cond != got)
        throw ShapeError(std::string("concat site ") + where + ": " + std::to_string(main) + "+" +
                         std::to_string(cond) + " != " + std::to_string(got));
}

}  // namespace detail

/// Condition encoder. chord-roll and chroma-roll variants are conv ladders
/// producing six 16-channel maps (feature[0..5]); the chroma-beats variant
/// replicates its 4x12 input to 16 channels (no weights). The raw condition
/// is carried alongside for the chord-roll critic's input concat.
template <class T>
struct ConditionEncoder {
    FeatureKind variant;
    std::vector<nn::Conv2d<T>> convs;
    std::vector<nn::BatchNorm<T>> bns;
    std::vector<NodePtr<T>> params;

    ConditionEncoder() = default;
    ConditionEncoder(nn::ParamStore<T>& store, FeatureKind variant_, Rng& rng)
        : variant(variant_) {
        struct Spec {
            int64_t kh, kw, cin, cout, sh, sw;
        };
        std::vector<Spec> specs;
        if (variant == FeatureKind::ChordRoll) {
            specs = {{1, 12, 1, 16, 1, 12}, {1, 7, 16, 16, 1, 7}, {3, 1, 16, 16, 3, 1},
                     {2, 1, 16, 16, 2, 1},  {2, 1, 16, 16, 2, 1}, {2, 1, 16, 16, 2, 1}};
        } else if (variant == FeatureKind::ChromaRoll) {
            specs = {{3, 1, 1, 16, 3, 1},
                     {2, 1, 16, 16, 2, 1},
                     {2, 1, 16, 16, 2, 1},
                     {2, 1, 16, 16, 2, 1},
                     {2, 1, 16, 16, 2, 1}};
        }
        for (size_t i = 0; i < specs.size(); ++i) {
            const auto& s = specs[i];
            convs.emplace_back(store, "e.c" + std::to_string(i), s.kh, s.kw, s.cin, s.cout, s.sh,
                               s.sw, rng);
            bns.emplace_back(store, "e.bn" + std::to_string(i), s.cout);
        }
        for (size_t i = 0; i < convs.size(); ++i) {
            params.push_back(convs[i].w);
            params.push_back(convs[i].b);
            params.push_back(bns[i].gamma);
            params.push_back(bns[i].beta);
        }
    }

    Shape expected_input(int64_t batch) const {
        switch (variant) {
            case FeatureKind::ChordRoll: return {batch, kStepsPerBar, kPitches, 1};
            case FeatureKind::ChromaRoll: return {batch, kStepsPerBar, kChromaBins, 1};
            case FeatureKind::ChromaBeats: return {batch, kBeatsPerBar, kChromaBins, 1};
        }
        throw Error("ConditionEncoder: bad variant");
    }

    /// feature[0..k] for the configured variant.
    std::vector<NodePtr<T>> operator()(NodePtr<T> cond, nn::BuildCtx<T>& ctx) const {
        if (!shapes_equal(cond->shape, expected_input(cond->shape[0])))
            throw ShapeError(std::string("encoder(") + feature_name(variant) +
                             "): condition shape " + shape_str(cond->shape));
        std::vector<NodePtr<T>> maps;
        const std::string base = std::string("enc.") + feature_name(variant);
        if (variant == FeatureKind::ChordRoll) {
            NodePtr<T> x = cond;
            for (size_t i = 0; i < convs.size(); ++i) {
                x = lrelu(bns[i](convs[i](x), ctx), 0.2);
                maps.push_back(x);
                ctx.note(base + "[" + std::to_string(i) + "]", x->shape);
            }
        } else if (variant == FeatureKind::ChromaRoll) {
            // feature[0] is the raw input replicated to 16 channels; the conv
            // ladder runs on the single-channel input
            auto rep = nn::replicate_channels(cond, 16);
            maps.push_back(rep);
            ctx.note(base + "[0]", rep->shape);
            NodePtr<T> x = cond;
            for (size_t i = 0; i < convs.size(); ++i) {
                x = lrelu(bns[i](convs[i](x), ctx), 0.2);
                maps.push_back(x);
                ctx.note(base + "[" + std::to_string(i + 1) + "]", x->shape);
            }
        } else {
            auto rep = nn::replicate_channels(cond, 16);
            maps.push_back(rep);
            ctx.note(base + "[0]", rep->shape);
        }
        return maps;
    }
};

/// One conditional transposed-conv trunk: 128-d z to one 48x84 track-bar,
/// with encoder maps concatenated at the variant's fixed depths.
template <class T>
struct ConditionalBarDecoder {
    FeatureKind variant;
    std::vector<nn::TransConv2d<T>> convs;
    std::vector<nn::BatchNorm<T>> bns;
    std::vector<NodePtr<T>> params;

    ConditionalBarDecoder() = default;
    ConditionalBarDecoder(nn::ParamStore<T>& store, const std::string& prefix,
                          FeatureKind variant_, Rng& rng)
        : variant(variant_) {
        struct Spec {
            int64_t kh, kw, cin, cout, sh, sw;
        };
        std::vector<Spec> specs;
        if (variant == FeatureKind::ChordRoll) {
            specs = {{1, 1, kArrNoise, 1024, 1, 1}, {2, 1, 528, 512, 2, 1},
                     {2, 1, 528, 256, 2, 1},        {2, 1, 272, 256, 2, 1},
                     {3, 1, 272, 128, 3, 1},        {1, 7, 144, 64, 1, 1},
                     {1, 12, 80, 1, 1, 12}};
        } else if (variant == FeatureKind::ChromaRoll) {
            specs = {{1, 1, kArrNoise, 1024, 1, 1}, {1, 12, 1024, 512, 1, 12},
                     {2, 1, 528, 256, 2, 1},        {2, 1, 272, 256, 2, 1},
                     {2, 1, 272, 128, 2, 1},        {2, 1, 144, 128, 2, 1},
                     {3, 1, 144, 64, 3, 1},         {1, 7, 80, 1, 1, 7}};
        } else {
            specs = {{1, 1, kArrNoise, 1024, 1, 1}, {1, 12, 1024, 512, 1, 12},
                     {2, 1, 512, 256, 2, 1},        {2, 1, 256, 256, 2, 1},
                     {2, 1, 272, 128, 2, 1},        {2, 1, 128, 128, 2, 1},
                     {3, 1, 128, 64, 3, 1},         {1, 7, 64, 1, 1, 7}};
        }
        for (size_t i = 0; i < specs.size(); ++i) {
            const auto& s = specs[i];
            convs.emplace_back(store, prefix + ".t" + std::to_string(i), s.kh, s.kw, s.cin,
                               s.cout, s.sh, s.sw, rng);
            bns.emplace_back(store, prefix + ".bn" + std::to_string(i), s.cout);
        }
        for (size_t i = 0; i < convs.size(); ++i) {
            params.push_back(convs[i].w);
            params.push_back(convs[i].b);
            params.push_back(bns[i].gamma);
            params.push_back(bns[i].beta);
        }
    }

    NodePtr<T> operator()(NodePtr<T> z, const std::vector<NodePtr<T>>& cond,
                          nn::BuildCtx<T>& ctx, const std::string& log_prefix = "") const {
        auto note = [&](const std::string& label, const NodePtr<T>& n) {
            if (!log_prefix.empty()) ctx.note(log_prefix + "." + label, n->shape);
        };
        auto inject = [&](NodePtr<T> x, size_t map_index) {
            const auto& m = cond.at(map_index);
            detail::check_concat_channels(feature_name(variant), x->shape.back(),
                                          m->shape.back(),
                                          x->shape.back() + m->shape.back());
            auto cat = concat_channels<T>({x, m});
            note("concat" + std::to_string(map_index), cat);
            return cat;
        };

        const int64_t batch = z->shape[0];
        NodePtr<T> x = reshape(std::move(z), {batch, 1, 1, kArrNoise});
        auto step = [&](size_t i, NodePtr<T> in, bool last) {
            auto out = last ? tanh_(bns[i](convs[i](in), ctx))
                            : relu(bns[i](convs[i](in), ctx));
            note("t" + std::to_string(i), out);
            return out;
        };

        if (variant == FeatureKind::ChordRoll) {
            x = step(0, x, false);                       // (1,1,1024)
            x = reshape(x, {batch, 2, 1, 512});          // (2,1,512)
            note("reshape", x);
            x = step(1, inject(x, 5), false);            // (4,1,512)
            x = step(2, inject(x, 4), false);            // (8,1,256)
            x = step(3, inject(x, 3), false);            // (16,1,256)
            x = step(4, inject(x, 2), false);            // (48,1,128)
            x = step(5, inject(x, 1), false);            // (48,7,64)
            x = step(6, inject(x, 0), true);             // (48,84,1)
        } else if (variant == FeatureKind::ChromaRoll) {
            x = step(0, x, false);                       // (1,1,1024)
            x = step(1, x, false);                       // (1,12,512)
            x = step(2, inject(x, 5), false);            // (2,12,256)
            x = step(3, inject(x, 4), false);            // (4,12,256)
            x = step(4, inject(x, 3), false);            // (8,12,128)
            x = step(5, inject(x, 2), false);            // (16,12,128)
            x = step(6, inject(x, 1), false);            // (48,12,64)
            x = step(7, inject(x, 0), true);             // (48,84,1)
        } else {
            x = step(0, x, false);
            x = step(1, x, false);                       // (1,12,512)
            x = step(2, x, false);                       // (2,12,256)
            x = step(3, x, false);                       // (4,12,256)
            x = step(4, inject(x, 0), false);            // (8,12,128)
            x = step(5, x, false);                       // (16,12,128)
            x = step(6, x, false);                       // (48,12,64)
            x = step(7, x, true);                        // (48,84,1)
        }
        return x;
    }
};

/// Conditioned critic over one five-track bar (48,84,5). The chord-roll
/// variant concatenates the raw condition as a sixth input channel; the
/// chroma variants inject encoder maps between conv stages. No batchnorm.
template <class T>
struct ConditionedDiscriminator {
    FeatureKind variant;
    std::vector<nn::Conv2d<T>> convs;
    nn::Dense<T> dense1, dense2;
    std::vector<NodePtr<T>> params;

    ConditionedDiscriminator() = default;
    ConditionedDiscriminator(nn::ParamStore<T>& store, FeatureKind variant_, Rng& rng)
        : variant(variant_) {
        struct Spec {
            int64_t kh, kw, cin, cout, sh, sw;
        };
        std::vector<Spec> specs;
        int64_t flat = 0;
        if (variant == FeatureKind::ChordRoll) {
            specs = {{1, 12, 6, 128, 1, 12}, {1, 7, 128, 128, 1, 7}, {2, 1, 128, 128, 2, 1},
                     {2, 1, 128, 128, 2, 1}, {4, 1, 128, 256, 2, 1}, {3, 1, 256, 512, 2, 1}};
            flat = 2 * 1 * 512;
        } else if (variant == FeatureKind::ChromaRoll) {
            specs = {{1, 7, 5, 128, 1, 7},   {3, 1, 144, 128, 3, 1}, {2, 1, 144, 128, 2, 1},
                     {2, 1, 144, 128, 2, 1}, {2, 1, 144, 256, 2, 1}, {2, 1, 272, 512, 2, 1}};
            flat = 1 * 12 * 528;
        } else {
            specs = {{1, 7, 5, 128, 1, 7},   {3, 1, 128, 128, 3, 1}, {2, 1, 128, 128, 2, 1},
                     {2, 1, 128, 128, 2, 1}, {2, 1, 144, 256, 2, 1}, {2, 1, 256, 512, 2, 1}};
            flat = 1 * 12 * 512;
        }
        for (size_t i = 0; i < specs.size(); ++i) {
            const auto& s = specs[i];
            convs.emplace_back(store, "d.c" + std::to_string(i), s.kh, s.kw, s.cin, s.cout, s.sh,
                               s.sw, rng);
        }
        dense1 = nn::Dense<T>(store, "d.fc1", flat, 1024, rng);
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

    /// bar: (N,48,84,5); cond: encoder maps; raw_cond: (N,48,84,1) for the
    /// chord-roll input concat (ignored by the other variants).
    NodePtr<T> operator()(NodePtr<T> bar, const std::vector<NodePtr<T>>& cond,
                          NodePtr<T> raw_cond, nn::BuildCtx<T>& ctx) const {
        const Shape& s = bar->shape;
        if (s.size() != 4 || s[1] != kStepsPerBar || s[2] != kPitches || s[3] != kArrTracks)
            throw ShapeError("ConditionedDiscriminator: expected (N,48,84,5), got " +
                             shape_str(s));
        const int64_t batch = s[0];
        auto note = [&](const std::string& label, const NodePtr<T>& n) {
            ctx.note("d." + label, n->shape);
        };
        auto inject = [&](NodePtr<T> x, size_t map_index) {
            const auto& m = cond.at(map_index);
            detail::check_concat_channels("discriminator", x->shape.back(), m->shape.back(),
                                          x->shape.back() + m->shape.back());
            auto cat = concat_channels<T>({x, m});
            note("concat" + std::to_string(map_index), cat);
            return cat;
        };

        NodePtr<T> x = bar;
        if (variant == FeatureKind::ChordRoll) {
            if (!raw_cond || raw_cond->shape != Shape{batch, kStepsPerBar, kPitches, 1})
                throw ShapeError("ConditionedDiscriminator: chord-roll variant needs the raw "
                                 "(N,48,84,1) condition");
            detail::check_concat_channels("discriminator input", 5, 1, 6);
            x = concat_channels<T>({x, raw_cond});
            note("input_concat", x);
            for (size_t i = 0; i < convs.size(); ++i) {
                x = lrelu(convs[i](x), 0.2);
                note("c" + std::to_string(i), x);
            }
        } else if (variant == FeatureKind::ChromaRoll) {
            for (size_t i = 0; i < convs.size(); ++i) {
                x = lrelu(convs[i](x), 0.2);
                note("c" + std::to_string(i), x);
                x = inject(x, i);
            }
        } else {
            for (size_t i = 0; i < convs.size(); ++i) {
                if (i == 4) x = inject(x, 0);
                x = lrelu(convs[i](x), 0.2);
                note("c" + std::to_string(i), x);
            }
        }
        x = reshape(x, {batch, numel(x->shape) / batch});
        x = lrelu(dense1(x), 0.2);
        note("fc1", x);
        x = dense2(x);
        note("fc2", x);
        return x;  // (N,1)
    }
};

/// The complete conditional model: one encoder (owned by the generator
/// side), five private track trunks, one conditioned critic.
template <class T>
struct ArrangementModel {
    FeatureKind variant;
    ConditionEncoder<T> encoder;
    std::array<ConditionalBarDecoder<T>, kArrTracks> trunks;
    ConditionedDiscriminator<T> critic;
    std::vector<NodePtr<T>> g_params;  // trunks + encoder
    std::vector<NodePtr<T>> d_params;

    ArrangementModel() = default;
    ArrangementModel(nn::ParamStore<T>& g_store, nn::ParamStore<T>& d_store, FeatureKind v,
                     Rng& rng)
        : variant(v) {
        encoder = ConditionEncoder<T>(g_store, v, rng);
        for (int64_t t = 0; t < kArrTracks; ++t)
            trunks[static_cast<size_t>(t)] = ConditionalBarDecoder<T>(
                g_store, "g.track" + std::to_string(t), v, rng);
        critic = ConditionedDiscriminator<T>(d_store, v, rng);
        for (const auto& t : trunks)
            g_params.insert(g_params.end(), t.params.begin(), t.params.end());
        g_params.insert(g_params.end(), encoder.params.begin(), encoder.params.end());
        d_params = critic.params;
    }

    struct NoiseNodes {
        NodePtr<T> shared;
        std::array<NodePtr<T>, kArrTracks> private_;
    };

    static NoiseNodes noise_inputs(int64_t batch) {
        NoiseNodes n;
        n.shared = input<T>("z.shared", {batch, kArrNoiseShared});
        for (int64_t t = 0; t < kArrTracks; ++t)
            n.private_[static_cast<size_t>(t)] =
                input<T>("z.private." + std::to_string(t), {batch, kArrNoiseShared});
        return n;
    }

    /// One generated bar (N,48,84,5) from noise and encoder maps.
    NodePtr<T> build_generator(const NoiseNodes& noise, const std::vector<NodePtr<T>>& cond,
                               nn::BuildCtx<T>& ctx) const {
        std::vector<NodePtr<T>> tracks;
        for (int64_t t = 0; t < kArrTracks; ++t) {
            auto z = concat<T>({noise.shared, noise.private_[static_cast<size_t>(t)]}, 1);
            tracks.push_back(trunks[static_cast<size_t>(t)](
                z, cond, ctx, t == 0 ? std::string("g") : std::string("")));
        }
        auto bar = concat_channels<T>(std::move(tracks));
        ctx.note("g.bar", bar->shape);
        return bar;  // (N,48,84,5)
    }
};

}  // namespace arranger
