#pragma once

#include "arranger/arrangement_model.hpp"
#include "arranger/checkpoint.hpp"
#include "arranger/container.hpp"
#include "arranger/leadsheet_model.hpp"
#include "arranger/metrics.hpp"

namespace arranger {

// Gradient-penalty Wasserstein training for both stages. Per iteration the
// critic takes n_critic updates (loss = mean D(fake) - mean D(real) +
// lambda * mean((||grad_xhat D(xhat)||_2 - 1)^2)), then the generator takes
// one (-mean D(fake)). All randomness flows from one seeded generator, so a
// fixed seed fixes the whole trajectory.

struct TrainConfig {
    int64_t batch = 16;
    int64_t n_critic = 5;
    double lambda_gp = 10.0;
    int64_t iterations = 2000;
    int64_t eval_interval = 200;
    int64_t eval_samples = 64;
    uint64_t seed = 0;
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    std::string diagnostic_checkpoint;  // written before aborting on non-finite loss

    void validate() const {
        if (batch < 2) throw DataError("train config: batch must be >= 2 (batchnorm)");
        if (n_critic < 1) throw DataError("train config: n_critic must be >= 1");
        if (lambda_gp < 0) throw DataError("train config: gradient-penalty weight must be >= 0");
        if (iterations < 1) throw DataError("train config: iterations must be >= 1");
        if (eval_interval < 1 || eval_samples < 1)
            throw DataError("train config: eval settings must be >= 1");
    }

    static TrainConfig from_json(const Json& j) {
        TrainConfig c;
        c.batch = j.value("batch", c.batch);
        c.n_critic = j.value("n_critic", c.n_critic);
        c.lambda_gp = j.value("lambda_gp", c.lambda_gp);
        c.iterations = j.value("iterations", c.iterations);
        c.eval_interval = j.value("eval_interval", c.eval_interval);
        c.eval_samples = j.value("eval_samples", c.eval_samples);
        c.seed = j.value("seed", c.seed);
        c.lr = j.value("lr", c.lr);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        return c;
    }

    Json to_json() const {
        Json j;
        j["batch"] = batch;
        j["n_critic"] = n_critic;
        j["lambda_gp"] = lambda_gp;
        j["iterations"] = iterations;
        j["eval_interval"] = eval_interval;
        j["eval_samples"] = eval_samples;
        j["seed"] = seed;
        j["lr"] = lr;
        j["beta1"] = beta1;
        j["beta2"] = beta2;
        return j;
    }
};

struct StepLosses {
    double critic = 0;  // last critic update of the iteration
    double generator = 0;
    double penalty = 0;  // last penalty term (already weighted)
};

namespace detail {

inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    uint64_t x = seed ^ (0x9E3779B97F4A7C15ull + salt * 0xBF58476D1CE4E5B9ull);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

/// Builds the weighted gradient penalty over an interpolation input node.
/// The inner gradient is itself a graph, so the penalty stays differentiable
/// with respect to the critic parameters.
template <class T>
NodePtr<T> gradient_penalty_term(const NodePtr<T>& critic_scores, const NodePtr<T>& interp,
                                 double lambda) {
    auto gx = grad(sum_all(critic_scores), {interp})[0];
    auto excess = affine(gradient_norm(gx), 1.0, -1.0);
    return affine(mean_all(square(excess)), lambda, 0.0);
}

template <class T>
Tensor<T> interpolate_per_sample(const Tensor<T>& real, const Tensor<T>& fake, Rng& rng) {
    Tensor<T> out(real.shape());
    const int64_t batch = real.shape()[0];
    const int64_t stride = real.numel() / batch;
    for (int64_t i = 0; i < batch; ++i) {
        const T e = static_cast<T>(rng.uniform());
        for (int64_t k = 0; k < stride; ++k) {
            const int64_t at = i * stride + k;
            out[at] = e * real[at] + (T(1) - e) * fake[at];
        }
    }
    return out;
}

template <class T>
std::map<std::string, Tensor<T>> eval_grads(Session<T>& session, const NodePtr<T>& loss,
                                            const std::vector<NodePtr<T>>& wrts) {
    auto gs = grad(loss, wrts);
    std::map<std::string, Tensor<T>> out;
    for (size_t i = 0; i < wrts.size(); ++i) out[wrts[i]->name] = session.eval(gs[i]);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage 1 trainer
// ---------------------------------------------------------------------------

template <class T = float>
class LeadsheetTrainer {
public:
    static constexpr const char* kModelId = "leadsheet-gan";

    LeadsheetTrainer(std::vector<Phrase> corpus, TrainConfig config)
        : config_(config), rng_(config.seed), corpus_(std::move(corpus)) {
        config_.validate();
        for (const auto& p : corpus_)
            if (p.kind() != PhraseKind::LeadSheet || p.bars() != kBarsPerPhrase)
                throw DataError("leadsheet trainer: corpus must hold 8-bar lead sheets");
        Rng init_rng(detail::mix_seed(config.seed, 1));
        generator_ = LeadSheetGenerator<T>(g_store_, init_rng);
        critic_ = PhraseDiscriminator<T>(d_store_, init_rng);
        auto hyper = typename Adam<T>::Hyper{static_cast<T>(config_.lr),
                                             static_cast<T>(config_.beta1),
                                             static_cast<T>(config_.beta2), T(1e-8)};
        g_opt_ = Adam<T>(hyper);
        d_opt_ = Adam<T>(hyper);
    }

    uint64_t iteration() const { return iteration_; }
    const TrainConfig& config() const { return config_; }
    nn::ParamStore<T>& generator_store() { return g_store_; }
    nn::ParamStore<T>& critic_store() { return d_store_; }
    const LeadSheetGenerator<T>& generator() const { return generator_; }
    const PhraseDiscriminator<T>& critic() const { return critic_; }
    const std::vector<Json>& history() const { return history_; }

    StepLosses train_step() {
        if (corpus_.empty()) throw DataError("leadsheet trainer: no corpus loaded");
        StepLosses losses;
        for (int64_t k = 0; k < config_.n_critic; ++k) {
            auto [critic_loss, penalty] = critic_update();
            losses.critic = critic_loss;
            losses.penalty = penalty;
        }
        losses.generator = generator_update();
        ++iteration_;
        if (!std::isfinite(losses.critic) || !std::isfinite(losses.generator)) {
            if (!config_.diagnostic_checkpoint.empty()) save(config_.diagnostic_checkpoint);
            throw NumericError("leadsheet trainer: non-finite loss at iteration " +
                               std::to_string(iteration_));
        }
        return losses;
    }

    /// Generates and binarizes n phrases with a dedicated evaluation stream
    /// (training randomness is not consumed).
    std::vector<Phrase> sample_phrases(int64_t n, uint64_t stream_salt = 0) {
        Rng eval_rng(detail::mix_seed(config_.seed, 0x5EED + stream_salt + iteration_));
        return sample_phrases_with(eval_rng, n);
    }

    std::vector<Phrase> sample_phrases_with(Rng& rng, int64_t n) {
        std::vector<Phrase> out;
        int64_t remaining = n;
        while (remaining > 0) {
            const int64_t batch = std::min<int64_t>(remaining, 16);
            auto noise = LeadSheetNoise<T>::sample(rng, batch);
            Bindings<T> bind;
            noise.bind(bind);
            nn::BuildCtx<T> ctx;
            ctx.mode = nn::Mode::Infer;
            auto g = generator_.build(LeadSheetGenerator<T>::noise_inputs(batch), ctx);
            Session<T> session(bind);
            const Tensor<T>& values = session.eval(g);
            for (int64_t i = 0; i < batch; ++i) {
                Tensor<T> one({1, kBarsPerPhrase, kStepsPerBar, kPitches, kLeadTracks});
                const int64_t stride = one.numel();
                for (int64_t j = 0; j < stride; ++j) one[j] = values[i * stride + j];
                out.push_back(binarize(one.reshaped({kBarsPerPhrase, kStepsPerBar, kPitches,
                                                     kLeadTracks}),
                                       PhraseKind::LeadSheet));
            }
            remaining -= batch;
        }
        return out;
    }

    /// Metric snapshot of n generated phrases vs the corpus; appended to the
    /// running history.
    Json evaluate_checkpoint(int64_t n) {
        auto phrases = sample_phrases(n);
        auto generated = evaluate_phrases(phrases, 0, 1, iteration_);
        Json j;
        j["iteration"] = iteration_;
        j["generated"] = generated.to_json();
        j["corpus"] = corpus_metrics().to_json();
        history_.push_back(j);
        return j;
    }

    const MetricsReport& corpus_metrics() {
        if (!corpus_report_) {
            if (corpus_.empty()) throw DataError("leadsheet trainer: no corpus loaded");
            corpus_report_ = evaluate_phrases(corpus_, 0, 1, 0);
        }
        return *corpus_report_;
    }

    void save(const std::string& path) {
        CheckpointMeta<T> meta;
        meta.model_id = kModelId;
        meta.variant = "";
        meta.iteration = iteration_;
        meta.rng_state = rng_.save_state();
        Json h = Json::array();
        for (const auto& e : history_) h.push_back(e);
        meta.history_json = h.dump();
        save_checkpoint(path, meta, sections());
    }

    void load(const std::string& path) {
        auto meta = load_checkpoint(path, sections(), kModelId, "");
        iteration_ = meta.iteration;
        rng_.load_state(meta.rng_state);
        history_.clear();
        if (!meta.history_json.empty()) {
            Json h = Json::parse(meta.history_json, nullptr, false);
            if (h.is_array())
                for (const auto& e : h) history_.push_back(e);
        }
    }

private:
    std::vector<CheckpointSection<T>> sections() {
        return {{"g", &g_store_, &g_opt_}, {"d", &d_store_, &d_opt_}};
    }

    Tensor<T> sample_real_batch() {
        Tensor<T> out({config_.batch, kBarsPerPhrase, kStepsPerBar, kPitches, kLeadTracks});
        const int64_t stride = out.numel() / config_.batch;
        for (int64_t i = 0; i < config_.batch; ++i) {
            const auto& p = corpus_[rng_.below(corpus_.size())];
            const auto& cells = p.cells();
            for (int64_t j = 0; j < stride; ++j)
                out[i * stride + j] = cells[static_cast<size_t>(j)] ? T(1) : T(-1);
        }
        return out;
    }

    Tensor<T> generate_fake_batch() {
        auto noise = LeadSheetNoise<T>::sample(rng_, config_.batch);
        Bindings<T> bind;
        noise.bind(bind);
        nn::BuildCtx<T> ctx;  // train-mode batch statistics, no buffer update
        auto g = generator_.build(LeadSheetGenerator<T>::noise_inputs(config_.batch), ctx);
        Session<T> session(std::move(bind));
        return session.eval(g);
    }

    std::pair<double, double> critic_update() {
        Tensor<T> fake = generate_fake_batch();
        Tensor<T> real = sample_real_batch();
        Tensor<T> interp = detail::interpolate_per_sample(real, fake, rng_);

        const Shape in_shape = real.shape();
        auto real_in = input<T>("real", in_shape);
        auto fake_in = input<T>("fake", in_shape);
        auto interp_in = input<T>("interp", in_shape);
        nn::BuildCtx<T> ctx;
        auto d_real = critic_(real_in, ctx);
        auto d_fake = critic_(fake_in, ctx);
        auto d_interp = critic_(interp_in, ctx);

        auto wasserstein = add(mean_all(d_fake), affine(mean_all(d_real), -1.0, 0.0));
        auto penalty = detail::gradient_penalty_term(d_interp, interp_in, config_.lambda_gp);
        auto loss = add(wasserstein, penalty);

        Session<T> session(
            {{"real", std::move(real)}, {"fake", std::move(fake)}, {"interp", std::move(interp)}});
        const double loss_v = static_cast<double>(session.eval(loss)[0]);
        const double pen_v = static_cast<double>(session.eval(penalty)[0]);
        auto grads = detail::eval_grads(session, loss, critic_.params);
        d_opt_.step_all(d_store_, grads);
        return {loss_v, pen_v};
    }

    double generator_update() {
        auto noise = LeadSheetNoise<T>::sample(rng_, config_.batch);
        Bindings<T> bind;
        noise.bind(bind);
        std::vector<nn::BnUpdate<T>> bn_updates;
        nn::BuildCtx<T> ctx;
        ctx.bn_updates = &bn_updates;
        auto fake = generator_.build(LeadSheetGenerator<T>::noise_inputs(config_.batch), ctx);
        nn::BuildCtx<T> dctx;
        auto d_fake = critic_(fake, dctx);
        auto loss = affine(mean_all(d_fake), -1.0, 0.0);

        Session<T> session(std::move(bind));
        const double loss_v = static_cast<double>(session.eval(loss)[0]);
        auto grads = detail::eval_grads(session, loss, generator_.params);
        g_opt_.step_all(g_store_, grads);
        nn::flush_bn_updates(session, bn_updates);
        return loss_v;
    }

    TrainConfig config_;
    Rng rng_;
    std::vector<Phrase> corpus_;
    nn::ParamStore<T> g_store_, d_store_;
    LeadSheetGenerator<T> generator_;
    PhraseDiscriminator<T> critic_;
    Adam<T> g_opt_, d_opt_;
    uint64_t iteration_ = 0;
    std::vector<Json> history_;
    std::optional<MetricsReport> corpus_report_;
};

// ---------------------------------------------------------------------------
// Stage 3 trainer
// ---------------------------------------------------------------------------

template <class T = float>
class ArrangementTrainer {
public:
    static constexpr const char* kModelId = "arrangement-gan";

    ArrangementTrainer(std::vector<Phrase> corpus, FeatureKind variant, TrainConfig config)
        : config_(config), variant_(variant), rng_(config.seed), corpus_(std::move(corpus)) {
        config_.validate();
        for (const auto& p : corpus_)
            if (p.kind() != PhraseKind::MultiTrack)
                throw DataError("arrangement trainer: corpus must hold multi-track phrases");
        Rng init_rng(detail::mix_seed(config.seed, 2));
        model_ = ArrangementModel<T>(g_store_, d_store_, variant, init_rng);
        auto hyper = typename Adam<T>::Hyper{static_cast<T>(config_.lr),
                                             static_cast<T>(config_.beta1),
                                             static_cast<T>(config_.beta2), T(1e-8)};
        g_opt_ = Adam<T>(hyper);
        d_opt_ = Adam<T>(hyper);
        build_bar_pool();
    }

    uint64_t iteration() const { return iteration_; }
    FeatureKind variant() const { return variant_; }
    const ArrangementModel<T>& model() const { return model_; }
    nn::ParamStore<T>& generator_store() { return g_store_; }
    nn::ParamStore<T>& critic_store() { return d_store_; }

    StepLosses train_step() {
        if (pool_.empty()) throw DataError("arrangement trainer: no corpus loaded");
        StepLosses losses;
        for (int64_t k = 0; k < config_.n_critic; ++k) {
            auto [critic_loss, penalty] = critic_update();
            losses.critic = critic_loss;
            losses.penalty = penalty;
        }
        losses.generator = generator_update();
        ++iteration_;
        if (!std::isfinite(losses.critic) || !std::isfinite(losses.generator)) {
            if (!config_.diagnostic_checkpoint.empty()) save(config_.diagnostic_checkpoint);
            throw NumericError("arrangement trainer: non-finite loss at iteration " +
                               std::to_string(iteration_));
        }
        return losses;
    }

    /// One generated bar batch for the given condition tensors (inference
    /// batchnorm), values in (-1, 1).
    Tensor<T> generate_bars(const Tensor<T>& conditions, Rng& rng) {
        const int64_t batch = conditions.shape()[0];
        auto noise = ArrangementNoise<T>::sample(rng, batch);
        Bindings<T> bind;
        noise.bind(bind);
        bind["cond"] = conditions;
        nn::BuildCtx<T> ctx;
        ctx.mode = nn::Mode::Infer;
        auto cond_in = input<T>("cond", conditions.shape());
        auto maps = model_.encoder(cond_in, ctx);
        auto g = model_.build_generator(ArrangementModel<T>::noise_inputs(batch), maps, ctx);
        Session<T> session(std::move(bind));
        return session.eval(g);
    }

    void save(const std::string& path) {
        CheckpointMeta<T> meta;
        meta.model_id = kModelId;
        meta.variant = feature_name(variant_);
        meta.iteration = iteration_;
        meta.rng_state = rng_.save_state();
        meta.history_json = "[]";
        save_checkpoint(path, meta, sections());
    }

    void load(const std::string& path) {
        auto meta = load_checkpoint(path, sections(), kModelId, feature_name(variant_));
        iteration_ = meta.iteration;
        rng_.load_state(meta.rng_state);
    }

private:
    std::vector<CheckpointSection<T>> sections() {
        return {{"g", &g_store_, &g_opt_}, {"d", &d_store_, &d_opt_}};
    }

    void build_bar_pool() {
        for (const auto& p : corpus_) {
            for (int64_t b = 0; b < p.bars(); ++b) {
                BarSample s;
                s.cells.resize(static_cast<size_t>(kStepsPerBar * kPitches * kArrTracks));
                for (int64_t st = 0; st < kStepsPerBar; ++st)
                    for (int64_t pi = 0; pi < kPitches; ++pi)
                        for (int64_t t = 0; t < kArrTracks; ++t)
                            s.cells[static_cast<size_t>((st * kPitches + pi) * kArrTracks + t)] =
                                p.at(b, st, pi, t);
                s.condition = extract_feature_tensor<T>(variant_, p, b);
                pool_.push_back(std::move(s));
            }
        }
    }

    std::pair<Tensor<T>, Tensor<T>> sample_real_batch() {
        const int64_t batch = config_.batch;
        Tensor<T> bars({batch, kStepsPerBar, kPitches, kArrTracks});
        Shape cshape = pool_[0].condition.shape();
        cshape[0] = batch;
        Tensor<T> conds(cshape);
        const int64_t bar_stride = bars.numel() / batch;
        const int64_t cond_stride = conds.numel() / batch;
        for (int64_t i = 0; i < batch; ++i) {
            const auto& s = pool_[rng_.below(pool_.size())];
            for (int64_t j = 0; j < bar_stride; ++j)
                bars[i * bar_stride + j] = s.cells[static_cast<size_t>(j)] ? T(1) : T(-1);
            for (int64_t j = 0; j < cond_stride; ++j)
                conds[i * cond_stride + j] = s.condition[j];
        }
        return {std::move(bars), std::move(conds)};
    }

    Tensor<T> generate_fake_batch(const Tensor<T>& conds) {
        auto noise = ArrangementNoise<T>::sample(rng_, config_.batch);
        Bindings<T> bind;
        noise.bind(bind);
        bind["cond"] = conds;
        nn::BuildCtx<T> ctx;  // train mode, no buffer update during critic steps
        auto cond_in = input<T>("cond", conds.shape());
        auto maps = model_.encoder(cond_in, ctx);
        auto g = model_.build_generator(ArrangementModel<T>::noise_inputs(config_.batch), maps,
                                        ctx);
        Session<T> session(std::move(bind));
        return session.eval(g);
    }

    std::pair<double, double> critic_update() {
        auto [real, conds] = sample_real_batch();
        Tensor<T> fake = generate_fake_batch(conds);
        Tensor<T> interp = detail::interpolate_per_sample(real, fake, rng_);

        auto cond_in = input<T>("cond", conds.shape());
        nn::BuildCtx<T> ctx;  // encoder batch statistics; buffers untouched
        auto maps = model_.encoder(cond_in, ctx);
        auto raw_cond = variant_ == FeatureKind::ChordRoll ? cond_in : nullptr;

        auto real_in = input<T>("real", real.shape());
        auto fake_in = input<T>("fake", fake.shape());
        auto interp_in = input<T>("interp", interp.shape());
        auto d_real = model_.critic(real_in, maps, raw_cond, ctx);
        auto d_fake = model_.critic(fake_in, maps, raw_cond, ctx);
        auto d_interp = model_.critic(interp_in, maps, raw_cond, ctx);

        auto wasserstein = add(mean_all(d_fake), affine(mean_all(d_real), -1.0, 0.0));
        auto penalty = detail::gradient_penalty_term(d_interp, interp_in, config_.lambda_gp);
        auto loss = add(wasserstein, penalty);

        Session<T> session({{"real", std::move(real)},
                            {"fake", std::move(fake)},
                            {"interp", std::move(interp)},
                            {"cond", std::move(conds)}});
        const double loss_v = static_cast<double>(session.eval(loss)[0]);
        const double pen_v = static_cast<double>(session.eval(penalty)[0]);
        auto grads = detail::eval_grads(session, loss, model_.d_params);
        d_opt_.step_all(d_store_, grads);
        return {loss_v, pen_v};
    }

    double generator_update() {
        auto [real, conds] = sample_real_batch();
        (void)real;  // the generator update only needs fresh conditions
        auto noise = ArrangementNoise<T>::sample(rng_, config_.batch);
        Bindings<T> bind;
        noise.bind(bind);
        bind["cond"] = std::move(conds);

        auto cond_in = input<T>("cond", bind["cond"].shape());
        std::vector<nn::BnUpdate<T>> bn_updates;
        nn::BuildCtx<T> ctx;
        ctx.bn_updates = &bn_updates;
        auto maps = model_.encoder(cond_in, ctx);
        auto fake = model_.build_generator(ArrangementModel<T>::noise_inputs(config_.batch), maps,
                                           ctx);
        nn::BuildCtx<T> dctx;
        auto raw_cond = variant_ == FeatureKind::ChordRoll ? cond_in : nullptr;
        auto d_fake = model_.critic(fake, maps, raw_cond, dctx);
        auto loss = affine(mean_all(d_fake), -1.0, 0.0);

        Session<T> session(std::move(bind));
        const double loss_v = static_cast<double>(session.eval(loss)[0]);
        auto grads = detail::eval_grads(session, loss, model_.g_params);
        g_opt_.step_all(g_store_, grads);
        nn::flush_bn_updates(session, bn_updates);
        return loss_v;
    }

    struct BarSample {
        std::vector<uint8_t> cells;
        Tensor<T> condition;
    };

    TrainConfig config_;
    FeatureKind variant_;
    Rng rng_;
    std::vector<Phrase> corpus_;
    std::vector<BarSample> pool_;
    nn::ParamStore<T> g_store_, d_store_;
    ArrangementModel<T> model_;
    Adam<T> g_opt_, d_opt_;
    uint64_t iteration_ = 0;
};

/// Arranges an eight-bar lead sheet into a five-track phrase: per bar,
/// extract the configured feature, encode, generate one bar, binarize, then
/// concatenate the eight bars.
template <class T>
Phrase arrange_phrase(ArrangementTrainer<T>& trainer, const Phrase& lead, Rng& rng) {
    if (lead.kind() != PhraseKind::LeadSheet || lead.bars() != kBarsPerPhrase)
        throw DataError("arrange_phrase: input must be an 8-bar lead sheet");
    Phrase out(PhraseKind::MultiTrack, kBarsPerPhrase);
    for (int64_t bar = 0; bar < kBarsPerPhrase; ++bar) {
        Tensor<T> cond = extract_feature_tensor<T>(trainer.variant(), lead, bar);
        Tensor<T> values = trainer.generate_bars(cond, rng);
        Phrase one = binarize(values.reshaped({1, kStepsPerBar, kPitches, kArrTracks}),
                              PhraseKind::MultiTrack);
        for (int64_t s = 0; s < kStepsPerBar; ++s)
            for (int64_t p = 0; p < kPitches; ++p)
                for (int64_t t = 0; t < kArrTracks; ++t)
                    if (one.at(0, s, p, t)) out.set(bar, s, p, t);
    }
    return out;
}

}  // namespace arranger
