#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "arranger/corpus.hpp"
#include "arranger/training.hpp"

using namespace arranger;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

TrainConfig tiny_config(uint64_t seed = 1) {
    TrainConfig c;
    c.batch = 2;
    c.n_critic = 2;
    c.iterations = 3;
    c.eval_interval = 1;
    c.eval_samples = 2;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("gradient penalty: zero critic pays the full unit penalty") {
    // scores = 0 * x: the input gradient is identically zero, so the
    // penalty is lambda * (0 - 1)^2 = lambda
    auto x = input<double>("x", {4, 6});
    auto w = parameter<double>("w", std::make_shared<Tensor<double>>(Tensor<double>::zeros({6, 1})));
    auto scores = matmul(x, w);
    auto pen = arranger::detail::gradient_penalty_term(scores, x, 10.0);
    Rng rng(1);
    auto v = forward(pen, {{"x", Tensor<double>::randn({4, 6}, rng)}});
    CHECK(v[0] == Catch::Approx(10.0).margin(1e-9));
}

TEST_CASE("gradient penalty: unit-gradient critic pays nothing") {
    // scores = w . x with ||w||_2 = 1: per-sample input gradient is w
    std::vector<double> wv{0.5, 0.5, 0.5, 0.5};  // L2 norm 1
    auto x = input<double>("x", {3, 4});
    auto w = parameter<double>("w",
                               std::make_shared<Tensor<double>>(Tensor<double>({4, 1}, wv)));
    auto scores = matmul(x, w);
    auto pen = arranger::detail::gradient_penalty_term(scores, x, 10.0);
    Rng rng(2);
    auto v = forward(pen, {{"x", Tensor<double>::randn({3, 4}, rng)}});
    CHECK(v[0] == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("gradient penalty derivative vs finite differences on a tiny critic") {
    Rng rng(3);
    nn::ParamStore<double> store;
    nn::Dense<double> l1(store, "l1", 5, 6, rng, 0.5);
    nn::Dense<double> l2(store, "l2", 6, 1, rng, 0.5);
    auto x = input<double>("x", {4, 5});
    auto scores = l2(tanh_(l1(x)));
    auto pen = arranger::detail::gradient_penalty_term(scores, x, 10.0);
    auto report = gradient_check(pen, {l1.w, l1.b, l2.w, l2.b},
                                 {{"x", Tensor<double>::randn({4, 5}, rng)}});
    CHECK(report.max_rel_err < 1e-3);
}

TEST_CASE("lead-sheet training: finite losses over a few iterations") {
    auto corpus = generate_leadsheet_corpus(5, 8);
    LeadsheetTrainer<float> trainer(corpus, tiny_config());
    for (int i = 0; i < 3; ++i) {
        auto losses = trainer.train_step();
        CHECK(std::isfinite(losses.critic));
        CHECK(std::isfinite(losses.generator));
        CHECK(losses.penalty >= 0.0);
    }
    CHECK(trainer.iteration() == 3);
}

TEST_CASE("lead-sheet training: zeroed critic with lambda 0 yields zero losses") {
    auto corpus = generate_leadsheet_corpus(5, 4);
    auto cfg = tiny_config();
    cfg.lambda_gp = 0.0;
    LeadsheetTrainer<float> trainer(corpus, cfg);
    for (auto& [name, e] : trainer.critic_store().entries())
        std::fill(e.value->vec().begin(), e.value->vec().end(), 0.f);
    auto losses = trainer.train_step();
    CHECK(losses.critic == 0.0);
    CHECK(losses.generator == 0.0);
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto corpus = generate_leadsheet_corpus(6, 6);
    LeadsheetTrainer<float> a(corpus, tiny_config(9));
    LeadsheetTrainer<float> b(corpus, tiny_config(9));
    for (int i = 0; i < 2; ++i) {
        auto la = a.train_step();
        auto lb = b.train_step();
        CHECK(la.critic == lb.critic);
        CHECK(la.generator == lb.generator);
    }
}

TEST_CASE("evaluate_checkpoint populates bounded metrics and grows history") {
    auto corpus = generate_leadsheet_corpus(7, 4);
    LeadsheetTrainer<float> trainer(corpus, tiny_config());
    auto j1 = trainer.evaluate_checkpoint(2);
    CHECK(trainer.history().size() == 1);
    auto j2 = trainer.evaluate_checkpoint(2);
    CHECK(trainer.history().size() == 2);
    (void)j1;
    for (const auto& [track, m] : j2["generated"]["per_track"].items()) {
        CHECK(m["eb"].get<double>() >= 0.0);
        CHECK(m["eb"].get<double>() <= 1.0);
        CHECK(m["upc"].get<double>() >= 0.0);
        CHECK(m["upc"].get<double>() <= 12.0);
        CHECK(m["qn"].get<double>() >= 0.0);
        CHECK(m["qn"].get<double>() <= 1.0);
    }
    CHECK(j2["corpus"]["per_track"]["melody"]["qn"].get<double>() == 1.0);
}

TEST_CASE("checkpoint resume reproduces the loss trajectory") {
    auto corpus = generate_leadsheet_corpus(8, 6);
    const auto path = tmp_path("arr_resume.ckpt");

    LeadsheetTrainer<float> full(corpus, tiny_config(11));
    LeadsheetTrainer<float> part(corpus, tiny_config(11));
    full.train_step();
    part.train_step();
    part.save(path);

    std::vector<double> want;
    for (int i = 0; i < 2; ++i) {
        auto l = full.train_step();
        want.push_back(l.critic);
        want.push_back(l.generator);
    }

    LeadsheetTrainer<float> resumed(corpus, tiny_config(11));
    resumed.load(path);
    CHECK(resumed.iteration() == 1);
    for (int i = 0; i < 2; ++i) {
        auto l = resumed.train_step();
        CHECK(std::abs(l.critic - want[static_cast<size_t>(2 * i)]) <= 1e-5);
        CHECK(std::abs(l.generator - want[static_cast<size_t>(2 * i + 1)]) <= 1e-5);
    }
}

TEST_CASE("checkpoints reject mismatched model ids") {
    auto corpus = generate_leadsheet_corpus(9, 4);
    const auto path = tmp_path("arr_mismatch.ckpt");
    LeadsheetTrainer<float> trainer(corpus, tiny_config());
    trainer.save(path);

    auto bars = generate_multitrack_corpus(10, 4);
    ArrangementTrainer<float> arr(bars, FeatureKind::ChordRoll, tiny_config());
    CHECK_THROWS_AS(arr.load(path), DataError);
}

TEST_CASE("arrangement training: finite losses and reproducible bars") {
    auto bars = generate_multitrack_corpus(12, 8);
    ArrangementTrainer<float> trainer(bars, FeatureKind::ChordRoll, tiny_config(13));
    auto losses = trainer.train_step();
    CHECK(std::isfinite(losses.critic));
    CHECK(std::isfinite(losses.generator));

    auto cond = extract_feature_tensor<float>(FeatureKind::ChordRoll, bars[0], 0);
    Rng r1(21), r2(21);
    auto a = trainer.generate_bars(cond, r1);
    auto b = trainer.generate_bars(cond, r2);
    CHECK(a.shape() == Shape{1, 48, 84, 5});
    CHECK(a.vec() == b.vec());
}

TEST_CASE("arrangement checkpoints carry and enforce the variant tag") {
    auto bars = generate_multitrack_corpus(14, 4);
    const auto path = tmp_path("arr_variant.ckpt");
    ArrangementTrainer<float> chord(bars, FeatureKind::ChordRoll, tiny_config());
    chord.save(path);
    ArrangementTrainer<float> chroma(bars, FeatureKind::ChromaRoll, tiny_config());
    CHECK_THROWS_AS(chroma.load(path), DataError);
    ArrangementTrainer<float> chord2(bars, FeatureKind::ChordRoll, tiny_config());
    CHECK_NOTHROW(chord2.load(path));
}

TEST_CASE("arrange_phrase: eight bars, five tracks, reproducible under a seed") {
    auto bars = generate_multitrack_corpus(15, 6);
    ArrangementTrainer<float> trainer(bars, FeatureKind::ChordRoll, tiny_config(17));
    auto lead = generate_leadsheet_corpus(16, 1)[0];

    Rng r1(5), r2(5);
    auto a = arrange_phrase(trainer, lead, r1);
    auto b = arrange_phrase(trainer, lead, r2);
    CHECK(a.kind() == PhraseKind::MultiTrack);
    CHECK(a.bars() == 8);
    CHECK(a == b);
    CHECK_THROWS_AS(arrange_phrase(trainer, bars[0], r1), DataError);
}

TEST_CASE("train config validation and json round trip") {
    TrainConfig c;
    c.batch = 1;
    CHECK_THROWS_AS(c.validate(), DataError);
    c = TrainConfig{};
    c.lambda_gp = -1;
    CHECK_THROWS_AS(c.validate(), DataError);

    TrainConfig d;
    d.batch = 32;
    d.seed = 99;
    auto j = d.to_json();
    auto back = TrainConfig::from_json(j);
    CHECK(back.batch == 32);
    CHECK(back.seed == 99);
    CHECK(back.lr == d.lr);
}

TEST_CASE("adam: zero gradients leave parameters and moments unchanged") {
    Adam<double> opt;
    Tensor<double> p({3}, {1.0, -2.0, 3.0});
    const auto before = p;
    opt.step("p", p, Tensor<double>::zeros({3}));
    CHECK(p == before);
    const auto& slot = opt.slots().at("p");
    CHECK(slot.step == 1);
    for (int64_t i = 0; i < 3; ++i) {
        CHECK(slot.m[i] == 0.0);
        CHECK(slot.v[i] == 0.0);
    }
}

TEST_CASE("adam: constant gradient moves parameters against its sign") {
    Adam<double> opt;
    Tensor<double> p({2}, {0.0, 0.0});
    Tensor<double> g({2}, {1.0, -0.5});
    for (int i = 0; i < 50; ++i) opt.step("p", p, g);
    CHECK(p[0] < 0.0);
    CHECK(p[1] > 0.0);
}

TEST_CASE("adam: first bias-corrected step has magnitude ~ lr") {
    Adam<double>::Hyper h;
    h.lr = 0.001;
    Adam<double> opt(h);
    Tensor<double> p({1}, {0.25});
    opt.step("p", p, Tensor<double>({1}, {1.0}));
    // m_hat = 1, v_hat = 1 after one step, so the update is lr/(1+eps)
    CHECK(0.25 - p[0] == Catch::Approx(0.001).epsilon(1e-6));
}

TEST_CASE("adam rejects mismatched gradient shapes") {
    Adam<float> opt;
    Tensor<float> p({2, 2});
    CHECK_THROWS_AS(opt.step("p", p, Tensor<float>::zeros({4})), ShapeError);
}
