#include <catch2/catch_amalgamated.hpp>

#include "arranger/corpus.hpp"
#include "arranger/features.hpp"

using namespace arranger;

namespace {

/// Independent score enumeration for the 24 triad templates.
double oracle_score(const std::array<double, 12>& c, int root, bool minor) {
    bool tmpl[12] = {};
    tmpl[root] = true;
    tmpl[(root + (minor ? 3 : 4)) % 12] = true;
    tmpl[(root + 7) % 12] = true;
    double inside = 0, outside = 0;
    for (int pc = 0; pc < 12; ++pc) (tmpl[pc] ? inside : outside) += c[static_cast<size_t>(pc)];
    return inside - 0.5 * outside;
}

ChordLabel oracle_best(const std::array<double, 12>& c) {
    double total = 0;
    for (double v : c) total += v;
    if (total <= 0) return {};
    ChordLabel best;
    double best_score = 0;
    for (int minor = 0; minor < 2; ++minor)
        for (int root = 0; root < 12; ++root) {
            const double s = oracle_score(c, root, minor);
            if (!best.present || s > best_score) {
                best = {true, root, minor != 0};
                best_score = s;
            }
        }
    return best;
}

ChromaBeats beats_from(const std::array<double, 12>& c) {
    ChromaBeats cb;
    for (int pc = 0; pc < 12; ++pc)
        for (int b = 0; b < 4; ++b) cb.set(pc, b, c[static_cast<size_t>(pc)]);
    return cb;
}

}  // namespace

TEST_CASE("chroma fold: single note, union of tracks, empty bar") {
    Phrase p(PhraseKind::LeadSheet, 1);
    for (int64_t s = 0; s < 12; ++s) p.set(0, s, 36, 0);  // C4 on melody
    auto cr = chroma_roll(p, 0);
    for (int64_t s = 0; s < 12; ++s) CHECK(cr.at(0, s) == 1);
    for (int64_t s = 12; s < 48; ++s) CHECK(cr.at(0, s) == 0);

    // add a C3/E3/G3 chord for the whole bar: union has pcs {0, 4, 7}
    for (int64_t s = 0; s < 48; ++s)
        for (int64_t r : {24, 28, 31}) p.set(0, s, r, 1);
    cr = chroma_roll(p, 0);
    for (int64_t s = 0; s < 48; ++s) {
        CHECK(cr.at(0, s) == 1);
        CHECK(cr.at(4, s) == 1);
        CHECK(cr.at(7, s) == 1);
        CHECK(cr.at(1, s) == 0);
    }

    auto zero = chroma_roll(Phrase(PhraseKind::LeadSheet, 1), 0);
    for (int pc = 0; pc < 12; ++pc)
        for (int64_t s = 0; s < 48; ++s) CHECK(zero.at(pc, s) == 0);
}

TEST_CASE("chroma fold is octave invariant") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Phrase p(PhraseKind::LeadSheet, 1);
        std::vector<std::pair<int64_t, int64_t>> cells;
        for (int n = 0; n < 30; ++n) {
            int64_t s = static_cast<int64_t>(rng.below(48));
            int64_t r = 12 + static_cast<int64_t>(rng.below(60));
            p.set(0, s, r, static_cast<int64_t>(rng.below(2)));
            cells.emplace_back(s, r);
        }
        Phrase shifted(PhraseKind::LeadSheet, 1);
        for (int64_t s = 0; s < 48; ++s)
            for (int64_t r = 0; r < kPitches; ++r)
                for (int64_t t = 0; t < 2; ++t)
                    if (p.at(0, s, r, t)) shifted.set(0, s, r + 12, t);
        auto a = chroma_roll(p, 0), b = chroma_roll(shifted, 0);
        CHECK(a.cells == b.cells);
    }
}

TEST_CASE("chroma fold excludes drums") {
    Phrase p(PhraseKind::MultiTrack, 1);
    p.set(0, 0, 12, p.track_index("drums"));
    auto cr = chroma_roll(p, 0);
    for (int pc = 0; pc < 12; ++pc) CHECK(cr.at(pc, 0) == 0);
    p.set(0, 0, 12, p.track_index("bass"));
    cr = chroma_roll(p, 0);
    CHECK(cr.at(0, 0) == 1);
}

TEST_CASE("union-of-tracks chroma equals elementwise OR of per-track chromas") {
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        Phrase multi(PhraseKind::MultiTrack, 1);
        std::array<Phrase, 5> singles{
            Phrase(PhraseKind::MultiTrack, 1), Phrase(PhraseKind::MultiTrack, 1),
            Phrase(PhraseKind::MultiTrack, 1), Phrase(PhraseKind::MultiTrack, 1),
            Phrase(PhraseKind::MultiTrack, 1)};
        for (int n = 0; n < 60; ++n) {
            int64_t s = static_cast<int64_t>(rng.below(48));
            int64_t r = static_cast<int64_t>(rng.below(84));
            int64_t t = static_cast<int64_t>(rng.below(5));
            multi.set(0, s, r, t);
            singles[static_cast<size_t>(t)].set(0, s, r, t);
        }
        auto full = chroma_roll(multi, 0);
        ChromaRoll orred;
        for (const auto& sp : singles) {
            auto c = chroma_roll(sp, 0);
            for (size_t i = 0; i < orred.cells.size(); ++i)
                orred.cells[i] = orred.cells[i] || c.cells[i];
        }
        CHECK(full.cells == orred.cells);
    }
}

TEST_CASE("chroma_beats averages per beat") {
    ChromaRoll cr;
    for (int64_t s = 0; s < 48; ++s) cr.set(0, s);  // pc 0 everywhere
    for (int64_t s = 0; s < 6; ++s) cr.set(4, s);   // pc 4 on steps 0-5
    auto cb = chroma_beats(cr);
    for (int b = 0; b < 4; ++b) CHECK(cb.at(0, b) == 1.0);
    CHECK(cb.at(4, 0) == 0.5);
    CHECK(cb.at(4, 1) == 0.0);

    auto zero = chroma_beats(ChromaRoll{});
    for (int pc = 0; pc < 12; ++pc)
        for (int b = 0; b < 4; ++b) CHECK(zero.at(pc, b) == 0.0);
}

TEST_CASE("recognizer is exact on all 24 pure triads") {
    for (int minor = 0; minor < 2; ++minor)
        for (int root = 0; root < 12; ++root) {
            std::array<double, 12> c{};
            c[static_cast<size_t>(root)] = 1;
            c[static_cast<size_t>((root + (minor ? 3 : 4)) % 12)] = 1;
            c[static_cast<size_t>((root + 7) % 12)] = 1;
            auto labels = recognize_chords(beats_from(c));
            for (int b = 0; b < 4; ++b) {
                REQUIRE(labels[static_cast<size_t>(b)].present);
                CHECK(labels[static_cast<size_t>(b)].root == root);
                CHECK(labels[static_cast<size_t>(b)].minor == (minor != 0));
            }
        }
}

TEST_CASE("recognizer tie case {0,3,4,7}: C major wins over C minor") {
    std::array<double, 12> c{};
    c[0] = c[3] = c[4] = c[7] = 1;
    // both templates score 3 - 0.5 by the independent enumeration
    CHECK(oracle_score(c, 0, false) == Catch::Approx(2.5));
    CHECK(oracle_score(c, 0, true) == Catch::Approx(2.5));
    auto labels = recognize_chords(beats_from(c));
    CHECK(labels[0].present);
    CHECK(labels[0].root == 0);
    CHECK_FALSE(labels[0].minor);
}

TEST_CASE("recognizer: A minor chroma {9,0,4} and empty beat") {
    std::array<double, 12> c{};
    c[9] = c[0] = c[4] = 1;
    auto labels = recognize_chords(beats_from(c));
    CHECK(labels[0].present);
    CHECK(labels[0].root == 9);
    CHECK(labels[0].minor);

    auto none = recognize_chords(ChromaBeats{});
    for (int b = 0; b < 4; ++b) CHECK_FALSE(none[static_cast<size_t>(b)].present);
}

TEST_CASE("recognizer agrees with the enumeration oracle on random chromas") {
    Rng rng(8);
    for (int trial = 0; trial < 500; ++trial) {
        std::array<double, 12> c{};
        const int active = 1 + static_cast<int>(rng.below(5));
        for (int i = 0; i < active; ++i)
            c[static_cast<size_t>(rng.below(12))] = (1 + rng.below(12)) / 12.0;
        auto got = recognize_chords(beats_from(c))[0];
        auto want = oracle_best(c);
        CHECK(got == want);
    }
}

TEST_CASE("recognizer is scale invariant") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        std::array<double, 12> c{};
        for (int i = 0; i < 4; ++i) c[static_cast<size_t>(rng.below(12))] = rng.uniform();
        for (double lambda : {0.1, 0.5, 2.0, 100.0}) {
            std::array<double, 12> scaled = c;
            for (auto& v : scaled) v *= lambda;
            CHECK(recognize_chords(beats_from(scaled))[0] == recognize_chords(beats_from(c))[0]);
        }
    }
}

TEST_CASE("chord_roll: constant C major bar renders rows 36/40/43 everywhere") {
    Phrase p(PhraseKind::LeadSheet, 1);
    for (int64_t s = 0; s < 48; ++s)
        for (int64_t r : {24, 28, 31}) p.set(0, s, r, 1);
    auto croll = chord_roll(p, 0);
    for (int64_t s = 0; s < 48; ++s) {
        CHECK(croll.at(36, s) == 1);
        CHECK(croll.at(40, s) == 1);
        CHECK(croll.at(43, s) == 1);
    }
    int64_t active = 0;
    for (int64_t r = 0; r < kPitches; ++r)
        for (int64_t s = 0; s < 48; ++s) active += croll.at(r, s);
    CHECK(active == 3 * 48);

    auto empty = chord_roll(Phrase(PhraseKind::LeadSheet, 1), 0);
    for (size_t i = 0; i < empty.cells.size(); ++i) CHECK(empty.cells[i] == 0);
}

TEST_CASE("chord_roll: C major beats 1-2 then G major beats 3-4") {
    Phrase p(PhraseKind::LeadSheet, 1);
    for (int64_t s = 0; s < 24; ++s)
        for (int64_t r : {24, 28, 31}) p.set(0, s, r, 1);  // C3 E3 G3
    for (int64_t s = 24; s < 48; ++s)
        for (int64_t r : {31, 35, 38}) p.set(0, s, r, 1);  // G3 B3 D4
    auto croll = chord_roll(p, 0);
    for (int64_t s = 0; s < 24; ++s) {
        CHECK(croll.at(36, s) == 1);
        CHECK(croll.at(40, s) == 1);
        CHECK(croll.at(43, s) == 1);
        CHECK(croll.at(47, s) == 0);
    }
    // G triad pitch classes {7, 11, 2} fold to rows 43, 47, 38
    for (int64_t s = 24; s < 48; ++s) {
        CHECK(croll.at(43, s) == 1);
        CHECK(croll.at(47, s) == 1);
        CHECK(croll.at(38, s) == 1);
        CHECK(croll.at(36, s) == 0);
    }
}

TEST_CASE("chord_roll is idempotent on chroma content") {
    auto bars = generate_multitrack_corpus(11, 12);
    for (const auto& p : bars) {
        auto first = chord_roll(p, 0);
        auto labels1 = recognize_chords(chroma_beats(chroma_roll(p, 0)));
        auto labels2 = recognize_chords(chroma_beats(chroma_roll(first)));
        for (int b = 0; b < 4; ++b)
            CHECK(labels1[static_cast<size_t>(b)] == labels2[static_cast<size_t>(b)]);
    }
}

TEST_CASE("feature tensors carry the encoder orientation") {
    Phrase p(PhraseKind::LeadSheet, 1);
    for (int64_t s = 0; s < 48; ++s)
        for (int64_t r : {24, 28, 31}) p.set(0, s, r, 1);
    auto chord = extract_feature_tensor<float>(FeatureKind::ChordRoll, p, 0);
    CHECK(chord.shape() == Shape{1, 48, 84, 1});
    CHECK(chord.at(0, 0, 36, 0) == 1.f);
    auto chroma = extract_feature_tensor<float>(FeatureKind::ChromaRoll, p, 0);
    CHECK(chroma.shape() == Shape{1, 48, 12, 1});
    CHECK(chroma.at(0, 0, 0, 0) == 1.f);
    CHECK(chroma.at(0, 0, 4, 0) == 1.f);
    auto beats = extract_feature_tensor<float>(FeatureKind::ChromaBeats, p, 0);
    CHECK(beats.shape() == Shape{1, 4, 12, 1});
    CHECK(beats.at(0, 0, 7, 0) == 1.f);
}
