#pragma once

#include "arranger/pianoroll.hpp"

namespace arranger {

// Synthetic training corpora: diatonic lead sheets (random-walk scale
// melodies over I-IV-V-I style triads) and one-bar multi-track scores that
// realize the same harmony (sustained strings, struck piano, arpeggiated
// guitar, root bass, fixed drums). Deterministic per seed.

namespace corpus_detail {

struct ChordSpec {
    int root;
    bool minor;
};

// harmony pool: I, IV, V and vi of C major
inline constexpr std::array<ChordSpec, 4> kChordPool{
    ChordSpec{0, false}, ChordSpec{5, false}, ChordSpec{7, false}, ChordSpec{9, true}};

// per-phrase progressions over the pool indices (I IV V I flavors)
inline constexpr std::array<std::array<int, 8>, 4> kProgressions{{
    {0, 0, 1, 1, 2, 2, 0, 0},
    {0, 1, 2, 0, 0, 1, 2, 0},
    {0, 1, 0, 2, 0, 1, 2, 0},
    {0, 3, 1, 2, 0, 3, 1, 2},
}};

// bar rhythms as step durations summing to 48; nothing shorter than an
// eighth note so the corpus is fully "qualified"
inline const std::vector<std::vector<int>>& bar_rhythms() {
    static const std::vector<std::vector<int>> r{
        {12, 12, 12, 12},
        {12, 12, 12, 6, 6},
        {6, 6, 12, 12, 12},
        {12, 6, 6, 12, 6, 6},
        {24, 12, 12},
        {12, 12, 24},
    };
    return r;
}

// C-major scale rows within C4..B5 for the melody walk
inline std::vector<int64_t> melody_rows() {
    static const int scale[7] = {0, 2, 4, 5, 7, 9, 11};
    std::vector<int64_t> rows;
    for (int64_t row = 36; row < 60; ++row)
        for (int pc : scale)
            if (row % 12 == pc) rows.push_back(row);
    return rows;
}

inline void render_triad(Phrase& phrase, int64_t bar, int64_t track, const ChordSpec& chord,
                         int64_t base_row, int64_t step0, int64_t len, bool folded) {
    const int third = chord.minor ? 3 : 4;
    const std::array<int, 3> offs{0, third, 7};
    for (int off : offs) {
        const int64_t row =
            folded ? base_row + (chord.root + off) % 12 : base_row + chord.root + off;
        if (row < 0 || row >= kPitches) continue;
        for (int64_t s = step0; s < std::min<int64_t>(step0 + len, kStepsPerBar); ++s)
            phrase.set(bar, s, row, track);
    }
}

}  // namespace corpus_detail

/// Eight-bar lead sheets: melody is a random walk on C-major scale tones
/// (quarters and eighths), the chord track sustains one diatonic triad per
/// bar at octave 3.
inline std::vector<Phrase> generate_leadsheet_corpus(uint64_t seed, int64_t count) {
    using namespace corpus_detail;
    if (count < 1) throw DataError("generate_leadsheet_corpus: count must be >= 1");
    Rng rng(seed);
    const auto rows = melody_rows();
    std::vector<Phrase> out;
    out.reserve(static_cast<size_t>(count));

    for (int64_t i = 0; i < count; ++i) {
        Phrase phrase(PhraseKind::LeadSheet, kBarsPerPhrase);
        const auto& prog = kProgressions[rng.below(kProgressions.size())];
        size_t walk = rows.size() / 2 + rng.below(5) - 2;

        for (int64_t bar = 0; bar < kBarsPerPhrase; ++bar) {
            const ChordSpec chord = kChordPool[static_cast<size_t>(prog[static_cast<size_t>(bar)])];
            render_triad(phrase, bar, 1, chord, kPitchRowToMidi, 0, kStepsPerBar,
                         /*folded=*/false);

            const auto& rhythm = bar_rhythms()[rng.below(bar_rhythms().size())];
            int64_t step = 0;
            for (int len : rhythm) {
                // random walk: +-1 or +-2 scale steps, reflected at the ends
                const int64_t delta = static_cast<int64_t>(rng.below(4)) - 2;
                int64_t next = static_cast<int64_t>(walk) + (delta >= 0 ? delta + 1 : delta);
                if (next < 0) next = -next;
                if (next >= static_cast<int64_t>(rows.size()))
                    next = 2 * static_cast<int64_t>(rows.size()) - 2 - next;
                walk = static_cast<size_t>(next);
                for (int64_t s = step; s < step + len; ++s)
                    phrase.set(bar, s, rows[walk], 0);
                step += len;
            }
        }
        out.push_back(std::move(phrase));
    }
    return out;
}

/// One-bar five-track scores realizing one diatonic triad per bar:
/// sustained strings (octave 5), half-note piano chords (octave 4),
/// eighth-note guitar arpeggios (octave 3), half-note bass roots (octave 2)
/// and a fixed kick/snare/hat drum pattern.
inline std::vector<Phrase> generate_multitrack_corpus(uint64_t seed, int64_t count) {
    using namespace corpus_detail;
    if (count < 1) throw DataError("generate_multitrack_corpus: count must be >= 1");
    Rng rng(seed);
    std::vector<Phrase> out;
    out.reserve(static_cast<size_t>(count));

    for (int64_t i = 0; i < count; ++i) {
        Phrase phrase(PhraseKind::MultiTrack, 1);
        const ChordSpec chord = kChordPool[rng.below(kChordPool.size())];
        const int third = chord.minor ? 3 : 4;

        // strings: folded triad, sustained all 48 steps
        render_triad(phrase, 0, 0, chord, 60, 0, kStepsPerBar, /*folded=*/true);
        // piano: root-position triad struck per half bar
        render_triad(phrase, 0, 1, chord, 36, 0, 23, /*folded=*/false);
        render_triad(phrase, 0, 1, chord, 36, 24, 23, /*folded=*/false);
        // guitar: eighth-note arpeggio root-third-fifth-third, twice per half
        {
            const std::array<int, 4> pattern{0, third, 7, third};
            for (int hit = 0; hit < 8; ++hit) {
                const int64_t row = 24 + chord.root + pattern[static_cast<size_t>(hit % 4)];
                for (int64_t s = hit * 6; s < hit * 6 + 5; ++s)
                    phrase.set(0, s, row, 2);
            }
        }
        // bass: root, half notes
        {
            const int64_t row = 12 + chord.root;
            for (int64_t s = 0; s < 23; ++s) phrase.set(0, s, row, 4);
            for (int64_t s = 24; s < 47; ++s) phrase.set(0, s, row, 4);
        }
        // drums: kick rows 12, snare 14, closed hat 18
        for (int64_t s : {0, 24})
            for (int64_t k = 0; k < 3; ++k) phrase.set(0, s + k, 12, 3);
        for (int64_t s : {12, 36})
            for (int64_t k = 0; k < 3; ++k) phrase.set(0, s + k, 14, 3);
        for (int hit = 0; hit < 8; ++hit)
            for (int64_t k = 0; k < 3; ++k) phrase.set(0, hit * 6 + k, 18, 3);

        out.push_back(std::move(phrase));
    }
    return out;
}

}  // namespace arranger
