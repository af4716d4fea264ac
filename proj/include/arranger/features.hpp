#pragma once

#include <array>

#include "arranger/pianoroll.hpp"

namespace arranger {

// The three symbolic harmonic features that bridge lead sheets and
// multi-track piano-rolls. Drums carry no pitch-class content and are
// excluded from every harmonic fold.

inline constexpr int kChromaBins = 12;

/// 12 x 48 pitch-class activity, octave-invariant fold of a bar.
struct ChromaRoll {
    std::array<uint8_t, kChromaBins * kStepsPerBar> cells{};
    uint8_t at(int pc, int64_t step) const { return cells[static_cast<size_t>(pc * kStepsPerBar + step)]; }
    void set(int pc, int64_t step, bool on = true) {
        cells[static_cast<size_t>(pc * kStepsPerBar + step)] = on ? 1 : 0;
    }
};

/// 12 x 4 per-beat mean of a chroma-roll; entries are multiples of 1/12.
struct ChromaBeats {
    std::array<double, kChromaBins * kBeatsPerBar> values{};
    double at(int pc, int beat) const { return values[static_cast<size_t>(pc * kBeatsPerBar + beat)]; }
    void set(int pc, int beat, double v) { values[static_cast<size_t>(pc * kBeatsPerBar + beat)] = v; }
};

/// 84 x 48 rendered triads of the recognized per-beat chords.
struct ChordRoll {
    std::array<uint8_t, kPitches * kStepsPerBar> cells{};
    uint8_t at(int64_t pitch, int64_t step) const {
        return cells[static_cast<size_t>(pitch * kStepsPerBar + step)];
    }
    void set(int64_t pitch, int64_t step, bool on = true) {
        cells[static_cast<size_t>(pitch * kStepsPerBar + step)] = on ? 1 : 0;
    }
};

struct ChordLabel {
    bool present = false;
    int root = 0;  // pitch class 0..11, valid only when present
    bool minor = false;

    bool operator==(const ChordLabel& o) const {
        if (present != o.present) return false;
        return !present || (root == o.root && minor == o.minor);
    }
};

enum class FeatureKind { ChordRoll, ChromaRoll, ChromaBeats };

inline const char* feature_name(FeatureKind k) {
    switch (k) {
        case FeatureKind::ChordRoll: return "chord-roll";
        case FeatureKind::ChromaRoll: return "chroma-roll";
        case FeatureKind::ChromaBeats: return "chroma-beats";
    }
    return "?";
}

inline FeatureKind feature_from_name(const std::string& s) {
    if (s == "chord-roll") return FeatureKind::ChordRoll;
    if (s == "chroma-roll") return FeatureKind::ChromaRoll;
    if (s == "chroma-beats") return FeatureKind::ChromaBeats;
    throw DataError("unknown feature '" + s + "', expected chord-roll|chroma-roll|chroma-beats");
}

/// Chroma fold of one bar: union over the given tracks of any active row
/// with row mod 12 == pc. Excludes a drums track.
inline ChromaRoll chroma_roll(const Phrase& phrase, int64_t bar) {
    const int64_t drums =
        phrase.kind() == PhraseKind::MultiTrack ? phrase.track_index("drums") : -1;
    ChromaRoll out;
    for (int64_t t = 0; t < phrase.tracks(); ++t) {
        if (t == drums) continue;
        for (int64_t s = 0; s < kStepsPerBar; ++s)
            for (int64_t p = 0; p < kPitches; ++p)
                if (phrase.at(bar, s, p, t)) out.set(static_cast<int>(p % 12), s);
    }
    return out;
}

/// Chroma fold of a single 84 x 48 matrix (e.g. a rendered chord-roll).
inline ChromaRoll chroma_roll(const ChordRoll& m) {
    ChromaRoll out;
    for (int64_t p = 0; p < kPitches; ++p)
        for (int64_t s = 0; s < kStepsPerBar; ++s)
            if (m.at(p, s)) out.set(static_cast<int>(p % 12), s);
    return out;
}

/// Per-beat average of a chroma-roll (12 steps per beat).
inline ChromaBeats chroma_beats(const ChromaRoll& cr) {
    ChromaBeats out;
    for (int pc = 0; pc < kChromaBins; ++pc)
        for (int b = 0; b < kBeatsPerBar; ++b) {
            int sum = 0;
            for (int64_t s = 0; s < kStepsPerBeat; ++s) sum += cr.at(pc, b * kStepsPerBeat + s);
            out.set(pc, b, static_cast<double>(sum) / kStepsPerBeat);
        }
    return out;
}

/// Per-beat template matching over the 24 major/minor triads:
///   score = sum_p c_p * t_p - 0.5 * sum_p c_p * (1 - t_p)
/// Ties break to major first, then the lower root. An all-zero beat yields
/// no chord.
inline std::array<ChordLabel, kBeatsPerBar> recognize_chords(const ChromaBeats& cb) {
    std::array<ChordLabel, kBeatsPerBar> out;
    for (int beat = 0; beat < kBeatsPerBar; ++beat) {
        double total = 0;
        for (int pc = 0; pc < kChromaBins; ++pc) total += cb.at(pc, beat);
        if (total <= 0) continue;

        ChordLabel best;
        double best_score = 0;
        // priority order realizes the tie-break: all majors, then all minors,
        // roots ascending; only a strictly better score displaces the best
        for (int minor = 0; minor < 2; ++minor) {
            for (int root = 0; root < kChromaBins; ++root) {
                const int third = minor ? 3 : 4;
                bool tmpl[kChromaBins] = {};
                tmpl[root] = tmpl[(root + third) % 12] = tmpl[(root + 7) % 12] = true;
                double inside = 0, outside = 0;
                for (int pc = 0; pc < kChromaBins; ++pc)
                    (tmpl[pc] ? inside : outside) += cb.at(pc, beat);
                const double score = inside - 0.5 * outside;
                if (!best.present || score > best_score) {
                    best = ChordLabel{true, root, minor != 0};
                    best_score = score;
                }
            }
        }
        out[static_cast<size_t>(beat)] = best;
    }
    return out;
}

/// Renders one chord as a folded triad at octave 4: each chord tone's pitch
/// class pc occupies row 36 + pc for the beat's 12 steps.
inline void render_chord(const ChordLabel& chord, int beat, ChordRoll& out) {
    if (!chord.present) return;
    const int third = chord.minor ? 3 : 4;
    const std::array<int, 3> pcs{chord.root, (chord.root + third) % 12, (chord.root + 7) % 12};
    for (int pc : pcs)
        for (int64_t s = 0; s < kStepsPerBeat; ++s)
            out.set(36 + pc, beat * kStepsPerBeat + s);
}

inline std::array<ChordLabel, kBeatsPerBar> recognize_bar_chords(const Phrase& phrase,
                                                                 int64_t bar) {
    return recognize_chords(chroma_beats(chroma_roll(phrase, bar)));
}

/// chroma fold -> per-beat average -> chord recognition -> triad rendering.
inline ChordRoll chord_roll(const Phrase& phrase, int64_t bar) {
    const auto labels = recognize_bar_chords(phrase, bar);
    ChordRoll out;
    for (int beat = 0; beat < kBeatsPerBar; ++beat) render_chord(labels[static_cast<size_t>(beat)], beat, out);
    return out;
}

// ---------------------------------------------------------------------------
// Feature -> tensor conversion for the conditional models. The encoders see
// features in (time, pitch) orientation: chord-roll (48,84), chroma-roll
// (48,12), chroma-beats (4,12), each with one channel.
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> feature_tensor(const ChordRoll& f) {
    Tensor<T> out({1, kStepsPerBar, kPitches, 1});
    for (int64_t s = 0; s < kStepsPerBar; ++s)
        for (int64_t p = 0; p < kPitches; ++p) out.at(0, s, p, 0) = f.at(p, s) ? T(1) : T(0);
    return out;
}

template <class T>
Tensor<T> feature_tensor(const ChromaRoll& f) {
    Tensor<T> out({1, kStepsPerBar, kChromaBins, 1});
    for (int64_t s = 0; s < kStepsPerBar; ++s)
        for (int pc = 0; pc < kChromaBins; ++pc)
            out.at(0, s, static_cast<int64_t>(pc), 0) = f.at(pc, s) ? T(1) : T(0);
    return out;
}

template <class T>
Tensor<T> feature_tensor(const ChromaBeats& f) {
    Tensor<T> out({1, kBeatsPerBar, kChromaBins, 1});
    for (int b = 0; b < kBeatsPerBar; ++b)
        for (int pc = 0; pc < kChromaBins; ++pc)
            out.at(0, static_cast<int64_t>(b), static_cast<int64_t>(pc), 0) =
                static_cast<T>(f.at(pc, b));
    return out;
}

/// Extracts the configured feature of one bar as an encoder-ready tensor.
template <class T>
Tensor<T> extract_feature_tensor(FeatureKind kind, const Phrase& phrase, int64_t bar) {
    switch (kind) {
        case FeatureKind::ChordRoll: return feature_tensor<T>(chord_roll(phrase, bar));
        case FeatureKind::ChromaRoll: return feature_tensor<T>(chroma_roll(phrase, bar));
        case FeatureKind::ChromaBeats:
            return feature_tensor<T>(chroma_beats(chroma_roll(phrase, bar)));
    }
    throw Error("extract_feature_tensor: bad feature kind");
}

}  // namespace arranger
