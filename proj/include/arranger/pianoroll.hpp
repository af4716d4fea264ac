#pragma once

#include <array>
#include <optional>

#include "arranger/tensor.hpp"

namespace arranger {

// Grid constants: a bar is 48 time steps by 84 pitches (rows C1..B7,
// row = MIDI pitch - 24), four beats of twelve steps each.
inline constexpr int64_t kStepsPerBar = 48;
inline constexpr int64_t kPitches = 84;
inline constexpr int64_t kStepsPerBeat = 12;
inline constexpr int64_t kBeatsPerBar = 4;
inline constexpr int64_t kBarsPerPhrase = 8;
inline constexpr int64_t kPitchRowToMidi = 24;  // row 0 = C1 = MIDI 24

enum class PhraseKind { LeadSheet, MultiTrack };

inline const std::vector<std::string>& track_names(PhraseKind kind) {
    static const std::vector<std::string> lead{"melody", "chord"};
    static const std::vector<std::string> multi{"strings", "piano", "guitar", "drums", "bass"};
    return kind == PhraseKind::LeadSheet ? lead : multi;
}

inline int64_t track_count(PhraseKind kind) {
    return static_cast<int64_t>(track_names(kind).size());
}

/// Binary activity matrix for one bar of one track (48 steps x 84 pitches).
class PianoRollBar {
public:
    PianoRollBar() : cells_(kStepsPerBar * kPitches, 0) {}

    explicit PianoRollBar(std::vector<uint8_t> cells) : cells_(std::move(cells)) {
        if (static_cast<int64_t>(cells_.size()) != kStepsPerBar * kPitches)
            throw ShapeError("PianoRollBar: expected 48x84 cells, got " +
                             std::to_string(cells_.size()));
        for (uint8_t c : cells_)
            if (c > 1) throw DataError("PianoRollBar: non-binary cell value");
    }

    uint8_t at(int64_t step, int64_t pitch) const { return cells_[step * kPitches + pitch]; }
    void set(int64_t step, int64_t pitch, bool on = true) {
        cells_[step * kPitches + pitch] = on ? 1 : 0;
    }

    const std::vector<uint8_t>& cells() const { return cells_; }

    bool empty() const {
        for (uint8_t c : cells_)
            if (c) return false;
        return true;
    }

private:
    std::vector<uint8_t> cells_;
};

/// B bars x 48 steps x 84 pitches x N tracks of binary activity.
/// Lead sheets carry [melody, chord]; multi-track phrases carry
/// [strings, piano, guitar, drums, bass]. The generation pipeline always
/// produces eight-bar lead sheets; shorter phrases are legal as standalone
/// data (metrics, containers).
class Phrase {
public:
    Phrase(PhraseKind kind, int64_t bars)
        : kind_(kind),
          bars_(bars),
          tracks_(track_count(kind)),
          cells_(static_cast<size_t>(bars * kStepsPerBar * kPitches * tracks_), 0) {
        if (bars < 1) throw ShapeError("Phrase: bar count must be >= 1");
    }

    Phrase(PhraseKind kind, int64_t bars, std::vector<uint8_t> cells)
        : kind_(kind), bars_(bars), tracks_(track_count(kind)), cells_(std::move(cells)) {
        if (bars < 1) throw ShapeError("Phrase: bar count must be >= 1");
        if (static_cast<int64_t>(cells_.size()) != bars * kStepsPerBar * kPitches * tracks_)
            throw ShapeError("Phrase: cell payload has wrong size for " + std::to_string(bars) +
                             " bars x " + std::to_string(tracks_) + " tracks");
        for (uint8_t c : cells_)
            if (c > 1) throw DataError("Phrase: non-binary cell value");
    }

    PhraseKind kind() const { return kind_; }
    int64_t bars() const { return bars_; }
    int64_t tracks() const { return tracks_; }
    const std::vector<std::string>& names() const { return track_names(kind_); }

    uint8_t at(int64_t bar, int64_t step, int64_t pitch, int64_t track) const {
        return cells_[index(bar, step, pitch, track)];
    }
    void set(int64_t bar, int64_t step, int64_t pitch, int64_t track, bool on = true) {
        cells_[index(bar, step, pitch, track)] = on ? 1 : 0;
    }

    const std::vector<uint8_t>& cells() const { return cells_; }

    PianoRollBar bar(int64_t bar, int64_t track) const {
        std::vector<uint8_t> out(kStepsPerBar * kPitches);
        for (int64_t s = 0; s < kStepsPerBar; ++s)
            for (int64_t p = 0; p < kPitches; ++p) out[s * kPitches + p] = at(bar, s, p, track);
        return PianoRollBar(std::move(out));
    }

    bool bar_empty(int64_t bar, int64_t track) const {
        for (int64_t s = 0; s < kStepsPerBar; ++s)
            for (int64_t p = 0; p < kPitches; ++p)
                if (at(bar, s, p, track)) return false;
        return true;
    }

    int64_t track_index(const std::string& name) const {
        const auto& ns = names();
        for (size_t i = 0; i < ns.size(); ++i)
            if (ns[i] == name) return static_cast<int64_t>(i);
        throw DataError("Phrase: no track named '" + name + "'");
    }

    bool operator==(const Phrase& o) const {
        return kind_ == o.kind_ && bars_ == o.bars_ && cells_ == o.cells_;
    }

private:
    size_t index(int64_t bar, int64_t step, int64_t pitch, int64_t track) const {
        return static_cast<size_t>(((bar * kStepsPerBar + step) * kPitches + pitch) * tracks_ +
                                   track);
    }

    PhraseKind kind_;
    int64_t bars_;
    int64_t tracks_;
    std::vector<uint8_t> cells_;
};

// ---------------------------------------------------------------------------
// Lead-sheet documents
// ---------------------------------------------------------------------------

enum class ChordQuality { Major, Minor };

struct MelodyEvent {
    int midi_pitch = 60;
    double start = 0;     // beats
    double duration = 1;  // beats
};

struct ChordEvent {
    int root = 0;  // pitch class 0..11
    ChordQuality quality = ChordQuality::Major;
    double start = 0;
    double duration = 4;
};

/// A melody line plus a sequence of chord labels, 4 beats per bar.
struct LeadSheetDocument {
    int key = 0;  // pitch class of the tonic
    ChordQuality mode = ChordQuality::Major;
    int beats_per_bar = 4;
    std::vector<MelodyEvent> melody;
    std::vector<ChordEvent> chords;

    void validate() const {
        if (beats_per_bar != 4) throw DataError("lead sheet: only 4 beats per bar is supported");
        if (key < 0 || key > 11) throw DataError("lead sheet: key must be a pitch class 0..11");
        for (const auto& e : melody) {
            if (e.start < 0) throw DataError("lead sheet: negative melody onset");
            if (e.duration <= 0) throw DataError("lead sheet: non-positive melody duration");
        }
        for (const auto& c : chords) {
            if (c.start < 0) throw DataError("lead sheet: negative chord onset");
            if (c.duration <= 0) throw DataError("lead sheet: non-positive chord duration");
            if (c.root < 0 || c.root > 11) throw DataError("lead sheet: chord root out of range");
        }
        // Events of one voice may not overlap.
        auto check_overlap = [](auto events, const char* what) {
            std::sort(events.begin(), events.end(),
                      [](const auto& a, const auto& b) { return a.start < b.start; });
            for (size_t i = 1; i < events.size(); ++i) {
                if (events[i].start <
                    events[i - 1].start + events[i - 1].duration - 1e-9)
                    throw DataError(std::string("lead sheet: overlapping ") + what + " events");
            }
        };
        check_overlap(melody, "melody");
        check_overlap(chords, "chord");
    }
};

struct IngestResult {
    std::vector<Phrase> phrases;
    std::vector<std::string> warnings;
};

/// Renders a lead-sheet document onto the 48-step grid and splits it into
/// consecutive eight-bar phrases (remainder bars are dropped). Notes outside
/// MIDI 24..107 are dropped with a warning. Chord labels become sustained
/// root-position triads at octave 3.
inline IngestResult ingest_leadsheet(const LeadSheetDocument& doc) {
    doc.validate();

    auto to_step = [](double beats) { return static_cast<int64_t>(std::llround(beats * kStepsPerBeat)); };

    int64_t total_steps = 0;
    for (const auto& e : doc.melody) total_steps = std::max(total_steps, to_step(e.start + e.duration));
    for (const auto& c : doc.chords) total_steps = std::max(total_steps, to_step(c.start + c.duration));

    const int64_t total_bars = total_steps / kStepsPerBar;
    const int64_t n_phrases = total_bars / kBarsPerPhrase;
    if (n_phrases == 0)
        throw DataError("lead sheet: phrase too short, need at least 8 full bars, have " +
                        std::to_string(total_bars));

    IngestResult result;
    const int64_t grid_steps = n_phrases * kBarsPerPhrase * kStepsPerBar;
    // melody rows / chord rows over the whole grid, then cut into phrases
    std::vector<uint8_t> melody_grid(static_cast<size_t>(grid_steps * kPitches), 0);
    std::vector<uint8_t> chord_grid(static_cast<size_t>(grid_steps * kPitches), 0);

    for (const auto& e : doc.melody) {
        const int64_t row = e.midi_pitch - kPitchRowToMidi;
        if (row < 0 || row >= kPitches) {
            result.warnings.push_back("melody note MIDI " + std::to_string(e.midi_pitch) +
                                      " outside range C1..B7, dropped");
            continue;
        }
        int64_t s0 = to_step(e.start);
        int64_t s1 = std::max(to_step(e.start + e.duration), s0 + 1);
        for (int64_t s = s0; s < std::min(s1, grid_steps); ++s)
            melody_grid[static_cast<size_t>(s * kPitches + row)] = 1;
    }
    for (const auto& c : doc.chords) {
        const int64_t base = kPitchRowToMidi;  // octave 3 voicing starts at row 24
        const int64_t third = c.quality == ChordQuality::Major ? 4 : 3;
        const std::array<int64_t, 3> rows{base + c.root, base + c.root + third,
                                          base + c.root + 7};
        int64_t s0 = to_step(c.start);
        int64_t s1 = std::max(to_step(c.start + c.duration), s0 + 1);
        for (int64_t s = s0; s < std::min(s1, grid_steps); ++s)
            for (int64_t r : rows) chord_grid[static_cast<size_t>(s * kPitches + r)] = 1;
    }

    for (int64_t ph = 0; ph < n_phrases; ++ph) {
        Phrase phrase(PhraseKind::LeadSheet, kBarsPerPhrase);
        const int64_t base_step = ph * kBarsPerPhrase * kStepsPerBar;
        for (int64_t b = 0; b < kBarsPerPhrase; ++b) {
            for (int64_t s = 0; s < kStepsPerBar; ++s) {
                const int64_t gs = base_step + b * kStepsPerBar + s;
                for (int64_t p = 0; p < kPitches; ++p) {
                    if (melody_grid[static_cast<size_t>(gs * kPitches + p)])
                        phrase.set(b, s, p, 0);
                    if (chord_grid[static_cast<size_t>(gs * kPitches + p)])
                        phrase.set(b, s, p, 1);
                }
            }
        }
        result.phrases.push_back(std::move(phrase));
    }
    return result;
}

/// Shifts every pitched cell so the phrase sits in C. The shift is the
/// smaller of -key and 12-key in absolute value (-key wins a tie); cells
/// leaving the 84-row range are dropped; a drums track is never shifted.
inline Phrase transpose_to_c(const Phrase& phrase, int key) {
    if (key < 0 || key > 11) throw DataError("transpose_to_c: key must be a pitch class 0..11");
    const int shift = (std::abs(-key) <= std::abs(12 - key)) ? -key : 12 - key;
    if (shift == 0) return phrase;

    const int64_t drums = phrase.kind() == PhraseKind::MultiTrack ? phrase.track_index("drums") : -1;
    Phrase out(phrase.kind(), phrase.bars());
    for (int64_t b = 0; b < phrase.bars(); ++b)
        for (int64_t s = 0; s < kStepsPerBar; ++s)
            for (int64_t p = 0; p < kPitches; ++p)
                for (int64_t t = 0; t < phrase.tracks(); ++t) {
                    if (!phrase.at(b, s, p, t)) continue;
                    if (t == drums) {
                        out.set(b, s, p, t);
                        continue;
                    }
                    const int64_t np = p + shift;
                    if (np >= 0 && np < kPitches) out.set(b, s, np, t);
                }
    return out;
}

/// Thresholds generator output (tanh range) at zero: training data maps
/// {0,1} to {-1,+1}, so zero is the midpoint. On the melody track of lead
/// sheets only the strongest active row per step is kept (monophony; the
/// lowest row wins an exact tie).
template <class T>
Phrase binarize(const Tensor<T>& values, PhraseKind kind) {
    const Shape& s = values.shape();
    const int64_t n_tracks = track_count(kind);
    if (s.size() != 4 || s[1] != kStepsPerBar || s[2] != kPitches || s[3] != n_tracks)
        throw ShapeError("binarize: expected (bars, 48, 84, " + std::to_string(n_tracks) +
                         "), got " + shape_str(s));
    for (int64_t i = 0; i < values.numel(); ++i)
        if (values[i] < T(-1.000001) || values[i] > T(1.000001))
            throw DataError("binarize: value outside [-1, 1]");

    Phrase out(kind, s[0]);
    for (int64_t b = 0; b < s[0]; ++b)
        for (int64_t st = 0; st < kStepsPerBar; ++st)
            for (int64_t t = 0; t < n_tracks; ++t) {
                if (kind == PhraseKind::LeadSheet && t == 0) {
                    // monophonic melody: argmax over active rows
                    int64_t best = -1;
                    T best_v = T(0);
                    for (int64_t p = 0; p < kPitches; ++p) {
                        const T v = values.at(b, st, p, t);
                        if (v > T(0) && (best < 0 || v > best_v)) {
                            best = p;
                            best_v = v;
                        }
                    }
                    if (best >= 0) out.set(b, st, best, t);
                } else {
                    for (int64_t p = 0; p < kPitches; ++p)
                        if (values.at(b, st, p, t) > T(0)) out.set(b, st, p, t);
                }
            }
    return out;
}

/// Real-valued view of a phrase in the generator's tanh range:
/// {0,1} -> {-1,+1}.
template <class T>
Tensor<T> phrase_to_signed(const Phrase& phrase) {
    Tensor<T> out({phrase.bars(), kStepsPerBar, kPitches, phrase.tracks()});
    const auto& cells = phrase.cells();
    for (size_t i = 0; i < cells.size(); ++i) out[static_cast<int64_t>(i)] = cells[i] ? T(1) : T(-1);
    return out;
}

}  // namespace arranger
