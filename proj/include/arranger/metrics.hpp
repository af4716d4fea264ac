#pragma once

#include <cmath>
#include <span>

#include <json.hpp>

#include "arranger/pianoroll.hpp"

namespace arranger {

// Objective evaluation of generated phrases: empty-bar ratio (EB), used
// pitch classes per bar (UPC), qualified-note ratio (QN, notes >= a 16th)
// and tonal distance (TD) between two tracks.

/// A maximal horizontal run of active cells in one pitch row.
struct NoteRun {
    int64_t pitch = 0;   // row 0..83
    int64_t onset = 0;   // step within the bar
    int64_t length = 0;  // steps, >= 1
};

/// One value plus a defined-flag for the degenerate corner cases the ratio
/// definitions leave open (no bars with content, no notes, no shared beats).
struct MetricValue {
    double value = 0.0;
    bool defined = true;
};

inline constexpr int64_t kQualifiedSteps = kStepsPerBar / 16;  // 16th note = 3 steps

inline std::vector<NoteRun> extract_notes(const PianoRollBar& bar) {
    std::vector<NoteRun> notes;
    for (int64_t p = 0; p < kPitches; ++p) {
        int64_t start = -1;
        for (int64_t s = 0; s <= kStepsPerBar; ++s) {
            const bool on = s < kStepsPerBar && bar.at(s, p) != 0;
            if (on && start < 0) start = s;
            if (!on && start >= 0) {
                notes.push_back({p, start, s - start});
                start = -1;
            }
        }
    }
    return notes;
}

inline std::vector<NoteRun> extract_notes(const Phrase& phrase, int64_t bar, int64_t track) {
    return extract_notes(phrase.bar(bar, track));
}

inline double empty_bars(std::span<const Phrase> phrases, int64_t track) {
    int64_t total = 0, empty = 0;
    for (const auto& p : phrases)
        for (int64_t b = 0; b < p.bars(); ++b) {
            ++total;
            if (p.bar_empty(b, track)) ++empty;
        }
    if (total == 0) throw DataError("empty_bars: no bars");
    return static_cast<double>(empty) / static_cast<double>(total);
}

/// Mean count of distinct pitch classes per bar, over non-empty bars.
inline MetricValue used_pitch_classes(std::span<const Phrase> phrases, int64_t track) {
    int64_t bars = 0;
    double sum = 0;
    for (const auto& p : phrases)
        for (int64_t b = 0; b < p.bars(); ++b) {
            bool used[12] = {};
            for (int64_t s = 0; s < kStepsPerBar; ++s)
                for (int64_t row = 0; row < kPitches; ++row)
                    if (p.at(b, s, row, track)) used[row % 12] = true;
            int count = 0;
            for (bool u : used) count += u ? 1 : 0;
            if (count > 0) {
                ++bars;
                sum += count;
            }
        }
    if (bars == 0) return {0.0, false};
    return {sum / static_cast<double>(bars), true};
}

/// Ratio of notes at least as long as a 16th note (3 steps).
inline MetricValue qualified_notes(std::span<const Phrase> phrases, int64_t track) {
    int64_t total = 0, qualified = 0;
    for (const auto& p : phrases)
        for (int64_t b = 0; b < p.bars(); ++b)
            for (const auto& n : extract_notes(p, b, track)) {
                ++total;
                if (n.length >= kQualifiedSteps) ++qualified;
            }
    if (total == 0) return {1.0, false};
    return {static_cast<double>(qualified) / static_cast<double>(total), true};
}

/// 6-d tonal centroid of an L1-normalized chroma vector: circles of fifths
/// (radius 1, angle pc*7pi/6), minor thirds (radius 1, angle pc*3pi/2) and
/// major thirds (radius 0.5, angle pc*2pi/3).
inline std::array<double, 6> tonal_centroid(const std::array<double, 12>& chroma) {
    constexpr double pi = 3.14159265358979323846;
    double norm = 0;
    for (double c : chroma) norm += std::abs(c);
    std::array<double, 6> out{};
    if (norm <= 0) return out;
    for (int pc = 0; pc < 12; ++pc) {
        const double c = chroma[static_cast<size_t>(pc)] / norm;
        out[0] += c * std::sin(pc * 7.0 * pi / 6.0);
        out[1] += c * std::cos(pc * 7.0 * pi / 6.0);
        out[2] += c * std::sin(pc * 3.0 * pi / 2.0);
        out[3] += c * std::cos(pc * 3.0 * pi / 2.0);
        out[4] += 0.5 * c * std::sin(pc * 2.0 * pi / 3.0);
        out[5] += 0.5 * c * std::cos(pc * 2.0 * pi / 3.0);
    }
    return out;
}

/// Per-beat chroma cell counts of one track (count of active cells folded
/// by pitch class over the beat's 12 steps).
inline std::array<double, 12> beat_chroma_counts(const Phrase& phrase, int64_t bar, int64_t beat,
                                                 int64_t track) {
    std::array<double, 12> counts{};
    for (int64_t s = beat * kStepsPerBeat; s < (beat + 1) * kStepsPerBeat; ++s)
        for (int64_t row = 0; row < kPitches; ++row)
            if (phrase.at(bar, s, row, track)) counts[static_cast<size_t>(row % 12)] += 1;
    return counts;
}

/// Mean Euclidean distance between the two tracks' per-beat tonal
/// centroids, over beats where both tracks sound.
inline MetricValue tonal_distance(std::span<const Phrase> phrases, int64_t track_a,
                                  int64_t track_b) {
    if (track_a == track_b) return {0.0, true};
    int64_t beats = 0;
    double sum = 0;
    for (const auto& p : phrases)
        for (int64_t b = 0; b < p.bars(); ++b)
            for (int64_t beat = 0; beat < kBeatsPerBar; ++beat) {
                const auto ca = beat_chroma_counts(p, b, beat, track_a);
                const auto cb = beat_chroma_counts(p, b, beat, track_b);
                double na = 0, nb = 0;
                for (int i = 0; i < 12; ++i) {
                    na += ca[static_cast<size_t>(i)];
                    nb += cb[static_cast<size_t>(i)];
                }
                if (na <= 0 || nb <= 0) continue;
                const auto za = tonal_centroid(ca), zb = tonal_centroid(cb);
                double d2 = 0;
                for (int i = 0; i < 6; ++i) {
                    const double d = za[static_cast<size_t>(i)] - zb[static_cast<size_t>(i)];
                    d2 += d * d;
                }
                sum += std::sqrt(d2);
                ++beats;
            }
    if (beats == 0) return {0.0, false};
    return {sum / static_cast<double>(beats), true};
}

struct TrackMetrics {
    double eb = 0;
    MetricValue upc;
    MetricValue qn;
};

/// Per-track EB/UPC/QN plus TD between one designated track pair.
struct MetricsReport {
    uint64_t iteration = 0;
    std::vector<std::string> tracks;
    std::vector<TrackMetrics> per_track;
    int64_t td_track_a = 0, td_track_b = 1;
    MetricValue td;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["iteration"] = iteration;
        nlohmann::ordered_json per;
        for (size_t i = 0; i < tracks.size(); ++i) {
            nlohmann::ordered_json t;
            t["eb"] = per_track[i].eb;
            t["upc"] = per_track[i].upc.value;
            t["upc_defined"] = per_track[i].upc.defined;
            t["qn"] = per_track[i].qn.value;
            t["qn_defined"] = per_track[i].qn.defined;
            per[tracks[i]] = std::move(t);
        }
        j["per_track"] = std::move(per);
        j["td"] = td.value;
        j["td_defined"] = td.defined;
        j["td_tracks"] = {tracks[static_cast<size_t>(td_track_a)],
                          tracks[static_cast<size_t>(td_track_b)]};
        return j;
    }
};

/// Full report over a set of phrases; TD between `td_a` and `td_b`.
inline MetricsReport evaluate_phrases(std::span<const Phrase> phrases, int64_t td_a = 0,
                                      int64_t td_b = 1, uint64_t iteration = 0) {
    if (phrases.empty()) throw DataError("evaluate_phrases: no phrases");
    MetricsReport report;
    report.iteration = iteration;
    report.tracks = phrases[0].names();
    report.td_track_a = td_a;
    report.td_track_b = td_b;
    for (int64_t t = 0; t < phrases[0].tracks(); ++t) {
        TrackMetrics m;
        m.eb = empty_bars(phrases, t);
        m.upc = used_pitch_classes(phrases, t);
        m.qn = qualified_notes(phrases, t);
        report.per_track.push_back(m);
    }
    report.td = tonal_distance(phrases, td_a, td_b);
    return report;
}

}  // namespace arranger
