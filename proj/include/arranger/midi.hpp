#pragma once

#include <algorithm>
#include <map>

#include "arranger/io.hpp"
#include "arranger/pianoroll.hpp"

namespace arranger {

// Standard MIDI File import/export. Files are written as format 1 with a
// conductor track, 12 ticks per beat (one tick per grid step) and a default
// tempo of 120 BPM. Consecutive active cells of a row merge into one note,
// so import(export(p)) == p for any valid phrase.

namespace midi_detail {

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

inline void put_vlq(std::vector<uint8_t>& out, uint32_t v) {
    uint8_t stack[5];
    int n = 0;
    stack[n++] = v & 0x7F;
    v >>= 7;
    while (v) {
        stack[n++] = static_cast<uint8_t>((v & 0x7F) | 0x80);
        v >>= 7;
    }
    while (n) out.push_back(stack[--n]);
}

struct Event {
    int64_t tick;
    int order;  // stable tie-break: offs before ons at the same tick
    std::vector<uint8_t> bytes;
};

struct TrackData {
    std::vector<std::pair<int64_t, int64_t>> notes_on;  // (row, start step), open
    std::vector<uint8_t> name;
    bool has_notes = false;
    int64_t end_tick = 0;
};

class Reader {
public:
    explicit Reader(const std::vector<uint8_t>& b) : bytes_(b) {}

    uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    uint16_t u16() { return static_cast<uint16_t>((u8() << 8) | u8()); }
    uint32_t u32() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | u8();
        return v;
    }
    uint32_t vlq() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            uint8_t b = u8();
            v = (v << 7) | (b & 0x7F);
            if (!(b & 0x80)) return v;
        }
        throw DataError("midi: malformed variable-length quantity");
    }
    void skip(size_t n) {
        need(n);
        pos_ += n;
    }
    size_t pos() const { return pos_; }
    void seek(size_t p) { pos_ = p; }
    bool at_end() const { return pos_ >= bytes_.size(); }

private:
    void need(size_t n) const {
        if (pos_ + n > bytes_.size()) throw DataError("midi: truncated file");
    }
    const std::vector<uint8_t>& bytes_;
    size_t pos_ = 0;
};

}  // namespace midi_detail

inline constexpr int kMidiTicksPerBeat = 12;
inline constexpr int kMidiTempoUsPerBeat = 500000;  // 120 BPM

inline void export_midi(const Phrase& phrase, const std::string& path) {
    using namespace midi_detail;
    std::vector<uint8_t> file;
    file.insert(file.end(), {'M', 'T', 'h', 'd'});
    put_u32(file, 6);
    put_u16(file, 1);  // format 1
    put_u16(file, static_cast<uint16_t>(1 + phrase.tracks()));
    put_u16(file, kMidiTicksPerBeat);

    const int64_t end_tick = phrase.bars() * kStepsPerBar;

    auto append_track = [&](const std::vector<uint8_t>& payload) {
        file.insert(file.end(), {'M', 'T', 'r', 'k'});
        put_u32(file, static_cast<uint32_t>(payload.size()));
        file.insert(file.end(), payload.begin(), payload.end());
    };

    {  // conductor: tempo + time signature, end marker at the phrase end
        std::vector<uint8_t> t;
        put_vlq(t, 0);
        t.insert(t.end(), {0xFF, 0x51, 0x03});
        t.push_back((kMidiTempoUsPerBeat >> 16) & 0xFF);
        t.push_back((kMidiTempoUsPerBeat >> 8) & 0xFF);
        t.push_back(kMidiTempoUsPerBeat & 0xFF);
        put_vlq(t, 0);
        t.insert(t.end(), {0xFF, 0x58, 0x04, 0x04, 0x02, 0x18, 0x08});
        put_vlq(t, static_cast<uint32_t>(end_tick));
        t.insert(t.end(), {0xFF, 0x2F, 0x00});
        append_track(t);
    }

    for (int64_t track = 0; track < phrase.tracks(); ++track) {
        const uint8_t channel =
            phrase.kind() == PhraseKind::MultiTrack && phrase.names()[track] == "drums"
                ? 9
                : static_cast<uint8_t>(track);
        std::vector<Event> events;
        for (int64_t row = 0; row < kPitches; ++row) {
            int64_t run_start = -1;
            const int64_t total = phrase.bars() * kStepsPerBar;
            for (int64_t s = 0; s <= total; ++s) {
                const bool on = s < total &&
                                phrase.at(s / kStepsPerBar, s % kStepsPerBar, row, track) != 0;
                if (on && run_start < 0) run_start = s;
                if (!on && run_start >= 0) {
                    const uint8_t note = static_cast<uint8_t>(row + kPitchRowToMidi);
                    events.push_back({run_start, 1,
                                      {static_cast<uint8_t>(0x90 | channel), note, 100}});
                    events.push_back({s, 0, {static_cast<uint8_t>(0x80 | channel), note, 0}});
                    run_start = -1;
                }
            }
        }
        std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
            if (a.tick != b.tick) return a.tick < b.tick;
            if (a.order != b.order) return a.order < b.order;
            return a.bytes < b.bytes;
        });

        std::vector<uint8_t> t;
        const std::string& name = phrase.names()[static_cast<size_t>(track)];
        put_vlq(t, 0);
        t.insert(t.end(), {0xFF, 0x03});
        put_vlq(t, static_cast<uint32_t>(name.size()));
        t.insert(t.end(), name.begin(), name.end());

        int64_t cursor = 0;
        for (const auto& e : events) {
            put_vlq(t, static_cast<uint32_t>(e.tick - cursor));
            cursor = e.tick;
            t.insert(t.end(), e.bytes.begin(), e.bytes.end());
        }
        put_vlq(t, static_cast<uint32_t>(end_tick - cursor));
        t.insert(t.end(), {0xFF, 0x2F, 0x00});
        append_track(t);
    }

    io::atomic_write_file(path, file);
}

inline Phrase import_midi(const std::string& path) {
    using namespace midi_detail;
    auto bytes = io::read_file_bytes(path);
    Reader r(bytes);

    if (bytes.size() < 14 || bytes[0] != 'M' || bytes[1] != 'T' || bytes[2] != 'h' ||
        bytes[3] != 'd')
        throw DataError("midi: not a Standard MIDI File: " + path);
    r.skip(4);
    const uint32_t hlen = r.u32();
    const uint16_t format = r.u16();
    const uint16_t ntrks = r.u16();
    const uint16_t division = r.u16();
    if (format > 1) throw DataError("midi: only format 0 and 1 are supported");
    if (division & 0x8000) throw DataError("midi: SMPTE time division is not supported");
    if (division == 0) throw DataError("midi: zero time division");
    r.skip(hlen - 6);

    auto tick_to_step = [&](int64_t tick) {
        return static_cast<int64_t>(
            std::llround(static_cast<double>(tick) * kMidiTicksPerBeat / division));
    };

    struct NoteRun {
        int64_t row, start, end;
    };
    struct ParsedTrack {
        std::vector<NoteRun> runs;
        bool has_notes = false;
        int64_t end_step = 0;
    };
    std::vector<ParsedTrack> tracks;

    for (uint16_t ti = 0; ti < ntrks; ++ti) {
        if (r.u8() != 'M' || r.u8() != 'T' || r.u8() != 'r' || r.u8() != 'k')
            throw DataError("midi: missing MTrk chunk");
        const uint32_t length = r.u32();
        const size_t track_end = r.pos() + length;

        ParsedTrack track;
        std::map<int, int64_t> open;  // (channel<<8)|note -> start step
        int64_t tick = 0;
        uint8_t status = 0;
        while (r.pos() < track_end) {
            tick += r.vlq();
            uint8_t b = r.u8();
            if (b == 0xFF) {
                const uint8_t type = r.u8();
                const uint32_t len = r.vlq();
                if (type == 0x58) {
                    if (len < 2) throw DataError("midi: bad time signature meta");
                    const uint8_t nn = r.u8(), dd = r.u8();
                    r.skip(len - 2);
                    if (nn != 4 || dd != 2)
                        throw DataError("midi: unsupported time signature " + std::to_string(nn) +
                                        "/" + std::to_string(1 << dd) + ", need 4/4");
                } else {
                    r.skip(len);
                }
                if (type == 0x2F) break;
                continue;
            }
            if (b == 0xF0 || b == 0xF7) {
                r.skip(r.vlq());
                continue;
            }
            uint8_t data1;
            if (b & 0x80) {
                status = b;
                data1 = r.u8();
            } else {
                if (!(status & 0x80)) throw DataError("midi: running status without status byte");
                data1 = b;
            }
            const uint8_t kind = status & 0xF0;
            const uint8_t channel = status & 0x0F;
            switch (kind) {
                case 0x90:
                case 0x80: {
                    const uint8_t velocity = r.u8();
                    const int key = (channel << 8) | data1;
                    if (kind == 0x90 && velocity > 0) {
                        if (!open.count(key)) open[key] = tick_to_step(tick);
                    } else {
                        auto it = open.find(key);
                        if (it != open.end()) {
                            const int64_t row = static_cast<int64_t>(data1) - kPitchRowToMidi;
                            const int64_t s0 = it->second, s1 = tick_to_step(tick);
                            if (row >= 0 && row < kPitches && s1 > s0)
                                track.runs.push_back({row, s0, s1});
                            open.erase(it);
                        }
                    }
                    track.has_notes = true;
                    break;
                }
                case 0xA0:
                case 0xB0:
                case 0xE0:
                    r.skip(1);
                    break;
                case 0xC0:
                case 0xD0:
                    break;
                default:
                    throw DataError("midi: unexpected status byte");
            }
        }
        // close any dangling notes at the end of the track
        for (auto& [key, s0] : open) {
            const int64_t row = static_cast<int64_t>(key & 0xFF) - kPitchRowToMidi;
            const int64_t s1 = tick_to_step(tick);
            if (row >= 0 && row < kPitches && s1 > s0) track.runs.push_back({row, s0, s1});
        }
        track.end_step = tick_to_step(tick);
        r.seek(track_end);
        tracks.push_back(std::move(track));
    }

    // Our own files: conductor first, then the phrase tracks. Foreign files:
    // use every track that carries notes.
    std::vector<const ParsedTrack*> phrase_tracks;
    if (tracks.size() >= 2 && !tracks[0].has_notes) {
        for (size_t i = 1; i < tracks.size(); ++i) phrase_tracks.push_back(&tracks[i]);
    } else {
        for (const auto& t : tracks)
            if (t.has_notes) phrase_tracks.push_back(&t);
    }

    PhraseKind kind;
    if (phrase_tracks.size() == 2)
        kind = PhraseKind::LeadSheet;
    else if (phrase_tracks.size() == 5)
        kind = PhraseKind::MultiTrack;
    else
        throw DataError("midi: expected 2 (lead sheet) or 5 (multi-track) note tracks, found " +
                        std::to_string(phrase_tracks.size()));

    int64_t end_step = 0;
    for (const auto* t : phrase_tracks) {
        end_step = std::max(end_step, t->end_step);
        for (const auto& run : t->runs) end_step = std::max(end_step, run.end);
    }
    const int64_t bars = std::max<int64_t>(1, (end_step + kStepsPerBar - 1) / kStepsPerBar);

    Phrase phrase(kind, bars);
    const int64_t total = bars * kStepsPerBar;
    for (size_t t = 0; t < phrase_tracks.size(); ++t)
        for (const auto& run : phrase_tracks[t]->runs)
            for (int64_t s = run.start; s < std::min(run.end, total); ++s)
                phrase.set(s / kStepsPerBar, s % kStepsPerBar, run.row, static_cast<int64_t>(t));
    return phrase;
}

}  // namespace arranger
