#pragma once

#include <json.hpp>

#include "arranger/features.hpp"
#include "arranger/io.hpp"
#include "arranger/pianoroll.hpp"

namespace arranger {

using Json = nlohmann::ordered_json;

// Phrase container: a JSON header (shape, track names) plus a base64
// bit-packed payload, bit-exact on round trip.

namespace detail {

inline std::vector<uint8_t> pack_bits(const std::vector<uint8_t>& cells) {
    std::vector<uint8_t> out((cells.size() + 7) / 8, 0);
    for (size_t i = 0; i < cells.size(); ++i)
        if (cells[i]) out[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
    return out;
}

inline std::vector<uint8_t> unpack_bits(const std::vector<uint8_t>& packed, size_t count) {
    if (packed.size() != (count + 7) / 8)
        throw DataError("phrase container: payload size does not match header shape");
    std::vector<uint8_t> out(count, 0);
    for (size_t i = 0; i < count; ++i)
        out[i] = (packed[i / 8] >> (i % 8)) & 1u;
    return out;
}

}  // namespace detail

inline Json phrase_to_json(const Phrase& phrase) {
    Json j;
    j["format"] = "arranger-phrase";
    j["version"] = 1;
    j["kind"] = phrase.kind() == PhraseKind::LeadSheet ? "leadsheet" : "multitrack";
    j["bars"] = phrase.bars();
    j["steps"] = kStepsPerBar;
    j["pitches"] = kPitches;
    j["tracks"] = phrase.names();
    j["data"] = io::base64_encode(detail::pack_bits(phrase.cells()));
    return j;
}

inline Phrase phrase_from_json(const Json& j) {
    if (!j.is_object() || j.value("format", "") != "arranger-phrase")
        throw DataError("phrase container: missing or wrong format marker");
    if (j.value("version", 0) != 1) throw DataError("phrase container: unsupported version");
    const std::string kind_s = j.value("kind", "");
    PhraseKind kind;
    if (kind_s == "leadsheet")
        kind = PhraseKind::LeadSheet;
    else if (kind_s == "multitrack")
        kind = PhraseKind::MultiTrack;
    else
        throw DataError("phrase container: unknown kind '" + kind_s + "'");
    const int64_t bars = j.value("bars", int64_t(0));
    if (bars < 1) throw DataError("phrase container: bad bar count");
    if (j.value("steps", int64_t(0)) != kStepsPerBar ||
        j.value("pitches", int64_t(0)) != kPitches)
        throw DataError("phrase container: unsupported grid size");
    const size_t count =
        static_cast<size_t>(bars * kStepsPerBar * kPitches * track_count(kind));
    auto packed = io::base64_decode(j.value("data", ""));
    return Phrase(kind, bars, detail::unpack_bits(packed, count));
}

inline void write_phrase(const std::string& path, const Phrase& phrase) {
    io::atomic_write_file(path, phrase_to_json(phrase).dump(2) + "\n");
}

inline Phrase read_phrase(const std::string& path) {
    auto bytes = io::read_file_bytes(path);
    Json j = Json::parse(bytes.begin(), bytes.end(), nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw DataError("phrase container: invalid JSON in " + path);
    return phrase_from_json(j);
}

// Corpus files hold a list of phrase objects under one header.

inline void write_corpus(const std::string& path, const std::vector<Phrase>& phrases) {
    Json j;
    j["format"] = "arranger-corpus";
    j["version"] = 1;
    j["count"] = phrases.size();
    Json list = Json::array();
    for (const auto& p : phrases) list.push_back(phrase_to_json(p));
    j["phrases"] = std::move(list);
    io::atomic_write_file(path, j.dump() + "\n");
}

inline std::vector<Phrase> read_corpus(const std::string& path) {
    auto bytes = io::read_file_bytes(path);
    Json j = Json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded()) throw DataError("corpus: invalid JSON in " + path);
    if (j.value("format", "") == "arranger-phrase") return {phrase_from_json(j)};
    if (j.value("format", "") != "arranger-corpus")
        throw DataError("corpus: missing format marker in " + path);
    std::vector<Phrase> out;
    for (const auto& pj : j.at("phrases")) out.push_back(phrase_from_json(pj));
    if (out.empty()) throw DataError("corpus: no phrases in " + path);
    return out;
}

// Feature dump: per-bar matrices under a feature-kind header. Cell values
// are stored as integer numerators over a fixed denominator (1 for the
// binary features, 12 for chroma-beats), so round trips are exact.

struct FeatureDump {
    FeatureKind kind = FeatureKind::ChordRoll;
    int64_t rows = 0, cols = 0, denominator = 1;
    std::vector<std::vector<uint8_t>> bars;  // numerators, row-major
};

inline FeatureDump extract_features(FeatureKind kind, const std::vector<Phrase>& phrases) {
    FeatureDump dump;
    dump.kind = kind;
    switch (kind) {
        case FeatureKind::ChordRoll:
            dump.rows = kPitches;
            dump.cols = kStepsPerBar;
            dump.denominator = 1;
            break;
        case FeatureKind::ChromaRoll:
            dump.rows = kChromaBins;
            dump.cols = kStepsPerBar;
            dump.denominator = 1;
            break;
        case FeatureKind::ChromaBeats:
            dump.rows = kChromaBins;
            dump.cols = kBeatsPerBar;
            dump.denominator = kStepsPerBeat;
            break;
    }
    for (const auto& p : phrases) {
        for (int64_t b = 0; b < p.bars(); ++b) {
            std::vector<uint8_t> cells(static_cast<size_t>(dump.rows * dump.cols), 0);
            if (kind == FeatureKind::ChordRoll) {
                auto f = chord_roll(p, b);
                for (int64_t r = 0; r < dump.rows; ++r)
                    for (int64_t c = 0; c < dump.cols; ++c)
                        cells[static_cast<size_t>(r * dump.cols + c)] = f.at(r, c);
            } else if (kind == FeatureKind::ChromaRoll) {
                auto f = chroma_roll(p, b);
                for (int64_t r = 0; r < dump.rows; ++r)
                    for (int64_t c = 0; c < dump.cols; ++c)
                        cells[static_cast<size_t>(r * dump.cols + c)] =
                            f.at(static_cast<int>(r), c);
            } else {
                auto f = chroma_beats(chroma_roll(p, b));
                for (int64_t r = 0; r < dump.rows; ++r)
                    for (int64_t c = 0; c < dump.cols; ++c)
                        cells[static_cast<size_t>(r * dump.cols + c)] = static_cast<uint8_t>(
                            std::llround(f.at(static_cast<int>(r), static_cast<int>(c)) *
                                         dump.denominator));
            }
            dump.bars.push_back(std::move(cells));
        }
    }
    return dump;
}

inline void write_features(const std::string& path, const FeatureDump& dump) {
    Json j;
    j["format"] = "arranger-features";
    j["version"] = 1;
    j["feature"] = feature_name(dump.kind);
    j["rows"] = dump.rows;
    j["cols"] = dump.cols;
    j["denominator"] = dump.denominator;
    Json bars = Json::array();
    for (const auto& b : dump.bars) bars.push_back(io::base64_encode(b));
    j["bars"] = std::move(bars);
    io::atomic_write_file(path, j.dump() + "\n");
}

inline FeatureDump read_features(const std::string& path) {
    auto bytes = io::read_file_bytes(path);
    Json j = Json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "arranger-features")
        throw DataError("feature dump: bad file " + path);
    FeatureDump dump;
    dump.kind = feature_from_name(j.value("feature", ""));
    dump.rows = j.value("rows", int64_t(0));
    dump.cols = j.value("cols", int64_t(0));
    dump.denominator = j.value("denominator", int64_t(1));
    for (const auto& b : j.at("bars")) {
        auto cells = io::base64_decode(b.get<std::string>());
        if (static_cast<int64_t>(cells.size()) != dump.rows * dump.cols)
            throw DataError("feature dump: bar payload size mismatch");
        dump.bars.push_back(std::move(cells));
    }
    return dump;
}

}  // namespace arranger
