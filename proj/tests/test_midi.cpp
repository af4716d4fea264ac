#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "arranger/container.hpp"
#include "arranger/corpus.hpp"
#include "arranger/midi.hpp"
#include "arranger/pianoroll.hpp"

using namespace arranger;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

Phrase random_phrase(PhraseKind kind, int64_t bars, uint64_t seed, double density = 0.03) {
    Rng rng(seed);
    Phrase p(kind, bars);
    const int64_t cells = bars * kStepsPerBar * kPitches * p.tracks();
    for (int64_t i = 0; i < cells; ++i)
        if (rng.uniform() < density)
            p.set(i / (kStepsPerBar * kPitches * p.tracks()) % bars,
                  i / (kPitches * p.tracks()) % kStepsPerBar, i / p.tracks() % kPitches,
                  i % p.tracks());
    return p;
}

}  // namespace

TEST_CASE("midi: empty phrase round-trips with its track and bar counts") {
    Phrase p(PhraseKind::LeadSheet, 8);
    const auto path = tmp_path("arr_empty.mid");
    export_midi(p, path);
    auto back = import_midi(path);
    CHECK(back == p);
    CHECK(back.tracks() == 2);
    CHECK(back.bars() == 8);
}

TEST_CASE("midi: a 12-step note is one beat long") {
    Phrase p(PhraseKind::LeadSheet, 8);
    for (int64_t s = 12; s < 24; ++s) p.set(0, s, 36, 0);
    const auto path = tmp_path("arr_one_note.mid");
    export_midi(p, path);

    // locate the note-on/note-off pair in the raw bytes: ticks equal steps
    auto bytes = io::read_file_bytes(path);
    // find note-on (0x90, key 60) and note-off (0x80, key 60)
    int64_t on_at = -1, off_delta = -1;
    for (size_t i = 0; i + 2 < bytes.size(); ++i) {
        if (bytes[i] == 0x90 && bytes[i + 1] == 60 && on_at < 0) on_at = bytes[i - 1];
        if (bytes[i] == 0x80 && bytes[i + 1] == 60) off_delta = bytes[i - 1];
    }
    CHECK(on_at == 12);     // delta from track start
    CHECK(off_delta == 12); // one beat at 12 ticks per beat

    CHECK(import_midi(path) == p);
}

TEST_CASE("midi: random phrases round-trip exactly") {
    for (uint64_t seed = 0; seed < 6; ++seed) {
        auto kind = seed % 2 ? PhraseKind::LeadSheet : PhraseKind::MultiTrack;
        auto p = random_phrase(kind, 4 + static_cast<int64_t>(seed), seed * 31 + 5);
        const auto path = tmp_path("arr_rt_" + std::to_string(seed) + ".mid");
        export_midi(p, path);
        CHECK(import_midi(path) == p);
    }
}

TEST_CASE("midi: corpus phrases round-trip exactly") {
    for (const auto& p : generate_leadsheet_corpus(42, 3)) {
        const auto path = tmp_path("arr_corpus_rt.mid");
        export_midi(p, path);
        CHECK(import_midi(path) == p);
    }
}

TEST_CASE("midi: unreadable and malformed files raise data errors") {
    CHECK_THROWS_AS(import_midi("/nonexistent/file.mid"), DataError);
    const auto path = tmp_path("arr_bad.mid");
    io::atomic_write_file(path, std::string("not a midi file"));
    CHECK_THROWS_AS(import_midi(path), DataError);
}

TEST_CASE("midi: non-4/4 time signature is rejected") {
    Phrase p(PhraseKind::LeadSheet, 8);
    const auto path = tmp_path("arr_34.mid");
    export_midi(p, path);
    auto bytes = io::read_file_bytes(path);
    // patch the time-signature meta (FF 58 04 nn dd): set 3/4
    for (size_t i = 0; i + 4 < bytes.size(); ++i) {
        if (bytes[i] == 0xFF && bytes[i + 1] == 0x58 && bytes[i + 2] == 0x04) {
            bytes[i + 3] = 3;
            break;
        }
    }
    io::atomic_write_file(path, bytes);
    CHECK_THROWS_AS(import_midi(path), DataError);
}

TEST_CASE("phrase container: bit-exact round trip") {
    for (uint64_t seed = 0; seed < 4; ++seed) {
        auto p = random_phrase(seed % 2 ? PhraseKind::MultiTrack : PhraseKind::LeadSheet, 3,
                               seed + 100, 0.1);
        const auto path = tmp_path("arr_container.pr");
        write_phrase(path, p);
        CHECK(read_phrase(path) == p);
    }
}

TEST_CASE("phrase container: header fields are validated") {
    const auto path = tmp_path("arr_container_bad.pr");
    io::atomic_write_file(path, std::string("{\"format\":\"other\"}"));
    CHECK_THROWS_AS(read_phrase(path), DataError);
    io::atomic_write_file(path, std::string("{ not json"));
    CHECK_THROWS_AS(read_phrase(path), DataError);

    Json j = phrase_to_json(Phrase(PhraseKind::LeadSheet, 2));
    j["data"] = "AAAA";  // wrong payload size
    io::atomic_write_file(path, j.dump());
    CHECK_THROWS_AS(read_phrase(path), DataError);
}

TEST_CASE("corpus container: list round trip") {
    auto phrases = generate_leadsheet_corpus(3, 5);
    const auto path = tmp_path("arr_corpus.json");
    write_corpus(path, phrases);
    auto back = read_corpus(path);
    REQUIRE(back.size() == phrases.size());
    for (size_t i = 0; i < back.size(); ++i) CHECK(back[i] == phrases[i]);
}

TEST_CASE("base64 round trip") {
    Rng rng(77);
    for (size_t len : {0u, 1u, 2u, 3u, 4u, 57u, 100u}) {
        std::vector<uint8_t> data(len);
        for (auto& b : data) b = static_cast<uint8_t>(rng.below(256));
        CHECK(io::base64_decode(io::base64_encode(data)) == data);
    }
}

TEST_CASE("midi: ingest -> export -> import reproduces the quantized score") {
    LeadSheetDocument doc;
    for (int b = 0; b < 8; ++b) {
        doc.melody.push_back({60 + (b % 5), 4.0 * b, 1.5});
        doc.melody.push_back({67, 4.0 * b + 2.0, 2.0});
        doc.chords.push_back({b % 2 ? 7 : 0, ChordQuality::Major, 4.0 * b, 4.0});
    }
    auto phrases = ingest_leadsheet(doc).phrases;
    REQUIRE(phrases.size() == 1);
    const auto path = (std::filesystem::temp_directory_path() / "arr_ingest_rt.mid").string();
    export_midi(phrases[0], path);
    CHECK(import_midi(path) == phrases[0]);
}
