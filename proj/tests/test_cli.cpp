// End-to-end coverage of every CLI verb on the synthetic corpus.
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "arranger/container.hpp"
#include "arranger/midi.hpp"

using namespace arranger;
namespace fs = std::filesystem;

namespace {

const std::string kCli = ARRANGER_CLI_PATH;

fs::path work_dir() {
    static fs::path dir = [] {
        auto d = fs::temp_directory_path() / "arranger_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run_cli(const std::string& args) {
    const std::string cmd = kCli + " " + args + " 2>" + (work_dir() / "stderr.log").string();
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

void write_tiny_config(const fs::path& p) {
    std::ofstream f(p);
    f << R"({"batch":2,"n_critic":1,"iterations":2,"eval_interval":1,"eval_samples":2,"seed":3})";
}

}  // namespace

TEST_CASE("cli: usage errors exit 1, missing data exits 2") {
    CHECK(run_cli("no-such-verb") == 1);
    CHECK(run_cli("synth-corpus") == 1);  // missing required --out
    CHECK(run_cli("evaluate --in " + path("missing.json")) == 2);
    CHECK(run_cli("--help") == 0);
}

TEST_CASE("cli: synth-corpus writes both corpus kinds") {
    CHECK(run_cli("synth-corpus --kind leadsheet --count 6 --seed 5 --out " +
                  path("lead_corpus.json")) == 0);
    CHECK(run_cli("synth-corpus --kind multitrack --count 6 --seed 5 --out " +
                  path("multi_corpus.json")) == 0);
    CHECK(read_corpus(path("lead_corpus.json")).size() == 6);
    CHECK(read_corpus(path("multi_corpus.json")).size() == 6);
}

TEST_CASE("cli: ingest converts the sample lead sheet without mutating it") {
    const std::string sample = std::string(ARRANGER_SOURCE_DIR) + "/samples/lead_sheet.json";
    const std::string before = slurp(sample);
    CHECK(run_cli("ingest --in " + sample + " --out " + path("ingested.json")) == 0);
    CHECK(slurp(sample) == before);
    auto phrases = read_corpus(path("ingested.json"));
    REQUIRE(phrases.size() == 1);
    CHECK(phrases[0].kind() == PhraseKind::LeadSheet);
    CHECK(phrases[0].bars() == 8);
}

TEST_CASE("cli: extract-features produces a readable dump for each feature") {
    REQUIRE(fs::exists(path("lead_corpus.json")));
    for (const std::string f : {"chord-roll", "chroma-roll", "chroma-beats"}) {
        CHECK(run_cli("extract-features --feature " + f + " --in " + path("lead_corpus.json") +
                      " --out " + path("feat_" + f + ".json")) == 0);
        auto dump = read_features(path("feat_" + f + ".json"));
        CHECK(dump.bars.size() == 6 * 8);
        CHECK(feature_name(dump.kind) == f);
    }
}

TEST_CASE("cli: train-leadsheet, generate, evaluate, export-midi") {
    write_tiny_config(work_dir() / "tiny.json");
    const std::string before = slurp(path("lead_corpus.json"));
    CHECK(run_cli("train-leadsheet --corpus " + path("lead_corpus.json") + " --config " +
                  path("tiny.json") + " --metrics " + path("lead_metrics.jsonl") + " --out " +
                  path("lead.ckpt")) == 0);
    CHECK(slurp(path("lead_corpus.json")) == before);  // inputs untouched
    CHECK(fs::exists(path("lead.ckpt")));
    CHECK(fs::exists(path("lead_metrics.jsonl")));

    // resume runs and finishes immediately at the configured iteration count
    CHECK(run_cli("train-leadsheet --corpus " + path("lead_corpus.json") + " --config " +
                  path("tiny.json") + " --resume " + path("lead.ckpt") + " --out " +
                  path("lead2.ckpt")) == 0);

    CHECK(run_cli("generate --checkpoint " + path("lead.ckpt") + " --count 2 --seed 7 --out " +
                  path("gen_a.json") + " --midi") == 0);
    CHECK(run_cli("generate --checkpoint " + path("lead.ckpt") + " --count 2 --seed 7 --out " +
                  path("gen_b.json")) == 0);
    CHECK(slurp(path("gen_a.json")) == slurp(path("gen_b.json")));  // bit-identical
    CHECK(fs::exists(path("gen_a_0.mid")));
    CHECK(fs::exists(path("gen_a_1.mid")));

    CHECK(run_cli("evaluate --in " + path("gen_a.json") + " --tracks melody,chord --out " +
                  path("gen_report.json")) == 0);
    auto report = Json::parse(slurp(path("gen_report.json")));
    CHECK(report["per_track"].contains("melody"));

    CHECK(run_cli("export-midi --in " + path("gen_a.json") + " --index 1 --out " +
                  path("gen_a1.mid")) == 0);
    CHECK_NOTHROW(import_midi(path("gen_a1.mid")));
}

TEST_CASE("cli: evaluate reports EB 1.0 for an empty phrase") {
    write_phrase(path("empty.pr"), Phrase(PhraseKind::LeadSheet, 8));
    CHECK(run_cli("evaluate --in " + path("empty.pr") + " --tracks melody,chord --out " +
                  path("empty_report.json")) == 0);
    auto report = Json::parse(slurp(path("empty_report.json")));
    CHECK(report["per_track"]["melody"]["eb"].get<double>() == 1.0);
    CHECK(report["per_track"]["chord"]["eb"].get<double>() == 1.0);
}

TEST_CASE("cli: train-arrangement and arrange produce a five-track MIDI plus metrics") {
    write_tiny_config(work_dir() / "tiny.json");
    REQUIRE(fs::exists(path("multi_corpus.json")));
    CHECK(run_cli("train-arrangement --feature chord-roll --corpus " + path("multi_corpus.json") +
                  " --config " + path("tiny.json") + " --out " + path("arr.ckpt")) == 0);
    CHECK(fs::exists(path("arr.ckpt")));

    const std::string sample = std::string(ARRANGER_SOURCE_DIR) + "/samples/lead_sheet.json";
    CHECK(run_cli("arrange --feature chord-roll --checkpoint " + path("arr.ckpt") + " --in " +
                  sample + " --out " + path("arrangement.mid") + " --seed 11") == 0);
    auto arrangement = import_midi(path("arrangement.mid"));
    CHECK(arrangement.kind() == PhraseKind::MultiTrack);
    CHECK(arrangement.bars() == 8);
    auto metrics = Json::parse(slurp(path("arrangement.mid.json")));
    CHECK(metrics.contains("condition_chroma_cosine"));
    CHECK(metrics["arrangement"]["per_track"].contains("piano"));

    // variant mismatch between flag and checkpoint is a data error
    CHECK(run_cli("arrange --feature chroma-roll --checkpoint " + path("arr.ckpt") + " --in " +
                  sample + " --out " + path("arrangement2.mid")) == 2);
}

TEST_CASE("cli: ARRANGER_OUTPUT_DIR anchors relative outputs") {
    const auto outdir = work_dir() / "envout";
    fs::create_directories(outdir);
    setenv("ARRANGER_OUTPUT_DIR", outdir.c_str(), 1);
    CHECK(run_cli("synth-corpus --kind leadsheet --count 1 --seed 1 --out env_corpus.json") == 0);
    unsetenv("ARRANGER_OUTPUT_DIR");
    CHECK(fs::exists(outdir / "env_corpus.json"));
}
