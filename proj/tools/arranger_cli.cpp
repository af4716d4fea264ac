// Command-line entry point for the whole pipeline: corpus synthesis,
// lead-sheet ingestion, feature extraction, training of both stages,
// generation, arrangement, evaluation and MIDI export.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "arranger/arranger.hpp"

using namespace arranger;

namespace {

/// Relative outputs land in ARRANGER_OUTPUT_DIR when that is set.
std::string resolve_out(const std::string& path) {
    if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
    if (const char* dir = std::getenv("ARRANGER_OUTPUT_DIR"); dir && *dir)
        return (std::filesystem::path(dir) / path).string();
    return path;
}

std::vector<Phrase> load_phrases(const std::string& path) {
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".mid" || ext == ".midi") return {import_midi(path)};
    return read_corpus(path);
}

LeadSheetDocument parse_leadsheet_file(const std::string& path) {
    auto bytes = io::read_file_bytes(path);
    Json j = Json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded()) throw DataError("lead sheet: invalid JSON in " + path);
    LeadSheetDocument doc;
    doc.key = j.value("key", 0);
    const std::string mode = j.value("mode", "major");
    if (mode == "major")
        doc.mode = ChordQuality::Major;
    else if (mode == "minor")
        doc.mode = ChordQuality::Minor;
    else
        throw DataError("lead sheet: mode must be 'major' or 'minor'");
    doc.beats_per_bar = j.value("beats_per_bar", 4);
    for (const auto& e : j.value("melody", Json::array())) {
        MelodyEvent ev;
        ev.midi_pitch = e.at("pitch").get<int>();
        ev.start = e.at("start").get<double>();
        ev.duration = e.at("duration").get<double>();
        doc.melody.push_back(ev);
    }
    for (const auto& e : j.value("chords", Json::array())) {
        ChordEvent ev;
        ev.root = e.at("root").get<int>();
        const std::string q = e.value("quality", "maj");
        if (q == "maj")
            ev.quality = ChordQuality::Major;
        else if (q == "min")
            ev.quality = ChordQuality::Minor;
        else
            throw DataError("lead sheet: chord quality must be 'maj' or 'min'");
        ev.start = e.at("start").get<double>();
        ev.duration = e.at("duration").get<double>();
        doc.chords.push_back(ev);
    }
    return doc;
}

TrainConfig config_from(const std::string& config_path) {
    if (config_path.empty()) return TrainConfig{};
    auto bytes = io::read_file_bytes(config_path);
    Json j = Json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded()) throw DataError("train config: invalid JSON in " + config_path);
    return TrainConfig::from_json(j);
}

void write_metrics_stream(const std::string& path, const std::vector<Json>& entries) {
    std::string lines;
    for (const auto& e : entries) lines += e.dump() + "\n";
    io::atomic_write_file(path, lines);
}

int run(int argc, char** argv) {
    CLI::App app{"lead-sheet generation and arrangement toolkit"};
    app.require_subcommand(1);

    // ---- ingest ----
    auto* ingest = app.add_subcommand("ingest", "lead-sheet JSON to piano-roll phrases");
    std::string ingest_in, ingest_out;
    bool ingest_keep_key = false;
    ingest->add_option("--in", ingest_in, "lead-sheet JSON document")->required();
    ingest->add_option("--out", ingest_out, "output corpus file")->required();
    ingest->add_flag("--keep-key", ingest_keep_key, "skip the transposition to C");

    // ---- synth-corpus ----
    auto* synth = app.add_subcommand("synth-corpus", "generate a synthetic training corpus");
    std::string synth_kind = "leadsheet", synth_out;
    int64_t synth_count = 512;
    uint64_t synth_seed = 0;
    synth->add_option("--kind", synth_kind, "leadsheet|multitrack")
        ->check(CLI::IsMember({"leadsheet", "multitrack"}));
    synth->add_option("--count", synth_count, "number of phrases");
    synth->add_option("--seed", synth_seed, "corpus seed");
    synth->add_option("--out", synth_out, "output corpus file")->required();

    // ---- extract-features ----
    auto* extract = app.add_subcommand("extract-features", "per-bar harmonic feature dump");
    std::string ex_feature = "chord-roll", ex_in, ex_out;
    extract->add_option("--feature", ex_feature, "chord-roll|chroma-roll|chroma-beats")
        ->check(CLI::IsMember({"chord-roll", "chroma-roll", "chroma-beats"}));
    extract->add_option("--in", ex_in, "phrase/corpus/MIDI input")->required();
    extract->add_option("--out", ex_out, "feature dump file")->required();

    // ---- training (shared options) ----
    std::string tr_corpus, tr_out, tr_config, tr_metrics, tr_resume;
    int64_t tr_iters = -1, tr_batch = -1, tr_eval_interval = -1, tr_eval_samples = -1;
    int64_t tr_seed = -1;
    auto add_train_options = [&](CLI::App* cmd) {
        cmd->add_option("--corpus", tr_corpus, "training corpus file")->required();
        cmd->add_option("--out", tr_out, "checkpoint output")->required();
        cmd->add_option("--config", tr_config, "JSON config file (CLI flags override)");
        cmd->add_option("--metrics", tr_metrics, "metrics JSON-lines output");
        cmd->add_option("--resume", tr_resume, "checkpoint to resume from");
        cmd->add_option("--iters", tr_iters, "training iterations");
        cmd->add_option("--batch", tr_batch, "batch size");
        cmd->add_option("--seed", tr_seed, "training seed");
        cmd->add_option("--eval-interval", tr_eval_interval, "iterations between evaluations");
        cmd->add_option("--eval-samples", tr_eval_samples, "phrases per evaluation");
    };
    auto* train_lead = app.add_subcommand("train-leadsheet", "train the lead-sheet model");
    add_train_options(train_lead);
    auto* train_arr = app.add_subcommand("train-arrangement", "train the arrangement model");
    add_train_options(train_arr);
    std::string arr_feature = "chord-roll";
    train_arr->add_option("--feature", arr_feature, "conditioning feature")
        ->check(CLI::IsMember({"chord-roll", "chroma-roll", "chroma-beats"}));

    auto finish_config = [&]() {
        TrainConfig cfg = config_from(tr_config);
        if (tr_iters >= 0) cfg.iterations = tr_iters;
        if (tr_batch >= 0) cfg.batch = tr_batch;
        if (tr_seed >= 0) cfg.seed = static_cast<uint64_t>(tr_seed);
        if (tr_eval_interval >= 0) cfg.eval_interval = tr_eval_interval;
        if (tr_eval_samples >= 0) cfg.eval_samples = tr_eval_samples;
        cfg.diagnostic_checkpoint = resolve_out(tr_out) + ".diagnostic";
        cfg.validate();
        return cfg;
    };

    // ---- generate ----
    auto* generate = app.add_subcommand("generate", "sample lead sheets from a checkpoint");
    std::string gen_ckpt, gen_out;
    int64_t gen_count = 1;
    uint64_t gen_seed = 0;
    bool gen_midi = false;
    generate->add_option("--checkpoint", gen_ckpt, "lead-sheet checkpoint")->required();
    generate->add_option("--count", gen_count, "phrases to generate");
    generate->add_option("--seed", gen_seed, "sampling seed");
    generate->add_option("--out", gen_out, "output corpus file")->required();
    generate->add_flag("--midi", gen_midi, "also write one MIDI file per phrase");

    // ---- arrange ----
    auto* arrange = app.add_subcommand("arrange", "arrange a lead sheet into five tracks");
    std::string ar_feature = "chord-roll", ar_ckpt, ar_in, ar_out, ar_metrics;
    uint64_t ar_seed = 0;
    arrange->add_option("--feature", ar_feature, "conditioning feature")
        ->check(CLI::IsMember({"chord-roll", "chroma-roll", "chroma-beats"}));
    arrange->add_option("--checkpoint", ar_ckpt, "arrangement checkpoint")->required();
    arrange->add_option("--in", ar_in, "lead sheet (JSON document, container or MIDI)")
        ->required();
    arrange->add_option("--out", ar_out, "output MIDI file")->required();
    arrange->add_option("--metrics", ar_metrics, "metrics JSON output (default <out>.json)");
    arrange->add_option("--seed", ar_seed, "sampling seed");

    // ---- evaluate ----
    auto* evaluate = app.add_subcommand("evaluate", "objective metrics of phrases");
    std::string ev_in, ev_tracks, ev_out;
    evaluate->add_option("--in", ev_in, "phrase/corpus/MIDI input")->required();
    evaluate->add_option("--tracks", ev_tracks, "tonal-distance pair, e.g. melody,chord");
    evaluate->add_option("--out", ev_out, "write the report here instead of stdout");

    // ---- export-midi ----
    auto* exportm = app.add_subcommand("export-midi", "phrase container to MIDI");
    std::string xm_in, xm_out;
    int64_t xm_index = 0;
    exportm->add_option("--in", xm_in, "phrase/corpus input")->required();
    exportm->add_option("--out", xm_out, "output MIDI file")->required();
    exportm->add_option("--index", xm_index, "phrase index within a corpus file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        std::cerr << "run with --help for usage\n";
        return 1;
    }

    if (*ingest) {
        auto doc = parse_leadsheet_file(ingest_in);
        auto result = ingest_leadsheet(doc);
        for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
        if (!ingest_keep_key && doc.key != 0)
            for (auto& p : result.phrases) p = transpose_to_c(p, doc.key);
        write_corpus(resolve_out(ingest_out), result.phrases);
        std::cerr << "wrote " << result.phrases.size() << " phrase(s)\n";
        return 0;
    }

    if (*synth) {
        auto phrases = synth_kind == "leadsheet"
                           ? generate_leadsheet_corpus(synth_seed, synth_count)
                           : generate_multitrack_corpus(synth_seed, synth_count);
        write_corpus(resolve_out(synth_out), phrases);
        std::cerr << "wrote " << phrases.size() << " " << synth_kind << " phrase(s)\n";
        return 0;
    }

    if (*extract) {
        auto phrases = load_phrases(ex_in);
        auto dump = extract_features(feature_from_name(ex_feature), phrases);
        write_features(resolve_out(ex_out), dump);
        std::cerr << "wrote " << dump.bars.size() << " bar feature(s)\n";
        return 0;
    }

    if (*train_lead) {
        auto cfg = finish_config();
        LeadsheetTrainer<float> trainer(read_corpus(tr_corpus), cfg);
        if (!tr_resume.empty()) trainer.load(tr_resume);
        const std::string out = resolve_out(tr_out);
        std::vector<Json> stream;
        while (trainer.iteration() < static_cast<uint64_t>(cfg.iterations)) {
            auto losses = trainer.train_step();
            if (trainer.iteration() % static_cast<uint64_t>(cfg.eval_interval) == 0 ||
                trainer.iteration() == static_cast<uint64_t>(cfg.iterations)) {
                auto entry = trainer.evaluate_checkpoint(cfg.eval_samples);
                entry["losses"] = {{"critic", losses.critic},
                                   {"generator", losses.generator},
                                   {"penalty", losses.penalty}};
                stream.push_back(entry);
                if (!tr_metrics.empty()) write_metrics_stream(resolve_out(tr_metrics), stream);
                trainer.save(out);
                std::cerr << "iter " << trainer.iteration() << " critic " << losses.critic
                          << " gen " << losses.generator << "\n";
            }
        }
        trainer.save(out);
        std::cerr << "checkpoint: " << out << "\n";
        return 0;
    }

    if (*train_arr) {
        auto cfg = finish_config();
        ArrangementTrainer<float> trainer(read_corpus(tr_corpus), feature_from_name(arr_feature),
                                          cfg);
        if (!tr_resume.empty()) trainer.load(tr_resume);
        const std::string out = resolve_out(tr_out);
        std::vector<Json> stream;
        while (trainer.iteration() < static_cast<uint64_t>(cfg.iterations)) {
            auto losses = trainer.train_step();
            if (trainer.iteration() % static_cast<uint64_t>(cfg.eval_interval) == 0 ||
                trainer.iteration() == static_cast<uint64_t>(cfg.iterations)) {
                Json entry;
                entry["iteration"] = trainer.iteration();
                entry["losses"] = {{"critic", losses.critic},
                                   {"generator", losses.generator},
                                   {"penalty", losses.penalty}};
                stream.push_back(entry);
                if (!tr_metrics.empty()) write_metrics_stream(resolve_out(tr_metrics), stream);
                trainer.save(out);
                std::cerr << "iter " << trainer.iteration() << " critic " << losses.critic
                          << " gen " << losses.generator << "\n";
            }
        }
        trainer.save(out);
        std::cerr << "checkpoint: " << out << "\n";
        return 0;
    }

    if (*generate) {
        LeadsheetTrainer<float> sampler({}, TrainConfig{});
        sampler.load(gen_ckpt);
        Rng rng(gen_seed);
        auto phrases = sampler.sample_phrases_with(rng, gen_count);
        const std::string out = resolve_out(gen_out);
        write_corpus(out, phrases);
        if (gen_midi) {
            const auto stem = std::filesystem::path(out).replace_extension("").string();
            for (size_t i = 0; i < phrases.size(); ++i)
                export_midi(phrases[i], stem + "_" + std::to_string(i) + ".mid");
        }
        std::cerr << "wrote " << phrases.size() << " phrase(s)\n";
        return 0;
    }

    if (*arrange) {
        const auto variant = feature_from_name(ar_feature);
        ArrangementTrainer<float> trainer({}, variant, TrainConfig{});
        trainer.load(ar_ckpt);

        Phrase lead = [&]() {
            const auto ext = std::filesystem::path(ar_in).extension().string();
            if (ext == ".mid" || ext == ".midi") return import_midi(ar_in);
            auto bytes = io::read_file_bytes(ar_in);
            Json j = Json::parse(bytes.begin(), bytes.end(), nullptr, false);
            if (!j.is_discarded() && j.value("format", "") == "arranger-phrase")
                return phrase_from_json(j);
            if (!j.is_discarded() && j.value("format", "") == "arranger-corpus")
                return read_corpus(ar_in).front();
            auto doc = parse_leadsheet_file(ar_in);
            auto result = ingest_leadsheet(doc);
            for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
            Phrase p = result.phrases.front();
            if (doc.key != 0) p = transpose_to_c(p, doc.key);
            return p;
        }();

        Rng rng(ar_seed);
        Phrase arrangement = arrange_phrase(trainer, lead, rng);
        const std::string out = resolve_out(ar_out);
        export_midi(arrangement, out);

        // metrics report: per-track EB/UPC/QN, TD between piano and bass,
        // and the per-bar cosine between condition and generated beat chroma
        std::vector<Phrase> ps{arrangement};
        auto report = evaluate_phrases(ps, arrangement.track_index("piano"),
                                       arrangement.track_index("bass"));
        Json j;
        j["arrangement"] = report.to_json();
        double cos_sum = 0;
        int cos_n = 0;
        for (int64_t bar = 0; bar < lead.bars(); ++bar) {
            auto cond_beats = chroma_beats(chroma_roll(chord_roll(lead, bar)));
            auto gen_beats = chroma_beats(chroma_roll(arrangement, bar));
            for (int beat = 0; beat < kBeatsPerBar; ++beat) {
                double dot = 0, na = 0, nb = 0;
                for (int pc = 0; pc < kChromaBins; ++pc) {
                    const double a = cond_beats.at(pc, beat), b = gen_beats.at(pc, beat);
                    dot += a * b;
                    na += a * a;
                    nb += b * b;
                }
                if (na > 0) {
                    cos_sum += nb > 0 ? dot / std::sqrt(na * nb) : 0.0;
                    ++cos_n;
                }
            }
        }
        j["condition_chroma_cosine"] = cos_n ? cos_sum / cos_n : 0.0;
        const std::string mpath = ar_metrics.empty() ? out + ".json" : resolve_out(ar_metrics);
        io::atomic_write_file(mpath, j.dump(2) + "\n");
        std::cerr << "wrote " << out << " and " << mpath << "\n";
        return 0;
    }

    if (*evaluate) {
        auto phrases = load_phrases(ev_in);
        int64_t ta = 0, tb = phrases[0].tracks() > 1 ? 1 : 0;
        if (!ev_tracks.empty()) {
            const auto comma = ev_tracks.find(',');
            if (comma == std::string::npos)
                throw DataError("evaluate: --tracks needs two names, e.g. melody,chord");
            ta = phrases[0].track_index(ev_tracks.substr(0, comma));
            tb = phrases[0].track_index(ev_tracks.substr(comma + 1));
        }
        auto report = evaluate_phrases(phrases, ta, tb);
        const std::string text = report.to_json().dump(2) + "\n";
        if (ev_out.empty())
            std::cout << text;
        else
            io::atomic_write_file(resolve_out(ev_out), text);
        return 0;
    }

    if (*exportm) {
        auto phrases = load_phrases(xm_in);
        if (xm_index < 0 || xm_index >= static_cast<int64_t>(phrases.size()))
            throw DataError("export-midi: phrase index out of range");
        export_midi(phrases[static_cast<size_t>(xm_index)], resolve_out(xm_out));
        return 0;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
