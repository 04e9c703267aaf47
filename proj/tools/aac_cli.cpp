// Command-line front end: synth-data, train, decode, evaluate, ablate,
// gradcheck, plot.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "aac/grad_check.hpp"
#include "aac/harness.hpp"

using namespace aac;
using namespace aac::harness;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

ExperimentConfig config_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
    ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
        set_value(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

std::optional<std::filesystem::path> opt_path(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::filesystem::path(s);
}

const std::vector<synth::CaptionedClip>& pick_split(const Experiment& exp, const std::string& split) {
    if (split == "train") return exp.corpus.train;
    if (split == "val") return exp.corpus.val;
    if (split == "test") return exp.corpus.test;
    throw std::invalid_argument("unknown split '" + split + "'");
}

// Candidates file: one JSON object per line with "id" and "caption".
std::vector<std::string> read_candidates(const std::filesystem::path& path, const std::vector<synth::CaptionedClip>& clips) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::map<std::string, std::string> by_id;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        by_id[j.at("id").get<std::string>()] = j.at("caption").get<std::string>();
    }
    std::vector<std::string> out;
    for (const auto& c : clips) {
        auto it = by_id.find(c.id);
        if (it == by_id.end()) throw std::runtime_error(path.string() + ": no caption for clip " + c.id);
        out.push_back(it->second);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Audio captioning with sentence-embedding regression: training and evaluation tools"};
    app.require_subcommand(1);

    std::string config_path, corpus_dir, out, checkpoint, split = "test", spice_path, candidates_path, aggregation = "mean";
    std::vector<std::string> sets, runs;
    std::size_t seeds = 0, stop_after = 0;
    double eps = 1e-5, rtol = 1e-4;
    bool verbose = false, cross_ref = false, with_items = false;

    auto* synth_cmd = app.add_subcommand("synth-data", "Generate the synthetic corpus");
    synth_cmd->add_option("--config", config_path, "Experiment config file");
    synth_cmd->add_option("--set", sets, "Override a config key (section.key=value)");
    synth_cmd->add_option("--out", out, "Output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "Train one model");
    train_cmd->add_option("--config", config_path, "Experiment config file")->required();
    train_cmd->add_option("--set", sets, "Override a config key (section.key=value)");
    train_cmd->add_option("--corpus", corpus_dir, "Load the corpus from this directory instead of generating it");
    train_cmd->add_option("--out", out, "Run directory")->required();
    train_cmd->add_option("--resume", checkpoint, "Continue from this last.ckpt");
    train_cmd->add_option("--stop-after", stop_after, "Stop once this many epochs are complete");
    train_cmd->add_flag("-v,--verbose", verbose, "Print one line per epoch");

    auto* decode_cmd = app.add_subcommand("decode", "Caption a split with a trained checkpoint");
    decode_cmd->add_option("--checkpoint", checkpoint, "best.ckpt or last.ckpt")->required();
    decode_cmd->add_option("--corpus", corpus_dir, "Corpus directory (default: regenerate from the checkpoint config)");
    decode_cmd->add_option("--split", split, "train, val or test");
    decode_cmd->add_option("--out", out, "Output JSON lines")->required();

    auto* eval_cmd = app.add_subcommand("evaluate", "Score captions against the references of a split");
    eval_cmd->add_option("--config", config_path, "Experiment config (for the corpus and sentence encoder)");
    eval_cmd->add_option("--set", sets, "Override a config key (section.key=value)");
    eval_cmd->add_option("--checkpoint", checkpoint, "Decode with this checkpoint");
    eval_cmd->add_option("--candidates", candidates_path, "JSON lines with id and caption");
    eval_cmd->add_option("--corpus", corpus_dir, "Corpus directory");
    eval_cmd->add_option("--split", split, "train, val or test");
    eval_cmd->add_option("--spice-scores", spice_path, "One SPICE score per clip, in split order");
    eval_cmd->add_option("--aggregation", aggregation, "Reference aggregation for SBERT: mean or max");
    eval_cmd->add_flag("--cross-reference", cross_ref, "Score the references against each other instead");
    eval_cmd->add_flag("--items", with_items, "Include per-item scores");
    eval_cmd->add_option("--out", out, "Report JSON (default stdout)");

    auto* ablate_cmd = app.add_subcommand("ablate", "Run the tokenizer x lambda x weight-decay matrix");
    ablate_cmd->add_option("--config", config_path, "Experiment config file")->required();
    ablate_cmd->add_option("--set", sets, "Override a config key (section.key=value)");
    ablate_cmd->add_option("--corpus", corpus_dir, "Corpus directory");
    ablate_cmd->add_option("--seeds", seeds, "Seeds per cell (default train.n_seeds)");
    ablate_cmd->add_option("--out", out, "Output directory")->required();
    ablate_cmd->add_flag("-v,--verbose", verbose, "Print per-epoch progress");

    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
    grad_cmd->add_option("--seeds", seeds, "Number of seeds")->default_val(10);
    grad_cmd->add_option("--eps", eps, "Central-difference step");
    grad_cmd->add_option("--rtol", rtol, "Maximum relative error");

    auto* plot_cmd = app.add_subcommand("plot", "Overlay learning curves");
    plot_cmd->add_option("--run", runs, "LABEL=curve.csv or LABEL@ROW=curve.csv")->required();
    plot_cmd->add_option("--out", out, "Output prefix; writes PREFIX.csv and PREFIX.svg")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth_cmd) {
            const auto cfg = config_with_overrides(config_path, sets);
            const auto grammar = synth::EventGrammar::standard(cfg.data.d_enc, cfg.data.seed);
            const auto corpus = synth::generate_corpus(cfg.data);
            synth::save_corpus(out, corpus, grammar);
            nlohmann::json stats;
            stats["train"] = synth::dataset_stats(corpus.train, grammar).to_json();
            stats["val"] = synth::dataset_stats(corpus.val, grammar).to_json();
            stats["test"] = synth::dataset_stats(corpus.test, grammar).to_json();
            write_text(std::filesystem::path(out) / "stats.json", stats.dump(2) + "\n");
            std::cout << stats.dump(2) << "\n";
        } else if (*train_cmd) {
            const auto cfg = config_with_overrides(config_path, sets);
            const auto exp = prepare(cfg, opt_path(corpus_dir));
            std::filesystem::create_directories(out);
            write_text(std::filesystem::path(out) / "manifest.json", manifest(exp).dump(2) + "\n");
            write_text(std::filesystem::path(out) / "config.cfg", serialize(cfg));
            TrainOptions to;
            to.out_dir = out;
            to.verbose = verbose;
            if (!checkpoint.empty()) to.resume = load_checkpoint(checkpoint);
            if (stop_after > 0) to.stop_after = stop_after;
            const auto r = train(exp, to);
            nlohmann::json summary;
            summary["epochs_completed"] = r.last.epoch;
            summary["best_epoch"] = r.best_epoch;
            summary["best_val_fense"] = metrics::round6(r.best_fense);
            summary["final_decayed_norm"] = metrics::round6(r.final_decayed_norm);
            summary["final_exempt_norm"] = metrics::round6(r.final_exempt_norm);
            write_text(std::filesystem::path(out) / "summary.json", summary.dump(2) + "\n");
            std::cout << summary.dump(2) << "\n";
        } else if (*decode_cmd) {
            const auto ck = load_checkpoint(checkpoint);
            const auto exp = prepare(parse_config(ck.config), opt_path(corpus_dir));
            const auto model = restore_model(ck, exp);
            const auto& clips = pick_split(exp, split);
            const auto caps = decode_clips(model, exp, clips);
            std::ostringstream ss;
            for (std::size_t i = 0; i < clips.size(); ++i)
                ss << nlohmann::json{{"id", clips[i].id}, {"caption", caps[i]}}.dump() << "\n";
            write_text(out, ss.str());
        } else if (*eval_cmd) {
            std::optional<Checkpoint> ck;
            if (!checkpoint.empty()) ck = load_checkpoint(checkpoint);
            const auto cfg = ck ? parse_config(ck->config) : config_with_overrides(config_path, sets);
            const auto exp = prepare(cfg, opt_path(corpus_dir));
            const auto& clips = pick_split(exp, split);
            const auto agg = metrics::ref_aggregation_from_string(aggregation);
            nlohmann::json report;
            if (cross_ref) {
                std::vector<metrics::EvalItem> items;
                for (const auto& c : clips) items.push_back({"", c.captions});
                const auto res = metrics::cross_reference(items, *exp.encoder, agg);
                report = res.report.to_json(false);
                report["excluded"] = res.excluded;
            } else {
                std::vector<std::string> caps;
                if (ck) {
                    caps = decode_clips(restore_model(*ck, exp), exp, clips);
                } else if (!candidates_path.empty()) {
                    caps = read_candidates(candidates_path, clips);
                } else {
                    throw std::invalid_argument("evaluate needs --checkpoint, --candidates or --cross-reference");
                }
                metrics::EvaluateOptions eo;
                eo.aggregation = agg;
                if (!spice_path.empty()) eo.spice = metrics::load_spice_scores(spice_path);
                report = metrics::evaluate(eval_items(caps, clips), *exp.encoder, eo).to_json(with_items);
            }
            if (out.empty())
                std::cout << report.dump(2) << "\n";
            else
                write_text(out, report.dump(2) + "\n");
        } else if (*ablate_cmd) {
            const auto cfg = config_with_overrides(config_path, sets);
            const auto base = prepare(cfg, opt_path(corpus_dir));
            AblationOptions ao;
            ao.n_seeds = seeds > 0 ? seeds : cfg.train.n_seeds;
            ao.out_dir = std::filesystem::path(out) / "runs";
            ao.verbose = verbose;
            const auto rep = run_ablation(base, ao);
            write_text(std::filesystem::path(out) / "manifest.json", manifest(base).dump(2) + "\n");
            write_text(std::filesystem::path(out) / "ablation.json", rep.to_json().dump(2) + "\n");
            write_text(std::filesystem::path(out) / "ablation.md", rep.to_markdown());
            std::cout << rep.to_markdown();
            for (const auto& c : rep.cells)
                if (c.failed()) return 1;
        } else if (*grad_cmd) {
            const auto rows = run_grad_suite(seeds, eps, rtol);
            bool ok = true;
            double worst = 0.0;
            for (const auto& r : rows) {
                worst = std::max(worst, r.report.max_rel_error);
                if (!r.report.passed) {
                    ok = false;
                    std::printf("FAIL %-20s seed %llu rel %.3e at %s\n", r.name.c_str(),
                                static_cast<unsigned long long>(r.seed), r.report.max_rel_error, r.report.worst.c_str());
                }
            }
            std::printf("%zu checks over %zu seeds, max relative error %.3e: %s\n", rows.size(), seeds, worst,
                        ok ? "PASS" : "FAIL");
            return ok ? 0 : 1;
        } else if (*plot_cmd) {
            std::vector<CurveSeries> series;
            for (const auto& r : runs) {
                const auto eq = r.find('=');
                if (eq == std::string::npos) throw std::invalid_argument("--run expects LABEL=path, got '" + r + "'");
                std::string label = r.substr(0, eq), row;
                if (const auto at = label.find('@'); at != std::string::npos) {
                    row = label.substr(at + 1);
                    label = label.substr(0, at);
                }
                series.push_back({label, row, read_curve_csv(r.substr(eq + 1))});
            }
            write_text(out + ".csv", curves_csv(series));
            write_text(out + ".svg", curves_svg(series));
        }
    } catch (const TrainingAborted& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
