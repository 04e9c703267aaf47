// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails. The training studies read their
// settings from configs/*.cfg.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>

#include "CLI11.hpp"

#include "aac/grad_check.hpp"
#include "aac/harness.hpp"
#include "aac/objectives.hpp"
#include "aac/optim.hpp"
#include "cider_oracle.hpp"
#include "toy_models.hpp"

using namespace aac;
using namespace aac::harness;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ExperimentConfig load(const fs::path& dir, const std::string& name) { return load_config(dir / (name + ".cfg")); }

// ---- pure checks ------------------------------------------------------------

Outcome gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto rows = run_grad_suite(10);
    const double secs = seconds_since(t0);
    double worst = 0;
    std::string where;
    std::set<std::uint64_t> seeds;
    bool all = true;
    for (const auto& r : rows) {
        seeds.insert(r.seed);
        all = all && r.report.passed;
        if (r.report.max_rel_error >= worst) {
            worst = r.report.max_rel_error;
            where = r.name + "@" + std::to_string(r.seed);
        }
    }
    return {all && worst < 1e-4 && seeds.size() >= 10 && secs < 120,
            fmt("%zu checks over %zu seeds, max rel err %.3g (%s), %.1fs", rows.size(), seeds.size(), worst,
                where.c_str(), secs)};
}

Outcome smooth_l1_values() {
    using loss::smooth_l1;
    auto value = [](double d, double beta) { return smooth_l1(Tensor::scalar(d), Tensor::scalar(0.0), beta).item(); };
    auto slope = [](double d, double beta) {
        Tensor p = Tensor::parameter({1}, {d});
        smooth_l1(p, Tensor::scalar(0.0), beta).backward();
        return p.grad()[0];
    };
    const double a = value(0.5, 1.0), b = value(2.0, 1.0);
    double gap = 0;
    for (double beta : {1.0, 0.3, 2.5})
        for (double edge : {beta, -beta}) {
            gap = std::max(gap, std::abs(value(edge - 1e-9, beta) - value(edge + 1e-9, beta)));
            gap = std::max(gap, std::abs(slope(edge - 1e-9, beta) - slope(edge + 1e-9, beta)));
        }
    return {a == 0.125 && b == 1.5 && gap < 1e-6, fmt("d=0.5 -> %.17g, d=2 -> %.17g, max jump at |d|=beta %.3g", a, b, gap)};
}

Outcome beam_oracle(std::string& info) {
    std::mt19937_64 rng(2024);
    std::size_t mismatched_full = 0, mismatched_greedy = 0, violations = 0, width_drops = 0, width_pairs = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        const std::size_t vocab = std::uniform_int_distribution<std::size_t>(5, 8)(rng);
        const std::size_t max_len = std::uniform_int_distribution<std::size_t>(1, 5)(rng);
        const std::size_t min_len = std::uniform_int_distribution<std::size_t>(1, max_len)(rng);
        // at least one stopword keeps every length reachable
        std::unordered_set<int> stop{static_cast<int>(std::uniform_int_distribution<std::size_t>(3, vocab - 1)(rng))};
        for (std::size_t t = 3; t < vocab; ++t)
            if (std::bernoulli_distribution(0.2)(rng)) stop.insert(static_cast<int>(t));
        testing::RandomTableModel m(vocab, mix(77, trial), 3.0);
        auto cfg = [&](std::size_t beam) {
            decode::DecodeConfig c;
            c.beam_size = beam;
            c.min_len = min_len;
            c.max_len = max_len;
            c.stopword_ids = stop;
            return c;
        };
        const auto full = cfg(1000000);
        const auto exact = decode::exhaustive_search(m, full);
        const auto wide = decode::beam_search(m, full);
        mismatched_full += wide.tokens != exact.tokens || wide.log_prob != exact.log_prob;
        mismatched_greedy += decode::beam_search(m, cfg(1)).tokens != decode::greedy_search(m, cfg(1)).tokens;
        double prev = -INFINITY;
        for (std::size_t w : {1, 2, 3, 4, 1000000}) {
            const auto c = cfg(w);
            const auto h = decode::beam_search(m, c);
            violations += testing::check_constraints(h.tokens, c).any() || !h.finished;
            if (w > 1) {
                ++width_pairs;
                width_drops += h.log_prob < prev;
            }
            prev = h.log_prob;
        }
        violations += testing::check_constraints(exact.tokens, full).any();
    }
    info = fmt("beam width monotonicity: %zu of %zu width increases lowered the score", width_drops, width_pairs);
    return {mismatched_full == 0 && mismatched_greedy == 0 && violations == 0,
            fmt("100 models: %zu full-width mismatches, %zu greedy mismatches, %zu constraint violations", mismatched_full,
                mismatched_greedy, violations)};
}

Outcome cider_oracle() {
    using metrics::EvalItem;
    const std::vector<std::string> lex{"a", "b", "c", "d", "e", "f", "g"};
    std::mt19937_64 rng(99);
    auto sentence = [&] {
        std::uniform_int_distribution<int> len(1, 9), w(0, static_cast<int>(lex.size()) - 1);
        std::string s;
        for (int i = len(rng); i > 0; --i) s += lex[static_cast<std::size_t>(w(rng))] + " ";
        return s;
    };
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<EvalItem> items(std::uniform_int_distribution<std::size_t>(1, 6)(rng));
        for (auto& it : items) {
            it.candidate = sentence();
            for (int r = std::uniform_int_distribution<int>(1, 5)(rng); r > 0; --r) it.references.push_back(sentence());
        }
        const auto got = metrics::cider_d(items);
        double mean = 0;
        for (std::size_t i = 0; i < items.size(); ++i) {
            const double want = testing::oracle_cider(items, i);
            worst = std::max(worst, std::abs(got.per_item[i] - want));
            mean += want / static_cast<double>(items.size());
        }
        worst = std::max(worst, std::abs(got.score - mean));
    }
    std::vector<EvalItem> same{{"a dog barks at the mailman", {"a dog barks at the mailman"}},
                               {"rain falls on a tin roof", {"rain falls on a tin roof", "rain falls on a tin roof"}}};
    std::vector<EvalItem> disjoint{{"a dog barks", {"rain falls softly"}}, {"an engine hums", {"birds chirp outside"}}};
    const double s = metrics::cider_d(same).score, z = metrics::cider_d(disjoint).score;
    return {worst < 1e-9 && s == 10.0 && z == 0.0,
            fmt("50 corpora, max |diff| %.3g; identical %.17g; disjoint %.17g", worst, s, z)};
}

Outcome fense_composition(const Experiment& exp) {
    std::vector<metrics::EvalItem> items;
    const auto& clips = exp.corpus.test;
    const std::vector<std::string> odd{"a dog", "the car passes and", "loudly loudly a dog barks", "dog cat bird",
                                       "a dog barks a dog barks", "the rain falls the engine hums"};
    for (std::size_t i = 0; i < clips.size() && i < 20; ++i)
        items.push_back({i < odd.size() ? odd[i] : clips[i].captions.front(), clips[i].captions});
    const auto rep = metrics::evaluate(items, *exp.encoder);
    std::size_t flagged = 0, clean = 0, wrong = 0;
    for (const auto& it : rep.items) {
        if (it.flags.any()) {
            ++flagged;
            wrong += it.fense != it.sbert / 10.0;
        } else {
            ++clean;
            wrong += it.fense != it.sbert;
        }
    }
    const auto spice_file = fs::temp_directory_path() / "aac_acceptance_spice.txt";
    std::ofstream(spice_file) << "0.181\n";
    const auto spice = metrics::load_spice_scores(spice_file);
    fs::remove(spice_file);
    const double spider = metrics::spider({0.769, {0.769}}, spice).score;
    const bool spider_ok = std::abs(spider - 0.475) < 1e-12;
    return {wrong == 0 && flagged > 0 && clean > 0 && spider_ok,
            fmt("%zu flagged, %zu clean, %zu mismatches; SPIDEr(0.769, 0.181) = %.17g", flagged, clean, wrong, spider)};
}

Outcome cosine_endpoints() {
    bool ok = true;
    std::string worst;
    for (double lr0 : {5e-4, 1e-3, 0.1, 1.0})
        for (std::size_t K : {2, 10, 100, 1000}) {
            const bool good = optim::cosine_lr(0, K, lr0) == lr0 && optim::cosine_lr(K, K, lr0) == 0.0 &&
                              optim::cosine_lr(K / 2, K, lr0) == lr0 / 2;
            if (!good) worst = fmt("lr0=%g K=%zu", lr0, K);
            ok = ok && good;
        }
    return {ok, ok ? "16 (lr0, K) pairs exact" : "mismatch at " + worst};
}

// ---- training checks -----------------------------------------------------

Outcome baseline_recovery(const fs::path& configs) {
    auto cfg = load(configs, "resume");
    cfg.loss.lambda = 0.0;
    auto off = cfg;
    off.loss.ser_enabled = false;
    const auto base = prepare(cfg);
    const auto a = train(base), b = train(with_config(base, off));
    std::size_t differing = 0;
    for (const auto& [name, values] : b.last.model) differing += a.last.model.at(name) != values;
    const bool ok = a.curve == b.curve && differing == 0 && a.best_model.size() == b.best_model.size() + 2 &&
                    a.last.optimizer.step == b.last.optimizer.step;
    return {ok, fmt("%zu epochs; %zu shared tensors differ; curves %s", a.curve.size(), differing,
                    a.curve == b.curve ? "identical" : "differ")};
}

Outcome resume(const fs::path& configs, const fs::path& out) {
    const auto exp = prepare(load(configs, "resume"));
    const std::size_t K = exp.config.optim.epochs;
    const auto straight = train(exp);
    TrainOptions first;
    first.stop_after = K / 2;
    first.out_dir = out / "resume";
    train(exp, first);
    TrainOptions second;
    second.resume = load_checkpoint(out / "resume" / "last.ckpt");
    const auto resumed = train(exp, second);
    const bool ok = resumed.last.model == straight.last.model &&
                    resumed.last.optimizer == straight.last.optimizer && resumed.curve == straight.curve &&
                    resumed.best_model == straight.best_model &&
                    encode_checkpoint(resumed.last) == encode_checkpoint(straight.last);
    return {ok, fmt("split at epoch %zu of %zu via last.ckpt; checkpoints %s", K / 2, K,
                    ok ? "byte-identical" : "differ")};
}

Outcome overfit(const fs::path& configs) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = load(configs, "overfit");
    const auto exp = prepare(cfg);
    const auto r = train(exp);
    Checkpoint last = r.last;
    const auto m = restore_model(last, exp);
    const double ce = mean_ce(m, exp, exp.corpus.train);
    const double secs = seconds_since(t0);
    const bool setup = exp.corpus.train.size() == 32 && cfg.data.noise_sigma == 0.0 && cfg.loss.lambda == 0.0 &&
                       cfg.optim.weight_decay == 1e-6 && cfg.optim.epochs <= 100;
    return {setup && ce < 0.1 && secs < 300,
            fmt("%zu clips, %zu epochs: train CE %.4f nats/token, %.1fs", exp.corpus.train.size(), r.curve.size(), ce,
                secs)};
}

struct StudyRun {
    double lambda = 0, wd = 0;
    std::uint64_t seed = 0;
    TrainResult result;
    double rise = 0;
    double test_fense = 0;
};

std::vector<StudyRun> regularization_study(const Experiment& base, const fs::path& out, double& secs) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<StudyRun> runs;
    const std::size_t n_seeds = std::max<std::size_t>(3, base.config.train.n_seeds);
    for (std::size_t s = 0; s < n_seeds; ++s)
        for (auto [lambda, wd] : {std::pair{0.0, 1e-6}, {100.0, 1e-6}, {0.0, 2.0}}) {
            auto cfg = base.config;
            cfg.loss.lambda = lambda;
            cfg.optim.weight_decay = wd;
            cfg.train.seed = base.config.train.seed + s;
            const auto exp = with_config(base, cfg);
            TrainOptions o;
            o.out_dir = out / fmt("lambda%g_wd%g_seed%llu", lambda, wd, static_cast<unsigned long long>(cfg.train.seed));
            StudyRun run{lambda, wd, cfg.train.seed, train(exp, o)};
            double lo = INFINITY;
            for (const auto& row : run.result.curve) lo = std::min(lo, row.val_ce);
            run.rise = run.result.curve.back().val_ce - lo;
            Checkpoint best = run.result.last;
            best.model = run.result.best_model;
            const auto m = restore_model(best, exp);
            run.test_fense =
                metrics::evaluate(eval_items(decode_clips(m, exp, exp.corpus.test), exp.corpus.test), *exp.encoder).fense;
            std::fprintf(stderr, "  study lambda=%g wd=%g seed=%llu rise=%.4f test FENSE=%.4f\n", lambda, wd,
                         static_cast<unsigned long long>(run.seed), run.rise, run.test_fense);
            runs.push_back(std::move(run));
        }
    secs = seconds_since(t0);
    return runs;
}

double mean_rise(const std::vector<StudyRun>& runs, double lambda, double wd) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& r : runs)
        if (r.lambda == lambda && r.wd == wd) {
            sum += r.rise;
            ++n;
        }
    return sum / static_cast<double>(n);
}

Outcome regularization_direction(const std::vector<StudyRun>& runs, double secs) {
    const double l0 = mean_rise(runs, 0.0, 1e-6), l100 = mean_rise(runs, 100.0, 1e-6), wd2 = mean_rise(runs, 0.0, 2.0);
    return {l100 < l0 && wd2 < l0 && secs < 1800,
            fmt("mean val CE rise over %zu seeds: lambda0 %.4f, lambda100 %.4f, wd2 %.4f; %.0fs", runs.size() / 3, l0,
                l100, wd2, secs)};
}

Outcome weight_decay(const std::vector<StudyRun>& runs, const Experiment& exp) {
    std::size_t pairs = 0, smaller = 0;
    double low = INFINITY, high = 0;
    for (const auto& a : runs)
        for (const auto& b : runs)
            if (a.lambda == 0 && b.lambda == 0 && a.wd == 2.0 && b.wd == 1e-6 && a.seed == b.seed) {
                ++pairs;
                smaller += a.result.final_decayed_norm < b.result.final_decayed_norm;
                low = std::min(low, b.result.final_decayed_norm / a.result.final_decayed_norm);
                high = std::max(high, b.result.final_decayed_norm / a.result.final_decayed_norm);
            }

    // zero-gradient probe on a freshly initialized captioner
    std::size_t law_breaks = 0, exempt_moves = 0, decayed = 0, exempt = 0;
    for (double wd : {1e-6, 2.0}) {
        model::Captioner m(exp.model_config(), 3, true);
        auto params = m.parameters();
        optim::zero_grad(params);
        optim::OptimConfig oc = exp.config.optim;
        oc.weight_decay = wd;
        optim::AdamWState st;
        const double lr = oc.lr0;
        for (int step = 0; step < 3; ++step) {
            const auto before = m.state();
            optim::adamw_step(params, st, lr, oc);
            for (const auto& p : params) {
                const auto& old = before.at(p.name);
                for (std::size_t i = 0; i < old.size(); ++i) {
                    const double now = p.tensor.at(i);
                    if (p.decay_exempt) {
                        ++exempt;
                        exempt_moves += now != old[i];
                    } else {
                        ++decayed;
                        law_breaks += now != old[i] * (1.0 - lr * wd);
                    }
                }
            }
        }
    }
    return {pairs >= 3 && smaller == pairs && law_breaks == 0 && exempt_moves == 0 && exempt > 0,
            fmt("wd2 norm smaller on %zu/%zu matched seeds (ratio %.2f-%.2f); probe: %zu/%zu decayed values off the "
                "law, %zu/%zu exempt values moved",
                smaller, pairs, low, high, law_breaks, decayed, exempt_moves, exempt)};
}

Outcome cross_referencing(const Experiment& exp, const std::vector<StudyRun>& runs) {
    const auto items = eval_items(std::vector<std::string>(exp.corpus.test.size()), exp.corpus.test);
    std::size_t leaks = 0;
    for (std::size_t f = 0; f < 5; ++f)
        for (const auto& it : metrics::cross_reference_fold(items, f))
            for (const auto& r : it.references) leaks += r == it.candidate;
    const auto cr = metrics::cross_reference(items, *exp.encoder);
    double best = -INFINITY;
    for (const auto& r : runs) best = std::max(best, r.test_fense);
    return {leaks == 0 && cr.excluded == 0 && !runs.empty() && cr.report.fense > best,
            fmt("%zu items, %zu leaks; cross-reference FENSE %.4f vs best model %.4f over %zu runs", items.size(),
                leaks, cr.report.fense, best, runs.size())};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    fs::path configs = AAC_CONFIG_DIR;
    fs::path out = fs::temp_directory_path() / "aac_acceptance";
    std::vector<std::string> only;
    app.add_option("--configs", configs, "directory holding overfit.cfg, regularization.cfg, resume.cfg");
    app.add_option("--out", out, "scratch directory for run artifacts");
    app.add_option("--only", only, "run just these criteria");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(out);

    std::size_t failed = 0;
    auto want = [&](const std::string& name) { return only.empty() || std::find(only.begin(), only.end(), name) != only.end(); };
    auto report = [&](const std::string& name, const std::function<Outcome()>& check) {
        if (!want(name)) return;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    };

    std::string beam_info;
    report("gradient_suite", gradient_suite);
    report("baseline_recovery", [&] { return baseline_recovery(configs); });
    report("smooth_l1", smooth_l1_values);
    report("overfit", [&] { return overfit(configs); });

    const bool study = want("regularization_direction") || want("weight_decay") || want("cross_reference") ||
                       want("fense_composition");
    std::optional<Experiment> exp;
    std::vector<StudyRun> runs;
    double study_secs = 0;
    if (study) {
        exp = prepare(load(configs, "regularization"));
        if (want("regularization_direction") || want("weight_decay") || want("cross_reference"))
            runs = regularization_study(*exp, out / "regularization", study_secs);
    }
    report("regularization_direction", [&] { return regularization_direction(runs, study_secs); });
    report("weight_decay", [&] { return weight_decay(runs, *exp); });
    report("beam_oracle", [&] { return beam_oracle(beam_info); });
    report("cider_oracle", cider_oracle);
    report("fense_composition", [&] { return fense_composition(*exp); });
    report("cross_reference", [&] { return cross_referencing(*exp, runs); });
    report("cosine_endpoints", cosine_endpoints);
    report("resume", [&] { return resume(configs, out); });
    if (!beam_info.empty()) std::printf("INFO %s\n", beam_info.c_str());
    return failed == 0 ? 0 : 1;
}
