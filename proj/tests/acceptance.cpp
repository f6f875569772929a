// Acceptance gate: one [PASS]/[FAIL] line per criterion; exits nonzero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <json.hpp>
#include <random>
#include <set>
#include <string>

#include "oracles.hpp"
#include "ssi/corpus.hpp"
#include "ssi/eval.hpp"
#include "ssi/pipeline.hpp"
#include "ssi/service.hpp"
#include "ssi/syngen.hpp"
#include "support.hpp"

namespace {

using ssi::config::RunConfig;
using ssi::corpus::read_file;
namespace pl = ssi::pipeline;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(const char* name, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > budget_s) {
        o.pass = false;
        o.detail += "; over time budget";
    }
    if (!o.pass) ++failures;
    std::printf("[%s] %s: %s (%.2fs, budget %.0fs)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs,
                budget_s);
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool within(const std::optional<double>& ratio, double want_pct, double tol_pp = 0.01) {
    return ratio && std::abs(*ratio * 100.0 - want_pct) <= tol_pp;
}

RunConfig corpus_config(const std::filesystem::path& synth_dir, const std::filesystem::path& out_dir,
                        std::uint64_t seed) {
    RunConfig c;
    c.base_dir = out_dir.parent_path();
    c.procedures = synth_dir / "procedures.jsonl";
    c.documents = synth_dir / "documents.jsonl";
    c.events = synth_dir / "events.jsonl";
    c.reference = synth_dir / "reference.txt";
    c.synth_dir = synth_dir;
    c.output_dir = out_dir;
    c.seed = seed;
    c.forest.seed = seed;
    return c;
}

std::string lemma_form(const ssi::nlp::Tagger& tagger, const std::string& term) {
    std::vector<std::string> lemmas;
    for (const auto& s : tagger.tag_text(term))
        for (const auto& t : s) lemmas.push_back(t.lemma);
    return ssi::nlp::normalize_term(lemmas);
}

}  // namespace

int main() {
    criterion("metric reproduction", 1, [] {
        using ssi::eval::metrics;
        const auto a = metrics({22, 20, 0, 2091});
        const auto b = metrics({2, 4, 0, 757});
        const auto c = metrics({22, 87, 0, 2024});
        const auto d = metrics({22, 26, 0, 2085});
        const bool ok = within(a.specificity, 99.05) && within(a.ppv, 52.38) && within(a.accuracy, 99.06) &&
                        within(b.ppv, 33.33) && within(c.ppv, 20.18) && within(d.ppv, 45.83);
        return Outcome{ok, fmt("spec %.4f%% ppv %.4f%% acc %.4f%% | ppv %.4f%% | ppv %.4f%% | ppv %.4f%%",
                               *a.specificity * 100, *a.ppv * 100, *a.accuracy * 100, *b.ppv * 100, *c.ppv * 100,
                               *d.ppv * 100)};
    });

    criterion("extraction oracle", 10, [] {
        const auto map = ssi::nlp::TagMapping::french_default();
        const auto example = testing::sentence({{"reprise", "NOM", "reprise"},
                                                {"chirurgicale", "ADJ", "chirurgical"},
                                                {"pour", "PRP", "pour"},
                                                {"infection", "NOM", "infection"},
                                                {"du", "PRP:det", "du"},
                                                {"site", "NOM", "site"},
                                                {"opératoire", "ADJ", "opératoire"}});
        std::set<std::string> got;
        for (const auto& t : ssi::nlp::extract_noun_groups(example, map, 3)) got.insert(t.text);
        const std::set<std::string> want{"reprise", "reprise chirurgical", "reprise chirurgical pour infection",
                                         "infection", "infection du site", "infection du site opératoire",
                                         "site", "site opératoire"};
        std::mt19937_64 rng(20240501);
        int mismatches = 0;
        for (int i = 0; i < 1000; ++i) {
            const auto s = oracle::random_sentence(rng, 20);
            std::set<std::string> fast;
            for (const auto& t : ssi::nlp::extract_noun_groups(s, map, 3)) fast.insert(t.text);
            if (fast != oracle::noun_groups(s, map, 3)) ++mismatches;
        }
        return Outcome{got == want && mismatches == 0,
                       fmt("example %zu/8 terms%s, %d/1000 random mismatches", got.size(),
                           got == want ? "" : " (set differs)", mismatches)};
    });

    criterion("frequency-filter anchor", 5, [] {
        const auto cutoff = ssi::termselect::frequency_cutoff(22, 0.20);
        std::mt19937_64 rng(77);
        int violations = 0;
        for (int round = 0; round < 100; ++round) {
            const auto rc = oracle::random_corpus(rng);
            auto prev = ssi::termselect::frequency_filter(rc.index, rc.labels, 0.01);
            for (int pct = 2; pct <= 100; ++pct) {
                auto cur = ssi::termselect::frequency_filter(rc.index, rc.labels, pct / 100.0);
                if (!std::includes(prev.begin(), prev.end(), cur.begin(), cur.end())) ++violations;
                prev = std::move(cur);
            }
        }
        return Outcome{cutoff == 5 && violations == 0,
                       fmt("cutoff(22, 0.20) = %zu, %d monotonicity violations over 100 indexes", cutoff, violations)};
    });

    criterion("odds-ratio oracle", 10, [] {
        std::mt19937_64 rng(4242);
        const ssi::termselect::SelectionConfig cfg;
        int table_errors = 0, order_errors = 0, compared = 0;
        for (int round = 0; round < 100; ++round) {
            const auto rc = oracle::random_corpus(rng, 50);
            for (const auto& s : ssi::termselect::compute_stats(rc.index, rc.labels, cfg)) {
                const auto t = oracle::contingency(rc.index, rc.labels, s.term.text);
                const double want = oracle::smoothed_or(t, cfg.smoothing);
                if (s.a != t.a || s.b != t.b || s.c != t.c || s.d != t.d ||
                    std::abs(s.odds_ratio - want) > 1e-12 * std::max(1.0, want))
                    ++table_errors;
            }
            // Label swap over the terms whose ORs are pairwise distinct.
            std::set<std::string> all;
            for (const auto& [term, p] : rc.index.terms()) all.insert(term);
            const auto base = ssi::termselect::rank_terms(rc.index, rc.labels, all, cfg.smoothing);
            std::set<std::string> distinct;
            for (std::size_t i = 0; i < base.size(); ++i) {
                bool unique = true;
                for (std::size_t j = 0; j < base.size(); ++j)
                    if (i != j && std::abs(base[i].odds_ratio - base[j].odds_ratio) <= 1e-9 * base[i].odds_ratio)
                        unique = false;
                if (unique) distinct.insert(base[i].term.text);
            }
            ssi::termselect::Labels swapped;
            for (const auto& [k, v] : rc.labels) swapped[k] = !v;
            const auto fwd = ssi::termselect::rank_terms(rc.index, rc.labels, distinct, cfg.smoothing);
            const auto rev = ssi::termselect::rank_terms(rc.index, swapped, distinct, cfg.smoothing);
            for (std::size_t i = 0; i < fwd.size(); ++i)
                if (fwd[i].term.text != rev[rev.size() - 1 - i].term.text) ++order_errors;
            compared += static_cast<int>(fwd.size());
        }
        return Outcome{table_errors == 0 && order_errors == 0 && compared > 0,
                       fmt("%d table mismatches, %d reversal mismatches over %d ranked terms", table_errors,
                           order_errors, compared)};
    });

    criterion("calibration guarantee", 60, [] {
        testing::TempDir dir;
        int runs = 0, exact = 0, skipped = 0;
        std::uint64_t seed = 1;
        int datasets = 0;
        while (datasets < 100) {
            auto sc = ssi::syngen::SynthConfig::full_scale(seed);
            sc.procedures_per_year = {{2015, 90}, {2016, 90}, {2017, 60}};
            sc.prevalence = 0.06;
            const auto corpus = ssi::syngen::generate(sc);
            std::size_t train_pos = 0;
            for (const auto& p : corpus.procedures) train_pos += p.year() < 2017 && *p.gold_label;
            if (train_pos == 0) {
                ++skipped;
                ++seed;
                continue;
            }
            const auto synth_dir = dir / ("s" + std::to_string(seed));
            ssi::syngen::write(corpus, synth_dir);
            for (const char* kind : {"logistic_regression", "random_forest"}) {
                auto cfg = corpus_config(synth_dir, synth_dir / kind, seed);
                cfg.model_kind = kind;
                cfg.forest.n_trees = 50;
                pl::Workspace ws(cfg);
                const auto report = pl::run_all(ws);
                const auto sens = ssi::eval::metrics(report.blocks.at(0).cm).sensitivity;
                ++runs;
                if (sens && *sens == 1.0) ++exact;
            }
            ++datasets;
            ++seed;
        }
        return Outcome{exact == runs && runs == 200,
                       fmt("training sensitivity exactly 1.0 in %d/%d runs (%d seeds skipped for no training positives)",
                           exact, runs, skipped)};
    });

    criterion("logistic gradient", 5, [] {
        std::mt19937_64 rng(99);
        std::normal_distribution<double> nd(0.0, 1.0);
        double worst = 0.0;
        for (int i = 0; i < 200; ++i) {
            std::vector<int> y;
            const auto x = oracle::random_matrix(rng, 10, 5, y);
            std::vector<double> w(5);
            for (auto& v : w) v = nd(rng);
            const double b = nd(rng);
            const double lambda = std::abs(nd(rng)) * 0.1;
            std::vector<double> gw;
            double gb = 0;
            ssi::models::logreg_loss_and_gradient(x, y, w, b, lambda, gw, gb);
            const auto num = oracle::numeric_gradient(x, y, w, b, lambda);
            gw.push_back(gb);
            double diff = 0, ref = 0;
            for (std::size_t k = 0; k < gw.size(); ++k) {
                diff += (gw[k] - num[k]) * (gw[k] - num[k]);
                ref += num[k] * num[k];
            }
            worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12));
        }
        return Outcome{worst < 1e-5, fmt("worst relative error %.3e over 200 instances", worst)};
    });

    testing::TempDir e2e;
    const auto full_cfg = [&](const std::string& out, const std::string& kind = "logistic_regression") {
        auto c = corpus_config(e2e / "synth", e2e / out, 42);
        c.model_kind = kind;
        return c;
    };

    criterion("end-to-end synthetic run", 300, [&] {
        const auto cfg = full_cfg("out");
        pl::synth(cfg);
        pl::Workspace ws(cfg);
        const auto report = pl::run_all(ws);
        std::set<std::string> selected;
        for (const auto& t : report.selected_terms) selected.insert(t.term);
        int recovered = 0;
        for (const auto& t : ssi::syngen::SynthConfig::full_scale().planted_terms)
            recovered += selected.contains(lemma_form(ws.tagger(), t.term));
        const auto& test = report.blocks.at(1);
        const auto spec = ssi::eval::metrics(test.cm).specificity;
        return Outcome{recovered >= 8 && spec && *spec >= 0.95,
                       fmt("%zu procedures, %d/10 planted terms in top-%zu, test specificity %s", ws.dataset().procedures().size(),
                           recovered, report.selected_terms.size(), ssi::eval::format_percent(spec).c_str())};
    });

    criterion("determinism", 300, [&] {
        std::string detail;
        bool ok = true;
        for (const char* kind : {"logistic_regression", "random_forest"}) {
            const auto a = full_cfg(std::string("det_a_") + kind, kind);
            const auto b = full_cfg(std::string("det_b_") + kind, kind);
            pl::Workspace wa(a);
            pl::run_all(wa);
            pl::Workspace wb(b);
            pl::run_all(wb);
            int same = 0;
            for (const char* f : {"model.json", "predictions.jsonl", "report.json"}) same += read_file(a.out(f)) == read_file(b.out(f));
            ok = ok && same == 3;
            detail += fmt("%s%s %d/3 identical", detail.empty() ? "" : ", ", kind, same);
        }
        return Outcome{ok, detail};
    });

    criterion("retraining loop", 300, [&] {
        // Weaker term emission than the full-scale corpus, so that the
        // calibrated threshold also flags negatives and both review
        // directions are exercised.
        auto sc = ssi::syngen::SynthConfig::full_scale(7);
        for (auto& t : sc.planted_terms) t = {t.term, 0.6, 0.08};
        const auto loop_synth = e2e / "loop_synth";
        ssi::syngen::write(ssi::syngen::generate(sc), loop_synth);
        const auto cfg = corpus_config(loop_synth, e2e / "loop", 7);
        pl::Workspace ws(cfg);
        pl::run_all(ws);
        pl::ingest(ws);
        const auto manifest = nlohmann::json::parse(read_file(loop_synth / "truth_manifest.json"));
        const auto& truth = manifest["labels"];

        // Reviewer pass: overrule the first two true positives, call the first
        // three flagged negatives superficial infections, agree with the rest.
        int overruled = 0, upgraded = 0;
        std::set<std::string> flipped_to_false, flipped_to_true;
        {
            ssi::service::Store store(cfg.store());
            for (const auto& rec : store.list()) {
                ssi::service::ReviewLabel l;
                l.reviewer = "acceptance";
                const bool positive = truth.at(rec.procedure_id).get<bool>();
                if (positive && overruled < 2) {
                    l.decision = ssi::service::Status::rejected;
                    ++overruled;
                    flipped_to_false.insert(rec.procedure_id);
                } else if (!positive && upgraded < 3) {
                    l.decision = ssi::service::Status::confirmed_superficial;
                    ++upgraded;
                    flipped_to_true.insert(rec.procedure_id);
                } else {
                    l.decision = positive ? ssi::service::Status::confirmed_ssi : ssi::service::Status::rejected;
                }
                store.record_label(rec.procedure_id, l);
            }
        }
        const auto gold_path = e2e / "gold.jsonl";
        pl::export_gold(ws, gold_path);

        // Expected label counts from the manifest and the review decisions.
        std::size_t expected_all = 0, expected_train = 0;
        for (const auto& [pid, lab] : truth.items()) {
            const bool v = (lab.get<bool>() && !flipped_to_false.contains(pid)) || flipped_to_true.contains(pid);
            expected_all += v;
            const int year = std::stoi(pid.substr(1, 4));
            expected_train += v && cfg.train_years.contains(year);
        }
        std::size_t exported_pos = 0;
        for (const auto& p : ssi::corpus::parse_procedures(read_file(gold_path))) exported_pos += *p.gold_label;

        auto retrain_cfg = corpus_config(loop_synth, e2e / "loop_retrained", 7);
        retrain_cfg.procedures = gold_path;
        pl::Workspace rws(retrain_cfg);
        const auto report = pl::run_all(rws);
        std::size_t train_pos = 0;
        for (const auto& [pid, lab] : rws.training_labels()) train_pos += lab;
        const auto sens = ssi::eval::metrics(report.blocks.at(0).cm).sensitivity;
        const bool ok = overruled == 2 && upgraded == 3 && exported_pos == expected_all && train_pos == expected_train &&
                        report.blocks.at(0).cm.tp + report.blocks.at(0).cm.fn == expected_train && sens == 1.0;
        return Outcome{ok, fmt("%d overruled, %d upgraded; exported positives %zu (expected %zu), retrained on %zu "
                               "positives (expected %zu), training sensitivity %s",
                               overruled, upgraded, exported_pos, expected_all, train_pos, expected_train,
                               ssi::eval::format_percent(sens).c_str())};
    });

    std::printf("%d criteria failed\n", failures);
    return failures ? 1 : 0;
}
