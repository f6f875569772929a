#include "ssi/pipeline.hpp"

#include <json.hpp>

#include "ssi/error.hpp"
#include "ssi/service.hpp"
#include "ssi/syngen.hpp"

namespace ssi::pipeline {

using nlohmann::json;
using config::RunConfig;

namespace {

std::string read_artifact(const std::filesystem::path& path, std::string_view producer) {
    if (!std::filesystem::exists(path))
        throw NotFoundError("missing artifact " + path.string() + " (run " + std::string(producer) + " first)");
    return corpus::read_file(path);
}

std::set<std::string, std::less<>> ids_of(const std::vector<corpus::Procedure>& procs) {
    std::set<std::string, std::less<>> out;
    for (const auto& p : procs) out.insert(p.procedure_id);
    return out;
}

struct FeatureArtifact {
    features::FeatureMatrix matrix;
    std::string config_hash;
};

FeatureArtifact load_features(Workspace& ws) {
    const auto& cfg = ws.config();
    FeatureArtifact fa;
    fa.matrix = features::FeatureMatrix::from_csv(read_artifact(cfg.out("features.csv"), "build-features"),
                                                  cfg.out("features.csv").string());
    try {
        const json meta = json::parse(read_artifact(cfg.out("feature_config.json"), "build-features"));
        fa.config_hash = meta.at("fingerprint").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(cfg.out("feature_config.json").string(), 0, e.what());
    }
    return fa;
}

features::FeatureMatrix training_rows(Workspace& ws, const features::FeatureMatrix& all) {
    const auto train = ids_of(ws.split().train);
    auto x = all.select_rows([&](std::size_t r) { return train.contains(all.row_ids()[r]); });
    if (x.rows() != train.size())
        throw ValidationError("features.csv covers " + std::to_string(x.rows()) + " of " +
                              std::to_string(train.size()) + " training procedures (rerun build-features)");
    return x;
}

}  // namespace

Workspace::Workspace(RunConfig config) : config_(std::move(config)) {}

const corpus::Dataset& Workspace::dataset() {
    if (!dataset_)
        dataset_ = corpus::load_dataset(RunConfig::require(config_.procedures, "corpus.procedures"),
                                        RunConfig::require(config_.documents, "corpus.documents"),
                                        RunConfig::require(config_.events, "corpus.events"));
    return *dataset_;
}

const nlp::TagMapping& Workspace::mapping() {
    if (!mapping_) mapping_ = config_.tagmap ? nlp::TagMapping::load(*config_.tagmap) : nlp::TagMapping::french_default();
    return *mapping_;
}

const nlp::Tagger& Workspace::tagger() {
    if (!tagger_) {
        if (config_.tagged_dir && !std::filesystem::is_directory(*config_.tagged_dir))
            throw NotFoundError("nlp.tagged_dir " + config_.tagged_dir->string() + " is not a directory");
        tagger_.emplace(config_.lexicon ? nlp::Lexicon::load(*config_.lexicon) : nlp::Lexicon::builtin(),
                        config_.tagged_dir);
    }
    return *tagger_;
}

const nlp::TaggedCorpus& Workspace::tagged() {
    if (!tagged_) tagged_ = std::make_unique<nlp::TaggedCorpus>(dataset(), tagger());
    return *tagged_;
}

const eval::Split& Workspace::split() {
    if (!split_) {
        split_ = eval::temporal_split(dataset().procedures(), config_.train_years, config_.test_years);
        warnings.insert(warnings.end(), split_->warnings.begin(), split_->warnings.end());
    }
    return *split_;
}

termselect::Labels Workspace::training_labels() {
    termselect::Labels labels;
    std::size_t unlabeled = 0;
    for (const auto& p : split().train) {
        if (!p.gold_label) ++unlabeled;
        else labels.emplace(p.procedure_id, *p.gold_label);
    }
    if (unlabeled)
        throw ValidationError(std::to_string(unlabeled) + " training procedures have no gold label");
    if (labels.empty()) throw ValidationError("no training procedures in split.train_years");
    return labels;
}

ExtractResult extract_terms(Workspace& ws) {
    const auto& cfg = ws.config();
    ws.training_labels();
    const auto& dataset = ws.dataset();
    const auto& tagged = ws.tagged();
    std::vector<nlp::ProcedureDocuments> groups;
    for (const auto& p : ws.split().train) {
        nlp::ProcedureDocuments g{p.procedure_id, {}};
        for (const auto* doc : dataset.window(p, cfg.window).documents) g.documents.push_back(&tagged.get(*doc));
        groups.push_back(std::move(g));
    }
    ExtractResult r{nlp::index_terms(groups, ws.mapping(), cfg.max_content), groups.size()};
    corpus::write_file(cfg.out("term_index.json"), r.index.to_json());
    return r;
}

SelectResult select_terms(Workspace& ws) {
    const auto& cfg = ws.config();
    const auto index = nlp::TermIndex::from_json(read_artifact(cfg.out("term_index.json"), "extract-terms"));
    const auto labels = ws.training_labels();

    termselect::SelectionConfig sc = cfg.selection;
    if (cfg.approval_list) sc.approval_list = termselect::parse_term_list(corpus::read_file(*cfg.approval_list));
    const auto stats = termselect::compute_stats(index, labels, sc);

    std::set<std::string> candidates;
    for (const auto& s : stats) candidates.insert(s.term.text);
    std::set<std::string> kept;
    if (cfg.reference) {
        const auto reference = ws.tagger().tag_text(corpus::read_file(*cfg.reference));
        auto rf = termselect::reference_filter(candidates, reference, ws.mapping(), cfg.max_content);
        ws.warnings.insert(ws.warnings.end(), rf.warnings.begin(), rf.warnings.end());
        kept = std::move(rf.kept);
    } else {
        ws.warnings.push_back("select.reference is not set; reference filter skipped");
        kept = candidates;
    }

    SelectResult r;
    std::vector<termselect::TermStats> filtered;
    for (const auto& s : stats) {
        const bool in_ref = kept.contains(s.term.text);
        r.candidates.push_back({s, in_ref});
        if (in_ref) filtered.push_back(s);
    }
    // An expert approval list overrides the automatic filters; keep full stats for it.
    r.selection = termselect::select_final(sc.approval_list ? stats : filtered, sc);
    ws.warnings.insert(ws.warnings.end(), r.selection.warnings.begin(), r.selection.warnings.end());
    if (r.selection.terms.empty()) throw ValidationError("term selection is empty; no candidate survived the filters");

    corpus::write_file(cfg.out("candidate_report.json"), termselect::candidate_report_json(r.candidates));
    corpus::write_file(cfg.out("approved_terms.txt"), termselect::approved_terms_text(r.selection.term_texts()));
    return r;
}

features::FeatureConfig feature_config(Workspace& ws) {
    const auto& cfg = ws.config();
    features::FeatureConfig fc;
    fc.algo = cfg.algo;
    fc.window = cfg.window;
    if (cfg.structured_config)
        fc.structured = features::StructuredConfig::from_json(corpus::read_file(*cfg.structured_config));
    if (cfg.algo == features::Algorithm::algo2) {
        fc.terms = termselect::parse_term_list(read_artifact(cfg.out("approved_terms.txt"), "select-terms"));
    } else {
        fc.terms = cfg.expert_terms ? termselect::parse_term_list(corpus::read_file(*cfg.expert_terms))
                                    : features::default_expert_terms();
    }
    return fc;
}

features::FeatureMatrix build_features(Workspace& ws) {
    const auto& cfg = ws.config();
    const auto fc = feature_config(ws);
    const auto& split = ws.split();
    std::vector<corpus::Procedure> scope = split.train;
    scope.insert(scope.end(), split.test.begin(), split.test.end());
    std::ranges::stable_sort(scope, {}, &corpus::Procedure::procedure_id);
    auto x = features::assemble(scope, ws.dataset(), ws.tagged(), fc);
    corpus::write_file(cfg.out("features.csv"), x.to_csv());
    const json meta = {{"algo", features::to_string(fc.algo)},
                       {"columns", x.columns()},
                       {"fingerprint", fc.fingerprint()},
                       {"structured", json::parse(fc.structured.to_json())},
                       {"window", {{"days", fc.window.length_days}, {"include_day0", fc.window.include_day0}}}};
    corpus::write_file(cfg.out("feature_config.json"), meta.dump(2) + "\n");
    return x;
}

models::CalibratedModel train(Workspace& ws) {
    const auto& cfg = ws.config();
    const auto fa = load_features(ws);
    const auto x = training_rows(ws, fa.matrix);
    const auto y = x.require_labels();
    models::CalibratedModel m;
    if (cfg.model_kind == "random_forest") {
        auto params = cfg.forest;
        params.seed = cfg.require_seed();
        m.base = models::train_forest(x, y, params);
    } else {
        auto lr = models::train_logreg(x, y, cfg.logreg);
        if (!lr.converged)
            ws.warnings.push_back("logistic regression stopped at max_iters (gradient norm " +
                                  std::to_string(lr.gradient_norm) + ")");
        m.base = std::move(lr);
    }
    m.fingerprint = {models::dataset_hash(x), fa.config_hash};
    models::save_model(m, cfg.out("model.json"));
    return m;
}

models::CalibratedModel calibrate(Workspace& ws) {
    const auto& cfg = ws.config();
    read_artifact(cfg.out("model.json"), "train");
    auto m = models::load_model(cfg.out("model.json"));
    const auto fa = load_features(ws);
    const auto x = training_rows(ws, fa.matrix);
    auto calibrated = models::calibrate(std::move(m.base), x, x.require_labels(), m.fingerprint.config);
    if (calibrated.fingerprint.dataset != m.fingerprint.dataset)
        ws.warnings.push_back("calibration rows differ from the training rows");
    models::save_model(calibrated, cfg.out("model.json"));
    return calibrated;
}

std::vector<models::Prediction> predict(Workspace& ws) {
    const auto& cfg = ws.config();
    read_artifact(cfg.out("model.json"), "train");
    const auto m = models::load_model(cfg.out("model.json"));
    if (!m.threshold) throw ValidationError("model.json is not calibrated (run calibrate first)");
    const auto fa = load_features(ws);
    if (auto w = models::fingerprint_warning(m, fa.config_hash)) ws.warnings.push_back(*w);
    auto preds = models::flag(m, fa.matrix);
    corpus::write_file(cfg.out("predictions.jsonl"), models::predictions_jsonl(preds));
    return preds;
}

eval::RunReport evaluate(Workspace& ws) {
    const auto& cfg = ws.config();
    read_artifact(cfg.out("model.json"), "train");
    const auto m = models::load_model(cfg.out("model.json"));
    const auto preds = models::parse_predictions(read_artifact(cfg.out("predictions.jsonl"), "predict"),
                                                 cfg.out("predictions.jsonl").string());
    const auto& split = ws.split();

    eval::RunReport report;
    report.model_kind = std::string(models::kind_name(m.base));
    report.threshold = m.threshold;
    report.train_years = cfg.train_years;
    report.test_years = cfg.test_years;
    report.blocks.push_back(eval::evaluate_block("train", preds, split.train));
    if (!split.test.empty()) report.blocks.push_back(eval::evaluate_block("test", preds, split.test));

    std::map<std::string, termselect::TermStats, std::less<>> stats;
    if (std::filesystem::exists(cfg.out("candidate_report.json")))
        for (auto& row : termselect::parse_candidate_report(corpus::read_file(cfg.out("candidate_report.json"))))
            stats.emplace(row.stats.term.text, row.stats);
    for (const auto& t : feature_config(ws).terms) {
        termselect::SelectedTerm st{nlp::normalize_term(t), std::nullopt};
        if (auto it = stats.find(st.term); it != stats.end()) st.stats = it->second;
        report.selected_terms.push_back(std::move(st));
    }

    corpus::write_file(cfg.out("report.json"), eval::report_json(report));
    corpus::write_file(cfg.out("report.md"), eval::report_markdown(report));
    return report;
}

eval::RunReport run_all(Workspace& ws) {
    if (ws.config().algo == features::Algorithm::algo2) {
        extract_terms(ws);
        select_terms(ws);
    }
    build_features(ws);
    train(ws);
    calibrate(ws);
    predict(ws);
    return evaluate(ws);
}

void synth(const RunConfig& cfg) {
    syngen::SynthConfig sc;
    if (cfg.synth_config) {
        sc = syngen::SynthConfig::from_json(corpus::read_file(*cfg.synth_config));
        if (cfg.seed) sc.seed = *cfg.seed;
    } else {
        sc = syngen::SynthConfig::full_scale(cfg.require_seed());
    }
    syngen::write(syngen::generate(sc), cfg.synth_dir);
}

std::size_t ingest(Workspace& ws) {
    const auto& cfg = ws.config();
    const auto preds = models::parse_predictions(read_artifact(cfg.out("predictions.jsonl"), "predict"),
                                                 cfg.out("predictions.jsonl").string());
    const auto fc = feature_config(ws);
    service::EvidenceConfig ec;
    ec.terms = fc.terms;
    ec.structured = fc.structured;
    ec.window = fc.window;
    const auto records = service::build_records(preds, ws.dataset(), ws.tagged(), ec);
    service::Store store(cfg.store());
    store.ingest(records);
    return records.size();
}

std::size_t export_gold(Workspace& ws, const std::filesystem::path& destination) {
    service::Store store(ws.config().store());
    const auto procs = store.export_gold(ws.dataset().procedures());
    corpus::write_file(destination, corpus::to_jsonl(procs));
    return procs.size();
}

}  // namespace ssi::pipeline
