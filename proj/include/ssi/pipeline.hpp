#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ssi/config.hpp"
#include "ssi/corpus.hpp"
#include "ssi/eval.hpp"
#include "ssi/features.hpp"
#include "ssi/models.hpp"
#include "ssi/nlp.hpp"
#include "ssi/termselect.hpp"

namespace ssi::pipeline {

/// Inputs shared by the stages, loaded on first use.
class Workspace {
public:
    explicit Workspace(config::RunConfig config);

    const config::RunConfig& config() const { return config_; }
    const corpus::Dataset& dataset();
    const nlp::TagMapping& mapping();
    const nlp::Tagger& tagger();
    const nlp::TaggedCorpus& tagged();
    const eval::Split& split();

    /// Gold labels of the training procedures; every one must be labeled.
    termselect::Labels training_labels();

    /// Messages for the caller to surface (empty reference text, excluded years, ...).
    std::vector<std::string> warnings;

private:
    config::RunConfig config_;
    std::optional<corpus::Dataset> dataset_;
    std::optional<nlp::TagMapping> mapping_;
    std::optional<nlp::Tagger> tagger_;
    std::unique_ptr<nlp::TaggedCorpus> tagged_;
    std::optional<eval::Split> split_;
};

struct ExtractResult {
    nlp::TermIndex index;
    std::size_t procedures = 0;
};

/// Noun-group index over the windowed documents of the training procedures.
/// Writes term_index.json.
ExtractResult extract_terms(Workspace& ws);

struct SelectResult {
    std::vector<termselect::CandidateRow> candidates;
    termselect::Selection selection;
};

/// Frequency filter, odds-ratio ranking, reference filter and final cut.
/// Reads term_index.json; writes candidate_report.json and approved_terms.txt.
SelectResult select_terms(Workspace& ws);

/// The feature configuration implied by the run config and stage outputs.
features::FeatureConfig feature_config(Workspace& ws);

/// Features for every train and test procedure. Writes features.csv and
/// feature_config.json.
features::FeatureMatrix build_features(Workspace& ws);

/// Fits the configured model on the training rows. Writes an uncalibrated model.json.
models::CalibratedModel train(Workspace& ws);

/// Sets the threshold from the training positives. Rewrites model.json.
models::CalibratedModel calibrate(Workspace& ws);

/// Scores every row of features.csv. Writes predictions.jsonl.
std::vector<models::Prediction> predict(Workspace& ws);

/// Train and test blocks. Writes report.json and report.md.
eval::RunReport evaluate(Workspace& ws);

/// Every stage from extract-terms to evaluate.
eval::RunReport run_all(Workspace& ws);

/// Writes a synthetic corpus into the configured synth directory.
void synth(const config::RunConfig& config);

/// Builds review records from predictions.jsonl and appends them to the store log.
std::size_t ingest(Workspace& ws);

/// Writes reviewer-corrected procedures to `destination`.
std::size_t export_gold(Workspace& ws, const std::filesystem::path& destination);

}  // namespace ssi::pipeline
