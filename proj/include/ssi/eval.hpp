#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ssi/corpus.hpp"
#include "ssi/models.hpp"
#include "ssi/termselect.hpp"

namespace ssi::eval {

struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

/// Each metric is empty when its denominator is zero.
struct MetricSet {
    std::optional<double> sensitivity;
    std::optional<double> specificity;
    std::optional<double> ppv;
    std::optional<double> accuracy;
};

/// Gold labels must all be present; an unlabeled entry is an error.
ConfusionMatrix confusion(std::span<const bool> flags, std::span<const std::optional<bool>> gold);
ConfusionMatrix confusion(std::span<const bool> flags, std::span<const int> gold);

MetricSet metrics(const ConfusionMatrix& cm);

/// Percentage rounded half-up to 2 decimals, or "n/a".
std::string format_percent(const std::optional<double>& ratio);
/// The rounded percentage as a number (e.g. 99.05); empty when undefined.
std::optional<double> percent(const std::optional<double>& ratio);

struct Split {
    std::vector<corpus::Procedure> train;
    std::vector<corpus::Procedure> test;
    std::size_t excluded = 0;
    std::vector<std::string> warnings;
};

/// Partition by intervention year. Year sets must be disjoint.
Split temporal_split(std::span<const corpus::Procedure> procedures, const std::set<int>& train_years,
                     const std::set<int>& test_years);

struct FalsePositive {
    std::string procedure_id;
    double probability = 0.0;
};

struct EvaluationBlock {
    std::string name;  ///< e.g. "train", "test"
    ConfusionMatrix cm;
    std::vector<FalsePositive> false_positives;  ///< sorted by probability descending
};

struct RunReport {
    std::string model_kind;
    std::optional<double> threshold;
    std::vector<EvaluationBlock> blocks;
    std::vector<termselect::SelectedTerm> selected_terms;
    std::set<int> train_years;
    std::set<int> test_years;
};

/// Scores predictions against gold for the procedures in `scope`.
EvaluationBlock evaluate_block(std::string name, std::span<const models::Prediction> predictions,
                               std::span<const corpus::Procedure> scope);

std::string report_json(const RunReport& report);
/// The 2x2 layout with margins (rows T+/T-, columns M+/M-) plus metrics,
/// selected terms and the false-positive list.
std::string report_markdown(const RunReport& report);

}  // namespace ssi::eval
