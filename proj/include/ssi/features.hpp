#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ssi/corpus.hpp"
#include "ssi/nlp.hpp"

namespace ssi::features {

struct StructuredConfig {
    std::set<std::string> icd10_codes{"T81.4", "T84.5", "T84.6", "T84.7"};
    std::set<std::string> ccam_codes{"AFPA001"};
    std::set<std::string> atc_prefixes{"J01", "J04"};
    std::vector<std::string> bacterio_protocols{"plaie opératoire",     "pus profond",
                                                "matériel orthopédique", "biopsie ostéo-articulaire",
                                                "liquide de lame",       "redon"};

    void validate() const;
    std::string to_json() const;
    static StructuredConfig from_json(std::string_view json_text);
};

struct StructuredFlags {
    bool dx = false;
    bool reprise = false;
    bool abx = false;
    bool bacterio = false;
};

/// Flags over already-windowed events. Diagnosis and act codes match exactly,
/// drug codes by prefix, bacteriology labels by case- and accent-insensitive
/// containment of a configured protocol.
StructuredFlags structured_flags(std::span<const corpus::CareEvent* const> events, const StructuredConfig& config);

/// Which configured code, if any, an event matches.
std::optional<std::string> matching_code(const corpus::CareEvent& event, const StructuredConfig& config);

enum class TermMode { binary, count };

/// Occurrences of the term's lemma sequence within one sentence's lemmas.
std::size_t count_in_sentence(std::span<const std::string> lemmas, std::span<const std::string> term_tokens);

/// One value per term: total contiguous lemma-sequence matches across the
/// documents (count) or whether there is any (binary).
std::vector<double> term_features(std::span<const nlp::TaggedDocument* const> documents,
                                  const std::vector<std::string>& terms, TermMode mode);

enum class Algorithm { algo1, algo2 };

std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view s);

/// The 12-term default list used by the expert-feature algorithm.
std::vector<std::string> default_expert_terms();

struct FeatureConfig {
    Algorithm algo = Algorithm::algo2;
    StructuredConfig structured;
    std::vector<std::string> terms;
    corpus::WindowPolicy window;

    std::vector<std::string> column_names() const;
    /// Stable hash of everything that determines the columns and their values.
    std::string fingerprint() const;
};

/// Row-major dense matrix with aligned procedure ids and labels.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::vector<std::string> columns, std::vector<std::string> row_ids, std::vector<double> values,
                  std::vector<std::optional<bool>> labels);

    std::size_t rows() const { return row_ids_.size(); }
    std::size_t cols() const { return columns_.size(); }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }

    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::string>& row_ids() const { return row_ids_; }
    const std::vector<std::optional<bool>>& labels() const { return labels_; }
    const std::vector<double>& values() const { return values_; }

    /// Rows whose index satisfies `keep`, in order.
    template <typename Pred>
    FeatureMatrix select_rows(Pred keep) const {
        std::vector<std::string> ids;
        std::vector<double> vals;
        std::vector<std::optional<bool>> labs;
        for (std::size_t r = 0; r < rows(); ++r) {
            if (!keep(r)) continue;
            ids.push_back(row_ids_[r]);
            auto rw = row(r);
            vals.insert(vals.end(), rw.begin(), rw.end());
            labs.push_back(labels_[r]);
        }
        return FeatureMatrix(columns_, std::move(ids), std::move(vals), std::move(labs));
    }

    /// Labels as 0/1; throws if any row is unlabeled.
    std::vector<int> require_labels() const;

    std::string to_csv() const;
    static FeatureMatrix from_csv(std::string_view csv, const std::string& source = "features.csv");

    bool operator==(const FeatureMatrix&) const = default;

private:
    std::vector<std::string> columns_;
    std::vector<std::string> row_ids_;
    std::vector<double> values_;
    std::vector<std::optional<bool>> labels_;
};

/// algo1: four structured flags then a count column per expert term.
/// algo2: a binary column per selected term. Rows follow `procedures`.
FeatureMatrix assemble(std::span<const corpus::Procedure> procedures, const corpus::Dataset& dataset,
                       const nlp::TaggedCorpus& tagged, const FeatureConfig& config);

}  // namespace ssi::features
