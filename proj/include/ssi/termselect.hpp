#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ssi/nlp.hpp"

namespace ssi::termselect {

/// Procedure-level gold labels for the procedures in index scope.
using Labels = std::map<std::string, bool, std::less<>>;

struct TermStats {
    nlp::Term term;
    std::size_t a = 0;  ///< positives containing the term
    std::size_t b = 0;  ///< negatives containing the term
    std::size_t c = 0;  ///< positives without
    std::size_t d = 0;  ///< negatives without
    double odds_ratio = 1.0;
};

struct SelectionConfig {
    double positive_ratio = 0.20;
    double smoothing = 0.5;
    std::size_t top_k = 20;
    std::optional<std::vector<std::string>> approval_list;

    void validate() const;
};

/// Minimum positive-document count a term needs: ceil(ratio * n_positives).
std::size_t frequency_cutoff(std::size_t n_positives, double ratio);

/// Terms present in at least `frequency_cutoff` positive procedures.
std::set<std::string> frequency_filter(const nlp::TermIndex& index, const Labels& labels, double ratio);

/// ((a+s)(d+s)) / ((b+s)(c+s)). With s = 0 and a zero denominator the result
/// is +infinity (or 1 for the degenerate 0/0 table).
double odds_ratio(std::size_t a, std::size_t b, std::size_t c, std::size_t d, double smoothing);

/// Contingency tables and ORs for the given terms, sorted by OR descending,
/// then a descending, then term text.
std::vector<TermStats> rank_terms(const nlp::TermIndex& index, const Labels& labels,
                                  const std::set<std::string>& terms, double smoothing);

/// frequency_filter followed by rank_terms.
std::vector<TermStats> compute_stats(const nlp::TermIndex& index, const Labels& labels,
                                     const SelectionConfig& config);

struct ReferenceFilterResult {
    std::set<std::string> kept;
    std::size_t reference_terms = 0;
    std::vector<std::string> warnings;
};

/// Reference vocabulary: every noun group extracted from the tagged reference text.
std::set<std::string> reference_terms(const std::vector<nlp::TaggedSentence>& reference,
                                      const nlp::TagMapping& mapping, int max_content);

ReferenceFilterResult reference_filter(const std::set<std::string>& candidates,
                                       const std::vector<nlp::TaggedSentence>& reference,
                                       const nlp::TagMapping& mapping, int max_content);

struct SelectedTerm {
    std::string term;
    std::optional<TermStats> stats;  ///< absent for approved terms missing from the statistics
};

struct Selection {
    std::vector<SelectedTerm> terms;
    std::vector<std::string> warnings;

    std::vector<std::string> term_texts() const;
};

/// The approval list, when configured, fixes membership and order; otherwise
/// the top_k entries of `stats` (already sorted) are kept.
Selection select_final(const std::vector<TermStats>& stats, const SelectionConfig& config);

struct CandidateRow {
    TermStats stats;
    bool in_reference = false;
};

/// candidate_report.json: ranked array of {term,a,b,c,d,odds_ratio,in_reference}.
std::string candidate_report_json(const std::vector<CandidateRow>& rows);
std::vector<CandidateRow> parse_candidate_report(std::string_view json_text);

/// approved_terms.txt: one normalized term per line, order significant.
std::string approved_terms_text(const std::vector<std::string>& terms);
std::vector<std::string> parse_term_list(std::string_view content);

}  // namespace ssi::termselect
