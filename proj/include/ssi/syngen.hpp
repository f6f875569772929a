#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ssi/corpus.hpp"

namespace ssi::syngen {

struct EmittedTerm {
    std::string term;  ///< surface noun group as written in text
    double p_positive = 0.0;
    double p_negative = 0.0;
};

struct EventRates {
    double p_positive = 0.0;
    double p_negative = 0.0;
};

struct SynthConfig {
    std::map<int, int> procedures_per_year{{2015, 700}, {2016, 700}, {2017, 700}};
    double prevalence = 0.01;
    /// Terms the classifier should discover; each is emitted once per
    /// procedure window with the class-dependent probability.
    std::vector<EmittedTerm> planted_terms;
    /// Class-independent noise terms.
    std::vector<EmittedTerm> decoy_terms;
    /// Discriminative but absent from the reference text (e.g. billing codes
    /// copied into notes); the reference filter should drop them.
    std::vector<EmittedTerm> site_specific_terms;
    EventRates dx{0.6, 0.01};
    EventRates reprise{0.4, 0.003};
    EventRates abx{0.95, 0.35};
    EventRates bacterio{0.7, 0.04};
    /// Chance that a procedure also has a note outside its window mentioning
    /// planted terms (exercises window filtering).
    double out_of_window_noise = 0.3;
    /// Chance that a procedure after the first year reuses an earlier patient.
    double repeat_patient_rate = 0.05;
    std::uint64_t seed = 42;

    /// Full-scale defaults: ~2100 procedures, 1% prevalence, 10 planted
    /// terms at 0.9/0.02.
    static SynthConfig full_scale(std::uint64_t seed = 42);
    void validate() const;
    std::string to_json() const;
    static SynthConfig from_json(std::string_view json_text);
};

struct SynthCorpus {
    std::vector<corpus::Procedure> procedures;
    std::vector<corpus::ClinicalDocument> documents;
    std::vector<corpus::CareEvent> events;
    std::string reference_text;
    std::string manifest_json;
};

/// Deterministic for a given config (including seed).
SynthCorpus generate(const SynthConfig& config);

/// Writes procedures.jsonl, documents.jsonl, events.jsonl, truth_manifest.json
/// and reference.txt into `dir`.
void write(const SynthCorpus& corpus, const std::filesystem::path& dir);

/// Sentence frames a term is embedded into; "{}" marks the term slot. Every
/// frame places the term between a verb and punctuation or a demonstrative
/// so the noun group is exactly the term.
const std::vector<std::string>& term_frames();

}  // namespace ssi::syngen
