#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ssi/corpus.hpp"

namespace ssi::nlp {

inline constexpr std::size_t kNoOffset = static_cast<std::size_t>(-1);

/// Abstract word classes the noun-group pattern is written against.
enum class Category { noun, adj, prep, det, other };

std::string_view to_string(Category c);

/// A token with its byte span in the source text.
struct RawToken {
    std::string surface;
    std::size_t begin = kNoOffset;
    std::size_t end = kNoOffset;
    bool punct = false;
};
using RawSentence = std::vector<RawToken>;

/// Splits text into sentences of word and punctuation tokens. Sentences end
/// after terminal punctuation (. ! ? …) and at line breaks. Hyphenated
/// compounds and decimal numbers stay whole; elided articles (l', d') are
/// split after the apostrophe.
std::vector<RawSentence> tokenize(std::string_view text);

struct TaggedToken {
    std::string surface;
    std::string tag;
    std::string lemma;
    std::size_t begin = kNoOffset;
    std::size_t end = kNoOffset;

    bool operator==(const TaggedToken&) const = default;
};
using TaggedSentence = std::vector<TaggedToken>;

/// Concrete tagset symbol -> abstract category. Unmapped tags are OTHER.
class TagMapping {
public:
    TagMapping() = default;

    /// TreeTagger-style French tags (NOM, NAM, ADJ, PRP, PRP:det, DET:ART, ...).
    static TagMapping french_default();
    /// Parses {"NOUN":[...],"ADJ":[...],"PREP":[...],"DET":[...]}.
    static TagMapping from_json(std::string_view json_text);
    static TagMapping load(const std::filesystem::path& path);
    std::string to_json() const;

    void set(std::string tag, Category c) { map_[std::move(tag)] = c; }
    Category category(std::string_view tag) const;

private:
    std::map<std::string, Category, std::less<>> map_;
};

struct LexiconEntry {
    std::string tag;
    std::string lemma;
};

/// Surface form -> (tag, lemma) for the built-in tagger. Keys are lowercased.
class Lexicon {
public:
    static Lexicon builtin();
    /// "surface<TAB>tag<TAB>lemma" lines; '#' comments and blank lines skipped.
    static Lexicon parse_tsv(std::string_view content, const std::string& source = "lexicon");
    static Lexicon load(const std::filesystem::path& path);
    std::string to_tsv() const;

    void add(std::string_view surface, std::string tag, std::string lemma);
    const LexiconEntry* find(std::string_view surface) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, LexiconEntry, std::less<>> entries_;
};

/// Lexicon lookup with suffix heuristics for unknown words: digits -> NUM,
/// terminal punctuation -> SENT, other punctuation -> PUN, all-caps
/// abbreviations -> NAM, adjectival endings (-ique, -eux, -euse, -able, -ible,
/// -ale) -> ADJ, any other word -> NOM. Lemma defaults to the lowercased
/// surface; unknown plurals in -s lose the final s.
TaggedSentence builtin_tag(const RawSentence& tokens, const Lexicon& lexicon);

/// Reads "token<TAB>tag<TAB>lemma" lines; blank lines separate sentences.
/// A lemma of "<unknown>" becomes the lowercased token; "a|b" keeps "a".
std::vector<TaggedSentence> parse_tagged_tsv(std::string_view content, const std::string& source = "tagged");
std::vector<TaggedSentence> load_tagged_tsv(const std::filesystem::path& path);

/// A candidate term: space-joined lowercased lemmas of a noun group.
struct Term {
    std::string text;
    int content_len = 0;

    auto operator<=>(const Term& o) const { return text <=> o.text; }
    bool operator==(const Term& o) const { return text == o.text; }
};

/// Lowercases (keeping diacritics), splits on whitespace and rejoins with
/// single spaces. Idempotent.
std::string normalize_term(std::span<const std::string> lemmas);
std::string normalize_term(std::string_view text);

/// Every contiguous span matching NOUN (ADJ | (PREP DET?)? NOUN)* whose
/// NOUN/ADJ count is at most `max_content`, as sorted unique terms.
std::vector<Term> extract_noun_groups(const TaggedSentence& sentence, const TagMapping& mapping,
                                      int max_content = 3);

/// Tags documents, either from pre-tagged `<doc_id>.tsv` files or with the
/// built-in tagger.
class Tagger {
public:
    explicit Tagger(Lexicon lexicon = Lexicon::builtin(),
                    std::optional<std::filesystem::path> tagged_dir = std::nullopt);

    std::vector<TaggedSentence> tag_text(std::string_view text) const;
    std::vector<TaggedSentence> tag_document(const corpus::ClinicalDocument& doc) const;

private:
    Lexicon lexicon_;
    std::optional<std::filesystem::path> tagged_dir_;
};

struct TaggedDocument {
    const corpus::ClinicalDocument* source = nullptr;
    std::vector<TaggedSentence> sentences;
};

/// Lemma sequences per sentence, the stream terms are matched against.
std::vector<std::vector<std::string>> lemma_stream(const TaggedDocument& doc);

/// Tagged documents keyed by doc_id; computed once, read by every stage.
class TaggedCorpus {
public:
    TaggedCorpus(const corpus::Dataset& dataset, const Tagger& tagger);
    const TaggedDocument& get(const corpus::ClinicalDocument& doc) const;

private:
    std::map<std::string, TaggedDocument, std::less<>> docs_;
};

struct ProcedureDocuments {
    std::string procedure_id;
    std::vector<const TaggedDocument*> documents;
};

struct TermPostings {
    Term term;
    /// procedure_id -> number of sentences in which the term was extracted
    std::map<std::string, std::size_t, std::less<>> counts;
};

class TermIndex {
public:
    void add(const Term& term, const std::string& procedure_id, std::size_t n = 1);

    const std::map<std::string, TermPostings, std::less<>>& terms() const { return terms_; }
    const TermPostings* find(std::string_view term) const;
    std::size_t size() const { return terms_.size(); }

    std::string to_json() const;
    static TermIndex from_json(std::string_view json_text);

    bool operator==(const TermIndex& o) const;

private:
    std::map<std::string, TermPostings, std::less<>> terms_;
};

TermIndex index_terms(std::span<const ProcedureDocuments> groups, const TagMapping& mapping,
                      int max_content = 3);

}  // namespace ssi::nlp
