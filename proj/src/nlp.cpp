#include "ssi/nlp.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "default_data.hpp"
#include "ssi/error.hpp"
#include "ssi/text.hpp"

namespace ssi::nlp {

using nlohmann::json;

std::string_view to_string(Category c) {
    switch (c) {
        case Category::noun: return "NOUN";
        case Category::adj: return "ADJ";
        case Category::prep: return "PREP";
        case Category::det: return "DET";
        case Category::other: return "OTHER";
    }
    return "OTHER";
}

// ---------------------------------------------------------------------------
// Tokenizer

namespace {

bool is_terminal(char32_t cp) { return cp == '.' || cp == '!' || cp == '?' || cp == 0x2026; }
bool is_apostrophe(char32_t cp) { return cp == '\'' || cp == 0x2019; }
bool is_hyphen(char32_t cp) { return cp == '-' || cp == 0x2010 || cp == 0x2011; }
bool is_word_char(char32_t cp) { return text::is_letter(cp) || text::is_digit(cp); }

char32_t peek(std::string_view s, std::size_t pos) {
    if (pos >= s.size()) return 0;
    return text::decode_next(s, pos);
}

}  // namespace

std::vector<RawSentence> tokenize(std::string_view s) {
    std::vector<RawSentence> sentences;
    RawSentence current;
    auto flush = [&] {
        if (!current.empty()) sentences.push_back(std::move(current));
        current.clear();
    };

    std::size_t pos = 0;
    while (pos < s.size()) {
        const std::size_t start = pos;
        const char32_t cp = text::decode_next(s, pos);
        if (cp == '\n' || cp == '\r') {
            flush();
            continue;
        }
        if (text::is_space(cp)) continue;
        if (!is_word_char(cp)) {
            current.push_back({std::string(s.substr(start, pos - start)), start, pos, true});
            if (is_terminal(cp)) {
                // Runs such as "..." or "?!" stay in the sentence they close.
                while (pos < s.size() && is_terminal(peek(s, pos))) {
                    const std::size_t b = pos;
                    text::decode_next(s, pos);
                    current.push_back({std::string(s.substr(b, pos - b)), b, pos, true});
                }
                flush();
            }
            continue;
        }
        // Word: letters/digits, inner hyphens, decimal separators between
        // digits, and a trailing apostrophe for elisions.
        char32_t prev = cp;
        while (pos < s.size()) {
            std::size_t look = pos;
            const char32_t next = text::decode_next(s, look);
            if (is_word_char(next)) {
                prev = next;
                pos = look;
                continue;
            }
            const char32_t after = peek(s, look);
            if (is_hyphen(next) && is_word_char(after)) {
                prev = next;
                pos = look;
                continue;
            }
            if ((next == '.' || next == ',') && text::is_digit(prev) && text::is_digit(after)) {
                prev = next;
                pos = look;
                continue;
            }
            if (is_apostrophe(next) && text::is_letter(prev) && text::is_letter(after)) {
                pos = look;
                break;
            }
            break;
        }
        current.push_back({std::string(s.substr(start, pos - start)), start, pos, false});
    }
    flush();
    return sentences;
}

// ---------------------------------------------------------------------------
// Tag mapping

TagMapping TagMapping::french_default() { return from_json(data::kTagmapJson); }

TagMapping TagMapping::from_json(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError("tagmap", 0, e.what());
    }
    if (!j.is_object()) throw ParseError("tagmap", 0, "expected an object of category -> tag list");
    TagMapping m;
    for (const auto& [key, tags] : j.items()) {
        Category c;
        if (key == "NOUN") c = Category::noun;
        else if (key == "ADJ") c = Category::adj;
        else if (key == "PREP") c = Category::prep;
        else if (key == "DET") c = Category::det;
        else if (key == "OTHER") c = Category::other;
        else throw ParseError("tagmap", 0, "unknown category \"" + key + "\"");
        if (!tags.is_array()) throw ParseError("tagmap", 0, "category \"" + key + "\" must list tags");
        for (const auto& t : tags) {
            if (!t.is_string()) throw ParseError("tagmap", 0, "tags must be strings");
            m.set(t.get<std::string>(), c);
        }
    }
    return m;
}

TagMapping TagMapping::load(const std::filesystem::path& path) { return from_json(corpus::read_file(path)); }

std::string TagMapping::to_json() const {
    json j = json::object();
    for (const auto& [tag, c] : map_) j[std::string(nlp::to_string(c))].push_back(tag);
    return j.dump(2);
}

Category TagMapping::category(std::string_view tag) const {
    auto it = map_.find(tag);
    return it == map_.end() ? Category::other : it->second;
}

// ---------------------------------------------------------------------------
// Lexicon and built-in tagger

namespace {

std::string lexicon_key(std::string_view surface) {
    std::string k = text::lower(surface);
    // Typographic apostrophe folds onto ASCII.
    for (std::size_t p; (p = k.find("\xE2\x80\x99")) != std::string::npos;) k.replace(p, 3, "'");
    return k;
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

Lexicon Lexicon::builtin() { return parse_tsv(data::kLexiconTsv, "builtin lexicon"); }

Lexicon Lexicon::parse_tsv(std::string_view content, const std::string& source) {
    Lexicon lex;
    std::size_t line_no = 0, pos = 0;
    while (pos < content.size()) {
        std::size_t nl = content.find('\n', pos);
        if (nl == std::string_view::npos) nl = content.size();
        std::string_view line = content.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string_view::npos || line.find('\t', t2 + 1) != std::string_view::npos)
            throw ParseError(source, line_no, "expected surface<TAB>tag<TAB>lemma");
        lex.add(line.substr(0, t1), std::string(line.substr(t1 + 1, t2 - t1 - 1)),
                std::string(line.substr(t2 + 1)));
    }
    return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
    return parse_tsv(corpus::read_file(path), path.string());
}

std::string Lexicon::to_tsv() const {
    std::string out;
    for (const auto& [surface, e] : entries_) out += surface + "\t" + e.tag + "\t" + e.lemma + "\n";
    return out;
}

void Lexicon::add(std::string_view surface, std::string tag, std::string lemma) {
    entries_.insert_or_assign(lexicon_key(surface), LexiconEntry{std::move(tag), std::move(lemma)});
}

const LexiconEntry* Lexicon::find(std::string_view surface) const {
    auto it = entries_.find(lexicon_key(surface));
    return it == entries_.end() ? nullptr : &it->second;
}

TaggedSentence builtin_tag(const RawSentence& tokens, const Lexicon& lexicon) {
    TaggedSentence out;
    out.reserve(tokens.size());
    for (const auto& tok : tokens) {
        TaggedToken t{tok.surface, {}, {}, tok.begin, tok.end};
        if (const auto* e = lexicon.find(tok.surface)) {
            t.tag = e->tag;
            t.lemma = e->lemma;
            out.push_back(std::move(t));
            continue;
        }
        const std::string low = text::lower(tok.surface);
        t.lemma = low;
        bool has_letter = false, has_lower = false, all_digits = true;
        for (std::size_t i = 0; i < tok.surface.size();) {
            const char32_t cp = text::decode_next(tok.surface, i);
            if (text::is_letter(cp)) {
                has_letter = true;
                if (text::to_lower(cp) == cp) has_lower = true;
            }
            if (!text::is_digit(cp) && cp != '.' && cp != ',') all_digits = false;
        }
        if (tok.punct) {
            std::size_t i = 0;
            t.tag = is_terminal(text::decode_next(tok.surface, i)) ? "SENT" : "PUN";
        } else if (all_digits) {
            t.tag = "NUM";
        } else if (has_letter && !has_lower && text::codepoint_count(tok.surface) >= 2) {
            t.tag = "NAM";
        } else if (ends_with(low, "ique") || ends_with(low, "iques") || ends_with(low, "eux") ||
                   ends_with(low, "euse") || ends_with(low, "euses") || ends_with(low, "able") ||
                   ends_with(low, "ables") || ends_with(low, "ible") || ends_with(low, "ibles") ||
                   ends_with(low, "ale") || ends_with(low, "ales")) {
            t.tag = "ADJ";
            if (low.back() == 's') t.lemma.pop_back();
        } else {
            t.tag = "NOM";
            if (text::codepoint_count(low) > 4 && ends_with(low, "s") && !ends_with(low, "ss") &&
                !ends_with(low, "us") && !ends_with(low, "is"))
                t.lemma.pop_back();
        }
        out.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tagged TSV

std::vector<TaggedSentence> parse_tagged_tsv(std::string_view content, const std::string& source) {
    std::vector<TaggedSentence> sentences;
    TaggedSentence current;
    std::size_t line_no = 0, pos = 0;
    while (pos < content.size()) {
        std::size_t nl = content.find('\n', pos);
        if (nl == std::string_view::npos) nl = content.size();
        std::string_view line = content.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            if (!current.empty()) sentences.push_back(std::move(current));
            current.clear();
            continue;
        }
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string_view::npos || line.find('\t', t2 + 1) != std::string_view::npos)
            throw ParseError(source, line_no, "expected 3 tab-separated columns token<TAB>tag<TAB>lemma");
        TaggedToken t;
        t.surface = std::string(line.substr(0, t1));
        t.tag = std::string(line.substr(t1 + 1, t2 - t1 - 1));
        std::string lemma(line.substr(t2 + 1));
        if (auto bar = lemma.find('|'); bar != std::string::npos && bar > 0) lemma.resize(bar);
        if (lemma.empty() || lemma == "<unknown>") lemma = text::lower(t.surface);
        t.lemma = std::move(lemma);
        if (t.surface.empty()) throw ParseError(source, line_no, "empty token");
        current.push_back(std::move(t));
    }
    if (!current.empty()) sentences.push_back(std::move(current));
    return sentences;
}

std::vector<TaggedSentence> load_tagged_tsv(const std::filesystem::path& path) {
    return parse_tagged_tsv(corpus::read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Terms

std::string normalize_term(std::span<const std::string> lemmas) {
    std::string out;
    for (const auto& l : lemmas) {
        for (auto& w : text::split_ws(text::lower(l))) {
            if (!out.empty()) out += ' ';
            out += w;
        }
    }
    return out;
}

std::string normalize_term(std::string_view s) {
    const std::string one(s);
    return normalize_term(std::span<const std::string>(&one, 1));
}

std::vector<Term> extract_noun_groups(const TaggedSentence& sentence, const TagMapping& mapping,
                                      int max_content) {
    const std::size_t n = sentence.size();
    std::vector<Category> cats(n);
    for (std::size_t i = 0; i < n; ++i) cats[i] = mapping.category(sentence[i].tag);

    std::set<Term> found;
    std::vector<std::string> lemmas;
    auto emit = [&](std::size_t b, std::size_t e, int content) {
        lemmas.clear();
        for (std::size_t k = b; k <= e; ++k) lemmas.push_back(sentence[k].lemma);
        found.insert(Term{normalize_term(lemmas), content});
    };

    for (std::size_t start = 0; start < n; ++start) {
        if (cats[start] != Category::noun || max_content < 1) continue;
        int content = 1;
        emit(start, start, content);
        std::size_t last = start;
        // Matching from a fixed start is deterministic: each step consumes
        // ADJ, NOUN, PREP NOUN or PREP DET NOUN.
        while (last + 1 < n) {
            std::size_t p = last + 1;
            if (cats[p] == Category::prep) {
                ++p;
                if (p < n && cats[p] == Category::det) ++p;
                if (p >= n || cats[p] != Category::noun) break;
            } else if (cats[p] != Category::adj && cats[p] != Category::noun) {
                break;
            }
            if (++content > max_content) break;
            emit(start, p, content);
            last = p;
        }
    }
    return {found.begin(), found.end()};
}

// ---------------------------------------------------------------------------
// Document tagging

Tagger::Tagger(Lexicon lexicon, std::optional<std::filesystem::path> tagged_dir)
    : lexicon_(std::move(lexicon)), tagged_dir_(std::move(tagged_dir)) {}

std::vector<TaggedSentence> Tagger::tag_text(std::string_view text) const {
    std::vector<TaggedSentence> out;
    for (const auto& s : tokenize(text)) out.push_back(builtin_tag(s, lexicon_));
    return out;
}

std::vector<TaggedSentence> Tagger::tag_document(const corpus::ClinicalDocument& doc) const {
    if (tagged_dir_) {
        const auto path = *tagged_dir_ / (doc.doc_id + ".tsv");
        if (std::filesystem::exists(path)) {
            auto sentences = load_tagged_tsv(path);
            // Recover byte offsets by scanning surfaces forward through the text.
            std::size_t cursor = 0;
            for (auto& s : sentences)
                for (auto& t : s) {
                    const auto at = doc.text.find(t.surface, cursor);
                    if (at == std::string::npos) continue;
                    t.begin = at;
                    t.end = at + t.surface.size();
                    cursor = t.end;
                }
            return sentences;
        }
    }
    return tag_text(doc.text);
}

std::vector<std::vector<std::string>> lemma_stream(const TaggedDocument& doc) {
    std::vector<std::vector<std::string>> out;
    out.reserve(doc.sentences.size());
    for (const auto& s : doc.sentences) {
        std::vector<std::string> lemmas;
        lemmas.reserve(s.size());
        for (const auto& t : s) lemmas.push_back(text::lower(t.lemma));
        out.push_back(std::move(lemmas));
    }
    return out;
}

TaggedCorpus::TaggedCorpus(const corpus::Dataset& dataset, const Tagger& tagger) {
    for (const auto& d : dataset.documents()) {
        auto [it, inserted] = docs_.try_emplace(d.doc_id);
        if (!inserted) throw ValidationError("duplicate doc_id \"" + d.doc_id + "\"");
        it->second.source = &d;
        it->second.sentences = tagger.tag_document(d);
    }
}

const TaggedDocument& TaggedCorpus::get(const corpus::ClinicalDocument& doc) const {
    auto it = docs_.find(doc.doc_id);
    if (it == docs_.end()) throw NotFoundError("document \"" + doc.doc_id + "\" not tagged");
    return it->second;
}

// ---------------------------------------------------------------------------
// Term index

void TermIndex::add(const Term& term, const std::string& procedure_id, std::size_t n) {
    auto [it, inserted] = terms_.try_emplace(term.text);
    if (inserted) it->second.term = term;
    it->second.counts[procedure_id] += n;
}

const TermPostings* TermIndex::find(std::string_view term) const {
    auto it = terms_.find(term);
    return it == terms_.end() ? nullptr : &it->second;
}

bool TermIndex::operator==(const TermIndex& o) const {
    if (terms_.size() != o.terms_.size()) return false;
    for (auto a = terms_.begin(), b = o.terms_.begin(); a != terms_.end(); ++a, ++b) {
        if (a->first != b->first || a->second.term.content_len != b->second.term.content_len) return false;
        if (!std::ranges::equal(a->second.counts, b->second.counts)) return false;
    }
    return true;
}

std::string TermIndex::to_json() const {
    json arr = json::array();
    for (const auto& [text, p] : terms_) {
        json counts = json::object();
        for (const auto& [pid, n] : p.counts) counts[pid] = n;
        arr.push_back({{"term", text}, {"content_len", p.term.content_len}, {"procedures", counts}});
    }
    return json{{"version", 1}, {"terms", arr}}.dump() + "\n";
}

TermIndex TermIndex::from_json(std::string_view json_text) {
    TermIndex idx;
    try {
        const json j = json::parse(json_text);
        for (const auto& t : j.at("terms")) {
            const Term term{t.at("term").get<std::string>(), t.at("content_len").get<int>()};
            for (const auto& [pid, n] : t.at("procedures").items()) idx.add(term, pid, n.get<std::size_t>());
        }
    } catch (const json::exception& e) {
        throw ParseError("term index", 0, e.what());
    }
    return idx;
}

TermIndex index_terms(std::span<const ProcedureDocuments> groups, const TagMapping& mapping, int max_content) {
    TermIndex idx;
    for (const auto& g : groups)
        for (const auto* doc : g.documents)
            for (const auto& sentence : doc->sentences)
                for (const auto& term : extract_noun_groups(sentence, mapping, max_content))
                    idx.add(term, g.procedure_id);
    return idx;
}

}  // namespace ssi::nlp
