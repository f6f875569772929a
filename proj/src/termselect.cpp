#include "ssi/termselect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "ssi/error.hpp"
#include "ssi/text.hpp"

namespace ssi::termselect {

using nlohmann::json;

void SelectionConfig::validate() const {
    if (!(positive_ratio > 0.0 && positive_ratio <= 1.0))
        throw ValidationError("positive_ratio must be in (0, 1]");
    if (!(smoothing >= 0.0) || !std::isfinite(smoothing)) throw ValidationError("smoothing must be >= 0");
    if (top_k < 1) throw ValidationError("top_k must be >= 1");
}

std::size_t frequency_cutoff(std::size_t n_positives, double ratio) {
    if (n_positives == 0) throw ValidationError("frequency filter needs at least one positive procedure");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ValidationError("positive_ratio must be in (0, 1]");
    // Guard against 0.2 * 25 evaluating to 5.000000000000001.
    const double raw = ratio * static_cast<double>(n_positives);
    const double nearest = std::round(raw);
    const double v = std::abs(raw - nearest) < 1e-9 ? nearest : std::ceil(raw);
    return static_cast<std::size_t>(v);
}

namespace {

std::size_t count_positives(const Labels& labels) {
    return static_cast<std::size_t>(std::ranges::count_if(labels, [](const auto& kv) { return kv.second; }));
}

// Number of positive and negative labeled procedures containing the term.
std::pair<std::size_t, std::size_t> presence(const nlp::TermPostings& p, const Labels& labels) {
    std::size_t pos = 0, neg = 0;
    for (const auto& [pid, n] : p.counts) {
        if (n == 0) continue;
        auto it = labels.find(pid);
        if (it == labels.end()) continue;
        (it->second ? pos : neg) += 1;
    }
    return {pos, neg};
}

}  // namespace

std::set<std::string> frequency_filter(const nlp::TermIndex& index, const Labels& labels, double ratio) {
    const std::size_t cutoff = frequency_cutoff(count_positives(labels), ratio);
    std::set<std::string> kept;
    for (const auto& [text, p] : index.terms())
        if (presence(p, labels).first >= cutoff) kept.insert(text);
    return kept;
}

double odds_ratio(std::size_t a, std::size_t b, std::size_t c, std::size_t d, double smoothing) {
    const double num = (static_cast<double>(a) + smoothing) * (static_cast<double>(d) + smoothing);
    const double den = (static_cast<double>(b) + smoothing) * (static_cast<double>(c) + smoothing);
    if (den == 0.0) return num == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    return num / den;
}

std::vector<TermStats> rank_terms(const nlp::TermIndex& index, const Labels& labels,
                                  const std::set<std::string>& terms, double smoothing) {
    const std::size_t n_pos = count_positives(labels);
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw ValidationError("odds ratios need both positive and negative procedures");

    std::vector<TermStats> out;
    out.reserve(terms.size());
    for (const auto& t : terms) {
        TermStats s;
        if (const auto* p = index.find(t)) {
            s.term = p->term;
            std::tie(s.a, s.b) = presence(*p, labels);
        } else {
            s.term = nlp::Term{t, 0};
        }
        s.c = n_pos - s.a;
        s.d = n_neg - s.b;
        s.odds_ratio = odds_ratio(s.a, s.b, s.c, s.d, smoothing);
        out.push_back(std::move(s));
    }
    std::ranges::sort(out, [](const TermStats& x, const TermStats& y) {
        if (x.odds_ratio != y.odds_ratio) return x.odds_ratio > y.odds_ratio;
        if (x.a != y.a) return x.a > y.a;
        return x.term.text < y.term.text;
    });
    return out;
}

std::vector<TermStats> compute_stats(const nlp::TermIndex& index, const Labels& labels,
                                     const SelectionConfig& config) {
    config.validate();
    return rank_terms(index, labels, frequency_filter(index, labels, config.positive_ratio), config.smoothing);
}

std::set<std::string> reference_terms(const std::vector<nlp::TaggedSentence>& reference,
                                      const nlp::TagMapping& mapping, int max_content) {
    std::set<std::string> out;
    for (const auto& s : reference)
        for (auto& t : nlp::extract_noun_groups(s, mapping, max_content)) out.insert(std::move(t.text));
    return out;
}

ReferenceFilterResult reference_filter(const std::set<std::string>& candidates,
                                       const std::vector<nlp::TaggedSentence>& reference,
                                       const nlp::TagMapping& mapping, int max_content) {
    ReferenceFilterResult r;
    const auto vocab = reference_terms(reference, mapping, max_content);
    r.reference_terms = vocab.size();
    if (vocab.empty()) {
        r.warnings.push_back("reference text yielded no terms; every candidate is excluded");
        return r;
    }
    for (const auto& c : candidates)
        if (vocab.contains(nlp::normalize_term(c))) r.kept.insert(c);
    return r;
}

std::vector<std::string> Selection::term_texts() const {
    std::vector<std::string> out;
    out.reserve(terms.size());
    for (const auto& t : terms) out.push_back(t.term);
    return out;
}

Selection select_final(const std::vector<TermStats>& stats, const SelectionConfig& config) {
    config.validate();
    Selection sel;
    if (config.approval_list) {
        std::set<std::string> seen;
        for (const auto& raw : *config.approval_list) {
            const std::string t = nlp::normalize_term(raw);
            if (t.empty() || !seen.insert(t).second) continue;
            auto it = std::ranges::find_if(stats, [&](const TermStats& s) { return s.term.text == t; });
            if (it == stats.end()) {
                sel.warnings.push_back("approved term \"" + t + "\" has no statistics");
                sel.terms.push_back({t, std::nullopt});
            } else {
                sel.terms.push_back({t, *it});
            }
        }
        return sel;
    }
    const std::size_t n = std::min(config.top_k, stats.size());
    for (std::size_t i = 0; i < n; ++i) sel.terms.push_back({stats[i].term.text, stats[i]});
    return sel;
}

namespace {

json or_value(double v) {
    // JSON has no infinity; the unsmoothed sentinel is written as a string.
    if (std::isinf(v)) return "inf";
    return v;
}

}  // namespace

std::string candidate_report_json(const std::vector<CandidateRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows)
        arr.push_back({{"term", r.stats.term.text},
                       {"a", r.stats.a},
                       {"b", r.stats.b},
                       {"c", r.stats.c},
                       {"d", r.stats.d},
                       {"odds_ratio", or_value(r.stats.odds_ratio)},
                       {"in_reference", r.in_reference}});
    return arr.dump(2) + "\n";
}

std::vector<CandidateRow> parse_candidate_report(std::string_view json_text) {
    std::vector<CandidateRow> rows;
    try {
        for (const auto& j : json::parse(json_text)) {
            CandidateRow r;
            r.stats.term.text = j.at("term").get<std::string>();
            r.stats.a = j.at("a").get<std::size_t>();
            r.stats.b = j.at("b").get<std::size_t>();
            r.stats.c = j.at("c").get<std::size_t>();
            r.stats.d = j.at("d").get<std::size_t>();
            const auto& o = j.at("odds_ratio");
            r.stats.odds_ratio = o.is_string() ? std::numeric_limits<double>::infinity() : o.get<double>();
            r.in_reference = j.at("in_reference").get<bool>();
            rows.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw ParseError("candidate report", 0, e.what());
    }
    return rows;
}

std::string approved_terms_text(const std::vector<std::string>& terms) {
    std::string out;
    for (const auto& t : terms) out += t + "\n";
    return out;
}

std::vector<std::string> parse_term_list(std::string_view content) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t nl = content.find('\n', pos);
        if (nl == std::string_view::npos) nl = content.size();
        const std::string line = text::trim(content.substr(pos, nl - pos));
        pos = nl + 1;
        if (line.empty() || line.front() == '#') continue;
        out.push_back(nlp::normalize_term(line));
    }
    return out;
}

}  // namespace ssi::termselect
