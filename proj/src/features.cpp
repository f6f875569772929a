#include "ssi/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "default_data.hpp"
#include "ssi/error.hpp"
#include "ssi/hash.hpp"
#include "ssi/termselect.hpp"
#include "ssi/text.hpp"

namespace ssi::features {

using nlohmann::json;

void StructuredConfig::validate() const {
    if (icd10_codes.empty() || ccam_codes.empty() || atc_prefixes.empty() || bacterio_protocols.empty())
        throw ValidationError("structured config needs non-empty icd10, ccam, atc and bacteriology sets");
}

std::string StructuredConfig::to_json() const {
    json j = {{"icd10_codes", icd10_codes},
              {"ccam_codes", ccam_codes},
              {"atc_prefixes", atc_prefixes},
              {"bacterio_protocols", bacterio_protocols}};
    return j.dump(2) + "\n";
}

StructuredConfig StructuredConfig::from_json(std::string_view json_text) {
    StructuredConfig c;
    try {
        const json j = json::parse(json_text);
        if (j.contains("icd10_codes")) c.icd10_codes = j["icd10_codes"].get<std::set<std::string>>();
        if (j.contains("ccam_codes")) c.ccam_codes = j["ccam_codes"].get<std::set<std::string>>();
        if (j.contains("atc_prefixes")) c.atc_prefixes = j["atc_prefixes"].get<std::set<std::string>>();
        if (j.contains("bacterio_protocols"))
            c.bacterio_protocols = j["bacterio_protocols"].get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ParseError("structured config", 0, e.what());
    }
    return c;
}

std::optional<std::string> matching_code(const corpus::CareEvent& e, const StructuredConfig& config) {
    using corpus::EventKind;
    switch (e.kind) {
        case EventKind::icd10:
            if (config.icd10_codes.contains(e.code)) return e.code;
            break;
        case EventKind::ccam:
            if (config.ccam_codes.contains(e.code)) return e.code;
            break;
        case EventKind::atc_administration:
            for (const auto& p : config.atc_prefixes)
                if (e.code.starts_with(p)) return e.code;
            break;
        case EventKind::bacteriology_protocol: {
            const std::string label = text::fold(e.code);
            for (const auto& p : config.bacterio_protocols)
                if (label.find(text::fold(p)) != std::string::npos) return e.code;
            break;
        }
    }
    return std::nullopt;
}

StructuredFlags structured_flags(std::span<const corpus::CareEvent* const> events, const StructuredConfig& config) {
    using corpus::EventKind;
    StructuredFlags f;
    for (const auto* e : events) {
        if (!matching_code(*e, config)) continue;
        switch (e->kind) {
            case EventKind::icd10: f.dx = true; break;
            case EventKind::ccam: f.reprise = true; break;
            case EventKind::atc_administration: f.abx = true; break;
            case EventKind::bacteriology_protocol: f.bacterio = true; break;
        }
    }
    return f;
}

std::size_t count_in_sentence(std::span<const std::string> lemmas, std::span<const std::string> term) {
    if (term.empty() || term.size() > lemmas.size()) return 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i + term.size() <= lemmas.size(); ++i)
        if (std::equal(term.begin(), term.end(), lemmas.begin() + static_cast<std::ptrdiff_t>(i))) ++n;
    return n;
}

std::vector<double> term_features(std::span<const nlp::TaggedDocument* const> documents,
                                  const std::vector<std::string>& terms, TermMode mode) {
    std::vector<std::vector<std::string>> tokens;
    tokens.reserve(terms.size());
    for (const auto& t : terms) tokens.push_back(text::split_ws(nlp::normalize_term(t)));

    std::vector<double> out(terms.size(), 0.0);
    for (const auto* doc : documents)
        for (const auto& lemmas : nlp::lemma_stream(*doc))
            for (std::size_t k = 0; k < tokens.size(); ++k) out[k] += static_cast<double>(count_in_sentence(lemmas, tokens[k]));
    if (mode == TermMode::binary)
        for (auto& v : out) v = std::min(v, 1.0);
    return out;
}

std::string_view to_string(Algorithm a) { return a == Algorithm::algo1 ? "algo1" : "algo2"; }

Algorithm parse_algorithm(std::string_view s) {
    if (s == "algo1") return Algorithm::algo1;
    if (s == "algo2") return Algorithm::algo2;
    throw ValidationError("algo must be algo1 or algo2, got \"" + std::string(s) + "\"");
}

std::vector<std::string> default_expert_terms() { return termselect::parse_term_list(data::kExpertTermsTxt); }

std::vector<std::string> FeatureConfig::column_names() const {
    std::vector<std::string> cols;
    if (algo == Algorithm::algo1) {
        cols = {"dx_flag", "reprise_flag", "abx_flag", "bacterio_flag"};
        for (const auto& t : terms) cols.push_back("count:" + nlp::normalize_term(t));
    } else {
        for (const auto& t : terms) cols.push_back("has:" + nlp::normalize_term(t));
    }
    return cols;
}

std::string FeatureConfig::fingerprint() const {
    json j = {{"algo", to_string(algo)},
              {"terms", terms},
              {"window_days", window.length_days},
              {"include_day0", window.include_day0}};
    if (algo == Algorithm::algo1) j["structured"] = json::parse(structured.to_json());
    return hash::hex64(hash::fnv1a(j.dump()));
}

FeatureMatrix::FeatureMatrix(std::vector<std::string> columns, std::vector<std::string> row_ids,
                             std::vector<double> values, std::vector<std::optional<bool>> labels)
    : columns_(std::move(columns)), row_ids_(std::move(row_ids)), values_(std::move(values)), labels_(std::move(labels)) {
    if (values_.size() != row_ids_.size() * columns_.size() || labels_.size() != row_ids_.size())
        throw ValidationError("feature matrix dimensions do not agree");
    std::set<std::string> seen;
    for (const auto& c : columns_)
        if (!seen.insert(c).second) throw ValidationError("duplicate feature column \"" + c + "\"");
}

std::vector<int> FeatureMatrix::require_labels() const {
    std::vector<int> y;
    y.reserve(rows());
    for (std::size_t r = 0; r < rows(); ++r) {
        if (!labels_[r]) throw ValidationError("procedure \"" + row_ids_[r] + "\" has no gold label");
        y.push_back(*labels_[r] ? 1 : 0);
    }
    return y;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string format_number(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15) return std::to_string(static_cast<long long>(v));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view s, const std::string& source) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    std::size_t line = 1;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < s.size() && s[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < s.size() && s[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            field.clear();
            row.clear();
            any = false;
            ++line;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw ParseError(source, line, "unterminated quoted field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

std::string FeatureMatrix::to_csv() const {
    std::string out = "procedure_id";
    for (const auto& c : columns_) out += "," + csv_field(c);
    out += ",label\n";
    for (std::size_t r = 0; r < rows(); ++r) {
        out += csv_field(row_ids_[r]);
        for (double v : row(r)) out += "," + format_number(v);
        out += ",";
        if (labels_[r]) out += *labels_[r] ? "1" : "0";
        out += "\n";
    }
    return out;
}

FeatureMatrix FeatureMatrix::from_csv(std::string_view csv, const std::string& source) {
    auto rows = parse_csv(csv, source);
    if (rows.empty()) throw ParseError(source, 0, "missing header row");
    const auto& header = rows.front();
    if (header.size() < 2 || header.front() != "procedure_id" || header.back() != "label")
        throw ParseError(source, 1, "header must start with procedure_id and end with label");
    std::vector<std::string> cols(header.begin() + 1, header.end() - 1);
    std::vector<std::string> ids;
    std::vector<double> vals;
    std::vector<std::optional<bool>> labels;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != header.size())
            throw ParseError(source, i + 1, "expected " + std::to_string(header.size()) + " fields");
        ids.push_back(r.front());
        for (std::size_t k = 1; k + 1 < r.size(); ++k) {
            double v = 0;
            auto [p, ec] = std::from_chars(r[k].data(), r[k].data() + r[k].size(), v);
            if (ec != std::errc() || p != r[k].data() + r[k].size() || !(v >= 0))
                throw ParseError(source, i + 1, "bad feature value \"" + r[k] + "\"");
            vals.push_back(v);
        }
        const auto& lab = r.back();
        if (lab.empty()) labels.emplace_back();
        else if (lab == "1") labels.emplace_back(true);
        else if (lab == "0") labels.emplace_back(false);
        else throw ParseError(source, i + 1, "label must be 0, 1 or empty");
    }
    return FeatureMatrix(std::move(cols), std::move(ids), std::move(vals), std::move(labels));
}

FeatureMatrix assemble(std::span<const corpus::Procedure> procedures, const corpus::Dataset& dataset,
                       const nlp::TaggedCorpus& tagged, const FeatureConfig& config) {
    if (config.terms.empty()) throw ValidationError("feature assembly needs a non-empty term list");
    if (config.algo == Algorithm::algo1) config.structured.validate();

    const auto columns = config.column_names();
    std::vector<std::string> ids;
    std::vector<double> values;
    std::vector<std::optional<bool>> labels;
    values.reserve(procedures.size() * columns.size());
    for (const auto& p : procedures) {
        const auto slice = dataset.window(p, config.window);
        std::vector<const nlp::TaggedDocument*> docs;
        docs.reserve(slice.documents.size());
        for (const auto* d : slice.documents) docs.push_back(&tagged.get(*d));
        if (config.algo == Algorithm::algo1) {
            const auto f = structured_flags(slice.events, config.structured);
            values.insert(values.end(), {double(f.dx), double(f.reprise), double(f.abx), double(f.bacterio)});
            const auto counts = term_features(docs, config.terms, TermMode::count);
            values.insert(values.end(), counts.begin(), counts.end());
        } else {
            const auto bin = term_features(docs, config.terms, TermMode::binary);
            values.insert(values.end(), bin.begin(), bin.end());
        }
        ids.push_back(p.procedure_id);
        labels.push_back(p.gold_label);
    }
    return FeatureMatrix(columns, std::move(ids), std::move(values), std::move(labels));
}

}  // namespace ssi::features
