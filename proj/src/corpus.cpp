#include "ssi/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ssi/error.hpp"

namespace ssi::corpus {

using nlohmann::json;

std::string_view to_string(DocType t) {
    switch (t) {
        case DocType::operative_report: return "operative_report";
        case DocType::consultation: return "consultation";
        case DocType::hospitalization: return "hospitalization";
        case DocType::other: return "other";
    }
    return "other";
}

std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::icd10: return "icd10";
        case EventKind::ccam: return "ccam";
        case EventKind::atc_administration: return "atc_administration";
        case EventKind::bacteriology_protocol: return "bacteriology_protocol";
    }
    return "icd10";
}

DocType parse_doc_type(std::string_view s) {
    if (s == "operative_report") return DocType::operative_report;
    if (s == "consultation") return DocType::consultation;
    if (s == "hospitalization") return DocType::hospitalization;
    if (s == "other") return DocType::other;
    throw ValidationError("unknown doc_type \"" + std::string(s) + "\"");
}

EventKind parse_event_kind(std::string_view s) {
    if (s == "icd10") return EventKind::icd10;
    if (s == "ccam") return EventKind::ccam;
    if (s == "atc_administration") return EventKind::atc_administration;
    if (s == "bacteriology_protocol") return EventKind::bacteriology_protocol;
    throw ValidationError("unknown event kind \"" + std::string(s) + "\"");
}

SurveillanceWindow SurveillanceWindow::after(Date start, int length_days) {
    if (length_days <= 0) throw ValidationError("window length must be positive");
    return {start, start + length_days, length_days};
}

bool in_window(Date item_date, const Procedure& procedure, int length_days) {
    return in_window(item_date, procedure, WindowPolicy{length_days, true});
}

bool in_window(Date item_date, const Procedure& procedure, const WindowPolicy& policy) {
    const Date start = procedure.intervention_date;
    if (item_date > start + policy.length_days) return false;
    return policy.include_day0 ? item_date >= start : item_date > start;
}

WindowSlice collect_window(const Procedure& procedure, const std::vector<ClinicalDocument>& documents,
                           const std::vector<CareEvent>& events, const WindowPolicy& policy) {
    WindowSlice slice;
    for (const auto& d : documents)
        if (d.patient_id == procedure.patient_id && in_window(d.date, procedure, policy))
            slice.documents.push_back(&d);
    for (const auto& e : events)
        if (e.patient_id == procedure.patient_id && in_window(e.date, procedure, policy))
            slice.events.push_back(&e);
    return slice;
}

Dataset::Dataset(std::vector<Procedure> procedures, std::vector<ClinicalDocument> documents,
                 std::vector<CareEvent> events)
    : procedures_(std::move(procedures)), documents_(std::move(documents)), events_(std::move(events)) {
    for (std::size_t i = 0; i < procedures_.size(); ++i) {
        if (!procedure_by_id_.emplace(procedures_[i].procedure_id, i).second)
            throw ValidationError("duplicate procedure_id \"" + procedures_[i].procedure_id + "\"");
    }
    for (std::size_t i = 0; i < documents_.size(); ++i) docs_by_patient_[documents_[i].patient_id].push_back(i);
    for (std::size_t i = 0; i < events_.size(); ++i) events_by_patient_[events_[i].patient_id].push_back(i);
}

const Procedure* Dataset::find(std::string_view procedure_id) const {
    auto it = procedure_by_id_.find(procedure_id);
    return it == procedure_by_id_.end() ? nullptr : &procedures_[it->second];
}

WindowSlice Dataset::window(const Procedure& procedure, const WindowPolicy& policy) const {
    WindowSlice slice;
    if (auto it = docs_by_patient_.find(procedure.patient_id); it != docs_by_patient_.end())
        for (std::size_t i : it->second)
            if (in_window(documents_[i].date, procedure, policy)) slice.documents.push_back(&documents_[i]);
    if (auto it = events_by_patient_.find(procedure.patient_id); it != events_by_patient_.end())
        for (std::size_t i : it->second)
            if (in_window(events_[i].date, procedure, policy)) slice.events.push_back(&events_[i]);
    return slice;
}

namespace {

std::string required_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError(std::string("missing field \"") + key + "\"");
    if (!it->is_string()) throw ValidationError(std::string("field \"") + key + "\" must be a string");
    return it->get<std::string>();
}

std::string optional_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return {};
    if (!it->is_string()) throw ValidationError(std::string("field \"") + key + "\" must be a string");
    return it->get<std::string>();
}

// Applies `parse` to each non-blank line, attaching line numbers to failures.
template <typename T, typename F>
std::vector<T> parse_lines(std::string_view content, const std::string& source, F parse) {
    std::vector<T> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t nl = content.find('\n', pos);
        if (nl == std::string_view::npos) nl = content.size();
        std::string_view line = content.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        try {
            json j = json::parse(line);
            if (!j.is_object()) throw ValidationError("expected a JSON object");
            out.push_back(parse(j));
        } catch (const json::exception& e) {
            throw ParseError(source, line_no, e.what());
        } catch (const ValidationError& e) {
            throw ParseError(source, line_no, e.what());
        }
    }
    return out;
}

}  // namespace

std::vector<Procedure> parse_procedures(std::string_view jsonl, const std::string& source) {
    auto out = parse_lines<Procedure>(jsonl, source, [](const json& j) {
        Procedure p;
        p.procedure_id = required_string(j, "procedure_id");
        p.patient_id = required_string(j, "patient_id");
        p.intervention_date = Date::parse(required_string(j, "intervention_date"));
        p.specialty = optional_string(j, "specialty");
        if (auto it = j.find("gold_label"); it != j.end() && !it->is_null()) {
            if (!it->is_boolean()) throw ValidationError("gold_label must be true, false or null");
            p.gold_label = it->get<bool>();
        }
        if (p.procedure_id.empty()) throw ValidationError("empty procedure_id");
        return p;
    });
    std::set<std::string, std::less<>> seen;
    for (const auto& p : out)
        if (!seen.insert(p.procedure_id).second)
            throw ValidationError(source + ": duplicate procedure_id \"" + p.procedure_id + "\"");
    return out;
}

std::vector<ClinicalDocument> parse_documents(std::string_view jsonl, const std::string& source) {
    return parse_lines<ClinicalDocument>(jsonl, source, [](const json& j) {
        ClinicalDocument d;
        d.doc_id = required_string(j, "doc_id");
        d.patient_id = required_string(j, "patient_id");
        d.date = Date::parse(required_string(j, "date"));
        d.doc_type = parse_doc_type(required_string(j, "doc_type"));
        d.text = required_string(j, "text");
        if (d.text.empty()) throw ValidationError("document text is empty");
        return d;
    });
}

std::vector<CareEvent> parse_events(std::string_view jsonl, const std::string& source) {
    return parse_lines<CareEvent>(jsonl, source, [](const json& j) {
        CareEvent e;
        e.patient_id = required_string(j, "patient_id");
        e.date = Date::parse(required_string(j, "date"));
        e.kind = parse_event_kind(required_string(j, "kind"));
        e.code = required_string(j, "code");
        if (e.code.empty()) throw ValidationError("event code is empty");
        return e;
    });
}

std::string to_jsonl(const std::vector<Procedure>& procedures) {
    std::string out;
    for (const auto& p : procedures) {
        json j = {{"procedure_id", p.procedure_id},
                  {"patient_id", p.patient_id},
                  {"intervention_date", p.intervention_date.to_string()},
                  {"specialty", p.specialty},
                  {"gold_label", p.gold_label ? json(*p.gold_label) : json(nullptr)}};
        out += j.dump() + "\n";
    }
    return out;
}

std::string to_jsonl(const std::vector<ClinicalDocument>& documents) {
    std::string out;
    for (const auto& d : documents) {
        json j = {{"doc_id", d.doc_id},
                  {"patient_id", d.patient_id},
                  {"date", d.date.to_string()},
                  {"doc_type", to_string(d.doc_type)},
                  {"text", d.text}};
        out += j.dump() + "\n";
    }
    return out;
}

std::string to_jsonl(const std::vector<CareEvent>& events) {
    std::string out;
    for (const auto& e : events) {
        json j = {{"patient_id", e.patient_id},
                  {"date", e.date.to_string()},
                  {"kind", to_string(e.kind)},
                  {"code", e.code}};
        out += j.dump() + "\n";
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::vector<Procedure> load_procedures(const std::filesystem::path& path) {
    return parse_procedures(read_file(path), path.string());
}

std::vector<ClinicalDocument> load_documents(const std::filesystem::path& path) {
    return parse_documents(read_file(path), path.string());
}

std::vector<CareEvent> load_events(const std::filesystem::path& path) {
    return parse_events(read_file(path), path.string());
}

Dataset load_dataset(const std::filesystem::path& procedures, const std::filesystem::path& documents,
                     const std::filesystem::path& events) {
    return Dataset(load_procedures(procedures), load_documents(documents), load_events(events));
}

}  // namespace ssi::corpus
