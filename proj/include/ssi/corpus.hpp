#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ssi/date.hpp"

namespace ssi::corpus {

struct Procedure {
    std::string procedure_id;
    std::string patient_id;
    Date intervention_date;
    std::string specialty;
    std::optional<bool> gold_label;

    int year() const { return intervention_date.year(); }
    bool operator==(const Procedure&) const = default;
};

enum class DocType { operative_report, consultation, hospitalization, other };

struct ClinicalDocument {
    std::string doc_id;
    std::string patient_id;
    Date date;
    DocType doc_type = DocType::other;
    std::string text;

    bool operator==(const ClinicalDocument&) const = default;
};

enum class EventKind { icd10, ccam, atc_administration, bacteriology_protocol };

struct CareEvent {
    std::string patient_id;
    Date date;
    EventKind kind = EventKind::icd10;
    std::string code;

    bool operator==(const CareEvent&) const = default;
};

std::string_view to_string(DocType t);
std::string_view to_string(EventKind k);
DocType parse_doc_type(std::string_view s);
EventKind parse_event_kind(std::string_view s);

/// Surveillance window anchored on an intervention date.
struct WindowPolicy {
    int length_days = 90;
    /// Whether items dated on the intervention day itself count.
    bool include_day0 = true;
};

struct SurveillanceWindow {
    Date start;
    Date end;
    int length_days = 90;

    static SurveillanceWindow after(Date start, int length_days);
};

/// intervention_date <= item_date <= intervention_date + length_days.
bool in_window(Date item_date, const Procedure& procedure, int length_days = 90);
bool in_window(Date item_date, const Procedure& procedure, const WindowPolicy& policy);

struct WindowSlice {
    std::vector<const ClinicalDocument*> documents;
    std::vector<const CareEvent*> events;
};

/// Items of the procedure's patient that fall in its window. Input order is kept.
WindowSlice collect_window(const Procedure& procedure, const std::vector<ClinicalDocument>& documents,
                           const std::vector<CareEvent>& events, const WindowPolicy& policy = {});

/// The whole loaded dataset, indexed by patient for windowing. Immutable once
/// built and safe to share between readers.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<Procedure> procedures, std::vector<ClinicalDocument> documents,
            std::vector<CareEvent> events);

    const std::vector<Procedure>& procedures() const { return procedures_; }
    const std::vector<ClinicalDocument>& documents() const { return documents_; }
    const std::vector<CareEvent>& events() const { return events_; }

    const Procedure* find(std::string_view procedure_id) const;
    WindowSlice window(const Procedure& procedure, const WindowPolicy& policy = {}) const;

private:
    std::vector<Procedure> procedures_;
    std::vector<ClinicalDocument> documents_;
    std::vector<CareEvent> events_;
    std::map<std::string, std::vector<std::size_t>, std::less<>> docs_by_patient_;
    std::map<std::string, std::vector<std::size_t>, std::less<>> events_by_patient_;
    std::map<std::string, std::size_t, std::less<>> procedure_by_id_;
};

std::vector<Procedure> load_procedures(const std::filesystem::path& path);
std::vector<ClinicalDocument> load_documents(const std::filesystem::path& path);
std::vector<CareEvent> load_events(const std::filesystem::path& path);

std::vector<Procedure> parse_procedures(std::string_view jsonl, const std::string& source = "procedures");
std::vector<ClinicalDocument> parse_documents(std::string_view jsonl, const std::string& source = "documents");
std::vector<CareEvent> parse_events(std::string_view jsonl, const std::string& source = "events");

std::string to_jsonl(const std::vector<Procedure>& procedures);
std::string to_jsonl(const std::vector<ClinicalDocument>& documents);
std::string to_jsonl(const std::vector<CareEvent>& events);

Dataset load_dataset(const std::filesystem::path& procedures, const std::filesystem::path& documents,
                     const std::filesystem::path& events);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace ssi::corpus
