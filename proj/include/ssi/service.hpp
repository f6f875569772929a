#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ssi/corpus.hpp"
#include "ssi/features.hpp"
#include "ssi/models.hpp"
#include "ssi/nlp.hpp"

namespace ssi::service {

enum class EvidenceSource { term, icd10, ccam, atc, bacterio };
enum class Status { pending, confirmed_ssi, rejected, confirmed_superficial };

std::string_view to_string(EvidenceSource s);
std::string_view to_string(Status s);
EvidenceSource parse_evidence_source(std::string_view s);
Status parse_status(std::string_view s);

struct Evidence {
    EvidenceSource source = EvidenceSource::term;
    std::string detail;  ///< matched term or code
    std::string doc_id;  ///< term evidence only
    std::string date;
    std::optional<std::string> snippet;
    /// Byte range of the match inside `snippet`.
    std::size_t match_begin = 0;
    std::size_t match_end = 0;

    bool operator==(const Evidence&) const = default;
};

struct ReviewLabel {
    std::string procedure_id;
    std::string reviewer;
    Status decision = Status::confirmed_ssi;
    std::string timestamp;
    std::optional<std::string> comment;

    bool operator==(const ReviewLabel&) const = default;
};

struct PredictionRecord {
    std::string procedure_id;
    double probability = 0.0;
    bool flagged = true;
    std::vector<Evidence> evidence;
    Status status = Status::pending;
    std::vector<ReviewLabel> history;
    int version = 0;

    bool operator==(const PredictionRecord&) const = default;
};

struct EvidenceConfig {
    std::vector<std::string> terms;
    features::StructuredConfig structured;
    corpus::WindowPolicy window;
    std::size_t snippet_chars = 80;
};

/// Pending records for flagged predictions: one term evidence per (term,
/// document) with a snippet around the first occurrence, and one structured
/// evidence per matching in-window event. Unknown procedure ids are errors.
std::vector<PredictionRecord> build_records(const std::vector<models::Prediction>& predictions,
                                            const corpus::Dataset& dataset, const nlp::TaggedCorpus& tagged,
                                            const EvidenceConfig& config);

/// In-memory review state backed by an append-only JSONL event log that is
/// replayed on construction. All operations are thread-safe; mutations are
/// serialized and logged in arrival order.
class Store {
public:
    explicit Store(std::optional<std::filesystem::path> log_path = std::nullopt);

    /// Adds or refreshes records; status and history of known records are kept.
    void ingest(const std::vector<PredictionRecord>& records);

    /// Applies a decision, appending to the history. When `expected_version`
    /// is given and differs from the record's version, throws ConflictError.
    PredictionRecord record_label(std::string_view procedure_id, ReviewLabel label,
                                  std::optional<int> expected_version = std::nullopt);

    std::optional<PredictionRecord> get(std::string_view procedure_id) const;
    std::vector<PredictionRecord> list(std::optional<Status> status = std::nullopt) const;
    std::size_t size() const;

    /// Reviewer-corrected copy of `procedures`: confirmations set the label
    /// to true, rejections to false, everything else is unchanged.
    std::vector<corpus::Procedure> export_gold(const std::vector<corpus::Procedure>& procedures) const;

private:
    void append_log(const std::string& line);
    void apply_label(PredictionRecord& rec, ReviewLabel label);

    mutable std::mutex mu_;
    std::map<std::string, PredictionRecord, std::less<>> records_;
    std::optional<std::filesystem::path> log_path_;
    std::ofstream log_;
};

std::string record_json(const PredictionRecord& rec, bool full = true);
std::string label_json(const ReviewLabel& label);

struct HttpResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// The review API over a store. `handle` is transport-independent so the
/// routing can be exercised without sockets; `serve` binds it to HTTP.
class Service {
public:
    Service(Store& store, std::vector<corpus::Procedure> procedures, std::optional<std::filesystem::path> metrics_path);

    HttpResponse handle(std::string_view method, std::string_view path, std::string_view query,
                        std::string_view body);

private:
    Store& store_;
    std::vector<corpus::Procedure> procedures_;
    std::optional<std::filesystem::path> metrics_path_;
};

struct ServeConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    /// Optional directory of static files mounted at "/" (the review UI bundle).
    std::optional<std::filesystem::path> static_dir;
};

/// Blocks serving HTTP until `stop` is called from another thread (or the
/// process ends). `on_ready` receives the bound port.
class HttpServer {
public:
    HttpServer(Service& service, ServeConfig config);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds and serves; returns when stopped. Port 0 binds an ephemeral port.
    void run(const std::function<void(int)>& on_ready = {});
    void stop();

private:
    struct Impl;
    Impl* impl_;
};

std::string now_utc();

}  // namespace ssi::service
