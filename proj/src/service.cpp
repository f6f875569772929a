#include "ssi/service.hpp"

#include <chrono>
#include <ctime>

#include <httplib.h>
#include <json.hpp>

#include "ssi/error.hpp"
#include "ssi/text.hpp"

namespace ssi::service {

using nlohmann::json;

std::string_view to_string(EvidenceSource s) {
    switch (s) {
        case EvidenceSource::term: return "term";
        case EvidenceSource::icd10: return "icd10";
        case EvidenceSource::ccam: return "ccam";
        case EvidenceSource::atc: return "atc";
        case EvidenceSource::bacterio: return "bacterio";
    }
    return "term";
}

std::string_view to_string(Status s) {
    switch (s) {
        case Status::pending: return "pending";
        case Status::confirmed_ssi: return "confirmed_ssi";
        case Status::rejected: return "rejected";
        case Status::confirmed_superficial: return "confirmed_superficial";
    }
    return "pending";
}

EvidenceSource parse_evidence_source(std::string_view s) {
    for (auto v : {EvidenceSource::term, EvidenceSource::icd10, EvidenceSource::ccam, EvidenceSource::atc,
                   EvidenceSource::bacterio})
        if (to_string(v) == s) return v;
    throw ValidationError("unknown evidence source \"" + std::string(s) + "\"");
}

Status parse_status(std::string_view s) {
    for (auto v : {Status::pending, Status::confirmed_ssi, Status::rejected, Status::confirmed_superficial})
        if (to_string(v) == s) return v;
    throw ValidationError("unknown status \"" + std::string(s) + "\"");
}

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------------------
// Evidence

namespace {

EvidenceSource source_of(corpus::EventKind k) {
    switch (k) {
        case corpus::EventKind::icd10: return EvidenceSource::icd10;
        case corpus::EventKind::ccam: return EvidenceSource::ccam;
        case corpus::EventKind::atc_administration: return EvidenceSource::atc;
        case corpus::EventKind::bacteriology_protocol: return EvidenceSource::bacterio;
    }
    return EvidenceSource::icd10;
}

// First sentence/token position where `term` matches the lemma stream.
std::optional<std::pair<std::size_t, std::size_t>> first_match(const std::vector<std::vector<std::string>>& stream,
                                                               const std::vector<std::string>& term) {
    for (std::size_t s = 0; s < stream.size(); ++s) {
        const auto& lemmas = stream[s];
        if (term.size() > lemmas.size()) continue;
        for (std::size_t i = 0; i + term.size() <= lemmas.size(); ++i)
            if (std::equal(term.begin(), term.end(), lemmas.begin() + static_cast<std::ptrdiff_t>(i))) return {{s, i}};
    }
    return std::nullopt;
}

}  // namespace

std::vector<PredictionRecord> build_records(const std::vector<models::Prediction>& predictions,
                                            const corpus::Dataset& dataset, const nlp::TaggedCorpus& tagged,
                                            const EvidenceConfig& config) {
    std::vector<std::vector<std::string>> term_tokens;
    std::vector<std::string> term_texts;
    for (const auto& t : config.terms) {
        term_texts.push_back(nlp::normalize_term(t));
        term_tokens.push_back(text::split_ws(term_texts.back()));
    }

    std::vector<PredictionRecord> out;
    for (const auto& pred : predictions) {
        const auto* proc = dataset.find(pred.procedure_id);
        if (!proc) throw NotFoundError("prediction for unknown procedure \"" + pred.procedure_id + "\"");
        if (!pred.flagged) continue;
        PredictionRecord rec;
        rec.procedure_id = pred.procedure_id;
        rec.probability = pred.probability;
        rec.flagged = true;

        const auto slice = dataset.window(*proc, config.window);
        for (std::size_t k = 0; k < term_tokens.size(); ++k) {
            if (term_tokens[k].empty()) continue;
            for (const auto* doc : slice.documents) {
                const auto& td = tagged.get(*doc);
                const auto hit = first_match(nlp::lemma_stream(td), term_tokens[k]);
                if (!hit) continue;
                Evidence ev;
                ev.source = EvidenceSource::term;
                ev.detail = term_texts[k];
                ev.doc_id = doc->doc_id;
                ev.date = doc->date.to_string();
                const auto& sentence = td.sentences[hit->first];
                const auto& first_tok = sentence[hit->second];
                const auto& last_tok = sentence[hit->second + term_tokens[k].size() - 1];
                if (first_tok.begin != nlp::kNoOffset && last_tok.end != nlp::kNoOffset &&
                    last_tok.end <= doc->text.size() && first_tok.begin < last_tok.end) {
                    const std::string_view body = doc->text;
                    const std::size_t from = text::step_back(body, first_tok.begin, config.snippet_chars);
                    const std::size_t to = text::step_forward(body, last_tok.end, config.snippet_chars);
                    ev.snippet = std::string(body.substr(from, to - from));
                    ev.match_begin = first_tok.begin - from;
                    ev.match_end = last_tok.end - from;
                }
                rec.evidence.push_back(std::move(ev));
            }
        }
        for (const auto* e : slice.events) {
            const auto code = features::matching_code(*e, config.structured);
            if (!code) continue;
            Evidence ev;
            ev.source = source_of(e->kind);
            ev.detail = *code;
            ev.date = e->date.to_string();
            rec.evidence.push_back(std::move(ev));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json evidence_to_json(const Evidence& e) {
    json j = {{"source", to_string(e.source)}, {"detail", e.detail}, {"date", e.date}};
    if (!e.doc_id.empty()) j["doc_id"] = e.doc_id;
    if (e.snippet) {
        j["snippet"] = *e.snippet;
        j["match"] = {e.match_begin, e.match_end};
    } else {
        j["snippet"] = nullptr;
    }
    return j;
}

Evidence evidence_from_json(const json& j) {
    Evidence e;
    e.source = parse_evidence_source(j.at("source").get<std::string>());
    e.detail = j.at("detail").get<std::string>();
    e.date = j.value("date", "");
    e.doc_id = j.value("doc_id", "");
    if (j.contains("snippet") && !j["snippet"].is_null()) {
        e.snippet = j["snippet"].get<std::string>();
        e.match_begin = j.at("match").at(0).get<std::size_t>();
        e.match_end = j.at("match").at(1).get<std::size_t>();
    }
    return e;
}

json label_to_json(const ReviewLabel& l) {
    return {{"procedure_id", l.procedure_id},
            {"reviewer", l.reviewer},
            {"decision", to_string(l.decision)},
            {"timestamp", l.timestamp},
            {"comment", l.comment ? json(*l.comment) : json(nullptr)}};
}

ReviewLabel label_from_json(const json& j) {
    ReviewLabel l;
    l.procedure_id = j.at("procedure_id").get<std::string>();
    l.reviewer = j.at("reviewer").get<std::string>();
    l.decision = parse_status(j.at("decision").get<std::string>());
    l.timestamp = j.value("timestamp", "");
    if (j.contains("comment") && !j["comment"].is_null()) l.comment = j["comment"].get<std::string>();
    return l;
}

json record_to_json(const PredictionRecord& r, bool full) {
    json j = {{"procedure_id", r.procedure_id},
              {"probability", r.probability},
              {"flagged", r.flagged},
              {"status", to_string(r.status)},
              {"version", r.version}};
    if (full) {
        json ev = json::array();
        for (const auto& e : r.evidence) ev.push_back(evidence_to_json(e));
        json hist = json::array();
        for (const auto& l : r.history) hist.push_back(label_to_json(l));
        j["evidence"] = std::move(ev);
        j["history"] = std::move(hist);
    } else {
        j["evidence_count"] = r.evidence.size();
        json sources = json::array();
        for (const auto& e : r.evidence) {
            const auto s = std::string(to_string(e.source));
            if (std::find(sources.begin(), sources.end(), s) == sources.end()) sources.push_back(s);
        }
        j["evidence_sources"] = std::move(sources);
    }
    return j;
}

PredictionRecord record_from_json(const json& j) {
    PredictionRecord r;
    r.procedure_id = j.at("procedure_id").get<std::string>();
    r.probability = j.at("probability").get<double>();
    r.flagged = j.value("flagged", true);
    for (const auto& e : j.at("evidence")) r.evidence.push_back(evidence_from_json(e));
    return r;
}

}  // namespace

std::string record_json(const PredictionRecord& rec, bool full) { return record_to_json(rec, full).dump(); }
std::string label_json(const ReviewLabel& label) { return label_to_json(label).dump(); }

// ---------------------------------------------------------------------------
// Store

Store::Store(std::optional<std::filesystem::path> log_path) : log_path_(std::move(log_path)) {
    if (!log_path_) return;
    if (std::filesystem::exists(*log_path_)) {
        const std::string content = corpus::read_file(*log_path_);
        std::size_t pos = 0, line_no = 0;
        while (pos < content.size()) {
            std::size_t nl = content.find('\n', pos);
            if (nl == std::string::npos) nl = content.size();
            const std::string_view line(content.data() + pos, nl - pos);
            pos = nl + 1;
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
            try {
                const json j = json::parse(line);
                const auto type = j.at("type").get<std::string>();
                if (type == "prediction") {
                    auto rec = record_from_json(j.at("record"));
                    auto [it, inserted] = records_.try_emplace(rec.procedure_id, rec);
                    if (!inserted) {
                        it->second.probability = rec.probability;
                        it->second.evidence = std::move(rec.evidence);
                    }
                } else if (type == "label") {
                    auto label = label_from_json(j.at("label"));
                    auto it = records_.find(label.procedure_id);
                    if (it == records_.end()) throw ValidationError("label for unknown record " + label.procedure_id);
                    apply_label(it->second, std::move(label));
                } else {
                    throw ValidationError("unknown log entry type \"" + type + "\"");
                }
            } catch (const json::exception& e) {
                throw ParseError(log_path_->string(), line_no, e.what());
            } catch (const ValidationError& e) {
                throw ParseError(log_path_->string(), line_no, e.what());
            }
        }
    } else if (log_path_->has_parent_path()) {
        std::filesystem::create_directories(log_path_->parent_path());
    }
    log_.open(*log_path_, std::ios::app | std::ios::binary);
    if (!log_) throw Error("cannot open store log " + log_path_->string());
}

void Store::append_log(const std::string& line) {
    if (!log_path_) return;
    log_ << line << '\n';
    log_.flush();
    if (!log_) throw Error("failed writing store log " + log_path_->string());
}

void Store::apply_label(PredictionRecord& rec, ReviewLabel label) {
    rec.status = label.decision;
    rec.history.push_back(std::move(label));
    ++rec.version;
}

void Store::ingest(const std::vector<PredictionRecord>& records) {
    std::lock_guard lock(mu_);
    for (const auto& r : records) {
        PredictionRecord fresh = r;
        fresh.status = Status::pending;
        fresh.history.clear();
        fresh.version = 0;
        json entry = {{"type", "prediction"}, {"record", record_to_json(fresh, true)}};
        entry["record"].erase("history");
        append_log(entry.dump());
        auto [it, inserted] = records_.try_emplace(r.procedure_id, fresh);
        if (!inserted) {
            it->second.probability = fresh.probability;
            it->second.evidence = fresh.evidence;
        }
    }
}

PredictionRecord Store::record_label(std::string_view procedure_id, ReviewLabel label,
                                     std::optional<int> expected_version) {
    if (label.decision == Status::pending) throw ValidationError("a review decision cannot be pending");
    std::lock_guard lock(mu_);
    auto it = records_.find(procedure_id);
    if (it == records_.end()) throw NotFoundError("no prediction record for \"" + std::string(procedure_id) + "\"");
    if (expected_version && *expected_version != it->second.version)
        throw ConflictError("record \"" + std::string(procedure_id) + "\" is at version " +
                            std::to_string(it->second.version) + ", expected " + std::to_string(*expected_version));
    label.procedure_id = std::string(procedure_id);
    if (label.timestamp.empty()) label.timestamp = now_utc();
    append_log(json{{"type", "label"}, {"label", label_to_json(label)}}.dump());
    apply_label(it->second, std::move(label));
    return it->second;
}

std::optional<PredictionRecord> Store::get(std::string_view procedure_id) const {
    std::lock_guard lock(mu_);
    auto it = records_.find(procedure_id);
    if (it == records_.end()) return std::nullopt;
    return it->second;
}

std::vector<PredictionRecord> Store::list(std::optional<Status> status) const {
    std::lock_guard lock(mu_);
    std::vector<PredictionRecord> out;
    for (const auto& [id, r] : records_)
        if (!status || r.status == *status) out.push_back(r);
    std::ranges::stable_sort(out, [](const PredictionRecord& a, const PredictionRecord& b) {
        return a.probability > b.probability;
    });
    return out;
}

std::size_t Store::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

std::vector<corpus::Procedure> Store::export_gold(const std::vector<corpus::Procedure>& procedures) const {
    std::lock_guard lock(mu_);
    std::vector<corpus::Procedure> out = procedures;
    for (auto& p : out) {
        auto it = records_.find(p.procedure_id);
        if (it == records_.end()) continue;
        switch (it->second.status) {
            case Status::confirmed_ssi:
            case Status::confirmed_superficial: p.gold_label = true; break;
            case Status::rejected: p.gold_label = false; break;
            case Status::pending: break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// HTTP routing

namespace {

// Same error shape as the CLI: {"error": {"type", "message"}}.
HttpResponse error_response(int status, const std::string& message) {
    const char* type = "error";
    switch (status) {
        case 400: type = "validation"; break;
        case 404: type = "not_found"; break;
        case 405: type = "method_not_allowed"; break;
        case 409: type = "conflict"; break;
    }
    return {status, json{{"error", {{"type", type}, {"message", message}}}}.dump()};
}

std::optional<std::string> query_param(std::string_view query, std::string_view key) {
    std::size_t pos = 0;
    while (pos <= query.size()) {
        std::size_t amp = query.find('&', pos);
        if (amp == std::string_view::npos) amp = query.size();
        const auto kv = query.substr(pos, amp - pos);
        const auto eq = kv.find('=');
        if (kv.substr(0, eq) == key) return std::string(eq == std::string_view::npos ? "" : kv.substr(eq + 1));
        pos = amp + 1;
    }
    return std::nullopt;
}

std::string url_decode(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%' && i + 2 < s.size()) {
            out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
            i += 2;
        } else if (s[i] == '+') {
            out += ' ';
        } else {
            out += s[i];
        }
    }
    return out;
}

}  // namespace

Service::Service(Store& store, std::vector<corpus::Procedure> procedures,
                 std::optional<std::filesystem::path> metrics_path)
    : store_(store), procedures_(std::move(procedures)), metrics_path_(std::move(metrics_path)) {}

HttpResponse Service::handle(std::string_view method, std::string_view path, std::string_view query,
                             std::string_view body) {
    try {
        constexpr std::string_view kPrefix = "/predictions";
        if (method == "GET" && path == kPrefix) {
            std::optional<Status> status;
            if (auto s = query_param(query, "status"); s && !s->empty()) status = parse_status(*s);
            json arr = json::array();
            for (const auto& r : store_.list(status)) arr.push_back(record_to_json(r, false));
            return {200, arr.dump()};
        }
        if (path.starts_with(std::string(kPrefix) + "/")) {
            std::string_view rest = path.substr(kPrefix.size() + 1);
            constexpr std::string_view kLabel = "/label";
            const bool is_label = rest.ends_with(kLabel);
            if (is_label) rest.remove_suffix(kLabel.size());
            const std::string id = url_decode(rest);
            if (id.empty() || id.find('/') != std::string::npos) return error_response(404, "no such route");
            if (!is_label && method == "GET") {
                const auto rec = store_.get(id);
                if (!rec) return error_response(404, "no prediction record for \"" + id + "\"");
                return {200, record_to_json(*rec, true).dump()};
            }
            if (is_label && method == "POST") {
                json j;
                try {
                    j = json::parse(body);
                } catch (const json::exception& e) {
                    return error_response(400, std::string("malformed JSON: ") + e.what());
                }
                if (!j.is_object() || !j.contains("reviewer") || !j["reviewer"].is_string() ||
                    !j.contains("decision") || !j["decision"].is_string())
                    return error_response(400, "label needs string fields \"reviewer\" and \"decision\"");
                ReviewLabel label;
                label.reviewer = j["reviewer"].get<std::string>();
                label.decision = parse_status(j["decision"].get<std::string>());
                if (label.decision == Status::pending) return error_response(400, "decision cannot be pending");
                if (j.contains("comment") && j["comment"].is_string()) label.comment = j["comment"].get<std::string>();
                if (j.contains("timestamp") && j["timestamp"].is_string()) label.timestamp = j["timestamp"].get<std::string>();
                std::optional<int> expected;
                if (j.contains("expected_version")) {
                    if (!j["expected_version"].is_number_integer())
                        return error_response(400, "expected_version must be an integer");
                    expected = j["expected_version"].get<int>();
                }
                const auto rec = store_.record_label(id, std::move(label), expected);
                return {200, record_to_json(rec, true).dump()};
            }
            return error_response(405, "method not allowed");
        }
        if (method == "GET" && path == "/export/gold")
            return {200, corpus::to_jsonl(store_.export_gold(procedures_)), "application/x-ndjson"};
        if (method == "GET" && path == "/metrics") {
            if (!metrics_path_ || !std::filesystem::exists(*metrics_path_))
                return error_response(404, "no report available");
            return {200, corpus::read_file(*metrics_path_)};
        }
        return error_response(404, "no such route");
    } catch (const NotFoundError& e) {
        return error_response(404, e.what());
    } catch (const ConflictError& e) {
        return error_response(409, e.what());
    } catch (const ValidationError& e) {
        return error_response(400, e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

struct HttpServer::Impl {
    httplib::Server server;
    Service& service;
    ServeConfig config;

    Impl(Service& s, ServeConfig c) : service(s), config(std::move(c)) {}
};

HttpServer::HttpServer(Service& service, ServeConfig config) : impl_(new Impl(service, std::move(config))) {
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
        std::string query;
        for (const auto& [k, v] : req.params) query += (query.empty() ? "" : "&") + k + "=" + v;
        const auto r = impl_->service.handle(req.method, req.path, query, req.body);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    auto& s = impl_->server;
    s.Get("/predictions", forward);
    s.Get(R"(/predictions/[^/]+)", forward);
    s.Post(R"(/predictions/[^/]+/label)", forward);
    s.Get("/export/gold", forward);
    s.Get("/metrics", forward);
    if (impl_->config.static_dir) s.set_mount_point("/", impl_->config.static_dir->string());
}

HttpServer::~HttpServer() {
    stop();
    delete impl_;
}

void HttpServer::run(const std::function<void(int)>& on_ready) {
    auto& s = impl_->server;
    int port = impl_->config.port;
    if (port == 0) {
        port = s.bind_to_any_port(impl_->config.host);
    } else if (!s.bind_to_port(impl_->config.host, port)) {
        throw Error("cannot bind " + impl_->config.host + ":" + std::to_string(port));
    }
    if (port < 0) throw Error("cannot bind " + impl_->config.host);
    if (on_ready) on_ready(port);
    s.listen_after_bind();
}

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
}

}  // namespace ssi::service
