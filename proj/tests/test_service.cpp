#include <doctest.h>

#include <httplib.h>
#include <json.hpp>
#include <future>
#include <thread>

#include "ssi/error.hpp"
#include "ssi/service.hpp"
#include "support.hpp"

using namespace ssi::service;
using nlohmann::json;
using ssi::corpus::EventKind;
using testing::document;
using testing::event;
using testing::procedure;

namespace {

struct Fixture {
    ssi::corpus::Dataset dataset{
        {procedure("P1", "A", "2017-03-01", false), procedure("P2", "B", "2017-03-01", false),
         procedure("P3", "C", "2017-03-01", true)},
        {document("D1", "A", "2017-03-12", "Pansement refait. Écoulement purulent au niveau de la cicatrice."),
         document("D2", "A", "2017-09-01", "Écoulement purulent ancien.")},
        {event("B", "2017-03-20", EventKind::icd10, "T81.4"), event("B", "2017-03-20", EventKind::icd10, "M51.1")}};
    ssi::nlp::Tagger tagger;
    ssi::nlp::TaggedCorpus tagged{dataset, tagger};
    EvidenceConfig cfg{{"écoulement purulent"}, {}, {}, 80};
};

ReviewLabel label(Status s, std::string reviewer = "dr") {
    ReviewLabel l;
    l.reviewer = std::move(reviewer);
    l.decision = s;
    l.timestamp = "2024-01-01T00:00:00Z";
    return l;
}

PredictionRecord record(std::string id, double p) {
    PredictionRecord r;
    r.procedure_id = std::move(id);
    r.probability = p;
    return r;
}

}  // namespace

TEST_CASE("one flagged note with one approved term yields one term evidence") {
    Fixture f;
    const auto recs = build_records({{"P1", 0.8, true}}, f.dataset, f.tagged, f.cfg);
    REQUIRE(recs.size() == 1);
    REQUIRE(recs[0].evidence.size() == 1);
    const auto& ev = recs[0].evidence[0];
    CHECK(ev.source == EvidenceSource::term);
    CHECK(ev.doc_id == "D1");
    CHECK(ev.detail == "écoulement purulent");
    REQUIRE(ev.snippet.has_value());
    CHECK(ev.snippet->substr(ev.match_begin, ev.match_end - ev.match_begin) == "Écoulement purulent");
    CHECK(recs[0].status == Status::pending);
}

TEST_CASE("structured-only evidence has no snippet") {
    Fixture f;
    const auto recs = build_records({{"P2", 0.6, true}}, f.dataset, f.tagged, f.cfg);
    REQUIRE(recs.size() == 1);
    REQUIRE(recs[0].evidence.size() == 1);
    CHECK(recs[0].evidence[0].source == EvidenceSource::icd10);
    CHECK(recs[0].evidence[0].detail == "T81.4");
    CHECK_FALSE(recs[0].evidence[0].snippet.has_value());
}

TEST_CASE("nothing flagged leaves the store empty") {
    Fixture f;
    Store store;
    store.ingest(build_records({{"P1", 0.1, false}, {"P2", 0.2, false}}, f.dataset, f.tagged, f.cfg));
    CHECK(store.size() == 0);
    CHECK_THROWS_AS(build_records({{"PX", 0.1, true}}, f.dataset, f.tagged, f.cfg), ssi::NotFoundError);
}

TEST_CASE("snippets are clipped around the match") {
    std::string text(300, 'x');
    text += " sepsis ";
    text += std::string(300, 'y');
    ssi::corpus::Dataset ds({procedure("P1", "A", "2017-03-01", true)}, {document("D1", "A", "2017-03-02", text)}, {});
    ssi::nlp::Tagger tagger;
    ssi::nlp::TaggedCorpus tagged(ds, tagger);
    const auto recs = build_records({{"P1", 0.9, true}}, ds, tagged, {{"sepsis"}, {}, {}, 20});
    REQUIRE(recs[0].evidence.size() == 1);
    const auto& ev = recs[0].evidence[0];
    CHECK(ev.snippet->size() == 20 + 6 + 20);
    CHECK(ev.snippet->substr(ev.match_begin, 6) == "sepsis");
}

TEST_CASE("labeling moves a record out of pending and keeps history") {
    Store store;
    store.ingest({record("P1", 0.9)});
    auto r = store.record_label("P1", label(Status::confirmed_ssi));
    CHECK(r.status == Status::confirmed_ssi);
    CHECK(r.version == 1);
    r = store.record_label("P1", label(Status::rejected, "dr2"));
    CHECK(r.status == Status::rejected);
    REQUIRE(r.history.size() == 2);
    CHECK(r.history[0].reviewer == "dr");
    CHECK(r.history[1].reviewer == "dr2");
    CHECK_THROWS_AS(store.record_label("PX", label(Status::rejected)), ssi::NotFoundError);
    CHECK_THROWS_AS(store.record_label("P1", label(Status::pending)), ssi::ValidationError);
    CHECK_THROWS_AS(store.record_label("P1", label(Status::rejected), 0), ssi::ConflictError);
    CHECK(store.record_label("P1", label(Status::confirmed_superficial), 2).version == 3);
    ReviewLabel untimed = label(Status::rejected);
    untimed.timestamp.clear();
    CHECK_FALSE(store.record_label("P1", untimed).history.back().timestamp.empty());
}

TEST_CASE("re-ingest refreshes scores but keeps review state") {
    Store store;
    store.ingest({record("P1", 0.9)});
    store.record_label("P1", label(Status::confirmed_ssi));
    auto fresh = record("P1", 0.4);
    fresh.evidence.push_back({EvidenceSource::ccam, "AFPA001", "", "2017-03-03", std::nullopt, 0, 0});
    store.ingest({fresh});
    const auto r = store.get("P1");
    REQUIRE(r);
    CHECK(r->probability == 0.4);
    CHECK(r->evidence.size() == 1);
    CHECK(r->status == Status::confirmed_ssi);
    CHECK(r->history.size() == 1);
}

TEST_CASE("list filters by status and orders by probability") {
    Store store;
    store.ingest({record("P1", 0.2), record("P2", 0.9), record("P3", 0.5)});
    store.record_label("P3", label(Status::rejected));
    const auto all = store.list();
    REQUIRE(all.size() == 3);
    CHECK(all[0].procedure_id == "P2");
    CHECK(all[2].procedure_id == "P1");
    CHECK(store.list(Status::pending).size() == 2);
    CHECK(store.list(Status::rejected).size() == 1);
}

TEST_CASE("log replay reproduces the store") {
    testing::TempDir dir;
    const auto log = dir / "store.jsonl";
    {
        Store store(log);
        store.ingest({record("P1", 0.9), record("P2", 0.3)});
        store.record_label("P1", label(Status::confirmed_ssi));
        store.record_label("P2", label(Status::rejected));
        store.record_label("P2", label(Status::confirmed_superficial));
    }
    Store a(log);
    Store b(log);
    CHECK(a.list() == b.list());
    REQUIRE(a.get("P2"));
    CHECK(a.get("P2")->history.size() == 2);
    CHECK(a.get("P2")->status == Status::confirmed_superficial);
    CHECK(a.get("P2")->version == 2);

    ssi::corpus::write_file(dir / "bad.jsonl", "{\"type\":\"prediction\"}\n");
    CHECK_THROWS_AS(Store(dir / "bad.jsonl"), ssi::ParseError);
}

TEST_CASE("export gold applies reviewer decisions") {
    const std::vector procs{procedure("P1", "A", "2017-01-01", false), procedure("P2", "B", "2017-01-01", true),
                            procedure("P3", "C", "2017-01-01", false), procedure("P4", "D", "2017-01-01", true)};
    Store store;
    CHECK(store.export_gold(procs) == procs);
    store.ingest({record("P1", 0.9), record("P2", 0.9), record("P3", 0.9), record("P4", 0.9)});
    CHECK(store.export_gold(procs) == procs);
    store.record_label("P1", label(Status::confirmed_ssi));
    store.record_label("P2", label(Status::rejected));
    store.record_label("P3", label(Status::confirmed_superficial));
    const auto out = store.export_gold(procs);
    CHECK(out[0].gold_label == true);
    CHECK(out[1].gold_label == false);
    CHECK(out[2].gold_label == true);
    CHECK(out[3].gold_label == true);
}

TEST_CASE("concurrent labels are all recorded and the last one wins") {
    testing::TempDir dir;
    Store store(dir / "log.jsonl");
    store.ingest({record("P1", 0.9)});
    constexpr int kThreads = 8, kEach = 25;
    std::vector<std::thread> threads;
    for (int t = 0; t < kThreads; ++t)
        threads.emplace_back([&, t] {
            for (int i = 0; i < kEach; ++i)
                store.record_label("P1", label(i % 2 ? Status::rejected : Status::confirmed_ssi, "r" + std::to_string(t)));
        });
    for (auto& th : threads) th.join();
    const auto r = *store.get("P1");
    CHECK(r.history.size() == kThreads * kEach);
    CHECK(r.version == kThreads * kEach);
    CHECK(r.status == r.history.back().decision);
    Store replay(dir / "log.jsonl");
    CHECK(*replay.get("P1") == r);
}

TEST_CASE("route status codes") {
    testing::TempDir dir;
    Store store;
    store.ingest({record("P1", 0.9)});
    const std::vector procs{procedure("P1", "A", "2017-01-01", false)};
    Service svc(store, procs, dir / "report.json");

    CHECK(svc.handle("GET", "/predictions", "", "").status == 200);
    CHECK(json::parse(svc.handle("GET", "/predictions", "status=pending", "").body).size() == 1);
    CHECK(json::parse(svc.handle("GET", "/predictions", "status=rejected", "").body).empty());
    CHECK(svc.handle("GET", "/predictions", "status=bogus", "").status == 400);
    CHECK(svc.handle("GET", "/predictions/P1", "", "").status == 200);
    CHECK(svc.handle("GET", "/predictions/P9", "", "").status == 404);
    CHECK(svc.handle("DELETE", "/predictions/P1", "", "").status == 405);
    CHECK(svc.handle("GET", "/nowhere", "", "").status == 404);
    CHECK(svc.handle("POST", "/predictions/P1/label", "", "{bad").status == 400);
    CHECK(svc.handle("POST", "/predictions/P1/label", "", R"({"reviewer":"x"})").status == 400);
    CHECK(svc.handle("POST", "/predictions/P1/label", "", R"({"reviewer":"x","decision":"pending"})").status == 400);
    CHECK(svc.handle("POST", "/predictions/P9/label", "", R"({"reviewer":"x","decision":"rejected"})").status == 404);

    const auto ok = svc.handle("POST", "/predictions/P1/label", "", R"({"reviewer":"x","decision":"confirmed_ssi","expected_version":0})");
    CHECK(ok.status == 200);
    CHECK(json::parse(ok.body)["status"] == "confirmed_ssi");
    const auto stale = svc.handle("POST", "/predictions/P1/label", "", R"({"reviewer":"y","decision":"rejected","expected_version":0})");
    CHECK(stale.status == 409);
    CHECK(json::parse(stale.body)["error"]["type"] == "conflict");

    const auto gold = svc.handle("GET", "/export/gold", "", "");
    CHECK(gold.status == 200);
    CHECK(gold.body.find("\"gold_label\":true") != std::string::npos);

    CHECK(svc.handle("GET", "/metrics", "", "").status == 404);
    ssi::corpus::write_file(dir / "report.json", "{\"ok\":1}\n");
    CHECK(svc.handle("GET", "/metrics", "", "").status == 200);
}

TEST_CASE("summary and full record json") {
    auto r = record("P1", 0.5);
    r.evidence.push_back({EvidenceSource::term, "sepsis", "D1", "2017-01-02", "un sepsis", 3, 9});
    const auto full = json::parse(record_json(r, true));
    CHECK(full["evidence"][0]["snippet"] == "un sepsis");
    const auto brief = json::parse(record_json(r, false));
    CHECK(brief["evidence_count"] == 1);
    CHECK(brief["evidence_sources"] == json::array({"term"}));
    CHECK_FALSE(brief.contains("evidence"));
}

TEST_CASE("http server round trip on an ephemeral port") {
    Store store;
    store.ingest({record("P1", 0.9)});
    Service svc(store, {procedure("P1", "A", "2017-01-01", false)}, std::nullopt);
    HttpServer server(svc, {"127.0.0.1", 0, std::nullopt});
    std::promise<int> ready;
    std::thread th([&] { server.run([&](int port) { ready.set_value(port); }); });
    const int port = ready.get_future().get();

    httplib::Client cli("127.0.0.1", port);
    auto list = cli.Get("/predictions");
    REQUIRE(list);
    CHECK(list->status == 200);
    CHECK(json::parse(list->body).size() == 1);
    auto posted = cli.Post("/predictions/P1/label", R"({"reviewer":"r","decision":"rejected"})", "application/json");
    REQUIRE(posted);
    CHECK(posted->status == 200);
    auto missing = cli.Get("/predictions/P2");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(json::parse(missing->body)["error"]["type"] == "not_found");

    server.stop();
    th.join();
    CHECK(store.get("P1")->status == Status::rejected);
}
