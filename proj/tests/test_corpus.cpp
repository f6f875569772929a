#include <doctest.h>

#include <random>

#include "ssi/corpus.hpp"
#include "ssi/error.hpp"
#include "support.hpp"

using namespace ssi::corpus;
using testing::document;
using testing::event;
using testing::procedure;

TEST_CASE("window bounds are inclusive on both ends") {
    const auto p = procedure("P1", "A", "2015-03-10", false);
    const ssi::Date d0 = p.intervention_date;
    CHECK(in_window(d0, p));
    CHECK(in_window(d0 + 90, p));
    CHECK_FALSE(in_window(d0 + 91, p));
    CHECK_FALSE(in_window(d0 - 1, p));

    WindowPolicy no_day0{90, false};
    CHECK_FALSE(in_window(d0, p, no_day0));
    CHECK(in_window(d0 + 1, p, no_day0));
    CHECK(in_window(d0 + 90, p, no_day0));

    CHECK(in_window(d0 + 30, p, 30));
    CHECK_FALSE(in_window(d0 + 31, p, 30));
}

TEST_CASE("dataset window index matches a brute-force scan") {
    std::mt19937 rng(11);
    std::vector<Procedure> procs;
    std::vector<ClinicalDocument> docs;
    std::vector<CareEvent> events;
    const ssi::Date base = ssi::Date::parse("2015-01-01");
    auto day = [&](int lo, int hi) { return base + std::uniform_int_distribution<int>(lo, hi)(rng); };
    for (int i = 0; i < 60; ++i) {
        const std::string pat = "PAT" + std::to_string(i % 25);
        procs.push_back({"P" + std::to_string(i), pat, day(0, 700), "", i % 7 == 0});
    }
    for (int i = 0; i < 400; ++i) {
        const std::string pat = "PAT" + std::to_string(i % 27);
        docs.push_back({"D" + std::to_string(i), pat, day(-30, 900), DocType::consultation, "texte"});
        events.push_back({pat, day(-30, 900), EventKind::icd10, "T81.4"});
    }
    const Dataset ds(procs, docs, events);
    for (const bool day0 : {true, false}) {
        const WindowPolicy pol{90, day0};
        for (const auto& p : ds.procedures()) {
            const auto fast = ds.window(p, pol);
            const auto slow = collect_window(p, ds.documents(), ds.events(), pol);
            CHECK(fast.documents == slow.documents);
            CHECK(fast.events == slow.events);
        }
    }
}

TEST_CASE("dataset lookups and duplicate ids") {
    const Dataset ds({procedure("P1", "A", "2015-01-01", true)}, {}, {});
    REQUIRE(ds.find("P1") != nullptr);
    CHECK(ds.find("nope") == nullptr);
    CHECK_THROWS_AS(Dataset({procedure("P1", "A", "2015-01-01", true), procedure("P1", "B", "2015-01-02", true)}, {},
                            {}),
                    ssi::ValidationError);
}

TEST_CASE("jsonl round trips") {
    std::vector<Procedure> procs{procedure("P1", "A", "2015-01-01", true), procedure("P2", "B", "2016-05-05", std::nullopt)};
    CHECK(parse_procedures(to_jsonl(procs)) == procs);

    std::vector<ClinicalDocument> docs{document("D1", "A", "2015-01-02", "Écoulement \"purulent\"\nligne 2",
                                                DocType::operative_report)};
    CHECK(parse_documents(to_jsonl(docs)) == docs);

    std::vector<CareEvent> events{event("A", "2015-01-03", EventKind::atc_administration, "J01CF04"),
                                  event("A", "2015-01-04", EventKind::bacteriology_protocol, "Pus profond")};
    CHECK(parse_events(to_jsonl(events)) == events);
}

TEST_CASE("parse errors carry the line number") {
    const std::string good = R"({"procedure_id":"P1","patient_id":"A","intervention_date":"2015-01-01","gold_label":true})";
    auto line_of = [](auto&& fn) {
        try {
            fn();
        } catch (const ssi::ParseError& e) {
            return e.line();
        }
        return std::size_t{0};
    };
    CHECK(line_of([&] { parse_procedures(good + "\n\n{broken"); }) == 3);
    CHECK(line_of([&] { parse_procedures(good + "\n" + R"({"procedure_id":"P2","patient_id":"A","intervention_date":"2015-02-30"})"); }) == 2);
    CHECK(line_of([&] { parse_procedures(R"({"procedure_id":"P1","patient_id":"A","intervention_date":"2015-01-01","gold_label":"yes"})"); }) == 1);
    CHECK(line_of([&] { parse_documents(R"({"doc_id":"D","patient_id":"A","date":"2015-01-01","doc_type":"memo","text":"x"})"); }) == 1);
    CHECK(line_of([&] { parse_documents(R"({"doc_id":"D","patient_id":"A","date":"2015-01-01","doc_type":"other","text":""})"); }) == 1);
    CHECK(line_of([&] { parse_events(R"({"patient_id":"A","date":"2015-01-01","kind":"lab","code":"X"})"); }) == 1);
}

TEST_CASE("duplicate procedure ids in a file are rejected") {
    const std::string good = R"({"procedure_id":"P1","patient_id":"A","intervention_date":"2015-01-01"})";
    CHECK_THROWS_AS(parse_procedures(good + "\n" + good), ssi::ValidationError);
}

TEST_CASE("file helpers") {
    testing::TempDir dir;
    CHECK_THROWS_AS(read_file(dir / "missing.jsonl"), ssi::NotFoundError);
    write_file(dir.path() / "a" / "b.txt", "contenu");
    CHECK(read_file(dir.path() / "a" / "b.txt") == "contenu");
    CHECK_THROWS_AS(load_dataset(dir / "p", dir / "d", dir / "e"), ssi::NotFoundError);
}
