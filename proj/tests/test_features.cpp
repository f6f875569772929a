#include <doctest.h>

#include <algorithm>
#include <random>

#include "ssi/error.hpp"
#include "ssi/features.hpp"
#include "support.hpp"

using namespace ssi::features;
using ssi::corpus::EventKind;
using testing::document;
using testing::event;
using testing::procedure;

namespace {

StructuredFlags flags_for(std::vector<ssi::corpus::CareEvent> events) {
    std::vector<const ssi::corpus::CareEvent*> ptrs;
    for (const auto& e : events) ptrs.push_back(&e);
    return structured_flags(ptrs, StructuredConfig{});
}

// Two procedures of one patient plus a second patient; documents inside and
// outside the windows.
struct Fixture {
    ssi::corpus::Dataset dataset{
        {procedure("P1", "A", "2015-03-01", true), procedure("P2", "B", "2015-04-01", false)},
        {document("D1", "A", "2015-03-05", "Écoulement purulent de la cicatrice. Sepsis sévère, sepsis persistant."),
         document("D2", "A", "2015-07-01", "Abcès tardif."),
         document("D3", "B", "2015-04-02", "Douleur lombaire. Pas d'écoulement."),
         document("D4", "A", "2015-02-28", "Sepsis ancien.")},
        {event("A", "2015-03-10", EventKind::icd10, "T81.4"), event("A", "2015-03-02", EventKind::atc_administration, "J01CF04"),
         event("B", "2015-04-01", EventKind::atc_administration, "B01AB05"),
         event("B", "2015-09-01", EventKind::ccam, "AFPA001")}};
    ssi::nlp::Tagger tagger;
    ssi::nlp::TaggedCorpus tagged{dataset, tagger};
};

}  // namespace

TEST_CASE("structured flags follow the configured code lists") {
    CHECK(flags_for({event("A", "2015-01-01", EventKind::icd10, "T81.4")}).dx);
    CHECK_FALSE(flags_for({event("A", "2015-01-01", EventKind::icd10, "T81")}).dx);
    CHECK(flags_for({event("A", "2015-01-01", EventKind::ccam, "AFPA001")}).reprise);
    CHECK(flags_for({event("A", "2015-01-01", EventKind::atc_administration, "J01CF04")}).abx);
    CHECK(flags_for({event("A", "2015-01-01", EventKind::atc_administration, "J04AB02")}).abx);
    CHECK_FALSE(flags_for({event("A", "2015-01-01", EventKind::atc_administration, "B01AB05")}).abx);
    CHECK_FALSE(flags_for({event("A", "2015-01-01", EventKind::icd10, "J01CF04")}).abx);
    CHECK(flags_for({event("A", "2015-01-01", EventKind::bacteriology_protocol, "PUS PROFOND (rachis)")}).bacterio);
    CHECK(flags_for({event("A", "2015-01-01", EventKind::bacteriology_protocol, "Plaie operatoire")}).bacterio);
    CHECK(flags_for({event("A", "2015-01-01", EventKind::bacteriology_protocol, "Liquide de redon")}).bacterio);
    CHECK_FALSE(flags_for({event("A", "2015-01-01", EventKind::bacteriology_protocol, "Hémoculture")}).bacterio);
    const auto none = flags_for({});
    CHECK_FALSE((none.dx || none.reprise || none.abx || none.bacterio));
}

TEST_CASE("structured config json round trip and validation") {
    StructuredConfig c;
    c.icd10_codes.insert("T85.7");
    const auto back = StructuredConfig::from_json(c.to_json());
    CHECK(back.icd10_codes == c.icd10_codes);
    CHECK(back.bacterio_protocols == c.bacterio_protocols);
    StructuredConfig empty;
    empty.atc_prefixes.clear();
    CHECK_THROWS_AS(empty.validate(), ssi::ValidationError);
}

TEST_CASE("count_in_sentence equals a brute-force scan") {
    std::mt19937 rng(3);
    const std::vector<std::string> vocab{"a", "b", "c"};
    for (int i = 0; i < 2000; ++i) {
        std::vector<std::string> lemmas(rng() % 12), term(1 + rng() % 3);
        for (auto& l : lemmas) l = vocab[rng() % 3];
        for (auto& t : term) t = vocab[rng() % 3];
        std::size_t brute = 0;
        for (std::size_t s = 0; s + term.size() <= lemmas.size(); ++s) {
            bool all = true;
            for (std::size_t k = 0; k < term.size(); ++k) all = all && lemmas[s + k] == term[k];
            brute += all;
        }
        REQUIRE(count_in_sentence(lemmas, term) == brute);
    }
    const std::vector<std::string> empty_term;
    CHECK(count_in_sentence(std::vector<std::string>{"a"}, empty_term) == 0);
}

TEST_CASE("column names per algorithm") {
    FeatureConfig c;
    c.algo = Algorithm::algo1;
    c.terms = {"Sepsis", "écoulement  purulent"};
    CHECK(c.column_names() ==
          std::vector<std::string>{"dx_flag", "reprise_flag", "abx_flag", "bacterio_flag", "count:sepsis",
                                   "count:écoulement purulent"});
    c.algo = Algorithm::algo2;
    CHECK(c.column_names() == std::vector<std::string>{"has:sepsis", "has:écoulement purulent"});
    CHECK(default_expert_terms().size() == 12);
}

TEST_CASE("fingerprint tracks everything that changes the columns") {
    FeatureConfig a;
    a.terms = {"sepsis"};
    FeatureConfig b = a;
    CHECK(a.fingerprint() == b.fingerprint());
    b.window.length_days = 30;
    CHECK(a.fingerprint() != b.fingerprint());
    b = a;
    b.terms = {"abcès"};
    CHECK(a.fingerprint() != b.fingerprint());
    b = a;
    b.algo = Algorithm::algo1;
    CHECK(a.fingerprint() != b.fingerprint());
}

TEST_CASE("assemble algo1: windowed structured flags and term counts") {
    Fixture f;
    FeatureConfig c;
    c.algo = Algorithm::algo1;
    c.terms = {"sepsis", "écoulement purulent", "abcès", "écoulement"};
    const auto x = assemble(f.dataset.procedures(), f.dataset, f.tagged, c);
    REQUIRE(x.rows() == 2);
    REQUIRE(x.cols() == 8);
    // P1: T81.4 and J01 in window; "sepsis" twice in one sentence (D4 is before day 0), abcès out of window
    const std::vector<double> p1{1, 0, 1, 0, 2, 1, 0, 1};
    CHECK(std::vector<double>(x.row(0).begin(), x.row(0).end()) == p1);
    // P2: B01 is not an antibacterial; AFPA001 is outside the window
    const std::vector<double> p2{0, 0, 0, 0, 0, 0, 0, 1};
    CHECK(std::vector<double>(x.row(1).begin(), x.row(1).end()) == p2);
    CHECK(x.labels() == std::vector<std::optional<bool>>{true, false});
}

TEST_CASE("assemble algo2 is binary") {
    Fixture f;
    FeatureConfig c;
    c.terms = {"sepsis", "douleur lombaire"};
    const auto x = assemble(f.dataset.procedures(), f.dataset, f.tagged, c);
    CHECK(std::vector<double>(x.values().begin(), x.values().end()) == std::vector<double>{1, 0, 0, 1});
}

TEST_CASE("permuting the term list permutes the columns identically") {
    Fixture f;
    FeatureConfig c;
    c.algo = Algorithm::algo1;
    c.terms = {"sepsis", "écoulement purulent", "abcès", "écoulement", "cicatrice"};
    const auto base = assemble(f.dataset.procedures(), f.dataset, f.tagged, c);
    std::vector<std::size_t> perm{0, 1, 2, 3, 4};
    std::mt19937 rng(1);
    for (int round = 0; round < 10; ++round) {
        std::shuffle(perm.begin(), perm.end(), rng);
        FeatureConfig p = c;
        for (std::size_t i = 0; i < perm.size(); ++i) p.terms[i] = c.terms[perm[i]];
        const auto x = assemble(f.dataset.procedures(), f.dataset, f.tagged, p);
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t i = 0; i < perm.size(); ++i) CHECK(x.at(r, 4 + i) == base.at(r, 4 + perm[i]));
    }
}

TEST_CASE("assemble rejects an empty term list") {
    Fixture f;
    FeatureConfig c;
    CHECK_THROWS_AS(assemble(f.dataset.procedures(), f.dataset, f.tagged, c), ssi::ValidationError);
}

TEST_CASE("feature matrix csv round trip") {
    FeatureMatrix x({"has:a", "has:b, \"quoted\""}, {"P1", "P2", "P3"}, {1, 0, 0.5, 2, 0, 0}, {true, std::nullopt, false});
    CHECK(FeatureMatrix::from_csv(x.to_csv()) == x);
    CHECK_THROWS_AS(FeatureMatrix::from_csv("procedure_id,has:a,label\nP1,1\n"), ssi::ParseError);
    CHECK_THROWS_AS(FeatureMatrix::from_csv("procedure_id,has:a,label\nP1,abc,1\n"), ssi::ParseError);
    CHECK_THROWS_AS(FeatureMatrix::from_csv("procedure_id,has:a,label\nP1,1,maybe\n"), ssi::ParseError);
    CHECK_THROWS_AS(x.require_labels(), ssi::ValidationError);
    const auto labeled = x.select_rows([](std::size_t r) { return r != 1; });
    CHECK(labeled.require_labels() == std::vector<int>{1, 0});
}
