#include "ssi/syngen.hpp"

#include <algorithm>
#include <random>

#include <json.hpp>

#include "ssi/error.hpp"

namespace ssi::syngen {

using corpus::CareEvent;
using corpus::ClinicalDocument;
using corpus::DocType;
using corpus::EventKind;
using corpus::Procedure;
using nlohmann::json;

namespace {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    bool bernoulli(double p) { return uniform() < p; }
    std::size_t index(std::size_t n) {
        const std::uint64_t bound = n;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t v;
        do v = engine_();
        while (v >= limit);
        return static_cast<std::size_t>(v % bound);
    }
    int between(int lo, int hi) { return lo + static_cast<int>(index(static_cast<std::size_t>(hi - lo + 1))); }
    template <typename T>
    const T& pick(const std::vector<T>& v) { return v[index(v.size())]; }

private:
    std::mt19937_64 engine_;
};

const std::vector<std::string> kOperativeFiller = {
    "Arthrodèse lombaire par voie postérieure.",
    "Le patient est installé en décubitus ventral.",
    "Mise en place de vis et de tiges.",
    "Fermeture plan par plan sur drain.",
    "Pansement sec.",
    "Hémostase correctement réalisée.",
};

const std::vector<std::string> kFollowupFiller = {
    "Les suites opératoires sont simples.",
    "Le patient est revu en consultation.",
    "La marche est satisfaisante.",
    "La cicatrice est propre.",
    "Le patient est adressé en rééducation.",
    "La mobilisation est bien tolérée.",
    "Sortie prévue demain.",
    "Le traitement est poursuivi.",
    "Il ne signale pas de fièvre.",
};

const std::vector<std::string> kReferenceFiller = {
    "Les complications infectieuses de la chirurgie du rachis sont rares.",
    "Le diagnostic repose sur la clinique et la biologie.",
    "Les facteurs de risque comprennent le diabète et l'obésité.",
    "La prévention repose sur une antibioprophylaxie adaptée.",
    "La prise en charge associe chirurgie et antibiotique.",
};

std::string fill(const std::string& frame, const std::string& term) {
    std::string out = frame;
    const auto at = out.find("{}");
    out.replace(at, 2, term);
    return out;
}

EmittedTerm term(std::string t, double pos, double neg) { return {std::move(t), pos, neg}; }

json emitted_json(const std::vector<EmittedTerm>& v) {
    json arr = json::array();
    for (const auto& t : v) arr.push_back({{"term", t.term}, {"p_positive", t.p_positive}, {"p_negative", t.p_negative}});
    return arr;
}

std::vector<EmittedTerm> emitted_from(const json& arr) {
    std::vector<EmittedTerm> v;
    for (const auto& t : arr)
        v.push_back({t.at("term").get<std::string>(), t.at("p_positive").get<double>(), t.at("p_negative").get<double>()});
    return v;
}

}  // namespace

const std::vector<std::string>& term_frames() {
    static const std::vector<std::string> frames = {
        "On note {}.", "Le bilan retrouve {}.", "Il existe {} ce jour.", "Nous constatons {}.",
        "Le patient présente {}.",
    };
    return frames;
}

SynthConfig SynthConfig::full_scale(std::uint64_t seed) {
    SynthConfig c;
    c.seed = seed;
    for (const char* t : {"site opératoire", "antibiothérapie", "sepsis", "écoulement purulent",
                          "désunion de la cicatrice", "parage", "lavage", "staphylocoque", "rifampicine", "abcès"})
        c.planted_terms.push_back(term(t, 0.9, 0.02));
    for (const char* t : {"douleur lombaire", "radiographie de contrôle", "kinésithérapie", "lombalgie",
                          "hernie discale", "traitement antalgique", "sténose du canal", "radiculalgie", "corset",
                          "hématome"})
        c.decoy_terms.push_back(term(t, 0.3, 0.3));
    c.site_specific_terms.push_back(term("code AFPA001", 0.6, 0.002));
    return c;
}

void SynthConfig::validate() const {
    auto prob = [](double p, const std::string& what) {
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(what + " must be a probability in [0, 1]");
    };
    prob(prevalence, "prevalence");
    prob(out_of_window_noise, "out_of_window_noise");
    prob(repeat_patient_rate, "repeat_patient_rate");
    for (const auto* r : {&dx, &reprise, &abx, &bacterio}) {
        prob(r->p_positive, "event rate");
        prob(r->p_negative, "event rate");
    }
    for (const auto* list : {&planted_terms, &decoy_terms, &site_specific_terms})
        for (const auto& t : *list) {
            prob(t.p_positive, "emission probability of \"" + t.term + "\"");
            prob(t.p_negative, "emission probability of \"" + t.term + "\"");
            if (t.term.empty()) throw ValidationError("empty synthetic term");
        }
    if (planted_terms.empty()) throw ValidationError("at least one planted term is required");
    for (const auto& [y, n] : procedures_per_year)
        if (n < 0) throw ValidationError("negative procedure count for " + std::to_string(y));
}

std::string SynthConfig::to_json() const {
    json years = json::object();
    for (const auto& [y, n] : procedures_per_year) years[std::to_string(y)] = n;
    auto rates = [](const EventRates& r) { return json{{"p_positive", r.p_positive}, {"p_negative", r.p_negative}}; };
    json j = {{"procedures_per_year", years},
              {"prevalence", prevalence},
              {"planted_terms", emitted_json(planted_terms)},
              {"decoy_terms", emitted_json(decoy_terms)},
              {"site_specific_terms", emitted_json(site_specific_terms)},
              {"events", {{"dx", rates(dx)}, {"reprise", rates(reprise)}, {"abx", rates(abx)}, {"bacterio", rates(bacterio)}}},
              {"out_of_window_noise", out_of_window_noise},
              {"repeat_patient_rate", repeat_patient_rate},
              {"seed", seed}};
    return j.dump(2) + "\n";
}

SynthConfig SynthConfig::from_json(std::string_view json_text) {
    SynthConfig c = full_scale();
    try {
        const json j = json::parse(json_text);
        if (j.contains("procedures_per_year")) {
            c.procedures_per_year.clear();
            for (const auto& [y, n] : j["procedures_per_year"].items()) c.procedures_per_year[std::stoi(y)] = n.get<int>();
        }
        if (j.contains("prevalence")) c.prevalence = j["prevalence"].get<double>();
        if (j.contains("planted_terms")) c.planted_terms = emitted_from(j["planted_terms"]);
        if (j.contains("decoy_terms")) c.decoy_terms = emitted_from(j["decoy_terms"]);
        if (j.contains("site_specific_terms")) c.site_specific_terms = emitted_from(j["site_specific_terms"]);
        if (j.contains("events")) {
            const auto& e = j["events"];
            auto rd = [&](const char* k, EventRates& r) {
                if (e.contains(k)) r = {e[k].at("p_positive").get<double>(), e[k].at("p_negative").get<double>()};
            };
            rd("dx", c.dx);
            rd("reprise", c.reprise);
            rd("abx", c.abx);
            rd("bacterio", c.bacterio);
        }
        if (j.contains("out_of_window_noise")) c.out_of_window_noise = j["out_of_window_noise"].get<double>();
        if (j.contains("repeat_patient_rate")) c.repeat_patient_rate = j["repeat_patient_rate"].get<double>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ParseError("synth config", 0, e.what());
    } catch (const std::invalid_argument&) {
        throw ParseError("synth config", 0, "procedures_per_year keys must be years");
    }
    c.validate();
    return c;
}

SynthCorpus generate(const SynthConfig& config) {
    config.validate();
    Rng rng(config.seed);
    SynthCorpus out;
    std::size_t n_patients = 0, n_docs = 0;
    std::vector<std::string> earlier_patients;
    std::map<int, int> positives_by_year;
    json labels = json::object();

    auto next_doc_id = [&] {
        char buf[32];
        std::snprintf(buf, sizeof buf, "D%07zu", ++n_docs);
        return std::string(buf);
    };

    bool first_year = true;
    for (const auto& [year, count] : config.procedures_per_year) {
        std::vector<std::string> this_year_patients;
        for (int i = 0; i < count; ++i) {
            Procedure p;
            char buf[32];
            std::snprintf(buf, sizeof buf, "P%d-%04d", year, i + 1);
            p.procedure_id = buf;
            if (!first_year && !earlier_patients.empty() && rng.bernoulli(config.repeat_patient_rate)) {
                p.patient_id = rng.pick(earlier_patients);
            } else {
                std::snprintf(buf, sizeof buf, "PAT%06zu", ++n_patients);
                p.patient_id = buf;
            }
            this_year_patients.push_back(p.patient_id);
            // A three-month surveillance campaign starting in March.
            p.intervention_date = Date::from_ymd(year, 3, 1) + rng.between(0, 91);
            p.specialty = "rachis";
            const bool positive = rng.bernoulli(config.prevalence);
            p.gold_label = positive;
            labels[p.procedure_id] = positive;
            if (positive) ++positives_by_year[year];
            const Date d0 = p.intervention_date;

            // Window documents: operative report, stay report, follow-up
            // consultations, and for some positives a revision note.
            struct Draft {
                DocType type;
                Date date;
                std::vector<std::string> sentences;
            };
            std::vector<Draft> docs;
            docs.push_back({DocType::operative_report, d0, {"Compte rendu opératoire."}});
            for (int k = 0, n = rng.between(2, 4); k < n; ++k) docs.back().sentences.push_back(rng.pick(kOperativeFiller));
            docs.push_back({DocType::hospitalization, d0 + rng.between(2, 10), {}});
            docs.push_back({DocType::consultation, d0 + rng.between(20, 90), {}});
            if (rng.bernoulli(0.5)) docs.push_back({DocType::consultation, d0 + rng.between(20, 90), {}});
            if (positive && rng.bernoulli(0.6)) docs.push_back({DocType::operative_report, d0 + rng.between(10, 60), {"Compte rendu opératoire."}});
            for (std::size_t k = 1; k < docs.size(); ++k)
                for (int s = 0, n = rng.between(2, 4); s < n; ++s) docs[k].sentences.push_back(rng.pick(kFollowupFiller));

            auto place = [&](const std::string& t, bool postop_only) {
                const std::size_t first = postop_only ? 1 : 0;
                auto& doc = docs[first + rng.index(docs.size() - first)];
                const auto sentence = fill(rng.pick(term_frames()), t);
                const std::size_t at = rng.index(doc.sentences.size() + 1);
                doc.sentences.insert(doc.sentences.begin() + static_cast<std::ptrdiff_t>(at), sentence);
            };
            for (const auto& t : config.planted_terms)
                if (rng.bernoulli(positive ? t.p_positive : t.p_negative)) place(t.term, true);
            for (const auto& t : config.decoy_terms)
                if (rng.bernoulli(positive ? t.p_positive : t.p_negative)) place(t.term, false);
            for (const auto& t : config.site_specific_terms)
                if (rng.bernoulli(positive ? t.p_positive : t.p_negative)) place(t.term, true);

            // Out-of-window note, before the intervention or past the window.
            if (rng.bernoulli(config.out_of_window_noise)) {
                const Date when = rng.bernoulli(0.5) ? d0 - rng.between(30, 300) : d0 + rng.between(100, 300);
                Draft noise{DocType::consultation, when, {"Le patient est revu en consultation."}};
                for (int k = 0, n = rng.between(1, 2); k < n; ++k)
                    noise.sentences.push_back(fill(rng.pick(term_frames()), rng.pick(config.planted_terms).term));
                docs.push_back(std::move(noise));
            }

            for (auto& d : docs) {
                std::string text;
                for (const auto& s : d.sentences) text += (text.empty() ? "" : " ") + s;
                out.documents.push_back({next_doc_id(), p.patient_id, d.date, d.type, std::move(text)});
            }

            // Structured events.
            auto emit = [&](EventKind kind, std::string code, Date when) {
                out.events.push_back({p.patient_id, when, kind, std::move(code)});
            };
            emit(EventKind::icd10, rng.pick(std::vector<std::string>{"M48.06", "M51.1", "M43.16"}), d0);
            emit(EventKind::ccam, "LFDA001", d0);
            emit(EventKind::atc_administration, "B01AB05", d0 + rng.between(0, 10));
            if (rng.bernoulli(positive ? config.dx.p_positive : config.dx.p_negative))
                emit(EventKind::icd10, rng.pick(std::vector<std::string>{"T81.4", "T84.6", "T84.7"}), d0 + rng.between(5, 60));
            if (rng.bernoulli(positive ? config.reprise.p_positive : config.reprise.p_negative))
                emit(EventKind::ccam, "AFPA001", d0 + rng.between(10, 60));
            if (rng.bernoulli(positive ? config.abx.p_positive : config.abx.p_negative))
                emit(EventKind::atc_administration,
                     positive ? rng.pick(std::vector<std::string>{"J01CF04", "J04AB02", "J01XA01"}) : "J01DB04",
                     positive ? d0 + rng.between(5, 60) : d0);
            if (rng.bernoulli(positive ? config.bacterio.p_positive : config.bacterio.p_negative))
                emit(EventKind::bacteriology_protocol,
                     rng.pick(std::vector<std::string>{"Prélèvement plaie opératoire", "Pus profond",
                                                       "Matériel orthopédique", "Biopsie ostéo-articulaire",
                                                       "Liquide de redon"}),
                     d0 + rng.between(5, 60));
            else if (rng.bernoulli(0.2))
                emit(EventKind::bacteriology_protocol, rng.pick(std::vector<std::string>{"Hémoculture", "ECBU"}),
                     d0 + rng.between(1, 30));
            // Infection codes far outside the window.
            if (rng.bernoulli(0.05)) emit(EventKind::icd10, "T81.4", d0 + rng.between(120, 400));

            out.procedures.push_back(std::move(p));
        }
        earlier_patients.insert(earlier_patients.end(), this_year_patients.begin(), this_year_patients.end());
        first_year = false;
    }

    // Reference text: a textbook-like passage covering planted and decoy
    // vocabulary but none of the site-specific terms.
    std::string ref;
    for (const auto& s : kReferenceFiller) ref += s + "\n";
    std::size_t f = 0;
    for (const auto* list : {&config.planted_terms, &config.decoy_terms})
        for (const auto& t : *list) ref += fill(term_frames()[f++ % term_frames().size()], t.term) + "\n";
    out.reference_text = std::move(ref);

    json by_year = json::object();
    std::size_t n_pos = 0;
    for (const auto& [y, n] : config.procedures_per_year) {
        by_year[std::to_string(y)] = {{"procedures", n}, {"positives", positives_by_year[y]}};
        n_pos += static_cast<std::size_t>(positives_by_year[y]);
    }
    json manifest = {{"seed", config.seed},
                     {"n_procedures", out.procedures.size()},
                     {"n_positive", n_pos},
                     {"by_year", by_year},
                     {"planted_terms", emitted_json(config.planted_terms)},
                     {"decoy_terms", emitted_json(config.decoy_terms)},
                     {"site_specific_terms", emitted_json(config.site_specific_terms)},
                     {"labels", labels}};
    out.manifest_json = manifest.dump(2) + "\n";
    return out;
}

void write(const SynthCorpus& c, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    corpus::write_file(dir / "procedures.jsonl", corpus::to_jsonl(c.procedures));
    corpus::write_file(dir / "documents.jsonl", corpus::to_jsonl(c.documents));
    corpus::write_file(dir / "events.jsonl", corpus::to_jsonl(c.events));
    corpus::write_file(dir / "truth_manifest.json", c.manifest_json);
    corpus::write_file(dir / "reference.txt", c.reference_text);
}

}  // namespace ssi::syngen
