#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ssi/config.hpp"
#include "ssi/error.hpp"
#include "ssi/eval.hpp"
#include "ssi/nlp.hpp"
#include "ssi/pipeline.hpp"
#include "ssi/syngen.hpp"
#include "ssi/termselect.hpp"

namespace py = pybind11;

namespace {

using TokenTuple = std::tuple<std::string, std::string, std::string>;

ssi::nlp::TaggedSentence to_sentence(const std::vector<TokenTuple>& tokens) {
    ssi::nlp::TaggedSentence s;
    for (const auto& [surface, tag, lemma] : tokens) s.push_back({surface, tag, lemma});
    return s;
}

py::dict metric_dict(const ssi::eval::MetricSet& m) {
    py::dict d;
    auto put = [&](const char* k, const std::optional<double>& v) {
        d[k] = v ? py::cast(*v) : py::none();
    };
    put("sensitivity", m.sensitivity);
    put("specificity", m.specificity);
    put("ppv", m.ppv);
    put("accuracy", m.accuracy);
    return d;
}

ssi::pipeline::Workspace workspace(const std::string& config, const std::vector<std::string>& overrides) {
    return ssi::pipeline::Workspace(ssi::config::RunConfig::load(config, overrides));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Surgical site infection surveillance pipeline";

    auto base = py::register_exception<ssi::Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ssi::ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ssi::ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<ssi::NotFoundError>(m, "NotFoundError", base.ptr());
    py::register_exception<ssi::ConflictError>(m, "ConflictError", base.ptr());

    m.def(
        "metrics",
        [](std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
            return metric_dict(ssi::eval::metrics({tp, fp, fn, tn}));
        },
        py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"),
        "Sensitivity, specificity, PPV and accuracy as ratios; None when undefined.");
    m.def("format_percent", [](std::optional<double> r) { return ssi::eval::format_percent(r); }, py::arg("ratio"));

    m.def(
        "tag_text",
        [](const std::string& text) {
            static const ssi::nlp::Tagger tagger;
            std::vector<std::vector<TokenTuple>> out;
            for (const auto& s : tagger.tag_text(text)) {
                auto& row = out.emplace_back();
                for (const auto& t : s) row.emplace_back(t.surface, t.tag, t.lemma);
            }
            return out;
        },
        py::arg("text"), "Sentences of (surface, tag, lemma) from the built-in tagger.");
    m.def(
        "extract_noun_groups",
        [](const std::vector<TokenTuple>& tokens, int max_content) {
            std::vector<std::string> out;
            for (const auto& t :
                 ssi::nlp::extract_noun_groups(to_sentence(tokens), ssi::nlp::TagMapping::french_default(), max_content))
                out.push_back(t.text);
            return out;
        },
        py::arg("tokens"), py::arg("max_content") = 3, "Lemmatized noun groups of one tagged sentence.");

    m.def("odds_ratio", &ssi::termselect::odds_ratio, py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d"),
          py::arg("smoothing") = 0.5);
    m.def("frequency_cutoff", &ssi::termselect::frequency_cutoff, py::arg("n_pos"), py::arg("ratio"));

    m.def(
        "generate_synthetic",
        [](const std::string& directory, std::uint64_t seed, std::optional<std::string> config_json) {
            auto c = config_json ? ssi::syngen::SynthConfig::from_json(*config_json)
                                 : ssi::syngen::SynthConfig::full_scale(seed);
            c.seed = seed;
            const auto corpus = ssi::syngen::generate(c);
            ssi::syngen::write(corpus, directory);
            return corpus.manifest_json;
        },
        py::arg("directory"), py::arg("seed") = 42, py::arg("config_json") = py::none(),
        "Writes a synthetic corpus and returns its truth manifest as JSON text.");

    m.def(
        "run",
        [](const std::string& config, const std::vector<std::string>& overrides) {
            py::gil_scoped_release release;
            auto ws = workspace(config, overrides);
            return ssi::eval::report_json(ssi::pipeline::run_all(ws));
        },
        py::arg("config"), py::arg("overrides") = std::vector<std::string>{},
        "Runs every stage and returns report.json as text.");
    m.def(
        "run_stage",
        [](const std::string& stage, const std::string& config, const std::vector<std::string>& overrides) {
            py::gil_scoped_release release;
            auto ws = workspace(config, overrides);
            namespace pl = ssi::pipeline;
            if (stage == "synth") pl::synth(ws.config());
            else if (stage == "extract-terms") pl::extract_terms(ws);
            else if (stage == "select-terms") pl::select_terms(ws);
            else if (stage == "build-features") pl::build_features(ws);
            else if (stage == "train") pl::train(ws);
            else if (stage == "calibrate") pl::calibrate(ws);
            else if (stage == "predict") pl::predict(ws);
            else if (stage == "evaluate") pl::evaluate(ws);
            else if (stage == "ingest") pl::ingest(ws);
            else throw ssi::ValidationError("unknown stage \"" + stage + "\"");
            return ws.warnings;
        },
        py::arg("stage"), py::arg("config"), py::arg("overrides") = std::vector<std::string>{},
        "Runs one stage; returns its warnings.");
}
