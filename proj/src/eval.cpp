#include "ssi/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>

#include <json.hpp>

#include "ssi/error.hpp"

namespace ssi::eval {

using nlohmann::json;

ConfusionMatrix confusion(std::span<const bool> flags, std::span<const std::optional<bool>> gold) {
    if (flags.size() != gold.size()) throw ValidationError("flag and label vectors differ in length");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (!gold[i]) throw ValidationError("evaluation requires a gold label for every procedure");
        const bool g = *gold[i];
        if (flags[i]) (g ? cm.tp : cm.fp) += 1;
        else (g ? cm.fn : cm.tn) += 1;
    }
    return cm;
}

ConfusionMatrix confusion(std::span<const bool> flags, std::span<const int> gold) {
    std::vector<std::optional<bool>> g(gold.begin(), gold.end());
    for (std::size_t i = 0; i < gold.size(); ++i) g[i] = gold[i] != 0;
    return confusion(flags, g);
}

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricSet metrics(const ConfusionMatrix& cm) {
    return {ratio(cm.tp, cm.tp + cm.fn), ratio(cm.tn, cm.tn + cm.fp), ratio(cm.tp, cm.tp + cm.fp),
            ratio(cm.tp + cm.tn, cm.total())};
}

std::optional<double> percent(const std::optional<double>& r) {
    if (!r) return std::nullopt;
    // Half-up at the second decimal; the epsilon absorbs representation error
    // on exact ties such as 0.125.
    return std::floor(*r * 10000.0 + 0.5 + 1e-9) / 100.0;
}

std::string format_percent(const std::optional<double>& r) {
    const auto p = percent(r);
    if (!p) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", *p);
    return buf;
}

Split temporal_split(std::span<const corpus::Procedure> procedures, const std::set<int>& train_years,
                     const std::set<int>& test_years) {
    for (int y : train_years)
        if (test_years.contains(y))
            throw ValidationError("train and test years overlap on " + std::to_string(y));
    Split s;
    for (const auto& p : procedures) {
        if (train_years.contains(p.year())) s.train.push_back(p);
        else if (test_years.contains(p.year())) s.test.push_back(p);
        else ++s.excluded;
    }
    if (s.test.empty()) s.warnings.push_back("test set is empty");
    if (s.train.empty()) s.warnings.push_back("training set is empty");
    if (s.excluded) s.warnings.push_back(std::to_string(s.excluded) + " procedures outside the train/test years were excluded");
    return s;
}

EvaluationBlock evaluate_block(std::string name, std::span<const models::Prediction> predictions,
                               std::span<const corpus::Procedure> scope) {
    std::map<std::string_view, const models::Prediction*> by_id;
    for (const auto& p : predictions) by_id.emplace(p.procedure_id, &p);
    EvaluationBlock b;
    b.name = std::move(name);
    auto flags = std::make_unique<bool[]>(scope.size());
    std::vector<std::optional<bool>> gold;
    for (std::size_t i = 0; i < scope.size(); ++i) {
        const auto& proc = scope[i];
        auto it = by_id.find(proc.procedure_id);
        if (it == by_id.end()) throw NotFoundError("no prediction for procedure \"" + proc.procedure_id + "\"");
        flags[i] = it->second->flagged;
        gold.push_back(proc.gold_label);
        if (it->second->flagged && proc.gold_label == false)
            b.false_positives.push_back({proc.procedure_id, it->second->probability});
    }
    b.cm = confusion(std::span<const bool>(flags.get(), scope.size()), gold);
    std::ranges::stable_sort(b.false_positives, [](const FalsePositive& a, const FalsePositive& c) {
        if (a.probability != c.probability) return a.probability > c.probability;
        return a.procedure_id < c.procedure_id;
    });
    return b;
}

namespace {

json metric_json(const std::optional<double>& r) {
    if (!r) return json{{"value", nullptr}, {"percent", nullptr}, {"display", "n/a"}};
    return json{{"value", *r}, {"percent", *percent(r)}, {"display", format_percent(r)}};
}

json or_json(double v) {
    if (std::isinf(v)) return "inf";
    return v;
}

}  // namespace

std::string report_json(const RunReport& report) {
    json blocks = json::array();
    for (const auto& b : report.blocks) {
        const auto m = metrics(b.cm);
        json fps = json::array();
        for (const auto& fp : b.false_positives) fps.push_back({{"procedure_id", fp.procedure_id}, {"probability", fp.probability}});
        blocks.push_back({{"name", b.name},
                          {"confusion", {{"tp", b.cm.tp}, {"fp", b.cm.fp}, {"fn", b.cm.fn}, {"tn", b.cm.tn}}},
                          {"margins",
                           {{"flagged", b.cm.tp + b.cm.fp},
                            {"not_flagged", b.cm.fn + b.cm.tn},
                            {"positives", b.cm.tp + b.cm.fn},
                            {"negatives", b.cm.fp + b.cm.tn},
                            {"total", b.cm.total()}}},
                          {"metrics",
                           {{"sensitivity", metric_json(m.sensitivity)},
                            {"specificity", metric_json(m.specificity)},
                            {"ppv", metric_json(m.ppv)},
                            {"accuracy", metric_json(m.accuracy)}}},
                          {"false_positives", fps}});
    }
    json terms = json::array();
    for (const auto& t : report.selected_terms) {
        json row = {{"term", t.term}};
        if (t.stats) {
            row["a"] = t.stats->a;
            row["b"] = t.stats->b;
            row["c"] = t.stats->c;
            row["d"] = t.stats->d;
            row["odds_ratio"] = or_json(t.stats->odds_ratio);
        } else {
            row["odds_ratio"] = nullptr;
        }
        terms.push_back(std::move(row));
    }
    json j = {{"model_kind", report.model_kind},
              {"threshold", report.threshold ? json(*report.threshold) : json(nullptr)},
              {"train_years", report.train_years},
              {"test_years", report.test_years},
              {"evaluations", blocks},
              {"selected_terms", terms}};
    return j.dump(2) + "\n";
}

std::string report_markdown(const RunReport& report) {
    std::string out = "# Surveillance run report\n\n";
    out += "Model: " + report.model_kind + "\n";
    if (report.threshold) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6g", *report.threshold);
        out += std::string("Threshold: ") + buf + "\n";
    }
    for (const auto& b : report.blocks) {
        const auto& cm = b.cm;
        const auto m = metrics(cm);
        auto n = [](std::size_t v) { return std::to_string(v); };
        out += "\n## " + b.name + "\n\n";
        out += "|    | M+ | M- | total |\n|----|----|----|-------|\n";
        out += "| T+ | " + n(cm.tp) + " | " + n(cm.fp) + " | " + n(cm.tp + cm.fp) + " |\n";
        out += "| T- | " + n(cm.fn) + " | " + n(cm.tn) + " | " + n(cm.fn + cm.tn) + " |\n";
        out += "|    | " + n(cm.tp + cm.fn) + " | " + n(cm.fp + cm.tn) + " | " + n(cm.total()) + " |\n\n";
        out += "- sensitivity: " + format_percent(m.sensitivity) + "\n";
        out += "- specificity: " + format_percent(m.specificity) + "\n";
        out += "- PPV: " + format_percent(m.ppv) + "\n";
        out += "- accuracy: " + format_percent(m.accuracy) + "\n";
        if (!b.false_positives.empty()) {
            out += "\nFalse positives for review:\n\n";
            for (const auto& fp : b.false_positives) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.4f", fp.probability);
                out += "- " + fp.procedure_id + " (p=" + buf + ")\n";
            }
        }
    }
    if (!report.selected_terms.empty()) {
        out += "\n## Selected terms\n\n| term | OR |\n|------|----|\n";
        for (const auto& t : report.selected_terms) {
            std::string v = "n/a";
            if (t.stats) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.2f", t.stats->odds_ratio);
                v = std::isinf(t.stats->odds_ratio) ? "inf" : buf;
            }
            out += "| " + t.term + " | " + v + " |\n";
        }
    }
    return out;
}

}  // namespace ssi::eval
