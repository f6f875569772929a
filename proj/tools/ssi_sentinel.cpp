// ssi-sentinel: command-line driver for the surveillance pipeline.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssi/config.hpp"
#include "ssi/error.hpp"
#include "ssi/eval.hpp"
#include "ssi/pipeline.hpp"
#include "ssi/service.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kNotFound = 3, kParse = 4, kConflict = 5 };

int report_error(std::string_view type, const std::string& message, int code) {
    nlohmann::json j = {{"error", {{"type", type}, {"message", message}}}};
    std::cerr << j.dump() << "\n";
    return code;
}

void flush_warnings(ssi::pipeline::Workspace& ws) {
    for (const auto& w : ws.warnings) std::cerr << "warning: " << w << "\n";
    ws.warnings.clear();
}

void print_block_summary(const ssi::eval::RunReport& report) {
    for (const auto& b : report.blocks) {
        const auto m = ssi::eval::metrics(b.cm);
        std::cout << b.name << ": tp=" << b.cm.tp << " fp=" << b.cm.fp << " fn=" << b.cm.fn << " tn=" << b.cm.tn
                  << " sensitivity=" << ssi::eval::format_percent(m.sensitivity)
                  << " specificity=" << ssi::eval::format_percent(m.specificity)
                  << " ppv=" << ssi::eval::format_percent(m.ppv) << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Surgical-site infection surveillance pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "run configuration (flat TOML)")->required();
        sub->add_option("-s,--set", overrides, "override a config field, key=value (repeatable)");
    };

    struct Command {
        const char* name;
        const char* help;
    };
    const std::vector<Command> stage_commands{
        {"extract-terms", "index noun groups of the training windows (term_index.json)"},
        {"select-terms", "rank and filter candidates (candidate_report.json, approved_terms.txt)"},
        {"build-features", "assemble the feature matrix (features.csv)"},
        {"train", "fit the configured model (model.json, uncalibrated)"},
        {"calibrate", "set the sensitivity-first threshold (model.json)"},
        {"predict", "score all procedures (predictions.jsonl)"},
        {"evaluate", "confusion matrices and metrics (report.json, report.md)"},
        {"run", "every stage from extract-terms to evaluate"},
        {"synth", "generate a synthetic corpus"},
        {"ingest", "load flagged predictions with evidence into the review store"},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& c : stage_commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        add_common(sub);
        subs[c.name] = sub;
    }

    auto* serve = app.add_subcommand("serve", "run the review HTTP service");
    add_common(serve);
    std::optional<int> port;
    std::optional<std::string> store_path;
    std::optional<std::string> static_dir;
    serve->add_option("--port", port, "listen port (overrides serve.port)");
    serve->add_option("--store-path", store_path, "review event log (overrides serve.store_path)");
    serve->add_option("--static-dir", static_dir, "directory served at / (overrides serve.static_dir)");

    auto* export_gold = app.add_subcommand("export-gold", "write reviewer-corrected procedures.jsonl");
    add_common(export_gold);
    std::string export_out;
    export_gold->add_option("-o,--out", export_out, "destination (default <output.dir>/gold_procedures.jsonl)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return report_error("usage", e.what(), kUsage);
    }

    try {
        if (serve->parsed()) {
            if (port) overrides.push_back("serve.port=" + std::to_string(*port));
            if (store_path) overrides.push_back("serve.store_path=\"" + *store_path + "\"");
            if (static_dir) overrides.push_back("serve.static_dir=\"" + *static_dir + "\"");
        }
        auto cfg = ssi::config::RunConfig::load(config_path, overrides);
        // Paths given on the command line are relative to the working directory.
        if (serve->parsed()) {
            if (store_path) cfg.store_path = std::filesystem::absolute(*store_path);
            if (static_dir) cfg.static_dir = std::filesystem::absolute(*static_dir);
        }

        if (subs["synth"]->parsed()) {
            ssi::pipeline::synth(cfg);
            std::cout << "wrote synthetic corpus to " << cfg.synth_dir.string() << "\n";
            return kOk;
        }

        ssi::pipeline::Workspace ws(cfg);
        if (subs["extract-terms"]->parsed()) {
            const auto r = ssi::pipeline::extract_terms(ws);
            std::cout << r.index.size() << " candidate terms from " << r.procedures << " procedures\n";
        } else if (subs["select-terms"]->parsed()) {
            const auto r = ssi::pipeline::select_terms(ws);
            std::cout << r.candidates.size() << " candidates after frequency filter, " << r.selection.terms.size()
                      << " selected\n";
        } else if (subs["build-features"]->parsed()) {
            const auto x = ssi::pipeline::build_features(ws);
            std::cout << x.rows() << " rows x " << x.cols() << " columns\n";
        } else if (subs["train"]->parsed()) {
            const auto m = ssi::pipeline::train(ws);
            std::cout << "trained " << ssi::models::kind_name(m.base) << "\n";
        } else if (subs["calibrate"]->parsed()) {
            const auto m = ssi::pipeline::calibrate(ws);
            std::cout << "threshold " << *m.threshold << "\n";
        } else if (subs["predict"]->parsed()) {
            const auto preds = ssi::pipeline::predict(ws);
            std::size_t flagged = 0;
            for (const auto& p : preds) flagged += p.flagged;
            std::cout << flagged << " of " << preds.size() << " procedures flagged\n";
        } else if (subs["evaluate"]->parsed()) {
            print_block_summary(ssi::pipeline::evaluate(ws));
        } else if (subs["run"]->parsed()) {
            print_block_summary(ssi::pipeline::run_all(ws));
        } else if (subs["ingest"]->parsed()) {
            const auto n = ssi::pipeline::ingest(ws);
            std::cout << "ingested " << n << " flagged procedures into " << cfg.store().string() << "\n";
        } else if (export_gold->parsed()) {
            const std::filesystem::path dest =
                export_out.empty() ? cfg.out("gold_procedures.jsonl") : std::filesystem::path(export_out);
            const auto n = ssi::pipeline::export_gold(ws, dest);
            std::cout << "exported " << n << " procedures to " << dest.string() << "\n";
        } else if (serve->parsed()) {
            ssi::service::Store store(cfg.store());
            std::vector<ssi::corpus::Procedure> procs;
            if (cfg.procedures) procs = ws.dataset().procedures();
            else ws.warnings.push_back("corpus.procedures is not set; /export/gold returns no procedures");
            ssi::service::Service svc(store, std::move(procs), cfg.out("report.json"));
            ssi::service::HttpServer server(svc, {cfg.host, cfg.port, cfg.static_dir});
            flush_warnings(ws);
            server.run([&](int bound) {
                std::cout << "serving " << store.size() << " records on http://" << cfg.host << ":" << bound << "\n"
                          << std::flush;
            });
        }
        flush_warnings(ws);
        return kOk;
    } catch (const ssi::ParseError& e) {
        return report_error("parse", e.what(), kParse);
    } catch (const ssi::NotFoundError& e) {
        return report_error("not_found", e.what(), kNotFound);
    } catch (const ssi::ConflictError& e) {
        return report_error("conflict", e.what(), kConflict);
    } catch (const ssi::ValidationError& e) {
        return report_error("validation", e.what(), kUsage);
    } catch (const std::exception& e) {
        return report_error("error", e.what(), kFailure);
    }
}
