// dialoguegen command-line tool.
//
// Exit codes: 0 success, 1 run failure (including aborted runs and failed
// matrix rows), 2 usage or configuration error.

#include <CLI11.hpp>

#include <iostream>

#include "dialoguegen/dialoguegen.hpp"

using namespace dialoguegen;

namespace {

struct BackendFlags {
    std::string backend;
    std::string mockScript;
    std::string endpoint;
    std::string model;
    std::optional<std::uint64_t> seed;

    void add_to(CLI::App* app, bool withSeed = true) {
        app->add_option("--backend", backend, "Override the backend kind")->check(CLI::IsMember({"mock", "remote"}));
        app->add_option("--mock-script", mockScript, "Mock script (JSONL) for the mock backend");
        app->add_option("--endpoint", endpoint, "Chat-completions endpoint URL for the remote backend");
        app->add_option("--model", model, "Model name for the remote backend");
        if (withSeed) app->add_option("--seed", seed, "Override the config seed");
    }

    ConfigOverrides overrides() const {
        ConfigOverrides o;
        o.seed = seed;
        if (backend == "mock") o.backend = BackendKind::Mock;
        if (backend == "remote") o.backend = BackendKind::Remote;
        if (!mockScript.empty()) {
            o.mockScript = mockScript;
            if (!o.backend) o.backend = BackendKind::Mock;
        }
        if (!endpoint.empty()) o.endpointUrl = endpoint;
        if (!model.empty()) o.modelName = model;
        return o;
    }
};

int exit_code_for(const Error& e) {
    switch (e.kind()) {
    case ErrorKind::Usage:
    case ErrorKind::Config:
        return 2;
    default:
        return 1;
    }
}

void print_manifest(const RunManifest& m) {
    std::cout << m.runId << ": " << m.status << ", " << m.generated << " conversations, " << m.requested
              << " experiences requested, " << m.parsedFailures << " parse failures, " << m.batches << " batches\n";
    if (m.error) std::cout << "  error: " << *m.error << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Persona-grounded multi-party dialogue generation and evaluation"};
    app.require_subcommand(1);
    std::string out = "out";
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Progress messages on stderr");

    // generate
    auto* gen = app.add_subcommand("generate", "Run one experiment config end-to-end");
    std::string genConfig;
    BackendFlags genFlags;
    gen->add_option("--config", genConfig, "Experiment config (JSON)")->required();
    gen->add_option("--out", out, "Output root directory");
    genFlags.add_to(gen);

    // eval
    auto* ev = app.add_subcommand("eval", "Compute stats, MTLD and/or judge scores for a dataset");
    std::string dataset, experiences, evalConfig, evalOut, label;
    std::vector<std::string> which;
    BackendFlags evalFlags;
    ev->add_option("--dataset", dataset, "conversations.jsonl or a run directory")->required();
    ev->add_option("--metrics", which, "Any of stats, mtld, judge")
        ->delimiter(',')
        ->check(CLI::IsMember({"stats", "mtld", "judge"}))
        ->required();
    ev->add_option("--experiences", experiences, "experiences.jsonl (required for judge unless --dataset is a run directory)");
    ev->add_option("--config", evalConfig, "Config supplying the judge backend and aspect set");
    ev->add_option("--label", label, "Label for report rows");
    ev->add_option("--out", evalOut, "Directory for report files (default: <dataset dir>/eval)");
    std::string aspectSet;
    ev->add_option("--aspect-set", aspectSet, "generatedPersonas9 or sampledPersonas4 when no --config is given");
    evalFlags.add_to(ev, false);

    // matrix
    auto* mx = app.add_subcommand("matrix", "Run every config in a matrix file sequentially");
    std::string matrixFile;
    BackendFlags mxFlags;
    mx->add_option("--config,--matrix", matrixFile, "Matrix file (JSON)")->required();
    mx->add_option("--out", out, "Output root directory");
    mxFlags.add_to(mx);

    // import-corpus
    auto* imp = app.add_subcommand("import-corpus", "Convert a human dialogue corpus into conversation records");
    std::string corpusName, corpusPath;
    std::vector<std::string> subsets;
    imp->add_option("--corpus", corpusName, "dailydialog, empatheticdialogues or personachat")->required();
    imp->add_option("--path", corpusPath, "Directory holding the corpus files")->required();
    imp->add_option("--subset", subsets, "train, valid, test or all (repeatable)")
        ->check(CLI::IsMember({"train", "valid", "test", "all"}));
    imp->add_option("--out", out, "Output root directory");

    // report
    auto* rep = app.add_subcommand("report", "Combined tables over all runs and imported corpora");
    rep->add_option("--out", out, "Output root directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    const Log log = verbose ? stderr_log() : quiet_log();

    try {
        if (*gen) {
            const auto config = apply_overrides(load_experiment_config(genConfig), genFlags.overrides());
            const RunManifest m = cmd_generate(config, out, log);
            print_manifest(m);
            return m.status == "completed" ? 0 : 1;
        }
        if (*ev) {
            EvalRequest req;
            req.dataset = dataset;
            for (const auto& w : which) {
                req.stats |= w == "stats";
                req.mtld |= w == "mtld";
                req.judge |= w == "judge";
            }
            if (!experiences.empty()) req.experiences = experiences;
            if (!evalOut.empty()) req.outDir = evalOut;
            req.label = label;
            if (req.judge) {
                if (!evalConfig.empty()) {
                    req.judgeConfig = apply_overrides(load_experiment_config(evalConfig), evalFlags.overrides());
                } else {
                    // No config: a generated-persona config with the flag backend.
                    ExperimentConfig c;
                    c.abbreviation = "eval";
                    if (!aspectSet.empty() && aspect_set_kind_from_string(aspectSet) == AspectSetKind::SampledPersonas4)
                        c.personaSource = PersonaSource::Sampled;
                    const auto o = evalFlags.overrides();
                    if (!o.backend) fail(ErrorKind::Usage, "judge evaluation needs --config or --backend");
                    c.backend.kind = *o.backend;
                    c.backend.mockScriptPath = o.mockScript.value_or("");
                    c.backend.endpointUrl = o.endpointUrl.value_or("");
                    if (o.modelName) c.backend.modelName = *o.modelName;
                    req.judgeConfig = c;
                }
            }
            const EvalResult r = cmd_eval(req, log);
            std::cout << r.label << ": " << r.conversations << " conversations\n";
            if (r.stats) std::cout << render_stats_report({{r.label, *r.stats}}, ReportFormat::TableText);
            if (r.mtld) {
                std::cout << render_mtld_report({{r.label, r.mtld->mean, r.mtld->std}}, ReportFormat::TableText);
                if (!r.mtld->degenerate.empty())
                    std::cout << r.mtld->degenerate.size() << " conversation(s) flagged DegenerateText and excluded\n";
            }
            if (r.judgeAggregate) std::cout << render_judge_report({{r.label, *r.judgeAggregate}}, ReportFormat::TableText);
            return 0;
        }
        if (*mx) {
            const MatrixResult r = cmd_experiment_matrix(matrixFile, out, mxFlags.overrides(), log);
            bool ok = true;
            for (const auto& row : r.rows) {
                if (row.manifest) print_manifest(*row.manifest);
                else std::cout << row.abbreviation << ": failed: " << row.error.value_or("") << "\n";
                ok = ok && !row.error;
            }
            for (const auto& f : r.reportFiles) std::cout << "wrote " << f.string() << "\n";
            return ok ? 0 : 1;
        }
        if (*imp) {
            if (subsets.empty()) subsets = {"all"};
            const Corpus corpus = corpus_from_string(corpusName);
            DatasetHandle h = import_baseline(corpus, corpusPath, subsets, out);
            std::cout << "wrote " << h.read().size() << " conversations to " << h.path().string() << "\n";
            return 0;
        }
        if (*rep) {
            const auto files = build_combined_report(out, report_sources(out, all_run_ids(out)), log);
            for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
