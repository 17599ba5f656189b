#pragma once

// End-to-end operations behind the command-line tool: generate a run from an
// experiment config, evaluate datasets, run an experiment matrix and render
// combined reports.

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <thread>
#include <vector>

#include "dialoguegen/config.hpp"
#include "dialoguegen/datastore.hpp"
#include "dialoguegen/experience.hpp"
#include "dialoguegen/gateway.hpp"
#include "dialoguegen/groupchat.hpp"
#include "dialoguegen/judge.hpp"
#include "dialoguegen/metrics.hpp"
#include "dialoguegen/seed_shot.hpp"

namespace dialoguegen {

/// Runs fn(0..count-1) on up to `workers` threads. The first exception is
/// rethrown after all workers finish.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex errorMutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(errorMutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
    }
    if (error) std::rethrow_exception(error);
}

/// Wall-clock ISO-8601 UTC for live runs. Mock runs use a frozen clock so that
/// replayed runs are byte-identical.
inline std::function<std::string()> make_clock(BackendKind kind) {
    if (kind == BackendKind::Mock) return [] { return std::string("1970-01-01T00:00:00Z"); };
    return [] {
        const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&t, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return std::string(buf);
    };
}

inline std::string run_id(const ExperimentConfig& c) { return c.abbreviation + "-seed" + std::to_string(c.seed); }

inline std::string conversation_id(const std::string& runId, std::size_t batch, std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, ":b%04zu:c%zu", batch, k);
    return runId + buf;
}

struct RunPaths {
    fs::path dir, experiences, conversations, judge, manifest, hub;
};

inline RunPaths run_paths(const fs::path& outRoot, const std::string& runId) {
    RunPaths p;
    p.dir = outRoot / "runs" / runId;
    p.experiences = p.dir / "experiences.jsonl";
    p.conversations = p.dir / "conversations.jsonl";
    p.judge = p.dir / "judge.jsonl";
    p.manifest = p.dir / "manifest.json";
    p.hub = outRoot / "hub" / (runId + ".jsonl");
    return p;
}

using Log = std::function<void(const std::string&)>;

inline Log quiet_log() {
    return [](const std::string&) {};
}

inline Log stderr_log() {
    return [](const std::string& m) { std::cerr << m << "\n"; };
}

inline Experience load_seed_shot(const ExperimentConfig& config) {
    Experience shot;
    if (config.seedShotPath) {
        std::ifstream in(*config.seedShotPath);
        if (!in) fail(ErrorKind::Config, "cannot open seed shot " + *config.seedShotPath);
        try {
            shot = experience_from_json(nlohmann::json::parse(in));
        } catch (const std::exception& e) {
            fail(ErrorKind::Config, "invalid seed shot " + *config.seedShotPath + ": " + e.what());
        }
    } else {
        shot = default_seed_shot();
    }
    shot.id = "seed";
    const auto v = experience_violations(shot, config.personaSource == PersonaSource::Generated
                                                   ? PersonaSource::Generated
                                                   : PersonaSource::Sampled);
    require(v.empty(), ErrorKind::Config, "seed shot is invalid: " + (v.empty() ? "" : v.front()));
    return shot;
}

/// Generates conversations batch by batch until nConv is reached, the persona
/// pairings run out, or the batch limit is hit. Records are appended after
/// every batch so an interrupted run can be resumed; existing ids are skipped.
inline RunManifest cmd_generate(const ExperimentConfig& config, const fs::path& outRoot, const Log& log = quiet_log()) {
    validate(config);
    const PromptSet prompts = config.prompts();
    const BackendSpec backend = make_backend(config.backend);
    const auto clock = make_clock(backend.kind);
    const std::string id = run_id(config);
    const RunPaths paths = run_paths(outRoot, id);
    fs::create_directories(paths.dir);

    RunManifest manifest;
    if (auto existing = read_manifest(paths.manifest)) manifest = *existing;
    manifest.runId = id;
    manifest.configAbbrev = config.abbreviation;
    if (manifest.startedAt.empty()) manifest.startedAt = clock();
    manifest.finishedAt.reset();
    manifest.seed = config.seed;
    manifest.backend = backend.describe();
    manifest.status = "running";
    manifest.error.reset();

    std::optional<PersonaHub> personaHub;
    std::vector<std::vector<std::string>> pairings;
    if (config.personaSource == PersonaSource::Sampled)
        personaHub = load_persona_hub(*config.personaHubPath, PersonaHubSource::BillionPersonas);
    if (config.personaSource == PersonaSource::Reused) pairings = load_persona_groups(*config.personaHubPath);

    FewShotHub hub = FewShotHub::open(paths.hub, load_seed_shot(config), config.seed);
    DatasetHandle experiences(paths.experiences, RecordKind::Experiences);
    DatasetHandle conversations(paths.conversations, RecordKind::Conversations);
    const auto storedExperiences = read_experiences(paths.experiences);
    manifest.generated = read_conversations(paths.conversations).size();
    write_manifest(paths.manifest, manifest);

    ChatOptions chat;
    chat.policy = selection_policy(config.speakerSelection, prompts);
    chat.prompts = prompts;
    chat.clock = clock;
    chat.meta.model = backend.modelName;
    chat.meta.configAbbrev = config.abbreviation;
    chat.meta.personaSource = std::string(to_string(config.personaSource));
    chat.meta.seed = config.seed;

    const auto batchSize = static_cast<std::size_t>(config.batchSize);
    try {
        for (std::size_t b = 0; b < static_cast<std::size_t>(config.batch_limit()); ++b) {
            if (manifest.generated >= static_cast<std::size_t>(config.nConv)) break;
            BatchContext ctx;
            ctx.runId = id;
            ctx.batchIndex = b;
            if (config.personaSource == PersonaSource::Reused) {
                const std::size_t begin = b * batchSize;
                if (begin >= pairings.size()) {
                    log(id + ": persona pairings exhausted after " + std::to_string(b) + " batches");
                    break;
                }
                const std::size_t end = std::min(pairings.size(), begin + batchSize);
                ctx.fixedGroups.emplace(pairings.begin() + static_cast<std::ptrdiff_t>(begin),
                                        pairings.begin() + static_cast<std::ptrdiff_t>(end));
            }

            // Resume: a batch whose experiences are already stored is not regenerated.
            const std::string prefix = experience_id(id, b, 0).substr(0, experience_id(id, b, 0).size() - 1);
            std::vector<Experience> batchExperiences;
            for (const auto& e : storedExperiences)
                if (e.id && e.id->rfind(prefix, 0) == 0) batchExperiences.push_back(e);
            if (batchExperiences.empty()) {
                ExperienceBatch batch = generate_experience_batch(config, hub, personaHub ? &*personaHub : nullptr,
                                                                  backend, ctx, prompts);
                manifest.requested += batch.requested;
                manifest.parsedFailures += batch.violations.size();
                for (const auto& v : batch.violations)
                    log(id + ": batch " + std::to_string(b) + " element " + std::to_string(v.index) +
                        " dropped: " + v.reason);
                for (const auto& e : batch.experiences) experiences.append(to_json(e));
                batchExperiences = std::move(batch.experiences);
            }
            manifest.batches = std::max(manifest.batches, b + 1);

            std::vector<std::optional<Conversation>> results(batchExperiences.size());
            parallel_for(batchExperiences.size(), batchSize, [&](std::size_t k) {
                const Experience& e = batchExperiences[k];
                const std::string suffix = e.id->substr(e.id->rfind(":e") + 2);
                const std::string cid = conversation_id(id, b, std::stoul(suffix));
                if (conversations.contains(cid)) return;
                results[k] = run_group_chat(e, config, backend, cid, chat);
            });
            for (const auto& c : results)
                if (c && conversations.append(to_json(*c))) ++manifest.generated;
            log(id + ": batch " + std::to_string(b) + " -> " + std::to_string(manifest.generated) + "/" +
                std::to_string(config.nConv) + " conversations");
            write_manifest(paths.manifest, manifest);
        }
        manifest.status = "completed";
    } catch (const Error& e) {
        manifest.status = "aborted";
        manifest.error = e.what();
        log(id + ": aborted: " + e.what());
    }
    manifest.finishedAt = clock();
    write_manifest(paths.manifest, manifest);
    return manifest;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalRequest {
    fs::path dataset;            // conversations.jsonl or a run directory
    bool stats = false;
    bool mtld = false;
    bool judge = false;
    std::optional<fs::path> experiences;
    std::optional<ExperimentConfig> judgeConfig;  // backend and judge parameters
    std::optional<fs::path> outDir;
    std::string label;
    std::size_t workers = 8;
};

struct EvalResult {
    std::string label;
    std::size_t conversations = 0;
    std::optional<DatasetStats> stats;
    std::optional<MtldSummary> mtld;
    std::vector<JudgeReport> judgeReports;
    std::optional<JudgeAggregate> judgeAggregate;
};

inline fs::path conversations_file(const fs::path& dataset) {
    return fs::is_directory(dataset) ? dataset / "conversations.jsonl" : dataset;
}

/// Computes the requested evaluations and writes report files into outDir
/// (default: `{dataset dir}/eval`).
inline EvalResult cmd_eval(const EvalRequest& req, const Log& log = quiet_log()) {
    require(req.stats || req.mtld || req.judge, ErrorKind::Usage, "select at least one of stats, mtld, judge");
    if (req.judge) {
        require(req.experiences.has_value() || fs::is_directory(req.dataset), ErrorKind::Usage,
                "judge evaluation needs an experiences file");
        require(req.judgeConfig.has_value(), ErrorKind::Usage, "judge evaluation needs a backend");
    }
    const fs::path convPath = conversations_file(req.dataset);
    require(fs::exists(convPath), ErrorKind::Usage, "dataset " + convPath.string() + " does not exist");
    const auto all = read_conversations(convPath);
    if (all.empty()) fail(ErrorKind::EmptyDataset, "dataset " + convPath.string() + " is empty");

    EvalResult result;
    result.label = req.label.empty() ? convPath.parent_path().filename().string() : req.label;
    result.conversations = all.size();
    const fs::path outDir = req.outDir ? *req.outDir : convPath.parent_path() / "eval";
    fs::create_directories(outDir);

    std::vector<Conversation> nonEmpty;
    for (const auto& c : all)
        if (!c.turns.empty()) nonEmpty.push_back(c);

    if (req.stats) {
        if (nonEmpty.empty()) fail(ErrorKind::EmptyDataset, "no conversation has a turn");
        result.stats = dataset_stats(nonEmpty);
        for (auto fmt : {ReportFormat::Csv, ReportFormat::TableText})
            export_report(std::vector<StatsRow>{{result.label, *result.stats}}, fmt,
                          outDir / (fmt == ReportFormat::Csv ? "stats.csv" : "stats.txt"));
    }
    if (req.mtld) {
        result.mtld = mtld_summary(all);
        std::string perConv = "conversationId,mtld\n";
        for (const auto& [id, v] : result.mtld->perConversation) perConv += detail::csv_field(id) + "," + detail::fixed2(v) + "\n";
        for (const auto& id : result.mtld->degenerate) perConv += detail::csv_field(id) + ",DegenerateText\n";
        jsonl::write_file_atomic(outDir / "mtld.csv", perConv);
        for (auto fmt : {ReportFormat::Csv, ReportFormat::TableText})
            export_report(std::vector<MtldRow>{{result.label, result.mtld->mean, result.mtld->std}}, fmt,
                          outDir / (fmt == ReportFormat::Csv ? "mtld_summary.csv" : "mtld_summary.txt"));
        if (!result.mtld->degenerate.empty())
            log(result.label + ": " + std::to_string(result.mtld->degenerate.size()) +
                " conversation(s) excluded from MTLD (DegenerateText)");
    }
    if (req.judge) {
        const fs::path expPath = req.experiences ? *req.experiences : convPath.parent_path() / "experiences.jsonl";
        std::map<std::string, Experience> byId;
        for (auto& e : read_experiences(expPath))
            if (e.id) byId.emplace(*e.id, std::move(e));
        const ExperimentConfig& jc = *req.judgeConfig;
        const BackendSpec backend = make_backend(jc.backend);
        const JudgeOptions options = judge_options(jc, jc.prompts());
        const AspectSet aspects = make_aspect_set(jc.judgeAspects());

        std::vector<JudgeReport> reports(nonEmpty.size());
        parallel_for(nonEmpty.size(), req.workers, [&](std::size_t i) {
            const Conversation& c = nonEmpty[i];
            auto it = byId.find(c.experienceId);
            if (it == byId.end()) {
                JudgeReport r;
                r.conversationId = c.id;
                r.aspectSet = aspects.kind;
                for (const auto& a : aspects.aspects) r.missing.push_back({a.id, "experience " + c.experienceId + " not found"});
                reports[i] = std::move(r);
                return;
            }
            reports[i] = judge_conversation(it->second, c, aspects, backend, options);
        });
        const fs::path judgeFile = fs::is_directory(req.dataset) ? req.dataset / "judge.jsonl" : outDir / "judge.jsonl";
        fs::remove(judgeFile);
        DatasetHandle handle(judgeFile, RecordKind::JudgeReports);
        for (const auto& r : reports) handle.append(to_json(r));
        result.judgeReports = std::move(reports);
        result.judgeAggregate = aggregate_judge(result.judgeReports);
        for (auto fmt : {ReportFormat::Csv, ReportFormat::TableText})
            export_report(std::vector<JudgeRow>{{result.label, *result.judgeAggregate}}, fmt,
                          outDir / (fmt == ReportFormat::Csv ? "judge_aggregate.csv" : "judge_aggregate.txt"));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Combined reports and the experiment matrix
// ---------------------------------------------------------------------------

struct ReportSource {
    std::string label;
    fs::path conversations;
    std::optional<fs::path> judge;
};

/// Human corpora under corpora/ first (sorted), then the given run ids in order.
inline std::vector<ReportSource> report_sources(const fs::path& outRoot, const std::vector<std::string>& runIds) {
    std::vector<ReportSource> sources;
    const fs::path corpora = outRoot / "corpora";
    if (fs::exists(corpora)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::recursive_directory_iterator(corpora))
            if (entry.path().filename() == "conversations.jsonl") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            const auto subset = f.parent_path().filename().string();
            const auto corpus = f.parent_path().parent_path().filename().string();
            sources.push_back({std::string(display_name(corpus_from_string(corpus))) + " (" + subset + ")", f, {}});
        }
    }
    for (const auto& id : runIds) {
        const RunPaths p = run_paths(outRoot, id);
        if (!fs::exists(p.conversations)) continue;
        auto manifest = read_manifest(p.manifest);
        ReportSource s{manifest ? manifest->configAbbrev : id, p.conversations, {}};
        if (fs::exists(p.judge)) s.judge = p.judge;
        sources.push_back(std::move(s));
    }
    return sources;
}

inline std::vector<std::string> all_run_ids(const fs::path& outRoot) {
    std::vector<std::string> ids;
    if (!fs::exists(outRoot / "runs")) return ids;
    for (const auto& entry : fs::directory_iterator(outRoot / "runs"))
        if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

/// Writes report/{stats,mtld,judge_generated,judge_sampled}.{csv,txt} and
/// returns the files written.
inline std::vector<fs::path> build_combined_report(const fs::path& outRoot, const std::vector<ReportSource>& sources,
                                                   const Log& log = quiet_log()) {
    if (sources.empty()) fail(ErrorKind::EmptyInput, "nothing to report under " + outRoot.string());
    std::vector<StatsRow> stats;
    std::vector<MtldRow> mtlds;
    std::vector<JudgeRow> judgeGenerated, judgeSampled;
    for (const auto& s : sources) {
        std::vector<Conversation> convs;
        for (auto& c : read_conversations(s.conversations))
            if (!c.turns.empty()) convs.push_back(std::move(c));
        if (convs.empty()) {
            log(s.label + ": no conversations, skipped");
            continue;
        }
        stats.push_back({s.label, dataset_stats(convs)});
        const auto m = mtld_summary(convs);
        if (m.scored) mtlds.push_back({s.label, m.mean, m.std});
        if (s.judge) {
            const auto reports = read_judge_reports(*s.judge);
            if (!reports.empty()) {
                const auto agg = aggregate_judge(reports);
                (agg.aspectSet == AspectSetKind::GeneratedPersonas9 ? judgeGenerated : judgeSampled)
                    .push_back({s.label, agg});
            }
        }
    }
    const fs::path dir = outRoot / "report";
    std::vector<fs::path> written;
    for (auto fmt : {ReportFormat::Csv, ReportFormat::TableText}) {
        const std::string ext = fmt == ReportFormat::Csv ? ".csv" : ".txt";
        if (!stats.empty()) written.push_back(export_report(stats, fmt, dir / ("stats" + ext)));
        if (!mtlds.empty()) written.push_back(export_report(mtlds, fmt, dir / ("mtld" + ext)));
        if (!judgeGenerated.empty()) written.push_back(export_report(judgeGenerated, fmt, dir / ("judge_generated" + ext)));
        if (!judgeSampled.empty()) written.push_back(export_report(judgeSampled, fmt, dir / ("judge_sampled" + ext)));
    }
    return written;
}

/// Flag overrides applied on top of config files.
struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<BackendKind> backend;
    std::optional<std::string> mockScript;
    std::optional<std::string> endpointUrl;
    std::optional<std::string> modelName;
};

inline ExperimentConfig apply_overrides(ExperimentConfig c, const ConfigOverrides& o) {
    if (o.seed) c.seed = *o.seed;
    if (o.backend) c.backend.kind = *o.backend;
    if (o.mockScript) c.backend.mockScriptPath = *o.mockScript;
    if (o.endpointUrl) c.backend.endpointUrl = *o.endpointUrl;
    if (o.modelName) c.backend.modelName = *o.modelName;
    validate(c);
    return c;
}

struct MatrixRow {
    std::string abbreviation;
    std::optional<RunManifest> manifest;
    std::optional<std::string> error;
};

struct MatrixResult {
    std::vector<MatrixRow> rows;
    std::vector<fs::path> reportFiles;
};

/// Runs every config in the matrix file sequentially; a failing row is
/// recorded and the matrix continues. Matrix file:
///   {"judge": bool, "configs": [<config object> | "path/to/config.json" | {"path": ...}]}
inline MatrixResult cmd_experiment_matrix(const fs::path& matrixFile, const fs::path& outRoot,
                                          const ConfigOverrides& overrides = {}, const Log& log = quiet_log()) {
    std::ifstream in(matrixFile);
    if (!in) fail(ErrorKind::Usage, "cannot open matrix file " + matrixFile.string());
    nlohmann::json matrix;
    try {
        matrix = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Usage, matrixFile.string() + ": " + e.what());
    }
    const nlohmann::json entries = matrix.is_array() ? matrix : matrix.value("configs", nlohmann::json::array());
    const bool judge = matrix.is_object() && matrix.value("judge", false);
    if (!entries.is_array() || entries.empty()) fail(ErrorKind::Usage, "matrix file lists no configs");

    const fs::path base = matrixFile.parent_path();
    MatrixResult result;
    std::vector<std::string> runIds;
    ordered_json summary = ordered_json::array();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& entry = entries[i];
        MatrixRow row;
        row.abbreviation = "row" + std::to_string(i);
        try {
            ExperimentConfig config;
            if (entry.is_string()) config = load_experiment_config(base / entry.get<std::string>());
            else if (entry.is_object() && entry.contains("path")) config = load_experiment_config(base / entry["path"].get<std::string>());
            else config = parse_experiment_config(entry, base);
            config = apply_overrides(std::move(config), overrides);
            row.abbreviation = config.abbreviation;
            log("matrix: running " + config.abbreviation);
            row.manifest = cmd_generate(config, outRoot, log);
            runIds.push_back(row.manifest->runId);
            if (row.manifest->status != "completed") row.error = row.manifest->error.value_or("aborted");
            if (judge && row.manifest->generated > 0) {
                EvalRequest req;
                req.dataset = run_paths(outRoot, row.manifest->runId).dir;
                req.judge = true;
                req.judgeConfig = config;
                req.label = config.abbreviation;
                req.workers = static_cast<std::size_t>(config.batchSize);
                cmd_eval(req, log);
            }
        } catch (const Error& e) {
            row.error = e.what();
            log("matrix: " + row.abbreviation + " failed: " + e.what());
        }
        ordered_json s{{"abbreviation", row.abbreviation},
                       {"status", row.error ? "failed" : "completed"},
                       {"runId", row.manifest ? ordered_json(row.manifest->runId) : ordered_json(nullptr)},
                       {"generated", row.manifest ? row.manifest->generated : 0}};
        if (row.error) s["error"] = *row.error;
        summary.push_back(std::move(s));
        result.rows.push_back(std::move(row));
    }
    jsonl::write_file_atomic(outRoot / "matrix_summary.json", summary.dump(2) + "\n");
    const auto sources = report_sources(outRoot, runIds);
    if (!sources.empty()) result.reportFiles = build_combined_report(outRoot, sources, log);
    return result;
}

} // namespace dialoguegen
