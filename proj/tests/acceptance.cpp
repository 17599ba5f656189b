// Acceptance checks, one PASS/FAIL/SKIP line per criterion.
//
//   acceptance --core     criteria 1, 4, 5, 6, 7 (mock only, always runnable)
//   acceptance --corpus   criteria 2, 3 (needs DIALOGUEGEN_CORPORA)
//   acceptance --live     criterion 8 (needs CONVOGEN_API_KEY and DIALOGUEGEN_LIVE_ENDPOINT)
//
// Exit status: 0 all ran criteria passed, 1 something failed, 77 everything skipped.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "dialoguegen/dialoguegen.hpp"
#include "dialoguegen/pipeline.hpp"
#include "oracle.hpp"

using namespace dialoguegen;

namespace {

const fs::path kConfigs = DG_CONFIGS;

enum class Outcome { Pass, Fail, Skip };

struct Verdict {
    Outcome outcome = Outcome::Pass;
    std::string detail;
};

Verdict pass(std::string d) { return {Outcome::Pass, std::move(d)}; }
Verdict failed(std::string d) { return {Outcome::Fail, std::move(d)}; }
Verdict skip(std::string d) { return {Outcome::Skip, std::move(d)}; }

struct Tally {
    int pass = 0, fail = 0, skip = 0;
};

void run(Tally& tally, int number, const std::string& title, double budgetSeconds, const std::function<Verdict()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
        v = body();
    } catch (const std::exception& e) {
        v = failed(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (v.outcome == Outcome::Pass && budgetSeconds > 0 && secs > budgetSeconds) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "; took %.1f s, budget %.0f s", secs, budgetSeconds);
        v = failed(v.detail + buf);
    }
    const char* tag = v.outcome == Outcome::Pass ? "PASS" : v.outcome == Outcome::Fail ? "FAIL" : "SKIP";
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.2f s", secs);
    std::cout << tag << "  [" << number << "] " << title << " (" << timing << ")";
    if (!v.detail.empty()) std::cout << ": " << v.detail;
    std::cout << std::endl;
    (v.outcome == Outcome::Pass ? tally.pass : v.outcome == Outcome::Fail ? tally.fail : tally.skip)++;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

bool within(double value, double target, double rel) { return std::fabs(value - target) <= rel * target; }

// ---------------------------------------------------------------- 1

Verdict mtld_oracle() {
    std::mt19937_64 rng(20240611);
    const std::vector<std::string> alphabet = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
    double worst = 0.0;
    int degenerate = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t len = std::uniform_int_distribution<std::size_t>(1, 200)(rng);
        const std::size_t k = std::uniform_int_distribution<std::size_t>(1, alphabet.size())(rng);
        std::uniform_int_distribution<std::size_t> pick(0, k - 1);
        TokenSequence seq;
        for (std::size_t j = 0; j < len; ++j) seq.push_back(alphabet[pick(rng)]);
        const auto expected = oracle::mtld_mean(seq);
        try {
            const double got = mtld(seq).mean;
            if (!expected) return failed("sequence " + std::to_string(i) + ": oracle found no factor, library gave a value");
            worst = std::max(worst, std::fabs(got - *expected));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::DegenerateText || expected)
                return failed("sequence " + std::to_string(i) + ": " + e.what());
            ++degenerate;
        }
    }
    if (worst > 1e-9) return failed(fmt("max deviation %.3g", worst));

    TokenSequence ab;
    for (int i = 0; i < 5; ++i) {
        ab.push_back("a");
        ab.push_back("b");
    }
    const double abValue = mtld(ab).mean;
    const double aaaa = mtld(TokenSequence{"a", "a", "a", "a"}).mean;
    if (std::fabs(abValue - 10.0 / 3.0) > 1e-9) return failed(fmt("[a,b]x5 gave %.10f", abValue));
    if (std::fabs(aaaa - 2.0) > 1e-9) return failed(fmt("[a,a,a,a] gave %.10f", aaaa));
    return pass(fmt("1000 sequences, max deviation %.2g; [a,b]x5 = %.4f, [a,a,a,a] = %.1f", worst, abValue, aaaa) +
                (degenerate ? ", " + std::to_string(degenerate) + " degenerate agreed" : ""));
}

// ---------------------------------------------------------------- 2, 3

struct CorpusNumbers {
    DatasetStats dd;
    double ddRatioOfMeans = 0.0;
    double ddMtld = 0.0;
    double pcMtld = 0.0;
    std::size_t ddCount = 0;
    std::size_t pcCount = 0;
};

CorpusNumbers measure_corpora(const fs::path& root) {
    CorpusNumbers n;
    const auto dd = read_baseline(Corpus::DailyDialog, root / "dailydialog", {"all"});
    n.dd = dataset_stats(dd.conversations);
    n.ddRatioOfMeans = n.dd.nW / n.dd.nT;
    n.ddMtld = mtld_summary(dd.conversations).mean;
    n.ddCount = dd.conversations.size();
    const auto pc = read_baseline(Corpus::PersonaChat, root / "personachat", {"test"});
    n.pcMtld = mtld_summary(pc.conversations).mean;
    n.pcCount = pc.conversations.size();
    return n;
}

// ---------------------------------------------------------------- 4

std::map<std::string, std::string> tree_contents(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        out[fs::relative(e.path(), root).generic_string()] = {std::istreambuf_iterator<char>(in), {}};
    }
    return out;
}

fs::path scratch_dir(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("dialoguegen-acceptance-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Verdict deterministic_matrix() {
    const fs::path a = scratch_dir("a");
    const fs::path b = scratch_dir("b");
    const fs::path matrix = kConfigs / "mock" / "matrix.json";
    const auto ra = cmd_experiment_matrix(matrix, a, {}, quiet_log());
    const auto rb = cmd_experiment_matrix(matrix, b, {}, quiet_log());
    for (const auto* r : {&ra, &rb})
        for (const auto& row : r->rows)
            if (row.error) return failed(row.abbreviation + " failed: " + *row.error);
    const auto ta = tree_contents(a);
    const auto tb = tree_contents(b);
    fs::remove_all(a);
    fs::remove_all(b);
    if (ra.rows.size() != 2) return failed("matrix has " + std::to_string(ra.rows.size()) + " rows, expected 2");
    if (ta.size() != tb.size()) return failed("file counts differ");
    for (const auto& [path, bytes] : ta) {
        auto it = tb.find(path);
        if (it == tb.end()) return failed(path + " missing from second run");
        if (it->second != bytes) return failed(path + " differs");
    }
    std::size_t bytes = 0;
    for (const auto& [p, c] : ta) bytes += c.size();
    return pass(std::to_string(ta.size()) + " files, " + std::to_string(bytes) + " bytes identical");
}

// ---------------------------------------------------------------- 5

Verdict iterative_sampling() {
    std::ostringstream detail;
    for (const bool iterative : {true, false}) {
        ExperimentConfig config = load_experiment_config(kConfigs / "mock" / (iterative ? "gpis_s.json" : "gpfs_s.json"));
        config.nConv = 24;
        const BackendSpec backend = make_backend(config.backend);
        const PromptSet prompts = config.prompts();
        const Experience seedShot = load_seed_shot(config);
        const std::string seedText = to_json(seedShot, false).dump();
        FewShotHub hub(config.seed);
        hub.append({seedShot});
        std::vector<std::string> shotIds;
        std::set<std::string> shotTexts;
        for (std::size_t b = 0; b < 3; ++b) {
            const auto batch = generate_experience_batch(config, hub, nullptr, backend, {run_id(config), b, std::nullopt}, prompts);
            if (batch.experiences.size() != 8)
                return failed("batch " + std::to_string(b) + " parsed " + std::to_string(batch.experiences.size()) + " experiences");
            shotIds.push_back(batch.shots.front().id.value_or("?"));
            shotTexts.insert(to_json(batch.shots.front(), false).dump());
            if (!iterative && batch.prompt.find(seedText) == std::string::npos)
                return failed("fixed-shot batch " + std::to_string(b) + " does not embed the seed shot verbatim");
        }
        const std::set<std::string> distinct(shotIds.begin(), shotIds.end());
        if (iterative) {
            if (hub.size() != 25) return failed("iterative hub ended at " + std::to_string(hub.size()) + ", expected 25");
            if (distinct.size() < 2) return failed("iterative batches reused a single shot (seed " + std::to_string(config.seed) + ")");
            detail << "iterative (seed " << config.seed << "): hub 1->25, shots";
            for (const auto& s : shotIds) detail << " " << s;
        } else {
            if (hub.size() != 1) return failed("fixed-shot hub grew to " + std::to_string(hub.size()));
            if (shotTexts.size() != 1 || *shotTexts.begin() != seedText) return failed("fixed-shot batches used different shot text");
            detail << "; fixed: hub stays 1, identical shot in 3 batches";
        }
    }
    return pass(detail.str());
}

// ---------------------------------------------------------------- 6

Verdict judge_weighting() {
    for (int k = 1; k <= 5; ++k) {
        ScoreDistribution d{};
        d[static_cast<std::size_t>(k - 1)] = 1.0;
        if (std::fabs(weighted_score(renormalize(d)) - k) > 1e-9) return failed("point mass at " + std::to_string(k));
    }
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> idx(0, 4);
    for (int i = 0; i < 2000; ++i) {
        ScoreDistribution d{};
        for (auto& x : d) x = u(rng) < 0.3 ? 0.0 : u(rng);
        d[idx(rng)] += 1e-3;
        const auto n = renormalize(d);
        const double s = weighted_score(n);
        if (s < 1.0 - 1e-9 || s > 5.0 + 1e-9) return failed(fmt("score %.6f out of bounds", s));

        // move mass from a lower score to a higher one
        std::size_t lo = idx(rng), hi = idx(rng);
        if (lo == hi) continue;
        if (lo > hi) std::swap(lo, hi);
        if (n[lo] == 0.0) continue;
        const double delta = n[lo] * u(rng);
        auto shifted = n;
        shifted[lo] -= delta;
        shifted[hi] += delta;
        const double s2 = weighted_score(shifted);
        const double expectedGain = delta * static_cast<double>(hi - lo);
        if (s2 < s || std::fabs((s2 - s) - expectedGain) > 1e-9) return failed(fmt("mass shift gave %.9f -> %.9f", s, s2));
    }
    TokenPosition pos;
    pos.token = "5";
    pos.probability = 0.6;
    pos.alternatives = {{"5", 0.6}, {"4", 0.2}, {"The", 0.2}};
    const double example = weighted_score(extract_score_distribution({pos}));
    const double brute = oracle::expected_score({{"5", 0.6}, {"4", 0.2}, {"The", 0.2}});
    if (std::fabs(example - 4.75) > 1e-9 || std::fabs(brute - 4.75) > 1e-9)
        return failed(fmt("renormalisation example gave %.12f (oracle %.12f)", example, brute));
    return pass("point masses exact, 2000 random distributions bounded and monotone, {5:.6,4:.2,other:.2} -> 4.75");
}

// ---------------------------------------------------------------- 7

Persona test_persona(const std::string& name) {
    Persona p;
    p.name = name;
    p.nationality = "Chilean";
    p.qualities = {"curious"};
    p.profession = "ferry pilot";
    p.lifestyle = "Early riser.";
    p.speechStyle = "Plain.";
    p.memory = {"Crossed the strait in a storm.", "Learned to sail at nine."};
    return p;
}

Experience test_experience(const std::vector<std::string>& names) {
    Experience e;
    e.id = "acc";
    for (const auto& n : names) e.personas.push_back(test_persona(n));
    for (std::size_t i = 0; i + 1 < names.size(); ++i) e.relations.push_back({names[i], names[i + 1], "colleagues"});
    e.situation = "The ferry terminal during a delay.";
    e.topic = "The new timetable.";
    e.conversationStarter = "Has anyone seen the new timetable?";
    return e;
}

BackendSpec scripted(const std::string& text) {
    std::istringstream in(text);
    BackendSpec b;
    b.kind = BackendKind::Mock;
    b.modelName = "mock";
    b.script = parse_mock_script(in);
    return b;
}

Verdict group_chat_contracts() {
    const std::vector<std::string> pool = {"Ana", "Bo", "Caz", "Dee", "Eli", "Fay", "Gus", "Hal"};
    const std::string chatter =
        R"({"repeat":true,"replies":["Right.","Could be worse.","The bus is late too.","I brought coffee."]})"
        "\n";
    std::mt19937_64 rng(99);
    ChatOptions rr;
    rr.policy = selection_policy(SelectionKind::RoundRobin);
    int exits = 0;
    for (int i = 0; i < 100; ++i) {
        auto names = pool;
        std::shuffle(names.begin(), names.end(), rng);
        names.resize(std::uniform_int_distribution<std::size_t>(2, 5)(rng));
        ExperimentConfig config;
        config.abbreviation = "ACC";
        config.maxTurns = std::uniform_int_distribution<int>(1, 15)(rng);
        const auto experience = test_experience(names);
        const std::set<std::string> allowed(names.begin(), names.end());

        // every other config plants an exit phrase at a random turn
        const bool planted = i % 2 == 1;
        const int exitAt = std::uniform_int_distribution<int>(0, config.maxTurns - 1)(rng);
        std::string script;
        if (planted) {
            for (int t = 0; t < exitAt; ++t) script += R"({"reply":"Still waiting."})" "\n";
            script += R"({"reply":"Well, I have to go now. Bye!"})" "\n";
            script += chatter;
        } else {
            script = chatter;
        }
        const auto backend = scripted(script);
        const auto conv = run_group_chat(experience, config, backend, "acc-" + std::to_string(i), rr);
        const std::size_t expectedTurns = planted ? static_cast<std::size_t>(exitAt + 1) : static_cast<std::size_t>(config.maxTurns);
        if (conv.turns.size() != expectedTurns)
            return failed("config " + std::to_string(i) + ": " + std::to_string(conv.turns.size()) + " turns, expected " +
                          std::to_string(expectedTurns));
        if (conv.turns.size() > static_cast<std::size_t>(config.maxTurns)) return failed("maxTurns exceeded");
        const auto reason = planted ? TerminationReason::ExitPhrase : TerminationReason::MaxTurns;
        if (conv.terminationReason != reason) return failed("config " + std::to_string(i) + ": wrong termination reason");
        exits += planted;
        for (std::size_t t = 0; t < conv.turns.size(); ++t) {
            if (!allowed.count(conv.turns[t].speaker)) return failed("foreign speaker " + conv.turns[t].speaker);
            if (conv.turns[t].speaker != names[t % names.size()])
                return failed("config " + std::to_string(i) + " turn " + std::to_string(t) + ": " + conv.turns[t].speaker +
                              " spoke, expected " + names[t % names.size()]);
        }
    }
    return pass("100 configs (2-5 personas): round-robin order, " + std::to_string(exits) +
                " exit-phrase stops, maxTurns respected, no foreign speakers");
}

// ---------------------------------------------------------------- 8

Verdict live_smoke(const std::string& endpoint) {
    ExperimentConfig config;
    config.abbreviation = "LIVE";
    config.personaSource = PersonaSource::Generated;
    config.chatty = false;
    config.nConv = 8;
    config.batchSize = 8;
    config.maxTurns = 6;
    config.speakerSelection = SelectionKind::RoundRobin;
    config.backend.kind = BackendKind::Remote;
    config.backend.endpointUrl = endpoint;
    if (const char* model = std::getenv("DIALOGUEGEN_LIVE_MODEL")) config.backend.modelName = model;
    if (const char* judge = std::getenv("DIALOGUEGEN_LIVE_JUDGE_MODEL")) config.judgeModelName = judge;
    validate(config);
    const BackendSpec backend = make_backend(config.backend);
    const PromptSet prompts = config.prompts();
    FewShotHub hub(config.seed);
    hub.append({default_seed_shot()});
    const auto batch = generate_experience_batch(config, hub, nullptr, backend, {"live", 0, std::nullopt}, prompts);
    if (batch.experiences.size() != 8)
        return failed("batch parsed " + std::to_string(batch.experiences.size()) + " of 8 experiences");
    ChatOptions chat;
    chat.policy = selection_policy(config.speakerSelection, prompts);
    chat.prompts = prompts;
    chat.meta.personaSource = "generated";
    const auto conv = run_group_chat(batch.experiences.front(), config, backend, "live-0", chat);
    if (conv.terminationReason == TerminationReason::Error) return failed("chat error: " + conv.error.value_or(""));
    if (conv.turns.size() < 2 || conv.turns.size() > static_cast<std::size_t>(config.maxTurns))
        return failed("conversation has " + std::to_string(conv.turns.size()) + " turns");
    const auto report = judge_conversation(batch.experiences.front(), conv, make_aspect_set(AspectSetKind::GeneratedPersonas9),
                                           backend, judge_options(config, prompts));
    if (report.aspectScores.empty()) return failed("judge scored no aspect");
    for (const auto& s : report.aspectScores)
        if (s.weighted < 1.0 || s.weighted > 5.0) return failed(s.aspectId + fmt(" scored %.4f", s.weighted));
    return pass("8 experiences, " + std::to_string(conv.turns.size()) + " turns, " +
                std::to_string(report.aspectScores.size()) + " aspects in [1,5]" +
                (report.missing.empty() ? "" : ", " + std::to_string(report.missing.size()) + " missing"));
}

int finish(const Tally& t) {
    std::cout << t.pass << " passed, " << t.fail << " failed, " << t.skip << " skipped" << std::endl;
    if (t.fail) return 1;
    if (t.pass == 0 && t.skip > 0) return 77;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    const std::string mode = argc > 1 ? argv[1] : "--core";
    Tally tally;

    if (mode == "--core") {
        run(tally, 1, "MTLD matches the brute-force oracle", 10, mtld_oracle);
        run(tally, 4, "mock matrix output is byte-identical across runs", 30, deterministic_matrix);
        run(tally, 5, "iterative sampling grows the hub, fixed shot does not", 0, iterative_sampling);
        run(tally, 6, "judge weighting properties", 0, judge_weighting);
        run(tally, 7, "group-chat contracts under mock", 10, group_chat_contracts);
        return finish(tally);
    }

    if (mode == "--corpus") {
        const char* root = std::getenv("DIALOGUEGEN_CORPORA");
        if (!root || !*root) {
            const std::string why = "DIALOGUEGEN_CORPORA not set (expects dailydialog/ and personachat/ beneath it)";
            run(tally, 2, "baseline statistics and MTLD reproduce", 0, [&] { return skip(why); });
            run(tally, 3, "mean-of-ratios vs ratio-of-means for nW/T", 0, [&] { return skip(why); });
            return finish(tally);
        }
        std::optional<CorpusNumbers> n;
        run(tally, 2, "baseline statistics and MTLD reproduce", 300, [&] {
            n = measure_corpora(root);
            std::string d = fmt("DailyDialog nW %.2f nT %.2f nW/T %.2f", n->dd.nW, n->dd.nT, n->dd.nWperT) +
                            fmt(", MTLD %.2f; PERSONA-CHAT test MTLD %.2f", n->ddMtld, n->pcMtld) + "; " +
                            std::to_string(n->ddCount) + " and " + std::to_string(n->pcCount) + " conversations";
            const bool ok = within(n->dd.nW, 114.70, 0.02) && within(n->dd.nT, 7.85, 0.02) &&
                            within(n->dd.nWperT, 13.61, 0.02) && within(n->ddMtld, 53.44, 0.10) &&
                            within(n->pcMtld, 49.58, 0.10);
            return ok ? pass(d) : failed(d);
        });
        run(tally, 3, "mean-of-ratios vs ratio-of-means for nW/T", 0, [&] {
            if (!n) return failed("corpora could not be measured");
            const std::string d = fmt("mean of ratios %.2f, ratio of means %.2f", n->dd.nWperT, n->ddRatioOfMeans);
            return within(n->dd.nWperT, 13.61, 0.02) && !within(n->ddRatioOfMeans, 13.61, 0.02) ? pass(d) : failed(d);
        });
        return finish(tally);
    }

    if (mode == "--live") {
        const char* key = std::getenv("CONVOGEN_API_KEY");
        const char* endpoint = std::getenv("DIALOGUEGEN_LIVE_ENDPOINT");
        if (!key || !*key || !endpoint || !*endpoint) {
            run(tally, 8, "live smoke test (structural only)", 0,
                [] { return skip("CONVOGEN_API_KEY and DIALOGUEGEN_LIVE_ENDPOINT not both set"); });
            return finish(tally);
        }
        run(tally, 8, "live smoke test (structural only)", 0, [&] { return live_smoke(endpoint); });
        return finish(tally);
    }

    std::cerr << "usage: acceptance [--core|--corpus|--live]\n";
    return 2;
}
