#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>

#include "dialoguegen/error.hpp"
#include "dialoguegen/gateway.hpp"
#include "dialoguegen/prompts.hpp"

namespace dialoguegen {

enum class PersonaSource { Generated, Sampled, Reused };

inline std::string_view to_string(PersonaSource s) {
    switch (s) {
    case PersonaSource::Generated: return "generated";
    case PersonaSource::Sampled: return "sampled";
    case PersonaSource::Reused: return "reused";
    }
    return "generated";
}

inline PersonaSource persona_source_from_string(const std::string& s) {
    if (s == "generated") return PersonaSource::Generated;
    if (s == "sampled") return PersonaSource::Sampled;
    if (s == "reused") return PersonaSource::Reused;
    fail(ErrorKind::Config, "unknown personaSource '" + s + "'");
}

enum class AspectSetKind { GeneratedPersonas9, SampledPersonas4 };

inline std::string_view to_string(AspectSetKind k) {
    return k == AspectSetKind::GeneratedPersonas9 ? "generatedPersonas9" : "sampledPersonas4";
}

inline AspectSetKind aspect_set_for(PersonaSource s) {
    return s == PersonaSource::Generated ? AspectSetKind::GeneratedPersonas9 : AspectSetKind::SampledPersonas4;
}

enum class SelectionKind { RoundRobin, ModelDriven };

/// Backend as declared in a config file; turned into a BackendSpec at run time.
struct BackendConfig {
    BackendKind kind = BackendKind::Mock;
    std::string endpointUrl;
    std::string modelName = "gpt-4o";
    std::string credentialRef = "CONVOGEN_API_KEY";
    std::string mockScriptPath;
    int maxRetries = 3;
    int backoffMs = 500;
    int timeoutSeconds = 120;
};

inline BackendSpec make_backend(const BackendConfig& cfg) {
    BackendSpec spec;
    spec.kind = cfg.kind;
    spec.endpointUrl = cfg.endpointUrl;
    spec.modelName = cfg.modelName;
    spec.credentialRef = cfg.credentialRef;
    spec.retry.maxRetries = cfg.maxRetries;
    spec.retry.backoffBase = std::chrono::milliseconds(cfg.backoffMs);
    spec.timeout = std::chrono::seconds(cfg.timeoutSeconds);
    if (cfg.kind == BackendKind::Mock) {
        require(!cfg.mockScriptPath.empty(), ErrorKind::Config, "mock backend needs a mock script path");
        spec.script = load_mock_script(cfg.mockScriptPath);
    }
    validate(spec);
    return spec;
}

/// One experiment row: persona source, shot policy, agent verbosity and run size.
struct ExperimentConfig {
    std::string abbreviation;
    PersonaSource personaSource = PersonaSource::Generated;
    std::optional<std::string> personaHubPath;
    bool iterativeSampling = false;
    bool chatty = true;
    int nConv = 500;
    int batchSize = 8;
    int maxTurns = 7;
    BackendConfig backend;
    std::uint64_t seed = 0;

    // Model parameters. No sampling values are fixed upstream; these are defaults.
    double temperature = 1.0;
    int generationMaxTokens = 4096;
    int agentMaxTokens = 128;
    int judgeExplainMaxTokens = 512;
    int judgeScoreMaxTokens = 5;
    int judgeTopAlternatives = 20;
    std::optional<std::string> judgeModelName;

    int shotsPerPrompt = 1;
    SelectionKind speakerSelection = SelectionKind::ModelDriven;
    int groupSizeMin = 2;
    int groupSizeMax = 5;
    std::optional<int> maxBatches;
    std::optional<std::string> seedShotPath;
    std::optional<std::string> promptsDir;

    AspectSetKind judgeAspects() const { return aspect_set_for(personaSource); }

    int batch_limit() const {
        if (maxBatches) return *maxBatches;
        const int needed = (nConv + batchSize - 1) / batchSize;
        return 2 * needed + 2;
    }

    PromptSet prompts() const { return promptsDir ? load_prompt_set(*promptsDir) : PromptSet{}; }
};

inline void validate(const ExperimentConfig& c) {
    require(!c.abbreviation.empty(), ErrorKind::Config, "abbreviation is required");
    require(c.nConv > 0, ErrorKind::Config, "nConv must be positive");
    require(c.batchSize > 0, ErrorKind::Config, "batchSize must be positive");
    require(c.maxTurns > 0, ErrorKind::Config, "maxTurns must be positive");
    require(c.shotsPerPrompt > 0, ErrorKind::Config, "shotsPerPrompt must be positive");
    require(c.groupSizeMin >= 2 && c.groupSizeMax <= 5 && c.groupSizeMin <= c.groupSizeMax, ErrorKind::Config,
            "group size range must lie within [2,5]");
    if (c.personaSource != PersonaSource::Generated)
        require(c.personaHubPath.has_value() && !c.personaHubPath->empty(), ErrorKind::Config,
                "personaSource " + std::string(to_string(c.personaSource)) + " requires personaHubPath");
    if (c.backend.kind == BackendKind::Remote)
        require(!c.backend.endpointUrl.empty(), ErrorKind::Config, "remote backend requires endpointUrl");
}

/// Parses a config object. Relative paths are resolved against `baseDir`.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& baseDir = {}) {
    auto resolve = [&](const std::string& p) -> std::string {
        if (p.empty()) return p;
        std::filesystem::path path(p);
        return path.is_absolute() || baseDir.empty() ? path.string() : (baseDir / path).lexically_normal().string();
    };
    try {
        require(j.is_object(), ErrorKind::Config, "config must be a JSON object");
        ExperimentConfig c;
        c.abbreviation = j.at("abbreviation").get<std::string>();
        c.personaSource = persona_source_from_string(j.value("personaSource", "generated"));
        if (j.contains("personaHubPath") && !j["personaHubPath"].is_null())
            c.personaHubPath = resolve(j["personaHubPath"].get<std::string>());
        c.iterativeSampling = j.value("iterativeSampling", false);
        c.chatty = j.value("chatty", true);
        c.nConv = j.value("nConv", 500);
        c.batchSize = j.value("batchSize", 8);
        c.maxTurns = j.value("maxTurns", c.chatty ? 7 : 10);
        c.seed = j.value("seed", std::uint64_t{0});
        c.temperature = j.value("temperature", c.temperature);
        c.generationMaxTokens = j.value("generationMaxTokens", c.generationMaxTokens);
        c.agentMaxTokens = j.value("agentMaxTokens", c.agentMaxTokens);
        c.judgeExplainMaxTokens = j.value("judgeExplainMaxTokens", c.judgeExplainMaxTokens);
        c.judgeScoreMaxTokens = j.value("judgeScoreMaxTokens", c.judgeScoreMaxTokens);
        c.judgeTopAlternatives = j.value("judgeTopAlternatives", c.judgeTopAlternatives);
        if (j.contains("judgeModel") && !j["judgeModel"].is_null())
            c.judgeModelName = j["judgeModel"].get<std::string>();
        c.shotsPerPrompt = j.value("shotsPerPrompt", 1);
        const std::string sel = j.value("speakerSelection", "modelDriven");
        if (sel == "roundRobin") c.speakerSelection = SelectionKind::RoundRobin;
        else if (sel == "modelDriven") c.speakerSelection = SelectionKind::ModelDriven;
        else fail(ErrorKind::Config, "unknown speakerSelection '" + sel + "'");
        c.groupSizeMin = j.value("groupSizeMin", 2);
        c.groupSizeMax = j.value("groupSizeMax", 5);
        if (j.contains("maxBatches") && !j["maxBatches"].is_null()) c.maxBatches = j["maxBatches"].get<int>();
        if (j.contains("seedShotPath") && !j["seedShotPath"].is_null())
            c.seedShotPath = resolve(j["seedShotPath"].get<std::string>());
        if (j.contains("promptsDir") && !j["promptsDir"].is_null())
            c.promptsDir = resolve(j["promptsDir"].get<std::string>());

        if (j.contains("backend")) {
            const auto& b = j.at("backend");
            const std::string kind = b.value("kind", "mock");
            if (kind == "mock") c.backend.kind = BackendKind::Mock;
            else if (kind == "remote") c.backend.kind = BackendKind::Remote;
            else fail(ErrorKind::Config, "unknown backend kind '" + kind + "'");
            c.backend.endpointUrl = b.value("endpointUrl", "");
            c.backend.modelName = b.value("modelName", c.backend.kind == BackendKind::Mock ? "mock" : "gpt-4o");
            c.backend.credentialRef = b.value("credentialRef", "CONVOGEN_API_KEY");
            c.backend.mockScriptPath = resolve(b.value("mockScript", ""));
            c.backend.maxRetries = b.value("maxRetries", 3);
            c.backend.backoffMs = b.value("backoffMs", 500);
            c.backend.timeoutSeconds = b.value("timeoutSeconds", 120);
        }
        validate(c);
        return c;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("invalid config: ") + e.what());
    }
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Config, "cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Config, path.string() + ": " + e.what());
    }
    return parse_experiment_config(j, path.parent_path());
}

} // namespace dialoguegen
