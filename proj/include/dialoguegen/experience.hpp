#pragma once

// Experiences: persona groups with relations, a situation, a topic and a
// conversation starter. Covers prompt construction for both generation
// methods, validation of model output, and the few-shot hub used for
// iterative sampling.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dialoguegen/config.hpp"
#include "dialoguegen/error.hpp"
#include "dialoguegen/gateway.hpp"
#include "dialoguegen/jsonl.hpp"
#include "dialoguegen/prompts.hpp"
#include "dialoguegen/rng.hpp"

namespace dialoguegen {

struct Memory {
    std::string recent;
    std::string longTerm;

    bool operator==(const Memory&) const = default;
};

struct Persona {
    std::string name;
    std::string nationality;
    std::vector<std::string> qualities;
    std::string profession;
    std::string lifestyle;
    std::string speechStyle;
    Memory memory;
    std::optional<int> age;
    /// Free-text profile carried over from a persona hub (sampled/reused personas).
    std::optional<std::string> description;

    bool operator==(const Persona&) const = default;
};

struct Relation {
    std::string a;
    std::string b;
    std::string kind;

    bool operator==(const Relation&) const = default;
};

struct Experience {
    std::optional<std::string> id;
    std::vector<Persona> personas;
    std::vector<Relation> relations;
    std::string situation;
    std::string topic;
    std::string conversationStarter;

    bool operator==(const Experience&) const = default;
};

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline ordered_json to_json(const Persona& p) {
    ordered_json j;
    j["name"] = p.name;
    j["nationality"] = p.nationality;
    j["qualities"] = p.qualities;
    j["profession"] = p.profession;
    j["lifestyle"] = p.lifestyle;
    j["speechStyle"] = p.speechStyle;
    j["memory"] = ordered_json{{"recent", p.memory.recent}, {"longTerm", p.memory.longTerm}};
    if (p.age) j["age"] = *p.age;
    if (p.description) j["description"] = *p.description;
    return j;
}

inline ordered_json to_json(const Experience& e, bool withId = true) {
    ordered_json j;
    if (withId && e.id) j["id"] = *e.id;
    ordered_json personas = ordered_json::array();
    for (const auto& p : e.personas) personas.push_back(to_json(p));
    j["personas"] = std::move(personas);
    ordered_json relations = ordered_json::array();
    for (const auto& r : e.relations) relations.push_back(ordered_json{{"a", r.a}, {"b", r.b}, {"kind", r.kind}});
    j["relations"] = std::move(relations);
    j["situation"] = e.situation;
    j["topic"] = e.topic;
    j["conversationStarter"] = e.conversationStarter;
    return j;
}

namespace detail {

template <class J>
std::string opt_string(const J& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return {};
    return it->template get<std::string>();
}

} // namespace detail

/// Structural decoding; throws nlohmann::json exceptions on type mismatch.
/// Semantic rules are checked separately by experience_violations().
template <class J>
Persona persona_from_json(const J& j) {
    Persona p;
    p.name = j.at("name").template get<std::string>();
    p.nationality = detail::opt_string(j, "nationality");
    if (auto it = j.find("qualities"); it != j.end() && !it->is_null())
        p.qualities = it->template get<std::vector<std::string>>();
    p.profession = detail::opt_string(j, "profession");
    p.lifestyle = detail::opt_string(j, "lifestyle");
    p.speechStyle = detail::opt_string(j, "speechStyle");
    if (auto it = j.find("memory"); it != j.end() && !it->is_null()) {
        p.memory.recent = detail::opt_string(*it, "recent");
        p.memory.longTerm = detail::opt_string(*it, "longTerm");
    }
    if (auto it = j.find("age"); it != j.end() && !it->is_null()) p.age = it->template get<int>();
    if (auto it = j.find("description"); it != j.end() && !it->is_null())
        p.description = it->template get<std::string>();
    return p;
}

template <class J>
Experience experience_from_json(const J& j) {
    if (!j.is_object()) throw std::invalid_argument("experience must be a JSON object");
    Experience e;
    if (auto it = j.find("id"); it != j.end() && !it->is_null()) e.id = it->template get<std::string>();
    for (const auto& p : j.at("personas")) e.personas.push_back(persona_from_json(p));
    for (const auto& r : j.at("relations"))
        e.relations.push_back({r.at("a").template get<std::string>(), r.at("b").template get<std::string>(),
                               r.at("kind").template get<std::string>()});
    e.situation = j.at("situation").template get<std::string>();
    e.topic = j.at("topic").template get<std::string>();
    e.conversationStarter = j.at("conversationStarter").template get<std::string>();
    return e;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

inline bool valid_persona_name(std::string_view name) {
    if (name.empty()) return false;
    return std::none_of(name.begin(), name.end(), [](unsigned char c) {
        return std::isspace(c) != 0 || std::isdigit(c) != 0;
    });
}

inline bool is_blank(std::string_view s) {
    return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

/// Returns every broken invariant; empty means valid. Generated personas must
/// also carry at least one quality.
inline std::vector<std::string> experience_violations(const Experience& e, PersonaSource source) {
    std::vector<std::string> v;
    if (e.personas.size() < 2 || e.personas.size() > 5)
        v.push_back("expected 2-5 personas, got " + std::to_string(e.personas.size()));
    std::set<std::string> names;
    for (const auto& p : e.personas) {
        if (!valid_persona_name(p.name)) v.push_back("invalid persona name '" + p.name + "'");
        if (!names.insert(p.name).second) v.push_back("duplicate persona name '" + p.name + "'");
        if (source == PersonaSource::Generated && p.qualities.empty())
            v.push_back("persona '" + p.name + "' has no qualities");
        if (p.age && *p.age <= 0) v.push_back("persona '" + p.name + "' has non-positive age");
    }
    for (const auto& r : e.relations) {
        if (r.a == r.b) v.push_back("relation links '" + r.a + "' to itself");
        if (!names.count(r.a) || !names.count(r.b))
            v.push_back("relation " + r.a + "/" + r.b + " names an unknown persona");
    }
    if (is_blank(e.situation)) v.push_back("empty situation");
    if (is_blank(e.topic)) v.push_back("empty topic");
    if (is_blank(e.conversationStarter)) v.push_back("empty conversationStarter");
    return v;
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

/// Compact JSON array of shots, ids omitted.
inline std::string serialize_shots(const std::vector<Experience>& shots) {
    ordered_json arr = ordered_json::array();
    for (const auto& s : shots) arr.push_back(to_json(s, false));
    return arr.dump();
}

inline std::string build_prompt_generated(const std::vector<Experience>& shots, int numGeneratedExamples,
                                          const PromptSet& prompts = {}) {
    require(!shots.empty(), ErrorKind::Precondition, "at least one shot is required");
    require(numGeneratedExamples > 0, ErrorKind::Precondition, "numGeneratedExamples must be positive");
    return render_template(prompts.experienceGenerated,
                           {{"shots", serialize_shots(shots)},
                            {"numGeneratedExamples", std::to_string(numGeneratedExamples)}});
}

inline std::string build_prompt_sampled(const std::vector<Experience>& shots,
                                        const std::vector<std::vector<std::string>>& personaGroups,
                                        int numGeneratedExamples, const PromptSet& prompts = {}) {
    require(!shots.empty(), ErrorKind::Precondition, "at least one shot is required");
    require(numGeneratedExamples > 0, ErrorKind::Precondition, "numGeneratedExamples must be positive");
    if (personaGroups.size() != static_cast<std::size_t>(numGeneratedExamples))
        fail(ErrorKind::Arity, std::to_string(personaGroups.size()) + " persona groups for " +
                                   std::to_string(numGeneratedExamples) + " requested examples");
    for (const auto& g : personaGroups)
        require(g.size() >= 2 && g.size() <= 5, ErrorKind::Precondition, "persona group size must be in [2,5]");
    const nlohmann::json groups = personaGroups;
    return render_template(prompts.experienceSampled,
                           {{"shots", serialize_shots(shots)},
                            {"numGeneratedExamples", std::to_string(numGeneratedExamples)},
                            {"personas", groups.dump()}});
}

// ---------------------------------------------------------------------------
// Parsing model output
// ---------------------------------------------------------------------------

struct ElementViolation {
    std::size_t index = 0;
    std::string reason;
};

struct ParsedExperiences {
    std::vector<Experience> experiences;
    std::vector<std::size_t> sourceIndices;  // position of each kept element in the model's array
    std::vector<ElementViolation> violations;
    std::size_t expected = 0;

    bool count_mismatch() const { return experiences.size() != expected; }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string strip_code_fences(std::string_view raw) {
    std::string s = trim(raw);
    if (s.rfind("```", 0) == 0) {
        const auto nl = s.find('\n');
        s = nl == std::string::npos ? std::string{} : s.substr(nl + 1);
    }
    s = trim(s);
    if (s.size() >= 3 && s.compare(s.size() - 3, 3, "```") == 0) s = trim(std::string_view(s).substr(0, s.size() - 3));
    return s;
}

} // namespace detail

/// Strips markdown fences, parses a JSON array and keeps only elements that
/// satisfy every Experience invariant. Invalid elements are reported, not repaired.
inline ParsedExperiences parse_experiences(std::string_view raw, std::size_t expected,
                                           PersonaSource source = PersonaSource::Generated) {
    const std::string body = detail::strip_code_fences(raw);
    nlohmann::json arr;
    bool parsed = false;
    try {
        arr = nlohmann::json::parse(body);
        parsed = arr.is_array();
    } catch (const nlohmann::json::parse_error&) {
    }
    if (!parsed) {
        const auto first = body.find('[');
        const auto last = body.rfind(']');
        if (first != std::string::npos && last != std::string::npos && last > first) {
            try {
                arr = nlohmann::json::parse(body.substr(first, last - first + 1));
                parsed = arr.is_array();
            } catch (const nlohmann::json::parse_error&) {
            }
        }
    }
    if (!parsed) fail(ErrorKind::Json, "model output contains no parseable JSON array");

    ParsedExperiences out;
    out.expected = expected;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        Experience e;
        try {
            e = experience_from_json(arr[i]);
        } catch (const std::exception& ex) {
            out.violations.push_back({i, std::string("malformed element: ") + ex.what()});
            continue;
        }
        e.id.reset();
        auto v = experience_violations(e, source);
        if (!v.empty()) {
            std::string reason;
            for (const auto& s : v) reason += (reason.empty() ? "" : "; ") + s;
            out.violations.push_back({i, reason});
            continue;
        }
        out.experiences.push_back(std::move(e));
        out.sourceIndices.push_back(i);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Few-shot hub
// ---------------------------------------------------------------------------

/// Append-only store of experiences available as shots. When a path is set,
/// every append is persisted (fsync'd) before it becomes visible in memory.
class FewShotHub {
public:
    explicit FewShotHub(std::uint64_t rngSeed = 0, std::optional<std::filesystem::path> path = std::nullopt)
        : rngSeed_(rngSeed), rng_(rngSeed), path_(std::move(path)) {}

    /// Opens a persisted hub; creates it with `seedShot` when the file is empty or absent.
    static FewShotHub open(const std::filesystem::path& path, const Experience& seedShot, std::uint64_t rngSeed) {
        FewShotHub hub(rngSeed, path);
        for (const auto& j : jsonl::read_all(path)) hub.entries_.push_back(experience_from_json(j));
        if (hub.entries_.empty()) hub.append({seedShot});
        return hub;
    }

    const std::vector<Experience>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::uint64_t rng_seed() const { return rngSeed_; }
    Rng& rng() { return rng_; }
    void reseed(std::uint64_t seed) {
        rngSeed_ = seed;
        rng_.seed(seed);
    }
    const std::optional<std::filesystem::path>& path() const { return path_; }

    /// Adds entries in order. Entries whose id is already present are skipped,
    /// which makes replays after a crash idempotent.
    void append(const std::vector<Experience>& newEntries) {
        std::vector<Experience> fresh;
        for (const auto& e : newEntries) {
            if (e.id && contains_id(*e.id)) continue;
            fresh.push_back(e);
        }
        if (fresh.empty()) return;
        if (path_) {
            std::vector<std::string> lines;
            for (const auto& e : fresh) lines.push_back(to_json(e).dump());
            jsonl::append_lines(*path_, lines, ErrorKind::Persistence);
        }
        for (auto& e : fresh) entries_.push_back(std::move(e));
    }

private:
    bool contains_id(const std::string& id) const {
        return std::any_of(entries_.begin(), entries_.end(), [&](const Experience& e) { return e.id == id; });
    }

    std::vector<Experience> entries_;
    std::uint64_t rngSeed_;
    Rng rng_;
    std::optional<std::filesystem::path> path_;
};

/// k entries uniformly without replacement; advances the hub's rng only.
inline std::vector<Experience> hub_sample(FewShotHub& hub, std::size_t k) {
    if (hub.empty()) fail(ErrorKind::EmptyHub, "few-shot hub has no entries");
    require(k >= 1 && k <= hub.size(), ErrorKind::Precondition,
            "cannot sample " + std::to_string(k) + " of " + std::to_string(hub.size()) + " hub entries");
    std::vector<Experience> out;
    for (std::size_t idx : sample_indices(hub.rng(), hub.size(), k)) out.push_back(hub.entries()[idx]);
    return out;
}

inline FewShotHub& hub_append(FewShotHub& hub, const std::vector<Experience>& newEntries,
                              PersonaSource source = PersonaSource::Generated) {
    for (const auto& e : newEntries) {
        auto v = experience_violations(e, source);
        require(v.empty(), ErrorKind::Precondition, "refusing to append invalid experience: " + (v.empty() ? "" : v.front()));
    }
    hub.append(newEntries);
    return hub;
}

// ---------------------------------------------------------------------------
// Persona hub
// ---------------------------------------------------------------------------

enum class PersonaHubSource { PersonaChat, BillionPersonas, Custom };

struct PersonaHub {
    std::vector<std::string> records;
    PersonaHubSource source = PersonaHubSource::Custom;
};

namespace detail {

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

/// A persona description from one JSON value: a string, an array of profile
/// sentences, or an object with a "persona"/"input persona"/"description"/"text" field.
inline std::string persona_text(const nlohmann::json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_array()) return join(j.get<std::vector<std::string>>(), " ");
    if (j.is_object()) {
        for (const char* key : {"persona", "input persona", "description", "text"})
            if (j.contains(key)) return persona_text(j.at(key));
    }
    throw std::invalid_argument("unrecognised persona record");
}

} // namespace detail

/// Loads persona descriptions from line-delimited JSON (`.jsonl`/`.json`) or plain
/// text. In plain text, profiles are blocks separated by blank lines (one
/// sentence per line); a file with no blank lines holds one profile per line.
inline PersonaHub load_persona_hub(const std::filesystem::path& path,
                                   PersonaHubSource source = PersonaHubSource::Custom) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open persona hub " + path.string());
    PersonaHub hub;
    hub.source = source;
    const auto ext = path.extension().string();
    std::string line;
    std::size_t lineNo = 0;
    if (ext == ".jsonl" || ext == ".json") {
        while (std::getline(in, line)) {
            ++lineNo;
            if (is_blank(line)) continue;
            try {
                hub.records.push_back(detail::persona_text(nlohmann::json::parse(line)));
            } catch (const std::exception& e) {
                throw ParseError(lineNo, path.string() + ": " + e.what());
            }
        }
    } else {
        std::vector<std::string> lines;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(line);
        }
        const bool blocks = std::any_of(lines.begin(), lines.end(), [](const auto& l) { return is_blank(l); });
        std::vector<std::string> block;
        auto flush = [&] {
            if (!block.empty()) hub.records.push_back(detail::join(block, " "));
            block.clear();
        };
        for (const auto& l : lines) {
            if (is_blank(l)) {
                flush();
            } else if (blocks) {
                block.push_back(detail::trim(l));
            } else {
                hub.records.push_back(detail::trim(l));
            }
        }
        flush();
    }
    if (hub.records.empty()) fail(ErrorKind::InsufficientPersonas, "persona hub " + path.string() + " is empty");
    return hub;
}

/// Fixed interlocutor groups, one per line (array of descriptions or an object
/// with a "personas" array).
inline std::vector<std::vector<std::string>> load_persona_groups(const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> groups;
    std::size_t lineNo = 0;
    for (const auto& j : jsonl::read_all(path)) {
        ++lineNo;
        const auto& arr = j.is_object() ? j.at("personas") : j;
        if (!arr.is_array() || arr.size() < 2 || arr.size() > 5)
            throw ParseError(lineNo, path.string() + ": a persona group needs 2-5 members");
        std::vector<std::string> g;
        for (const auto& p : arr) g.push_back(detail::persona_text(nlohmann::json::parse(p.dump())));
        groups.push_back(std::move(g));
    }
    if (groups.empty()) fail(ErrorKind::InsufficientPersonas, "no persona groups in " + path.string());
    return groups;
}

inline std::vector<std::string> sample_persona_group(const PersonaHub& hub, Rng& rng, int size) {
    require(size >= 2 && size <= 5, ErrorKind::Precondition, "persona group size must be in [2,5]");
    if (hub.records.size() < static_cast<std::size_t>(size))
        fail(ErrorKind::InsufficientPersonas, "persona hub has " + std::to_string(hub.records.size()) +
                                                  " records, need " + std::to_string(size));
    std::vector<std::string> group;
    for (std::size_t idx : sample_indices(rng, hub.records.size(), static_cast<std::size_t>(size)))
        group.push_back(hub.records[idx]);
    return group;
}

// ---------------------------------------------------------------------------
// Batch generation
// ---------------------------------------------------------------------------

struct BatchContext {
    std::string runId = "run";
    std::size_t batchIndex = 0;
    /// Fixed persona groups (reused personas). Also overrides the batch size.
    std::optional<std::vector<std::vector<std::string>>> fixedGroups;
};

struct ExperienceBatch {
    std::vector<Experience> experiences;
    std::vector<ElementViolation> violations;
    std::vector<Experience> shots;
    std::string prompt;
    std::size_t requested = 0;
};

inline std::string experience_id(const std::string& runId, std::size_t batch, std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, ":b%04zu:e%zu", batch, k);
    return runId + buf;
}

/// One completion call producing up to a batch of experiences. Iterative
/// sampling draws the shot from the hub and appends the results; otherwise the
/// hub's first entry is always the shot and the hub is left untouched.
inline ExperienceBatch generate_experience_batch(const ExperimentConfig& config, FewShotHub& hub,
                                                 const PersonaHub* personaHub, const BackendSpec& backend,
                                                 const BatchContext& ctx = {}, const PromptSet& prompts = {}) {
    if (hub.empty()) fail(ErrorKind::EmptyHub, "few-shot hub needs a seed shot");
    ExperienceBatch batch;
    const auto shotCount = static_cast<std::size_t>(config.shotsPerPrompt);

    if (config.iterativeSampling) {
        hub.reseed(derive_seed(config.seed, "hub", ctx.batchIndex));
        batch.shots = hub_sample(hub, std::min(shotCount, hub.size()));
    } else {
        const auto n = std::min(shotCount, hub.size());
        batch.shots.assign(hub.entries().begin(), hub.entries().begin() + static_cast<std::ptrdiff_t>(n));
    }

    std::vector<std::vector<std::string>> groups;
    switch (config.personaSource) {
    case PersonaSource::Generated:
        batch.requested = static_cast<std::size_t>(config.batchSize);
        batch.prompt = build_prompt_generated(batch.shots, config.batchSize, prompts);
        break;
    case PersonaSource::Sampled: {
        require(personaHub != nullptr, ErrorKind::Precondition, "sampled personas need a persona hub");
        Rng rng(derive_seed(config.seed, "personas", ctx.batchIndex));
        const auto span = static_cast<std::size_t>(config.groupSizeMax - config.groupSizeMin + 1);
        for (int i = 0; i < config.batchSize; ++i) {
            const int size = config.groupSizeMin + static_cast<int>(uniform_index(rng, span));
            groups.push_back(sample_persona_group(*personaHub, rng, size));
        }
        break;
    }
    case PersonaSource::Reused:
        require(ctx.fixedGroups.has_value() && !ctx.fixedGroups->empty(), ErrorKind::Precondition,
                "reused personas need fixed persona groups");
        groups = *ctx.fixedGroups;
        break;
    }
    if (config.personaSource != PersonaSource::Generated) {
        batch.requested = groups.size();
        batch.prompt = build_prompt_sampled(batch.shots, groups, static_cast<int>(groups.size()), prompts);
    }

    CompletionRequest request;
    request.messages = {{Role::User, batch.prompt, std::nullopt}};
    request.maxTokens = config.generationMaxTokens;
    request.temperature = config.temperature;
    request.seed = static_cast<std::int64_t>(derive_seed(config.seed, "generation", ctx.batchIndex) >> 33);
    const CompletionResult result = complete(backend, request);

    ParsedExperiences parsed = parse_experiences(result.text, batch.requested, config.personaSource);
    batch.violations = std::move(parsed.violations);
    for (std::size_t i = 0; i < parsed.experiences.size(); ++i) {
        Experience& e = parsed.experiences[i];
        const std::size_t src = parsed.sourceIndices[i];
        if (!groups.empty() && src < groups.size()) {
            const auto& g = groups[src];
            for (std::size_t p = 0; p < e.personas.size() && p < g.size(); ++p)
                if (!e.personas[p].description) e.personas[p].description = g[p];
        }
        e.id = experience_id(ctx.runId, ctx.batchIndex, src);
        batch.experiences.push_back(std::move(e));
    }
    if (config.iterativeSampling) hub_append(hub, batch.experiences, config.personaSource);
    return batch;
}

} // namespace dialoguegen
