#pragma once

// Managed group chat: one agent per persona, a user-proxy initiator message,
// a manager that picks the next speaker, and broadcast of every turn to all
// agents.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dialoguegen/config.hpp"
#include "dialoguegen/error.hpp"
#include "dialoguegen/experience.hpp"
#include "dialoguegen/gateway.hpp"
#include "dialoguegen/prompts.hpp"

namespace dialoguegen {

/// Reserved sender name of the opening message; never selected as a speaker.
inline constexpr const char* kInitiatorName = "initiator";

struct AgentProfile {
    std::string name;
    std::string description;
    std::string systemMessage;
};

struct Turn {
    std::size_t index = 0;
    std::string speaker;
    std::string text;

    bool operator==(const Turn&) const = default;
};

enum class TerminationReason { MaxTurns, ExitPhrase, Error };

inline std::string_view to_string(TerminationReason r) {
    switch (r) {
    case TerminationReason::MaxTurns: return "maxTurns";
    case TerminationReason::ExitPhrase: return "exitPhrase";
    case TerminationReason::Error: return "error";
    }
    return "error";
}

inline TerminationReason termination_from_string(const std::string& s) {
    if (s == "maxTurns") return TerminationReason::MaxTurns;
    if (s == "exitPhrase") return TerminationReason::ExitPhrase;
    if (s == "error") return TerminationReason::Error;
    throw std::invalid_argument("unknown terminationReason '" + s + "'");
}

struct RunMeta {
    std::string model;
    std::string configAbbrev;
    std::string personaSource;
    std::string startedAt;
    std::string finishedAt;
    std::uint64_t seed = 0;

    bool operator==(const RunMeta&) const = default;
};

struct Conversation {
    std::string id;
    std::string experienceId;
    std::vector<Turn> turns;
    TerminationReason terminationReason = TerminationReason::MaxTurns;
    RunMeta runMeta;
    std::optional<std::string> error;

    bool operator==(const Conversation&) const = default;
};

inline ordered_json to_json(const Conversation& c) {
    ordered_json j;
    j["id"] = c.id;
    j["experienceId"] = c.experienceId;
    ordered_json turns = ordered_json::array();
    for (const auto& t : c.turns) turns.push_back(ordered_json{{"index", t.index}, {"speaker", t.speaker}, {"text", t.text}});
    j["turns"] = std::move(turns);
    j["terminationReason"] = to_string(c.terminationReason);
    j["runMeta"] = ordered_json{{"model", c.runMeta.model},
                                {"configAbbrev", c.runMeta.configAbbrev},
                                {"personaSource", c.runMeta.personaSource},
                                {"startedAt", c.runMeta.startedAt},
                                {"finishedAt", c.runMeta.finishedAt},
                                {"seed", c.runMeta.seed}};
    if (c.error) j["error"] = *c.error;
    return j;
}

template <class J>
Conversation conversation_from_json(const J& j) {
    if (!j.is_object()) throw std::invalid_argument("conversation must be a JSON object");
    Conversation c;
    c.id = j.at("id").template get<std::string>();
    c.experienceId = j.value("experienceId", std::string{});
    for (const auto& t : j.at("turns"))
        c.turns.push_back({t.at("index").template get<std::size_t>(), t.at("speaker").template get<std::string>(),
                           t.at("text").template get<std::string>()});
    c.terminationReason = termination_from_string(j.at("terminationReason").template get<std::string>());
    if (auto it = j.find("runMeta"); it != j.end() && it->is_object()) {
        c.runMeta.model = it->value("model", std::string{});
        c.runMeta.configAbbrev = it->value("configAbbrev", std::string{});
        c.runMeta.personaSource = it->value("personaSource", std::string{});
        c.runMeta.startedAt = it->value("startedAt", std::string{});
        c.runMeta.finishedAt = it->value("finishedAt", std::string{});
        c.runMeta.seed = it->value("seed", std::uint64_t{0});
    }
    if (auto it = j.find("error"); it != j.end() && !it->is_null()) c.error = it->template get<std::string>();
    return c;
}

/// Structural problems with a conversation record; empty means well-formed.
inline std::vector<std::string> conversation_violations(const Conversation& c) {
    std::vector<std::string> v;
    if (c.id.empty()) v.push_back("empty id");
    for (std::size_t i = 0; i < c.turns.size(); ++i) {
        if (c.turns[i].index != i) v.push_back("turn indices are not contiguous from 0");
        if (c.turns[i].speaker.empty()) v.push_back("turn without speaker");
        if (c.turns[i].text.empty()) v.push_back("turn without text");
    }
    return v;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline AgentProfile render_agent(const Persona& persona, bool chatty, const PromptSet& prompts = {}) {
    AgentProfile agent;
    agent.name = persona.name;

    std::string profile = "You are " + persona.name + ".\n";
    auto field = [&](const char* label, const std::string& value) {
        if (!is_blank(value)) profile += std::string(label) + ": " + value + "\n";
    };
    field("Nationality", persona.nationality);
    if (persona.age) field("Age", std::to_string(*persona.age));
    field("Qualities", detail::join(persona.qualities, ", "));
    field("Profession", persona.profession);
    field("Lifestyle", persona.lifestyle);
    field("Speech style", persona.speechStyle);
    field("Recent memory", persona.memory.recent);
    field("Long-term memory", persona.memory.longTerm);
    if (persona.description) field("Persona", *persona.description);

    std::string guidelines = "Guidelines for the conversation:\n";
    for (const auto& g : prompts.agentGuidelines) guidelines += "- " + g + "\n";
    if (!chatty) guidelines += "- " + prompts.tokenLimitGuideline + "\n";

    agent.systemMessage = profile + "\nYou are taking part in a group conversation. Stay in character as " +
                          persona.name + ".\n\n" + guidelines;

    std::string about;
    if (!is_blank(persona.profession)) about = persona.profession;
    if (!persona.qualities.empty()) about += (about.empty() ? "" : "; ") + detail::join(persona.qualities, ", ");
    if (about.empty() && persona.description) about = persona.description->substr(0, 160);
    agent.description = about.empty() ? persona.name : persona.name + " (" + about + ")";
    return agent;
}

/// Opening message from the user proxy: situation, relations, topic, and the
/// conversation starter as the final line.
inline std::string render_initiator(const Experience& e) {
    std::string out = "Situation: " + e.situation + "\n\nRelations:\n";
    if (e.relations.empty()) out += "- (no relations recorded)\n";
    for (const auto& r : e.relations) out += "- " + r.a + " and " + r.b + ": " + r.kind + "\n";
    out += "\nTopic: " + e.topic + "\n\nConversation starter:\n" + e.conversationStarter;
    return out;
}

// ---------------------------------------------------------------------------
// Speaker selection
// ---------------------------------------------------------------------------

struct SelectionPolicy {
    SelectionKind kind = SelectionKind::RoundRobin;
    std::string systemTemplate = defaults::kSpeakerSelectionSystem;
    std::string userTemplate = defaults::kSpeakerSelectionUser;
    int maxTokens = 16;
};

inline SelectionPolicy selection_policy(SelectionKind kind, const PromptSet& prompts = {}) {
    SelectionPolicy p;
    p.kind = kind;
    p.systemTemplate = prompts.speakerSelectionSystem;
    p.userTemplate = prompts.speakerSelectionUser;
    return p;
}

inline std::string round_robin_next(const std::vector<Turn>& history, const std::vector<AgentProfile>& agents) {
    if (agents.empty()) fail(ErrorKind::Selection, "no agents to select from");
    std::ptrdiff_t last = -1;
    if (!history.empty()) {
        for (std::size_t i = 0; i < agents.size(); ++i)
            if (agents[i].name == history.back().speaker) last = static_cast<std::ptrdiff_t>(i);
    }
    return agents[static_cast<std::size_t>(last + 1) % agents.size()].name;
}

inline std::string render_transcript(const std::string& initiator, const std::vector<Turn>& history) {
    std::string out;
    if (!initiator.empty()) out += std::string(kInitiatorName) + ": " + initiator + "\n";
    for (const auto& t : history) out += t.speaker + ": " + t.text + "\n";
    return out;
}

namespace detail {

inline std::string lower_ascii(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

/// Maps a selection reply onto an agent name: exact match after trimming
/// quotes/punctuation, then case-insensitive, then a unique whole-word mention.
inline std::optional<std::string> match_agent_name(const std::string& reply, const std::vector<AgentProfile>& agents) {
    std::string r = trim(reply);
    while (!r.empty() && std::string_view("\"'`*.,:;!?[]()").find(r.front()) != std::string_view::npos) r.erase(0, 1);
    while (!r.empty() && std::string_view("\"'`*.,:;!?[]()").find(r.back()) != std::string_view::npos) r.pop_back();
    for (const auto& a : agents)
        if (a.name == r) return a.name;
    for (const auto& a : agents)
        if (lower_ascii(a.name) == lower_ascii(r)) return a.name;
    std::optional<std::string> found;
    const std::string lr = lower_ascii(reply);
    for (const auto& a : agents) {
        const std::string ln = lower_ascii(a.name);
        for (auto pos = lr.find(ln); pos != std::string::npos; pos = lr.find(ln, pos + 1)) {
            const bool leftOk = pos == 0 || !std::isalnum(static_cast<unsigned char>(lr[pos - 1]));
            const auto end = pos + ln.size();
            const bool rightOk = end == lr.size() || !std::isalnum(static_cast<unsigned char>(lr[end]));
            if (leftOk && rightOk) {
                if (found && *found != a.name) return std::nullopt;
                found = a.name;
                break;
            }
        }
    }
    return found;
}

} // namespace detail

/// Picks the next speaker. Round-robin counts the initiator as index -1. A
/// model-driven choice that names no agent is retried once, then falls back to
/// round-robin.
inline std::string select_next_speaker(const SelectionPolicy& policy, const std::vector<Turn>& history,
                                       const std::vector<AgentProfile>& agents, const BackendSpec& backend,
                                       const std::string& initiator = {}, double temperature = 0.0) {
    if (agents.empty()) fail(ErrorKind::Selection, "no agents to select from");
    if (policy.kind == SelectionKind::RoundRobin) return round_robin_next(history, agents);

    std::string roles;
    std::string agentList = "[";
    for (std::size_t i = 0; i < agents.size(); ++i) {
        roles += (i ? "\n" : "") + agents[i].name + ": " + agents[i].description;
        agentList += (i ? ", " : "") + agents[i].name;
    }
    agentList += "]";
    CompletionRequest request;
    request.messages = {
        {Role::System, render_template(policy.systemTemplate, {{"roles", roles}, {"agentlist", agentList}}), std::nullopt},
        {Role::User,
         render_template(policy.userTemplate,
                         {{"conversation", render_transcript(initiator, history)}, {"agentlist", agentList}}),
         std::nullopt},
    };
    request.maxTokens = policy.maxTokens;
    request.temperature = temperature;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto reply = complete(backend, request);
        if (auto name = detail::match_agent_name(reply.text, agents)) return *name;
    }
    return round_robin_next(history, agents);
}

// ---------------------------------------------------------------------------
// Chat loop
// ---------------------------------------------------------------------------

inline bool contains_exit_phrase(std::string_view text, const std::vector<std::string>& phrases) {
    const std::string lt = detail::lower_ascii(std::string(text));
    return std::any_of(phrases.begin(), phrases.end(),
                       [&](const std::string& p) { return lt.find(detail::lower_ascii(p)) != std::string::npos; });
}

/// Shared history as every agent sees it: the initiator message followed by
/// all turns, each attributed by name. Turn i's history is a strict prefix of
/// turn i+1's.
inline std::vector<ChatMessage> shared_history(const std::string& initiator, const std::vector<Turn>& turns) {
    std::vector<ChatMessage> out;
    out.push_back({Role::User, initiator, std::string(kInitiatorName)});
    for (const auto& t : turns) out.push_back({Role::User, t.text, t.speaker});
    return out;
}

inline std::vector<ChatMessage> agent_turn_messages(const AgentProfile& agent, const std::string& initiator,
                                                    const std::vector<Turn>& turns) {
    std::vector<ChatMessage> out;
    out.push_back({Role::System, agent.systemMessage, std::nullopt});
    auto history = shared_history(initiator, turns);
    out.insert(out.end(), std::make_move_iterator(history.begin()), std::make_move_iterator(history.end()));
    return out;
}

namespace detail {

/// Drops a leading "Name:" the model sometimes echoes before its reply.
inline std::string strip_speaker_prefix(const std::string& text, const std::string& speaker) {
    const std::string t = trim(text);
    const std::string prefix = speaker + ":";
    if (t.rfind(prefix, 0) == 0) return trim(std::string_view(t).substr(prefix.size()));
    return t;
}

} // namespace detail

struct ChatOptions {
    SelectionPolicy policy;
    PromptSet prompts;
    RunMeta meta;
    std::function<std::string()> clock = [] { return std::string{}; };
    /// Observes every request sent for an agent turn (tests use it to check broadcast semantics).
    std::function<void(std::size_t, const CompletionRequest&)> onTurnRequest;
};

/// Runs one conversation to maxTurns or the first exit phrase. Gateway errors
/// end the chat with terminationReason=error and keep the turns so far.
inline Conversation run_group_chat(const Experience& experience, const ExperimentConfig& config,
                                   const BackendSpec& backend, const std::string& conversationId,
                                   const ChatOptions& options = {}) {
    require(experience_violations(experience, PersonaSource::Sampled).empty(), ErrorKind::Precondition,
            "run_group_chat needs a valid experience");
    require(config.maxTurns >= 1, ErrorKind::Precondition, "maxTurns must be at least 1");

    Conversation conv;
    conv.id = conversationId;
    conv.experienceId = experience.id.value_or("");
    conv.runMeta = options.meta;
    conv.runMeta.startedAt = options.clock();

    std::vector<AgentProfile> agents;
    for (const auto& p : experience.personas) agents.push_back(render_agent(p, config.chatty, options.prompts));
    const std::string initiator = render_initiator(experience);

    conv.terminationReason = TerminationReason::MaxTurns;
    try {
        for (int i = 0; i < config.maxTurns; ++i) {
            const std::string speaker =
                select_next_speaker(options.policy, conv.turns, agents, backend, initiator, 0.0);
            const auto& agent = *std::find_if(agents.begin(), agents.end(),
                                              [&](const AgentProfile& a) { return a.name == speaker; });
            CompletionRequest request;
            request.messages = agent_turn_messages(agent, initiator, conv.turns);
            request.maxTokens = config.agentMaxTokens;
            request.temperature = config.temperature;
            if (options.onTurnRequest) options.onTurnRequest(conv.turns.size(), request);
            const auto result = complete(backend, request);
            const std::string text = detail::strip_speaker_prefix(result.text, speaker);
            if (text.empty()) fail(ErrorKind::Transport, "agent " + speaker + " returned an empty reply");
            conv.turns.push_back({conv.turns.size(), speaker, text});
            if (contains_exit_phrase(text, options.prompts.exitPhrases)) {
                conv.terminationReason = TerminationReason::ExitPhrase;
                break;
            }
        }
    } catch (const Error& e) {
        conv.terminationReason = TerminationReason::Error;
        conv.error = e.what();
    }
    conv.runMeta.finishedAt = options.clock();
    return conv;
}

} // namespace dialoguegen
