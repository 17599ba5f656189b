#pragma once

// Chat-completion gateway: one call surface over a remote OpenAI-compatible
// endpoint and a scripted mock. Token log-probabilities are converted to
// linear probabilities here; nothing downstream sees log space.

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dialoguegen/error.hpp"
#include "dialoguegen/rng.hpp"

namespace dialoguegen {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

enum class Role { System, User, Assistant };

inline std::string_view to_string(Role role) {
    switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    }
    return "user";
}

struct ChatMessage {
    Role role = Role::User;
    std::string content;
    std::optional<std::string> name;

    bool operator==(const ChatMessage&) const = default;
};

struct CompletionRequest {
    std::vector<ChatMessage> messages;
    int maxTokens = 256;
    double temperature = 1.0;
    bool wantTokenProbs = false;
    int topAlternatives = 5;
    /// Sampling seed forwarded to the backend (best-effort on live models).
    std::optional<std::int64_t> seed;
};

struct TokenAlternative {
    std::string token;
    double probability = 0.0;
};

/// One generated position: the sampled token plus its top alternatives,
/// sorted by descending probability.
struct TokenPosition {
    std::string token;
    double probability = 0.0;
    std::vector<TokenAlternative> alternatives;
};

struct CompletionResult {
    std::string text;
    std::optional<std::vector<TokenPosition>> tokenProbs;
};

inline bool has_whitespace(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

inline void validate(const CompletionRequest& request) {
    require(!request.messages.empty(), ErrorKind::Precondition, "request has no messages");
    require(request.maxTokens > 0, ErrorKind::Precondition, "maxTokens must be positive");
    require(request.temperature >= 0.0, ErrorKind::Precondition, "temperature must be non-negative");
    require(request.topAlternatives >= 1 && request.topAlternatives <= 20, ErrorKind::Precondition,
            "topAlternatives must be in [1,20]");
    bool seenSystem = false;
    for (const auto& m : request.messages) {
        if (m.role == Role::System) seenSystem = true;
        if (m.role == Role::Assistant)
            require(seenSystem, ErrorKind::Precondition, "assistant message before any system message");
        if (m.role != Role::System)
            require(!m.content.empty(), ErrorKind::Precondition, "empty user/assistant message");
        if (m.name)
            require(!m.name->empty() && !has_whitespace(*m.name), ErrorKind::Precondition,
                    "message name must be non-empty without whitespace: '" + *m.name + "'");
    }
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

inline json to_wire(const ChatMessage& m) {
    json j = {{"role", to_string(m.role)}, {"content", m.content}};
    if (m.name) j["name"] = *m.name;
    return j;
}

inline json build_request_body(const std::string& model, const CompletionRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) messages.push_back(to_wire(m));
    json body = {
        {"model", model},
        {"messages", std::move(messages)},
        {"max_tokens", request.maxTokens},
        {"temperature", request.temperature},
        {"logprobs", request.wantTokenProbs},
    };
    if (request.wantTokenProbs) body["top_logprobs"] = request.topAlternatives;
    if (request.seed) body["seed"] = *request.seed;
    return body;
}

/// Converts a wire `logprobs.content` array into probability space. Alternatives
/// that underflow to zero probability are dropped; at most `topAlternatives`
/// are kept per position.
inline std::vector<TokenPosition> token_probs_from_wire(const json& content, int topAlternatives) {
    require(content.is_array(), ErrorKind::Json, "logprobs.content is not an array");
    auto toProb = [](const json& entry) {
        const double lp = entry.at("logprob").get<double>();
        require(lp <= 0.0, ErrorKind::Json, "positive logprob on the wire");
        return std::exp(lp);
    };
    std::vector<TokenPosition> out;
    out.reserve(content.size());
    for (const auto& pos : content) {
        TokenPosition tp;
        tp.token = pos.at("token").get<std::string>();
        tp.probability = toProb(pos);
        if (auto it = pos.find("top_logprobs"); it != pos.end() && it->is_array()) {
            for (const auto& alt : *it) {
                const double p = toProb(alt);
                if (p > 0.0) tp.alternatives.push_back({alt.at("token").get<std::string>(), p});
            }
        }
        if (tp.alternatives.empty() && tp.probability > 0.0)
            tp.alternatives.push_back({tp.token, tp.probability});
        std::stable_sort(tp.alternatives.begin(), tp.alternatives.end(),
                         [](const auto& a, const auto& b) { return a.probability > b.probability; });
        if (tp.alternatives.size() > static_cast<std::size_t>(topAlternatives))
            tp.alternatives.resize(static_cast<std::size_t>(topAlternatives));
        out.push_back(std::move(tp));
    }
    return out;
}

inline CompletionResult parse_completion_response(const json& body, const CompletionRequest& request) {
    try {
        const auto& choice = body.at("choices").at(0);
        CompletionResult result;
        const auto& content = choice.at("message").at("content");
        result.text = content.is_null() ? std::string{} : content.get<std::string>();
        if (request.wantTokenProbs) {
            auto lp = choice.find("logprobs");
            if (lp == choice.end() || lp->is_null() || !lp->contains("content"))
                fail(ErrorKind::Json, "token probabilities requested but absent from response");
            result.tokenProbs = token_probs_from_wire(lp->at("content"), request.topAlternatives);
        }
        return result;
    } catch (const json::exception& e) {
        fail(ErrorKind::Json, std::string("malformed completion response: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

/// One scripted response. `replies` with more than one element picks a reply by
/// hashing the request, so repeatable entries stay deterministic under
/// concurrent callers.
struct MockEntry {
    std::optional<std::string> match;
    std::vector<std::string> replies;
    bool repeat = false;
    std::optional<json> tokenProbs;  // wire-format logprobs.content
    std::size_t line = 0;
};

inline std::string last_user_message(const CompletionRequest& request) {
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it)
        if (it->role == Role::User) return it->content;
    return {};
}

inline std::string canonical_request(const CompletionRequest& request) {
    json j = build_request_body("", request);
    return j.dump();
}

/// Ordered replay script. Entries are served first-eligible in file order; an
/// entry with `match` is eligible only when the last user message contains it.
/// Non-repeat entries are consumed once.
class MockScript {
public:
    explicit MockScript(std::vector<MockEntry> entries)
        : entries_(std::move(entries)), consumed_(entries_.size(), false) {}

    CompletionResult respond(const CompletionRequest& request) {
        const std::string lastUser = last_user_message(request);
        std::lock_guard lock(mutex_);
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (consumed_[i]) continue;
            const MockEntry& e = entries_[i];
            if (e.match && lastUser.find(*e.match) == std::string::npos) continue;
            if (!e.repeat) consumed_[i] = true;
            return render(e, request);
        }
        fail(ErrorKind::ScriptExhausted, "no scripted response for request (last user message: '" +
                                             lastUser.substr(0, 80) + "')");
    }

    std::size_t size() const { return entries_.size(); }

    std::size_t remaining() const {
        std::lock_guard lock(mutex_);
        std::size_t n = 0;
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (!consumed_[i]) ++n;
        return n;
    }

private:
    static CompletionResult render(const MockEntry& e, const CompletionRequest& request) {
        CompletionResult r;
        r.text = e.replies.size() == 1
                     ? e.replies.front()
                     : e.replies[fnv1a64(canonical_request(request)) % e.replies.size()];
        if (!request.wantTokenProbs) return r;
        if (e.tokenProbs) {
            r.tokenProbs = token_probs_from_wire(*e.tokenProbs, request.topAlternatives);
        } else {
            std::vector<TokenPosition> positions;
            std::istringstream words(r.text);
            for (std::string w; words >> w;) positions.push_back({w, 1.0, {{w, 1.0}}});
            r.tokenProbs = std::move(positions);
        }
        return r;
    }

    std::vector<MockEntry> entries_;
    std::vector<bool> consumed_;
    mutable std::mutex mutex_;
};

inline std::shared_ptr<MockScript> parse_mock_script(std::istream& in) {
    std::vector<MockEntry> entries;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(lineNo, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) throw ParseError(lineNo, "entry must be a JSON object");
        MockEntry entry;
        entry.line = lineNo;
        try {
            if (j.contains("match") && !j["match"].is_null()) entry.match = j["match"].get<std::string>();
            if (j.contains("reply")) entry.replies.push_back(j["reply"].get<std::string>());
            if (j.contains("replies")) {
                for (const auto& r : j["replies"]) entry.replies.push_back(r.get<std::string>());
            }
            entry.repeat = j.value("repeat", false);
            if (j.contains("tokenProbs") && !j["tokenProbs"].is_null()) {
                entry.tokenProbs = j["tokenProbs"];
                token_probs_from_wire(*entry.tokenProbs, 20);
            }
        } catch (const json::exception& e) {
            throw ParseError(lineNo, std::string("bad field: ") + e.what());
        } catch (const Error& e) {
            throw ParseError(lineNo, e.what());
        }
        if (entry.replies.empty()) throw ParseError(lineNo, "entry has no reply");
        entries.push_back(std::move(entry));
    }
    if (entries.empty()) throw ParseError(lineNo == 0 ? 1 : lineNo, "mock script has no entries");
    return std::make_shared<MockScript>(std::move(entries));
}

inline std::shared_ptr<MockScript> load_mock_script(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open mock script " + path);
    return parse_mock_script(in);
}

// ---------------------------------------------------------------------------
// Backend dispatch
// ---------------------------------------------------------------------------

enum class BackendKind { Remote, Mock };

struct RetryPolicy {
    int maxRetries = 3;
    std::chrono::milliseconds backoffBase{500};
};

struct BackendSpec {
    BackendKind kind = BackendKind::Mock;
    std::string endpointUrl;
    std::string modelName = "mock";
    std::string credentialRef;
    std::shared_ptr<MockScript> script;
    RetryPolicy retry;
    std::chrono::seconds timeout{120};

    /// Human-readable backend descriptor for manifests (never includes secrets).
    std::string describe() const {
        if (kind == BackendKind::Mock) return "mock:" + modelName;
        return "remote:" + modelName + "@" + endpointUrl;
    }
};

inline void validate(const BackendSpec& backend) {
    if (backend.kind == BackendKind::Remote) {
        require(!backend.endpointUrl.empty(), ErrorKind::Precondition, "remote backend needs endpointUrl");
        require(!backend.credentialRef.empty(), ErrorKind::Precondition, "remote backend needs credentialRef");
    } else {
        require(backend.script != nullptr, ErrorKind::Precondition, "mock backend needs a script");
    }
}

namespace detail {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string basePath;
};

inline SplitUrl split_url(const std::string& url) {
    const auto schemeEnd = url.find("://");
    require(schemeEnd != std::string::npos, ErrorKind::Precondition, "endpointUrl lacks a scheme: " + url);
    const auto pathStart = url.find('/', schemeEnd + 3);
    SplitUrl s;
    s.origin = url.substr(0, pathStart);
    s.basePath = pathStart == std::string::npos ? "" : url.substr(pathStart);
    while (!s.basePath.empty() && s.basePath.back() == '/') s.basePath.pop_back();
    return s;
}

inline bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

inline CompletionResult complete_remote(const BackendSpec& backend, const CompletionRequest& request) {
    const char* credential = std::getenv(backend.credentialRef.c_str());
    if (credential == nullptr || *credential == '\0')
        fail(ErrorKind::Auth, "credential environment variable " + backend.credentialRef + " is not set");

    const SplitUrl url = split_url(backend.endpointUrl);
    // Accept either an API base (".../v1") or the full completions endpoint.
    const std::string suffix = "/chat/completions";
    const bool full = url.basePath.size() >= suffix.size() &&
                      url.basePath.compare(url.basePath.size() - suffix.size(), suffix.size(), suffix) == 0;
    const std::string path = full ? url.basePath : url.basePath + suffix;
    const std::string body = build_request_body(backend.modelName, request).dump();
    const httplib::Headers headers = {{"Authorization", std::string("Bearer ") + credential}};

    std::string lastFailure;
    int lastStatus = 0;
    for (int attempt = 0; attempt <= backend.retry.maxRetries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(backend.retry.backoffBase * (1LL << (attempt - 1)));
        httplib::Client client(url.origin);
        client.set_connection_timeout(backend.timeout);
        client.set_read_timeout(backend.timeout);
        client.set_write_timeout(backend.timeout);
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) {
            lastStatus = 0;
            lastFailure = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 401 || res->status == 403)
            fail(ErrorKind::Auth, "credential rejected (HTTP " + std::to_string(res->status) + ")");
        if (retryable_status(res->status)) {
            lastStatus = res->status;
            lastFailure = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
            continue;
        }
        if (res->status != 200)
            throw TransportError(res->status, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
        json parsed;
        try {
            parsed = json::parse(res->body);
        } catch (const json::parse_error& e) {
            fail(ErrorKind::Json, std::string("response body is not JSON: ") + e.what());
        }
        return parse_completion_response(parsed, request);
    }
    throw TransportError(lastStatus, lastFailure + " (after " + std::to_string(backend.retry.maxRetries) + " retries)");
}

} // namespace detail

/// Sends one chat completion. Mock calls are deterministic for a given request
/// sequence; remote calls retry transient failures with exponential backoff.
inline CompletionResult complete(const BackendSpec& backend, const CompletionRequest& request) {
    validate(backend);
    validate(request);
    if (backend.kind == BackendKind::Mock) return backend.script->respond(request);
    return detail::complete_remote(backend, request);
}

} // namespace dialoguegen
