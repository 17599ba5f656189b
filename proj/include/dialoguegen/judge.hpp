#pragma once

// Groundedness judging. Each aspect is a two-step session: the judge first
// explains how the conversation reflects the aspect, then answers with a
// single score token. The score is the probability-weighted mean over the
// tokens "1".."5" at that position (linear probabilities, renormalised).

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dialoguegen/config.hpp"
#include "dialoguegen/error.hpp"
#include "dialoguegen/experience.hpp"
#include "dialoguegen/gateway.hpp"
#include "dialoguegen/groupchat.hpp"
#include "dialoguegen/prompts.hpp"

namespace dialoguegen {

struct Aspect {
    std::string id;
    std::string label;
    std::string promptFragment;
};

struct AspectSet {
    AspectSetKind kind = AspectSetKind::GeneratedPersonas9;
    std::vector<Aspect> aspects;
};

inline AspectSet make_aspect_set(AspectSetKind kind) {
    AspectSet set{kind, {}};
    if (kind == AspectSetKind::GeneratedPersonas9) {
        set.aspects = {
            {"Q1", "topic", "the topic"},
            {"Q2", "situation", "the situation"},
            {"Q3", "qualities", "the qualities of the personas"},
            {"Q4", "speech style", "the speech style of the personas"},
            {"Q5", "age", "the age of the personas"},
            {"Q6", "lifestyle", "the lifestyle of the personas"},
            {"Q7", "memories", "the memories of the personas"},
            {"Q8", "relations", "the relations between the personas"},
            {"Q9", "overall", "the overall experience"},
        };
    } else {
        set.aspects = {
            {"Q1", "topic", "the topic"},
            {"Q2", "situation", "the situation"},
            {"Q3", "personas", "the personas of the interlocutors"},
            {"Q4", "overall", "the overall experience"},
        };
    }
    return set;
}

inline AspectSetKind aspect_set_kind_from_string(const std::string& s) {
    if (s == "generatedPersonas9") return AspectSetKind::GeneratedPersonas9;
    if (s == "sampledPersonas4") return AspectSetKind::SampledPersonas4;
    throw std::invalid_argument("unknown aspect set '" + s + "'");
}

/// Probability of each score 1..5 (index 0 holds score 1).
using ScoreDistribution = std::array<double, 5>;

/// Scales a distribution to sum to 1. An all-zero distribution stays zero.
inline ScoreDistribution renormalize(const ScoreDistribution& d) {
    double total = 0.0;
    for (double p : d) total += p;
    if (total <= 0.0) return d;
    ScoreDistribution out{};
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] / total;
    return out;
}

inline double weighted_score(const ScoreDistribution& normalized) {
    double s = 0.0;
    for (std::size_t i = 0; i < normalized.size(); ++i) s += static_cast<double>(i + 1) * normalized[i];
    return s;
}

/// Score digit for an alternative token, ignoring surrounding whitespace.
inline std::optional<int> score_token_value(std::string_view token) {
    const std::string t = detail::trim(token);
    if (t.size() == 1 && t[0] >= '1' && t[0] <= '5') return t[0] - '0';
    return std::nullopt;
}

/// Distribution at the first position whose alternatives contain a score
/// token. Alternatives that trim to the same digit are summed; everything else
/// is discarded before renormalising.
inline ScoreDistribution extract_score_distribution(const std::vector<TokenPosition>& positions) {
    for (const auto& pos : positions) {
        ScoreDistribution d{};
        bool any = false;
        for (const auto& alt : pos.alternatives) {
            if (auto v = score_token_value(alt.token)) {
                d[static_cast<std::size_t>(*v - 1)] += alt.probability;
                any = true;
            }
        }
        if (any) return renormalize(d);
    }
    fail(ErrorKind::NoScoreToken, "no score token 1-5 among the returned alternatives");
}

struct AspectScore {
    std::string aspectId;
    std::string label;
    std::string explanation;
    ScoreDistribution distribution{};
    double weighted = 0.0;
};

struct MissingAspect {
    std::string aspectId;
    std::string error;
};

struct JudgeReport {
    std::string conversationId;
    AspectSetKind aspectSet = AspectSetKind::GeneratedPersonas9;
    std::vector<AspectScore> aspectScores;
    std::vector<MissingAspect> missing;
    std::optional<double> avgScore;
};

inline ordered_json to_json(const JudgeReport& r) {
    ordered_json j;
    j["conversationId"] = r.conversationId;
    j["aspectSet"] = to_string(r.aspectSet);
    ordered_json scores = ordered_json::array();
    for (const auto& s : r.aspectScores) {
        ordered_json dist;
        for (std::size_t i = 0; i < s.distribution.size(); ++i) dist[std::to_string(i + 1)] = s.distribution[i];
        scores.push_back(ordered_json{{"aspectId", s.aspectId},
                                      {"label", s.label},
                                      {"explanation", s.explanation},
                                      {"distribution", std::move(dist)},
                                      {"weighted", s.weighted}});
    }
    j["aspectScores"] = std::move(scores);
    ordered_json missing = ordered_json::array();
    for (const auto& m : r.missing) missing.push_back(ordered_json{{"aspectId", m.aspectId}, {"error", m.error}});
    j["missing"] = std::move(missing);
    j["avgScore"] = r.avgScore ? ordered_json(*r.avgScore) : ordered_json(nullptr);
    return j;
}

template <class J>
JudgeReport judge_report_from_json(const J& j) {
    if (!j.is_object()) throw std::invalid_argument("judge report must be a JSON object");
    JudgeReport r;
    r.conversationId = j.at("conversationId").template get<std::string>();
    r.aspectSet = aspect_set_kind_from_string(j.at("aspectSet").template get<std::string>());
    for (const auto& s : j.at("aspectScores")) {
        AspectScore a;
        a.aspectId = s.at("aspectId").template get<std::string>();
        a.label = s.value("label", std::string{});
        a.explanation = s.value("explanation", std::string{});
        const auto& dist = s.at("distribution");
        for (std::size_t i = 0; i < a.distribution.size(); ++i)
            a.distribution[i] = dist.value(std::to_string(i + 1), 0.0);
        a.weighted = s.at("weighted").template get<double>();
        r.aspectScores.push_back(std::move(a));
    }
    if (auto it = j.find("missing"); it != j.end())
        for (const auto& m : *it)
            r.missing.push_back({m.at("aspectId").template get<std::string>(), m.value("error", std::string{})});
    if (auto it = j.find("avgScore"); it != j.end() && !it->is_null()) r.avgScore = it->template get<double>();
    return r;
}

struct JudgeOptions {
    PromptSet prompts;
    std::optional<std::string> modelName;  // overrides the backend's model for judge calls
    int explainMaxTokens = 512;
    int scoreMaxTokens = 5;
    int topAlternatives = 20;
    double temperature = 0.0;
};

inline JudgeOptions judge_options(const ExperimentConfig& config, const PromptSet& prompts) {
    JudgeOptions o;
    o.prompts = prompts;
    o.modelName = config.judgeModelName;
    o.explainMaxTokens = config.judgeExplainMaxTokens;
    o.scoreMaxTokens = config.judgeScoreMaxTokens;
    o.topAlternatives = config.judgeTopAlternatives;
    return o;
}

/// Two sequential requests: explanation, then a single score token with
/// token probabilities enabled.
inline AspectScore judge_aspect(const Experience& experience, const Conversation& conv, const Aspect& aspect,
                                const BackendSpec& backend, const JudgeOptions& options = {}) {
    require(!conv.turns.empty(), ErrorKind::Precondition, "cannot judge an empty conversation");
    BackendSpec judgeBackend = backend;
    if (options.modelName) judgeBackend.modelName = *options.modelName;

    const std::string user = render_template(
        options.prompts.judgeExplain, {{"experience", to_json(experience, false).dump(2)},
                                       {"conversation", render_transcript({}, conv.turns)},
                                       {"aspect", aspect.promptFragment}});
    CompletionRequest explain;
    explain.messages = {{Role::System, options.prompts.judgeSystem, std::nullopt}, {Role::User, user, std::nullopt}};
    explain.maxTokens = options.explainMaxTokens;
    explain.temperature = options.temperature;

    AspectScore score;
    score.aspectId = aspect.id;
    score.label = aspect.label;
    score.explanation = detail::trim(complete(judgeBackend, explain).text);
    require(!score.explanation.empty(), ErrorKind::Precondition, "judge returned an empty explanation");

    CompletionRequest rate = explain;
    rate.messages.push_back({Role::Assistant, score.explanation, std::nullopt});
    rate.messages.push_back(
        {Role::User, render_template(options.prompts.judgeScore, {{"aspect", aspect.promptFragment}}), std::nullopt});
    rate.maxTokens = options.scoreMaxTokens;
    rate.wantTokenProbs = true;
    rate.topAlternatives = options.topAlternatives;
    const auto result = complete(judgeBackend, rate);
    if (!result.tokenProbs) fail(ErrorKind::NoScoreToken, "no token probabilities returned");
    score.distribution = extract_score_distribution(*result.tokenProbs);
    score.weighted = weighted_score(score.distribution);
    return score;
}

/// One independent session per aspect. Failed aspects are recorded as missing
/// and the average covers completed aspects only.
inline JudgeReport judge_conversation(const Experience& experience, const Conversation& conv,
                                      const AspectSet& aspectSet, const BackendSpec& backend,
                                      const JudgeOptions& options = {}) {
    if (!conv.runMeta.personaSource.empty()) {
        const auto expected = aspect_set_for(persona_source_from_string(conv.runMeta.personaSource));
        require(expected == aspectSet.kind, ErrorKind::Precondition,
                "aspect set " + std::string(to_string(aspectSet.kind)) + " does not match persona source " +
                    conv.runMeta.personaSource);
    }
    JudgeReport report;
    report.conversationId = conv.id;
    report.aspectSet = aspectSet.kind;
    for (const auto& aspect : aspectSet.aspects) {
        try {
            report.aspectScores.push_back(judge_aspect(experience, conv, aspect, backend, options));
        } catch (const Error& e) {
            report.missing.push_back({aspect.id, e.what()});
        }
    }
    if (!report.aspectScores.empty()) {
        double sum = 0.0;
        for (const auto& s : report.aspectScores) sum += s.weighted;
        report.avgScore = sum / static_cast<double>(report.aspectScores.size());
    }
    return report;
}

struct JudgeAggregate {
    AspectSetKind aspectSet = AspectSetKind::GeneratedPersonas9;
    std::vector<std::string> aspectIds;
    std::vector<std::optional<double>> aspectMeans;
    std::optional<double> avgScore;
    std::size_t reports = 0;
};

/// Column means over reports (per aspect over reports that scored it; the
/// average column is the mean of report averages).
inline JudgeAggregate aggregate_judge(const std::vector<JudgeReport>& reports) {
    if (reports.empty()) fail(ErrorKind::EmptyInput, "no judge reports to aggregate");
    JudgeAggregate agg;
    agg.aspectSet = reports.front().aspectSet;
    for (const auto& r : reports)
        if (r.aspectSet != agg.aspectSet) fail(ErrorKind::MixedAspectSets, "reports use different aspect sets");
    const AspectSet set = make_aspect_set(agg.aspectSet);
    for (const auto& a : set.aspects) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& r : reports)
            for (const auto& s : r.aspectScores)
                if (s.aspectId == a.id) {
                    sum += s.weighted;
                    ++n;
                }
        agg.aspectIds.push_back(a.id);
        agg.aspectMeans.push_back(n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt);
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : reports)
        if (r.avgScore) {
            sum += *r.avgScore;
            ++n;
        }
    if (n) agg.avgScore = sum / static_cast<double>(n);
    agg.reports = reports.size();
    return agg;
}

} // namespace dialoguegen
