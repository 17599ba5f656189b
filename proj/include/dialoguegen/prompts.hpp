#pragma once

// Prompt templates and agent guideline text. Built-in defaults mirror the
// files under fixtures/prompts/; a PromptSet can be loaded from an edited copy
// of that directory.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dialoguegen/error.hpp"

namespace dialoguegen {

namespace defaults {

inline constexpr const char* kExperiencePromptGenerated =
    R"(You are a database helper agent who keeps track of records that document the relations between different individuals.
Your task is to present the records of those individuals and their relations between each other and imagine a situation that would involve all these individuals.

## Guidelines
1. First, decide on the number of individuals (2, 3, 4, or 5) and the nationality of those individuals and give each individual a name
2. Decide on the qualities and personality of each individual: friendly, funny, ambitious, confident, caring, supportive, usually interrupts others
3. Decide on the profession of each speaker: software engineer, baker, house wife,...
4. Decide on the life style and hobbies for each speaker
5. Decide on their short-term and long-term memory
6. Decide on how each individual speaks (speech style)
7. Decide on the relation of each individual to the other: friend, co-worker, mum, dad, son, daughter, manager,...
8. Decide the situation or the setting which gathers these individuals. The situation can be either related to the long-term memory, or the short-term memory of one of the individuals, or a generic situation related to the profession or hobbies on of the speakers. The situation may also be a chit-chat about a general topic or a typical situation in the day of one of the speakers.
9. Decide on the topic of the conversation related to the situation, the life-styles and the long and short term memories of at least one of the agents.
10. Provide a conversation starter for the topic. The conversation starter must be on a topic that could involve promises or generic chit-chat.

## Output Format

Your output format is a json array where each json object is formatted as the following example:

### Example
```json
{shots}
```

### Output

I will output an array of {numGeneratedExamples} json objects that follow the same format that is presented in output format. I **must never** copy the example as is, but use it as a reference in my generation.
I must make sure that I output valid json that must be parsed correctly.
size of the generated array = {numGeneratedExamples}
```json
)";

inline constexpr const char* kExperiencePromptSampled =
    R"(You are a database helper agent who keeps track of records that document the relations between different individuals.
You know the personas of these individuals and your **task** is to find the relations between these individuals and imagine a situation that would involve all these individuals

## Guidelines
1. First, Give each individual a real name and decide on the relation of each individual to the other: friend, co-worker, mum, dad, son, daughter, manager,...Names must not have spaces or digits.
2. Decide the situation or the setting which gathers these individuals. The situation can be based on a generic situation related to the profession or hobbies on of the speakers. The situation may also be a chit-chat about a general topic or a typical situation in the day of one of the speakers.
3. Decide on the topic of the conversation related to the situation, and the life-styles of at least one of the agents.
4. Provide a conversation starter for the topic. The conversation starter must be on a topic that could involve promises or generic chit-chat.

## Output Format

Your output format is a json array where each json object is formatted as the following example:

### Example
```json
{shots}
```

### Input

Your input is an array of {numGeneratedExamples} groups. Each group comprises an array of individual personas

### Output

I will output an array of {numGeneratedExamples} json objects that follow the same format that is presented in output format example.
Each element in the output array represents the relations between the corresponding group of individuals in the input array, as well as the situation involving these individuals, a topic for their conversation and a conversation starter.
I **must never** copy the example as is, but use it as a reference in my generation.
I must make sure that I output valid json that must be parsed correctly.
size of the generated array = {numGeneratedExamples}

Input:

{personas}

```json
)";

inline const std::vector<std::string>& agent_guidelines() {
    static const std::vector<std::string> lines = {
        R"(You don't need to address the other speakers by their names. You don't need to speak to everyone in the conversation. For example you can say "I think that's a great idea." instead of "I think that's a great idea, John.". This makes the conversation more natural.)",
        R"(You can ask questions, provide answers, and make comments.)",
        R"(You can also provide information and share your opinions.)",
        R"(Never sound artificial or robotic. For example, instead of saying "Your project sounds fascinating, Lucas.", you can say "fascinating, yeah".)",
        R"(You can stop the conversation at any time by saying "I have to go now." or "I have to leave now.")",
        R"(You can pause in the middle of the conversation by saying "I need a moment.", to allow other speakers to interrupt you.)",
        R"(You can interrupt other speakers by saying "I have something to say." or "I have a question.")",
        R"(You can express your promises by saying "I will do that." or "I promise to do that.")",
        R"(You don't need to start with confirmation words like "yes" or "okay" or "Absolutely". You can start with the main content of your response, so that you can sound more natural.)",
    };
    return lines;
}

inline constexpr const char* kTokenLimitGuideline =
    "You must be concise and limit your response to 30 tokens at most.";

inline const std::vector<std::string>& exit_phrases() {
    static const std::vector<std::string> phrases = {"I have to go now.", "I have to leave now."};
    return phrases;
}

inline constexpr const char* kSpeakerSelectionSystem =
    R"(You are in a role play game. The following roles are available:
{roles}.
Read the following conversation.
Then select the next role from {agentlist} to play. Only return the role.)";

inline constexpr const char* kSpeakerSelectionUser =
    R"({conversation}

Read the above conversation. Then select the next role from {agentlist} to play. Only return the role.)";

inline constexpr const char* kJudgeSystem =
    R"(You are an impartial judge. You are given an input experience (personas, their relations, a situation, a topic and a conversation starter) and a conversation that was generated from it. You assess how well the conversation is grounded in the experience.)";

inline constexpr const char* kJudgeExplain =
    R"(# Input experience
{experience}

# Conversation
{conversation}

# Question
Explain why the conversation is or is not grounded in {aspect} of the input experience. Refer to concrete turns of the conversation.)";

inline constexpr const char* kJudgeScore =
    R"(Based on your explanation, rate how grounded the conversation is in {aspect} of the input experience on a scale from 1 (not grounded at all) to 5 (fully grounded). Answer with a single digit.)";

} // namespace defaults

/// Substitutes `{name}` placeholders. Only identifier-shaped placeholders are
/// recognised; substituted values are not rescanned. Any placeholder without a
/// value raises TemplateError.
inline std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            std::size_t j = i + 1;
            auto identChar = [](char c) {
                return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
            };
            while (j < tmpl.size() && identChar(tmpl[j])) ++j;
            if (j < tmpl.size() && tmpl[j] == '}' && j > i + 1 && !(tmpl[i + 1] >= '0' && tmpl[i + 1] <= '9')) {
                const std::string key(tmpl.substr(i + 1, j - i - 1));
                auto it = values.find(key);
                if (it == values.end()) fail(ErrorKind::Template, "unresolved placeholder {" + key + "}");
                out += it->second;
                i = j + 1;
                continue;
            }
        }
        out += tmpl[i++];
    }
    return out;
}

/// All editable prompt text used by the pipeline.
struct PromptSet {
    std::string experienceGenerated = defaults::kExperiencePromptGenerated;
    std::string experienceSampled = defaults::kExperiencePromptSampled;
    std::vector<std::string> agentGuidelines = defaults::agent_guidelines();
    std::string tokenLimitGuideline = defaults::kTokenLimitGuideline;
    std::vector<std::string> exitPhrases = defaults::exit_phrases();
    std::string speakerSelectionSystem = defaults::kSpeakerSelectionSystem;
    std::string speakerSelectionUser = defaults::kSpeakerSelectionUser;
    std::string judgeSystem = defaults::kJudgeSystem;
    std::string judgeExplain = defaults::kJudgeExplain;
    std::string judgeScore = defaults::kJudgeScore;
};

namespace detail {

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<std::string> nonblank_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") != std::string::npos) out.push_back(line);
    }
    return out;
}

inline std::string strip_final_newline(std::string s) {
    if (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
}

} // namespace detail

/// Loads a PromptSet from a directory; files that are absent keep the built-in
/// default. Template files are taken verbatim except for one trailing newline.
inline PromptSet load_prompt_set(const std::filesystem::path& dir) {
    PromptSet set;
    auto text = [&](const char* file, std::string& target) {
        const auto p = dir / file;
        if (std::filesystem::exists(p)) target = detail::strip_final_newline(detail::slurp(p));
    };
    auto lines = [&](const char* file, std::vector<std::string>& target) {
        const auto p = dir / file;
        if (std::filesystem::exists(p)) target = detail::nonblank_lines(detail::slurp(p));
    };
    text("experience_generated.txt", set.experienceGenerated);
    text("experience_sampled.txt", set.experienceSampled);
    lines("agent_guidelines.txt", set.agentGuidelines);
    text("token_limit_guideline.txt", set.tokenLimitGuideline);
    lines("exit_phrases.txt", set.exitPhrases);
    text("speaker_selection_system.txt", set.speakerSelectionSystem);
    text("speaker_selection_user.txt", set.speakerSelectionUser);
    text("judge_system.txt", set.judgeSystem);
    text("judge_explain.txt", set.judgeExplain);
    text("judge_score.txt", set.judgeScore);
    return set;
}

} // namespace dialoguegen
