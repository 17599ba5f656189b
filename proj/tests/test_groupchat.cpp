#include "test_support.hpp"

using namespace dialoguegen;
using testing_support::experience_with;
using testing_support::mock_backend;

namespace {

ExperimentConfig chat_config(int maxTurns, bool chatty = true) {
    ExperimentConfig c;
    c.abbreviation = "T";
    c.maxTurns = maxTurns;
    c.chatty = chatty;
    return c;
}

ChatOptions round_robin() {
    ChatOptions o;
    o.policy = selection_policy(SelectionKind::RoundRobin);
    return o;
}

std::vector<AgentProfile> agents_named(const std::vector<std::string>& names) {
    std::vector<AgentProfile> out;
    for (const auto& n : names) out.push_back({n, n + " (tester)", "You are " + n + "."});
    return out;
}

const char* kChatter = R"({"repeat":true,"replies":["Sure thing.","Not today.","Maybe later then.","Sounds fun."]})";

} // namespace

TEST_CASE("agent system messages") {
    auto p = testing_support::persona("Ann");
    p.speechStyle = "sarcastic, brief";
    const auto chatty = render_agent(p, true);
    const auto shortAgent = render_agent(p, false);
    const std::string limit = "You must be concise and limit your response to 30 tokens at most.";
    CHECK(chatty.systemMessage.find(limit) == std::string::npos);
    CHECK(shortAgent.systemMessage.find(limit) != std::string::npos);
    CHECK(chatty.systemMessage.find("sarcastic, brief") != std::string::npos);
    for (const auto& g : defaults::agent_guidelines()) CHECK(chatty.systemMessage.find(g) != std::string::npos);
    CHECK(chatty.name == "Ann");
    CHECK(chatty.description.find("baker") != std::string::npos);
}

TEST_CASE("initiator rendering matches the golden text") {
    Experience e = experience_with({"Lena", "Marco", "Ines"});
    e.relations = {{"Lena", "Marco", "neighbours"}, {"Marco", "Ines", "siblings"}};
    e.situation = "The town square on the first warm evening of spring.";
    e.topic = "Whether to volunteer at the weekend festival.";
    e.conversationStarter = "Did you hear about the festival?";
    const std::string golden = testing_support::read_file(std::string(DG_TEST_DATA) + "/initiator_golden.txt");
    CHECK(render_initiator(e) == golden);
    CHECK(render_initiator(e) == render_initiator(e));
}

TEST_CASE("round-robin selection") {
    const auto agents = agents_named({"A", "B", "C"});
    CHECK(round_robin_next({}, agents) == "A");
    CHECK(round_robin_next({{0, "A", "x"}, {1, "B", "y"}}, agents) == "C");
    CHECK(round_robin_next({{0, "C", "x"}}, agents) == "A");
    CHECK_THROWS_AS(round_robin_next({}, {}), Error);
}

TEST_CASE("model-driven selection: match, retry, fallback") {
    const auto agents = agents_named({"A", "B"});
    const auto policy = selection_policy(SelectionKind::ModelDriven);
    const std::vector<Turn> history = {{0, "A", "hello"}};

    auto backend = mock_backend(R"({"reply":"Zed"}
{"reply":"Zed"}
)");
    CHECK(select_next_speaker(policy, history, agents, backend, "start") == "B");
    CHECK(backend.script->remaining() == 0);

    backend = mock_backend(R"({"reply":"Zed"}
{"reply":"  b. "}
)");
    CHECK(select_next_speaker(policy, history, agents, backend, "start") == "B");

    backend = mock_backend(R"({"reply":"I think A should speak next."})");
    CHECK(select_next_speaker(policy, {}, agents, backend, "start") == "A");

    backend = mock_backend(R"({"match":"[A, B]","reply":"A"})");
    CHECK(select_next_speaker(policy, history, agents, backend, "start") == "A");
}

TEST_CASE("exit phrases are matched case-insensitively as substrings") {
    const auto& phrases = defaults::exit_phrases();
    CHECK(contains_exit_phrase("Lovely, but I have to go now.", phrases));
    CHECK(contains_exit_phrase("OK. i HAVE to LEAVE now. bye", phrases));
    CHECK_FALSE(contains_exit_phrase("I have to go now", phrases));  // the phrase includes the full stop
    CHECK_FALSE(contains_exit_phrase("I have to go", phrases));
}

TEST_CASE("chat stops at maxTurns") {
    auto backend = mock_backend(kChatter);
    const auto conv = run_group_chat(experience_with({"A", "B"}), chat_config(3), backend, "c1", round_robin());
    CHECK(conv.turns.size() == 3);
    CHECK(conv.terminationReason == TerminationReason::MaxTurns);
    CHECK(conversation_violations(conv).empty());
    for (std::size_t i = 0; i < conv.turns.size(); ++i) CHECK(conv.turns[i].index == i);
}

TEST_CASE("chat stops at an exit phrase") {
    auto backend = mock_backend(R"({"reply":"Hi all."}
{"reply":"Lovely, but I have to go now."}
{"reply":"never used"}
)");
    const auto conv = run_group_chat(experience_with({"A", "B"}), chat_config(7), backend, "c2", round_robin());
    CHECK(conv.turns.size() == 2);
    CHECK(conv.terminationReason == TerminationReason::ExitPhrase);
}

TEST_CASE("gateway errors keep the partial conversation") {
    auto backend = mock_backend(R"({"reply":"first"}
{"reply":"second"}
)");
    const auto conv = run_group_chat(experience_with({"A", "B"}), chat_config(5), backend, "c3", round_robin());
    CHECK(conv.turns.size() == 2);
    CHECK(conv.terminationReason == TerminationReason::Error);
    REQUIRE(conv.error);
    CHECK(conv.error->find("ScriptExhausted") != std::string::npos);
}

TEST_CASE("five personas, five turns: everyone speaks once") {
    auto backend = mock_backend(kChatter);
    const auto conv = run_group_chat(experience_with({"A", "B", "C", "D", "E"}), chat_config(5), backend, "c4",
                                     round_robin());
    std::set<std::string> speakers;
    for (const auto& t : conv.turns) speakers.insert(t.speaker);
    CHECK(speakers.size() == 5);
}

TEST_CASE("shared history grows by prefix and is broadcast") {
    auto backend = mock_backend(kChatter);
    std::vector<CompletionRequest> requests;
    auto opts = round_robin();
    opts.onTurnRequest = [&](std::size_t, const CompletionRequest& r) { requests.push_back(r); };
    const auto conv = run_group_chat(experience_with({"A", "B", "C"}), chat_config(6), backend, "c5", opts);
    REQUIRE(requests.size() == 6);
    for (std::size_t i = 0; i + 1 < requests.size(); ++i) {
        const auto& cur = requests[i].messages;
        const auto& next = requests[i + 1].messages;
        REQUIRE(next.size() == cur.size() + 1);
        // Everything after the speaker's own system message is shared and only grows.
        for (std::size_t k = 1; k < cur.size(); ++k) CHECK(cur[k] == next[k]);
        CHECK(next.back().content == conv.turns[i].text);
        CHECK(next.back().name == conv.turns[i].speaker);
    }
    CHECK(requests[0].messages[1].name == std::string(kInitiatorName));
}

TEST_CASE("replies echoing the speaker name are cleaned") {
    auto backend = mock_backend(R"({"repeat":true,"reply":"A: hello there"})");
    const auto conv = run_group_chat(experience_with({"A", "B"}), chat_config(1), backend, "c6", round_robin());
    CHECK(conv.turns[0].text == "hello there");
}

TEST_CASE("conversations are deterministic under the mock backend") {
    const auto e = experience_with({"A", "B", "C"});
    auto b1 = mock_backend(kChatter);
    auto b2 = mock_backend(kChatter);
    const auto c1 = run_group_chat(e, chat_config(7), b1, "c", round_robin());
    const auto c2 = run_group_chat(e, chat_config(7), b2, "c", round_robin());
    CHECK(to_json(c1).dump() == to_json(c2).dump());
}

TEST_CASE("conversation JSON round-trip and schema checks") {
    auto backend = mock_backend(kChatter);
    auto opts = round_robin();
    opts.meta = {"mock", "T", "generated", "", "", 5};
    const auto c = run_group_chat(experience_with({"A", "B"}), chat_config(4), backend, "rt", opts);
    const auto back = conversation_from_json(nlohmann::json::parse(to_json(c).dump()));
    CHECK(to_json(back).dump() == to_json(c).dump());

    auto broken = c;
    broken.turns[1].index = 7;
    CHECK_FALSE(conversation_violations(broken).empty());
    broken = c;
    broken.turns[0].text.clear();
    CHECK_FALSE(conversation_violations(broken).empty());
}
