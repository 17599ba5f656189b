#include "oracle.hpp"
#include "test_support.hpp"

using namespace dialoguegen;
using Catch::Approx;
using testing_support::conversation_of;

namespace {

TokenSequence seq(std::initializer_list<const char*> xs) {
    TokenSequence t;
    for (auto x : xs) t.emplace_back(x);
    return t;
}

TokenSequence random_sequence(std::mt19937_64& g, std::size_t maxLen, std::size_t maxAlphabet) {
    const std::size_t len = 1 + g() % maxLen;
    const std::size_t alpha = 1 + g() % maxAlphabet;
    TokenSequence t;
    for (std::size_t i = 0; i < len; ++i) t.push_back(std::string(1, static_cast<char>('a' + g() % alpha)));
    return t;
}

bool is_degenerate(const TokenSequence& t) {
    try {
        mtld(t);
        return false;
    } catch (const Error& e) {
        return e.kind() == ErrorKind::DegenerateText;
    }
}

} // namespace

TEST_CASE("tokenize lowercases and strips edge punctuation") {
    CHECK(tokenize("Hello, world!") == seq({"hello", "world"}));
    CHECK(tokenize("").empty());
    CHECK(tokenize("I'm here \xE2\x80\x94 really.") == seq({"i'm", "here", "really"}));
    CHECK(tokenize("  tabs\tand\nnewlines  ") == seq({"tabs", "and", "newlines"}));
    CHECK(tokenize("\xC3\x89T\xC3\x89 caf\xC3\xA9") == seq({"\xC3\xA9t\xC3\xA9", "caf\xC3\xA9"}));
    CHECK(tokenize("non\xC2\xA0" "breaking") == seq({"non", "breaking"}));
    CHECK(tokenize("... --- !!!").empty());
}

TEST_CASE("hand-traced MTLD fixtures") {
    const auto ab = seq({"a", "b", "a", "b", "a", "b", "a", "b", "a", "b"});
    CHECK(mtld_one_direction(ab) == Approx(10.0 / 3.0).margin(1e-12));
    const auto r = mtld(ab);
    CHECK(r.forward == Approx(10.0 / 3.0).margin(1e-12));
    CHECK(r.backward == Approx(10.0 / 3.0).margin(1e-12));
    CHECK(mtld_one_direction(seq({"a", "a", "a", "a"})) == Approx(2.0).margin(1e-12));

    CHECK_THROWS_MATCHES(mtld(seq({"a", "b", "c", "d"})), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) { return e.kind() == ErrorKind::DegenerateText; }));
    CHECK(is_degenerate(seq({"a"})));
    CHECK(is_degenerate({}));
}

TEST_CASE("MTLD matches the rational reference on random sequences") {
    std::mt19937_64 g(12345);
    int compared = 0;
    for (int i = 0; i < 2000; ++i) {
        const auto t = random_sequence(g, 200, 10);
        const auto expected = oracle::mtld_mean(t);
        if (!expected) {
            CHECK(is_degenerate(t));
            continue;
        }
        const auto got = mtld(t);
        REQUIRE(got.mean == Approx(*expected).margin(1e-9));
        CHECK(got.mean == (got.forward + got.backward) / 2.0);
        ++compared;
    }
    CHECK(compared > 1500);
}

TEST_CASE("MTLD is invariant under token relabeling") {
    std::mt19937_64 g(99);
    for (int i = 0; i < 200; ++i) {
        auto t = random_sequence(g, 120, 8);
        if (is_degenerate(t)) continue;
        TokenSequence relabeled;
        for (const auto& x : t) relabeled.push_back("w" + std::to_string(static_cast<int>('z' - x[0])));
        CHECK(mtld(t).mean == Approx(mtld(relabeled).mean).margin(1e-12));
    }
}

TEST_CASE("threshold must lie in (0,1)") {
    const auto t = seq({"a", "a"});
    CHECK_THROWS_AS(mtld_one_direction(t, 0.0), Error);
    CHECK_THROWS_AS(mtld_one_direction(t, 1.0), Error);
}

TEST_CASE("conversation MTLD joins turns with spaces") {
    const auto c = conversation_of("c", {"a b a", "b a b", "a b a b"});
    CHECK(conversation_mtld(c) == Approx(10.0 / 3.0).margin(1e-12));
    // "a b" + "a" glued without separator would read "a ba".
    CHECK(conversation_text(c) == "a b a b a b a b a b");
}

TEST_CASE("dataset stats use the mean of per-conversation ratios") {
    auto words = [](int n) {
        std::string s;
        for (int i = 0; i < n; ++i) s += (i ? " w" : "w") + std::to_string(i);
        return s;
    };
    // 100 words over 10 turns, 30 words over 2 turns.
    std::vector<std::string> turnsA(10, words(10));
    std::vector<std::string> turnsB = {words(15), words(15)};
    const std::vector<Conversation> convs = {conversation_of("a", turnsA), conversation_of("b", turnsB)};
    const auto s = dataset_stats(convs);
    const std::vector<oracle::ConvCounts> counts = {{100, 10}, {30, 2}};
    CHECK(s.nW == Approx(oracle::mean_words(counts)));
    CHECK(s.nT == Approx(oracle::mean_turns(counts)));
    CHECK(s.nWperT == Approx(oracle::mean_of_ratios(counts)));
    CHECK(s.nW == 65.0);
    CHECK(s.nT == 6.0);
    CHECK(s.nWperT == 12.5);
    CHECK(s.nWperT != Approx(s.nW / s.nT));

    const auto single = dataset_stats({conversation_of("x", {words(5), words(5), words(5), words(5)})});
    CHECK(single.nWperT == 5.0);
    CHECK_THROWS_AS(dataset_stats({}), Error);
}

TEST_CASE("mtld summary excludes degenerate conversations and reports them") {
    const std::vector<Conversation> convs = {
        conversation_of("ok1", {"a b a b a b a b a b"}),
        conversation_of("one-token", {"hello"}),
        conversation_of("ok2", {"a a a a"}),
    };
    const auto s = mtld_summary(convs);
    CHECK(s.scored == 2);
    REQUIRE(s.degenerate.size() == 1);
    CHECK(s.degenerate.front() == "one-token");
    CHECK(s.mean == Approx((10.0 / 3.0 + 2.0) / 2.0));
    // Sample standard deviation of {10/3, 2}.
    CHECK(s.std == Approx(std::sqrt(2.0) * (10.0 / 3.0 - 2.0) / 2.0));
}
