#pragma once

// Lexical diversity (MTLD) and per-dataset turn statistics.

#include <cmath>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "dialoguegen/error.hpp"
#include "dialoguegen/groupchat.hpp"

namespace dialoguegen {

using TokenSequence = std::vector<std::string>;

namespace unicode {

/// Decodes one UTF-8 code point at `i`, advancing it. Malformed bytes decode
/// as themselves (Latin-1) so tokenization never fails.
inline char32_t decode(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) {
        return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
    };
    auto byte = [&](std::size_t k) { return static_cast<char32_t>(static_cast<unsigned char>(s[i + k]) & 0x3F); };
    if (b0 < 0x80) {
        i += 1;
        return b0;
    }
    if ((b0 & 0xE0) == 0xC0 && cont(1)) {
        char32_t cp = (static_cast<char32_t>(b0 & 0x1F) << 6) | byte(1);
        i += 2;
        return cp;
    }
    if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
        char32_t cp = (static_cast<char32_t>(b0 & 0x0F) << 12) | (byte(1) << 6) | byte(2);
        i += 3;
        return cp;
    }
    if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
        char32_t cp = (static_cast<char32_t>(b0 & 0x07) << 18) | (byte(1) << 12) | (byte(2) << 6) | byte(3);
        i += 4;
        return cp;
    }
    i += 1;
    return b0;
}

inline void encode(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

inline bool is_space(char32_t c) {
    return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
           (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

inline bool is_punct(char32_t c) {
    if (c < 0x80) return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
                         (c >= 0x7B && c <= 0x7E);
    return c == 0xA1 || c == 0xA7 || c == 0xAB || c == 0xB6 || c == 0xB7 || c == 0xBB || c == 0xBF ||
           (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) || (c >= 0x3001 && c <= 0x3003) ||
           (c >= 0x3008 && c <= 0x3011) || (c >= 0x3014 && c <= 0x301F) || (c >= 0xFF01 && c <= 0xFF0F) ||
           (c >= 0xFF1A && c <= 0xFF20) || (c >= 0xFF3B && c <= 0xFF40) || (c >= 0xFF5B && c <= 0xFF65);
}

/// Simple case folding for ASCII, Latin-1, Greek and Cyrillic capitals.
inline char32_t to_lower(char32_t c) {
    if (c >= 'A' && c <= 'Z') return c + 32;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
    if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 32;
    if (c >= 0x410 && c <= 0x42F) return c + 32;
    if (c >= 0x400 && c <= 0x40F) return c + 80;
    return c;
}

} // namespace unicode

/// Lowercases, splits on Unicode whitespace, strips leading and trailing
/// punctuation from each piece and drops pieces that end up empty. Internal
/// punctuation (apostrophes, hyphens) is kept.
inline TokenSequence tokenize(std::string_view text) {
    TokenSequence tokens;
    std::vector<char32_t> piece;
    auto flush = [&] {
        std::size_t b = 0, e = piece.size();
        while (b < e && unicode::is_punct(piece[b])) ++b;
        while (e > b && unicode::is_punct(piece[e - 1])) --e;
        if (b < e) {
            std::string tok;
            for (std::size_t k = b; k < e; ++k) unicode::encode(piece[k], tok);
            tokens.push_back(std::move(tok));
        }
        piece.clear();
    };
    for (std::size_t i = 0; i < text.size();) {
        const char32_t cp = unicode::decode(text, i);
        if (unicode::is_space(cp)) flush();
        else piece.push_back(unicode::to_lower(cp));
    }
    flush();
    return tokens;
}

inline constexpr double kDefaultMtldThreshold = 0.72;

/// One MTLD pass. A factor closes whenever the running type-token ratio drops
/// below `threshold`; the leftover segment contributes (1 - TTR)/(1 - threshold).
inline double mtld_one_direction(const TokenSequence& tokens, double threshold = kDefaultMtldThreshold) {
    require(threshold > 0.0 && threshold < 1.0, ErrorKind::Precondition, "MTLD threshold must be in (0,1)");
    if (tokens.empty()) fail(ErrorKind::DegenerateText, "empty token sequence");
    double factors = 0.0;
    std::unordered_set<std::string_view> types;
    std::size_t count = 0;
    for (const auto& tok : tokens) {
        ++count;
        types.insert(tok);
        const double ttr = static_cast<double>(types.size()) / static_cast<double>(count);
        if (ttr < threshold) {
            factors += 1.0;
            types.clear();
            count = 0;
        }
    }
    if (count > 0) {
        const double ttr = static_cast<double>(types.size()) / static_cast<double>(count);
        factors += (1.0 - ttr) / (1.0 - threshold);
    }
    if (factors == 0.0)
        fail(ErrorKind::DegenerateText, "type-token ratio never fell below the threshold (" +
                                            std::to_string(tokens.size()) + " tokens)");
    return static_cast<double>(tokens.size()) / factors;
}

struct MtldResult {
    double forward = 0.0;
    double backward = 0.0;
    double mean = 0.0;
};

inline MtldResult mtld(const TokenSequence& tokens, double threshold = kDefaultMtldThreshold) {
    MtldResult r;
    r.forward = mtld_one_direction(tokens, threshold);
    const TokenSequence reversed(tokens.rbegin(), tokens.rend());
    r.backward = mtld_one_direction(reversed, threshold);
    r.mean = (r.forward + r.backward) / 2.0;
    return r;
}

inline std::string conversation_text(const Conversation& conv) {
    std::string text;
    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
        if (i) text += ' ';
        text += conv.turns[i].text;
    }
    return text;
}

inline double conversation_mtld(const Conversation& conv, double threshold = kDefaultMtldThreshold) {
    require(!conv.turns.empty(), ErrorKind::Precondition, "conversation " + conv.id + " has no turns");
    return mtld(tokenize(conversation_text(conv)), threshold).mean;
}

struct DatasetStats {
    double nW = 0.0;
    double nT = 0.0;
    double nWperT = 0.0;
    std::size_t conversations = 0;
};

/// nW and nT are per-conversation means; nW/T is the mean of per-conversation
/// ratios, not nW/nT.
inline DatasetStats dataset_stats(const std::vector<Conversation>& convs) {
    if (convs.empty()) fail(ErrorKind::EmptyDataset, "no conversations");
    DatasetStats s;
    for (const auto& c : convs) {
        require(!c.turns.empty(), ErrorKind::Precondition, "conversation " + c.id + " has no turns");
        std::size_t words = 0;
        for (const auto& t : c.turns) words += tokenize(t.text).size();
        const double w = static_cast<double>(words);
        const double t = static_cast<double>(c.turns.size());
        s.nW += w;
        s.nT += t;
        s.nWperT += w / t;
    }
    const double n = static_cast<double>(convs.size());
    s.nW /= n;
    s.nT /= n;
    s.nWperT /= n;
    s.conversations = convs.size();
    return s;
}

struct MtldSummary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
    std::size_t scored = 0;
    std::vector<std::string> degenerate;  // ids excluded from mean/std
    std::vector<std::pair<std::string, double>> perConversation;
};

/// MTLD per conversation; conversations that raise DegenerateText (or have
/// no turns) are listed and excluded from the summary.
inline MtldSummary mtld_summary(const std::vector<Conversation>& convs, double threshold = kDefaultMtldThreshold) {
    if (convs.empty()) fail(ErrorKind::EmptyDataset, "no conversations");
    MtldSummary s;
    for (const auto& c : convs) {
        if (c.turns.empty()) {
            s.degenerate.push_back(c.id);
            continue;
        }
        try {
            s.perConversation.emplace_back(c.id, conversation_mtld(c, threshold));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::DegenerateText) throw;
            s.degenerate.push_back(c.id);
        }
    }
    s.scored = s.perConversation.size();
    if (s.scored == 0) return s;
    for (const auto& [id, v] : s.perConversation) s.mean += v;
    s.mean /= static_cast<double>(s.scored);
    if (s.scored > 1) {
        double ss = 0.0;
        for (const auto& [id, v] : s.perConversation) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.scored - 1));
    }
    return s;
}

} // namespace dialoguegen
