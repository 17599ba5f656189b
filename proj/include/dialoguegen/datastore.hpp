#pragma once

// Persistence for experiences, conversations, hubs and judge reports as
// line-delimited JSON; run manifests; importers for human dialogue corpora;
// CSV and aligned-text report rendering.
//
// Layout under an output root:
//   runs/{runId}/{experiences,conversations,judge}.jsonl + manifest.json
//   hub/{runId}.jsonl
//   corpora/{name}/{subset}/conversations.jsonl

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dialoguegen/error.hpp"
#include "dialoguegen/experience.hpp"
#include "dialoguegen/groupchat.hpp"
#include "dialoguegen/judge.hpp"
#include "dialoguegen/jsonl.hpp"
#include "dialoguegen/metrics.hpp"

namespace dialoguegen {

namespace fs = std::filesystem;

enum class RecordKind { Experiences, Conversations, JudgeReports, Hub };

inline std::string_view to_string(RecordKind k) {
    switch (k) {
    case RecordKind::Experiences: return "experiences";
    case RecordKind::Conversations: return "conversations";
    case RecordKind::JudgeReports: return "judgeReports";
    case RecordKind::Hub: return "hub";
    }
    return "experiences";
}

/// Checks that `record` decodes as `kind` and returns its id (if it has one).
/// Throws SchemaError otherwise.
template <class J>
std::optional<std::string> check_record_schema(RecordKind kind, const J& record) {
    try {
        switch (kind) {
        case RecordKind::Experiences:
        case RecordKind::Hub: {
            if (record.contains("turns") || record.contains("aspectScores")) throw std::invalid_argument("not an experience");
            const Experience e = experience_from_json(record);
            const auto v = experience_violations(e, PersonaSource::Sampled);
            if (!v.empty()) throw std::invalid_argument(v.front());
            return e.id;
        }
        case RecordKind::Conversations: {
            const Conversation c = conversation_from_json(record);
            const auto v = conversation_violations(c);
            if (!v.empty()) throw std::invalid_argument(v.front());
            return c.id;
        }
        case RecordKind::JudgeReports: {
            const JudgeReport r = judge_report_from_json(record);
            return r.conversationId;
        }
        }
    } catch (const std::exception& e) {
        fail(ErrorKind::Schema, "record is not a valid " + std::string(to_string(kind)) + " record: " + e.what());
    }
    return std::nullopt;
}

/// An append-only JSONL file holding records of a single kind. Appends are
/// idempotent on record id. One writer per handle.
class DatasetHandle {
public:
    DatasetHandle(fs::path path, RecordKind kind) : path_(std::move(path)), kind_(kind) {
        for (const auto& j : jsonl::read_all(path_))
            if (auto id = check_record_schema(kind_, j)) ids_.insert(*id);
    }

    const fs::path& path() const { return path_; }
    RecordKind kind() const { return kind_; }
    bool contains(const std::string& id) const {
        std::lock_guard lock(mutex_);
        return ids_.count(id) != 0;
    }

    /// Returns false when a record with the same id is already stored.
    bool append(const ordered_json& record) {
        const auto id = check_record_schema(kind_, record);
        std::lock_guard lock(mutex_);
        if (id && ids_.count(*id)) return false;
        jsonl::append(path_, record, ErrorKind::Io);
        if (id) ids_.insert(*id);
        return true;
    }

    std::vector<ordered_json> read() const { return jsonl::read_all(path_); }

private:
    fs::path path_;
    RecordKind kind_;
    std::set<std::string> ids_;
    mutable std::mutex mutex_;
};

inline bool append_record(DatasetHandle& handle, const ordered_json& record) { return handle.append(record); }

inline std::vector<Conversation> read_conversations(const fs::path& path) {
    std::vector<Conversation> out;
    std::size_t line = 0;
    for (const auto& j : jsonl::read_all(path)) {
        ++line;
        try {
            out.push_back(conversation_from_json(j));
        } catch (const std::exception& e) {
            throw ParseError(line, path.string() + ": not a conversation: " + e.what());
        }
    }
    return out;
}

inline std::vector<Experience> read_experiences(const fs::path& path) {
    std::vector<Experience> out;
    std::size_t line = 0;
    for (const auto& j : jsonl::read_all(path)) {
        ++line;
        try {
            out.push_back(experience_from_json(j));
        } catch (const std::exception& e) {
            throw ParseError(line, path.string() + ": not an experience: " + e.what());
        }
    }
    return out;
}

inline std::vector<JudgeReport> read_judge_reports(const fs::path& path) {
    std::vector<JudgeReport> out;
    std::size_t line = 0;
    for (const auto& j : jsonl::read_all(path)) {
        ++line;
        try {
            out.push_back(judge_report_from_json(j));
        } catch (const std::exception& e) {
            throw ParseError(line, path.string() + ": not a judge report: " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct RunManifest {
    std::string runId;
    std::string configAbbrev;
    std::string startedAt;
    std::optional<std::string> finishedAt;
    std::size_t requested = 0;
    std::size_t generated = 0;
    std::size_t parsedFailures = 0;
    std::size_t batches = 0;
    std::uint64_t seed = 0;
    std::string backend;
    std::string status = "running";  // running | completed | aborted
    std::optional<std::string> error;
};

inline ordered_json to_json(const RunManifest& m) {
    ordered_json j;
    j["runId"] = m.runId;
    j["configAbbrev"] = m.configAbbrev;
    j["startedAt"] = m.startedAt;
    j["finishedAt"] = m.finishedAt ? ordered_json(*m.finishedAt) : ordered_json(nullptr);
    j["counts"] = ordered_json{{"requested", m.requested}, {"generated", m.generated}, {"parsedFailures", m.parsedFailures}};
    j["batches"] = m.batches;
    j["seed"] = m.seed;
    j["backend"] = m.backend;
    j["status"] = m.status;
    if (m.error) j["error"] = *m.error;
    return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
    RunManifest m;
    m.runId = j.at("runId").get<std::string>();
    m.configAbbrev = j.value("configAbbrev", std::string{});
    m.startedAt = j.value("startedAt", std::string{});
    if (j.contains("finishedAt") && !j["finishedAt"].is_null()) m.finishedAt = j["finishedAt"].get<std::string>();
    const auto& counts = j.at("counts");
    m.requested = counts.value("requested", std::size_t{0});
    m.generated = counts.value("generated", std::size_t{0});
    m.parsedFailures = counts.value("parsedFailures", std::size_t{0});
    m.batches = j.value("batches", std::size_t{0});
    m.seed = j.value("seed", std::uint64_t{0});
    m.backend = j.value("backend", std::string{});
    m.status = j.value("status", std::string{"running"});
    if (j.contains("error") && !j["error"].is_null()) m.error = j["error"].get<std::string>();
    return m;
}

inline void write_manifest(const fs::path& path, const RunManifest& m) {
    require(m.generated <= m.requested || m.requested == 0 || m.status != "running", ErrorKind::Precondition,
            "manifest generated count exceeds requested");
    jsonl::write_file_atomic(path, to_json(m).dump(2) + "\n");
}

inline std::optional<RunManifest> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    try {
        return manifest_from_json(nlohmann::json::parse(in));
    } catch (const std::exception& e) {
        fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Baseline corpora
// ---------------------------------------------------------------------------

enum class Corpus { DailyDialog, EmpatheticDialogues, PersonaChat };

inline std::string_view to_string(Corpus c) {
    switch (c) {
    case Corpus::DailyDialog: return "dailydialog";
    case Corpus::EmpatheticDialogues: return "empatheticdialogues";
    case Corpus::PersonaChat: return "personachat";
    }
    return "dailydialog";
}

inline std::string_view display_name(Corpus c) {
    switch (c) {
    case Corpus::DailyDialog: return "DailyDialog";
    case Corpus::EmpatheticDialogues: return "EmpatheticDialogues";
    case Corpus::PersonaChat: return "PERSONA-CHAT";
    }
    return "";
}

inline Corpus corpus_from_string(const std::string& s) {
    if (s == "dailydialog") return Corpus::DailyDialog;
    if (s == "empatheticdialogues") return Corpus::EmpatheticDialogues;
    if (s == "personachat") return Corpus::PersonaChat;
    fail(ErrorKind::Usage, "unknown corpus '" + s + "' (dailydialog|empatheticdialogues|personachat)");
}

/// Subsets to import: any of train, valid, test; "all" expands to all three.
inline std::vector<std::string> expand_subsets(const std::vector<std::string>& subsets) {
    std::vector<std::string> out;
    for (const auto& s : subsets) {
        if (s == "all") return {"train", "valid", "test"};
        if (s != "train" && s != "valid" && s != "test")
            fail(ErrorKind::Usage, "unknown subset '" + s + "' (train|valid|test|all)");
        out.push_back(s);
    }
    require(!out.empty(), ErrorKind::Usage, "no subset selected");
    return out;
}

struct ImportedCorpus {
    std::vector<Conversation> conversations;
    /// Interlocutor persona profiles aligned with speaker0/speaker1 (PERSONA-CHAT only).
    std::vector<std::pair<std::string, std::vector<std::string>>> personaPairs;
};

namespace detail {

inline Conversation human_conversation(Corpus corpus, const std::string& id) {
    Conversation c;
    c.id = id;
    c.terminationReason = TerminationReason::MaxTurns;
    c.runMeta.model = "human";
    c.runMeta.configAbbrev = std::string(display_name(corpus));
    return c;
}

inline std::string speaker_label(std::size_t i) { return "speaker" + std::to_string(i); }

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
    return s;
}

inline std::vector<std::string> read_lines(const fs::path& path, Corpus corpus) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Format, std::string(display_name(corpus)) + ": cannot open " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

// DailyDialog: one dialogue per line, utterances terminated by "__eou__".
inline void import_dailydialog_file(const fs::path& file, const std::string& subset, ImportedCorpus& out) {
    std::size_t lineNo = 0;
    for (const auto& line : read_lines(file, Corpus::DailyDialog)) {
        ++lineNo;
        if (is_blank(line)) continue;
        if (line.find("__eou__") == std::string::npos)
            fail(ErrorKind::Format, "DailyDialog: " + file.string() + " line " + std::to_string(lineNo) +
                                        " has no __eou__ separator");
        Conversation c = human_conversation(Corpus::DailyDialog,
                                            "dailydialog:" + subset + ":" + std::to_string(out.conversations.size()));
        std::size_t pos = 0;
        while (pos < line.size()) {
            auto end = line.find("__eou__", pos);
            const std::string utt = trim(std::string_view(line).substr(pos, end == std::string::npos ? std::string::npos : end - pos));
            if (!utt.empty())
                c.turns.push_back({c.turns.size(), speaker_label(c.turns.size() % 2), utt});
            if (end == std::string::npos) break;
            pos = end + 7;
        }
        if (!c.turns.empty()) out.conversations.push_back(std::move(c));
    }
}

inline void import_dailydialog(const fs::path& root, const std::vector<std::string>& subsets, ImportedCorpus& out) {
    if (fs::is_regular_file(root)) {
        import_dailydialog_file(root, "all", out);
        return;
    }
    const std::map<std::string, fs::path> files = {
        {"train", root / "train" / "dialogues_train.txt"},
        {"valid", root / "validation" / "dialogues_validation.txt"},
        {"test", root / "test" / "dialogues_test.txt"},
    };
    const bool all = subsets.size() == 3;
    const bool splitPresent = std::all_of(subsets.begin(), subsets.end(),
                                          [&](const std::string& s) { return fs::exists(files.at(s)); });
    if (!splitPresent && all && fs::exists(root / "dialogues_text.txt")) {
        import_dailydialog_file(root / "dialogues_text.txt", "all", out);
        return;
    }
    for (const auto& s : subsets) {
        if (!fs::exists(files.at(s))) fail(ErrorKind::Format, "DailyDialog: missing " + files.at(s).string());
        import_dailydialog_file(files.at(s), s, out);
    }
}

// EmpatheticDialogues: CSV with conv_id,utterance_idx,context,prompt,speaker_idx,utterance,...
// Commas inside text are encoded as "_comma_".
inline void import_empathetic(const fs::path& root, const std::vector<std::string>& subsets, ImportedCorpus& out) {
    for (const auto& s : subsets) {
        const fs::path file = fs::is_regular_file(root) ? root : root / (s + ".csv");
        const auto lines = read_lines(file, Corpus::EmpatheticDialogues);
        if (lines.empty() || lines.front().rfind("conv_id,utterance_idx,context,prompt,speaker_idx,utterance", 0) != 0)
            fail(ErrorKind::Format, "EmpatheticDialogues: " + file.string() + " lacks the expected CSV header");
        std::string currentId;
        std::map<std::string, std::size_t> speakers;
        std::optional<Conversation> current;
        auto flush = [&] {
            if (current && !current->turns.empty()) out.conversations.push_back(std::move(*current));
            current.reset();
            speakers.clear();
        };
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (is_blank(lines[i])) continue;
            const auto fields = split(lines[i], ',');
            if (fields.size() < 6)
                fail(ErrorKind::Format, "EmpatheticDialogues: " + file.string() + " line " + std::to_string(i + 1) +
                                            " has " + std::to_string(fields.size()) + " fields");
            if (fields[0] != currentId) {
                flush();
                currentId = fields[0];
                current = human_conversation(Corpus::EmpatheticDialogues, "empatheticdialogues:" + s + ":" + currentId);
            }
            const std::string text = trim(replace_all(fields[5], "_comma_", ","));
            if (text.empty()) continue;
            const auto [it, inserted] = speakers.emplace(fields[4], speakers.size());
            current->turns.push_back({current->turns.size(), speaker_label(it->second), text});
        }
        flush();
        if (fs::is_regular_file(root)) break;
    }
}

// PERSONA-CHAT (ParlAI "both_original" text): numbered lines, numbering resets
// per episode; persona lines precede tab-separated (partner, self) exchanges.
inline void import_personachat(const fs::path& root, const std::vector<std::string>& subsets, ImportedCorpus& out) {
    for (const auto& s : subsets) {
        fs::path file = root;
        if (!fs::is_regular_file(root)) {
            for (const char* variant : {"_both_original.txt", "_both_revised.txt", "_self_original.txt"}) {
                file = root / (s + variant);
                if (fs::exists(file)) break;
            }
        }
        std::optional<Conversation> current;
        std::vector<std::string> selfPersona, partnerPersona;
        auto flush = [&] {
            if (current && !current->turns.empty()) {
                if (!selfPersona.empty() && !partnerPersona.empty())
                    out.personaPairs.push_back(
                        {current->id, {join(partnerPersona, " "), join(selfPersona, " ")}});
                out.conversations.push_back(std::move(*current));
            }
            current.reset();
            selfPersona.clear();
            partnerPersona.clear();
        };
        std::size_t episode = 0;
        std::size_t lineNo = 0;
        for (const auto& line : read_lines(file, Corpus::PersonaChat)) {
            ++lineNo;
            if (is_blank(line)) continue;
            const auto space = line.find(' ');
            const std::string num = line.substr(0, space);
            if (space == std::string::npos || num.empty() ||
                !std::all_of(num.begin(), num.end(), [](unsigned char c) { return std::isdigit(c) != 0; }))
                fail(ErrorKind::Format, "PERSONA-CHAT: " + file.string() + " line " + std::to_string(lineNo) +
                                            " does not start with a line number");
            const std::string rest = line.substr(space + 1);
            if (num == "1") {
                flush();
                current = human_conversation(Corpus::PersonaChat, "personachat:" + s + ":" + std::to_string(episode++));
            }
            if (rest.rfind("your persona:", 0) == 0) {
                selfPersona.push_back(trim(rest.substr(13)));
                continue;
            }
            if (rest.rfind("partner's persona:", 0) == 0) {
                partnerPersona.push_back(trim(rest.substr(18)));
                continue;
            }
            const auto fields = split(rest, '\t');
            for (std::size_t k = 0; k < 2 && k < fields.size(); ++k) {
                const std::string utt = trim(fields[k]);
                if (utt.empty() || utt == "__SILENCE__") continue;
                current->turns.push_back({current->turns.size(), speaker_label(k), utt});
            }
        }
        flush();
        if (fs::is_regular_file(root)) break;
    }
}

} // namespace detail

/// Reads a corpus in its published distribution format and normalises it into
/// conversations with speakers speaker0/speaker1 (EmpatheticDialogues labels by
/// order of appearance).
inline ImportedCorpus read_baseline(Corpus corpus, const fs::path& path, const std::vector<std::string>& subsets) {
    if (!fs::exists(path)) fail(ErrorKind::Format, std::string(display_name(corpus)) + ": " + path.string() + " does not exist");
    const auto expanded = expand_subsets(subsets);
    ImportedCorpus out;
    switch (corpus) {
    case Corpus::DailyDialog: detail::import_dailydialog(path, expanded, out); break;
    case Corpus::EmpatheticDialogues: detail::import_empathetic(path, expanded, out); break;
    case Corpus::PersonaChat: detail::import_personachat(path, expanded, out); break;
    }
    if (out.conversations.empty())
        fail(ErrorKind::Format, std::string(display_name(corpus)) + ": no conversations found in " + path.string());
    return out;
}

/// Imports into `{outRoot}/corpora/{name}/{subsetTag}/conversations.jsonl` (plus
/// persona_pairs.jsonl for PERSONA-CHAT) and returns the conversations handle.
inline DatasetHandle import_baseline(Corpus corpus, const fs::path& path, const std::vector<std::string>& subsets,
                                     const fs::path& outRoot) {
    const ImportedCorpus imported = read_baseline(corpus, path, subsets);
    const auto expanded = expand_subsets(subsets);
    std::string tag;
    for (const auto& s : expanded) tag += (tag.empty() ? "" : "+") + s;
    if (expanded.size() == 3) tag = "all";
    const fs::path dir = outRoot / "corpora" / std::string(to_string(corpus)) / tag;
    fs::create_directories(dir);
    const fs::path file = dir / "conversations.jsonl";
    fs::remove(file);
    std::vector<std::string> lines;
    lines.reserve(imported.conversations.size());
    for (const auto& c : imported.conversations) lines.push_back(to_json(c).dump());
    jsonl::append_lines(file, lines);
    if (!imported.personaPairs.empty()) {
        const fs::path pairs = dir / "persona_pairs.jsonl";
        fs::remove(pairs);
        std::vector<std::string> pl;
        for (const auto& [id, personas] : imported.personaPairs)
            pl.push_back(ordered_json{{"conversationId", id}, {"personas", personas}}.dump());
        jsonl::append_lines(pairs, pl);
    }
    return DatasetHandle(file, RecordKind::Conversations);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class ReportFormat { Csv, TableText };

inline ReportFormat report_format_from_string(const std::string& s) {
    if (s == "csv") return ReportFormat::Csv;
    if (s == "table-text") return ReportFormat::TableText;
    fail(ErrorKind::Usage, "unknown report format '" + s + "' (csv|table-text)");
}

struct StatsRow {
    std::string dataset;
    DatasetStats stats;
};

struct MtldRow {
    std::string dataset;
    double mean = 0.0;
    double std = 0.0;
};

struct JudgeRow {
    std::string dataset;
    JudgeAggregate aggregate;
};

namespace detail {

inline std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    return "\"" + replace_all(s, "\"", "\"\"") + "\"";
}

inline std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows,
                                 ReportFormat format) {
    std::ostringstream out;
    if (format == ReportFormat::Csv) {
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << csv_field(cells[i]);
            out << "\n";
        };
        line(header);
        for (const auto& r : rows) line(r);
        return out.str();
    }
    std::vector<std::size_t> width(header.size());
    for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    auto line = [&](const std::vector<std::string>& cells) {
        std::string l;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const std::string pad(width[i] - cells[i].size(), ' ');
            l += (i ? "  " : "") + (i == 0 ? cells[i] + pad : pad + cells[i]);
        }
        while (!l.empty() && l.back() == ' ') l.pop_back();
        out << l << "\n";
    };
    line(header);
    std::size_t total = 0;
    for (auto w : width) total += w;
    out << std::string(total + 2 * (width.size() - 1), '-') << "\n";
    for (const auto& r : rows) line(r);
    return out.str();
}

} // namespace detail

inline std::string render_stats_report(const std::vector<StatsRow>& rows, ReportFormat format) {
    if (rows.empty()) fail(ErrorKind::EmptyInput, "no statistics rows");
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows)
        cells.push_back({r.dataset, detail::fixed2(r.stats.nW), detail::fixed2(r.stats.nT), detail::fixed2(r.stats.nWperT)});
    return detail::render_table({"Dataset", "nW", "nT", "nW/T"}, cells, format);
}

inline std::string render_mtld_report(const std::vector<MtldRow>& rows, ReportFormat format) {
    if (rows.empty()) fail(ErrorKind::EmptyInput, "no MTLD rows");
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) cells.push_back({r.dataset, detail::fixed2(r.mean), detail::fixed2(r.std)});
    return detail::render_table({"Dataset", "Mean MTLD", "std MTLD"}, cells, format);
}

inline std::string render_judge_report(const std::vector<JudgeRow>& rows, ReportFormat format) {
    if (rows.empty()) fail(ErrorKind::EmptyInput, "no judge rows");
    const auto kind = rows.front().aggregate.aspectSet;
    std::vector<std::string> header = {"Dataset"};
    for (const auto& id : rows.front().aggregate.aspectIds) header.push_back(id);
    header.push_back("avgScore");
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
        if (r.aggregate.aspectSet != kind) fail(ErrorKind::MixedAspectSets, "judge rows use different aspect sets");
        std::vector<std::string> line = {r.dataset};
        for (const auto& m : r.aggregate.aspectMeans) line.push_back(m ? detail::fixed2(*m) : "-");
        line.push_back(r.aggregate.avgScore ? detail::fixed2(*r.aggregate.avgScore) : "-");
        cells.push_back(std::move(line));
    }
    return detail::render_table(header, cells, format);
}

template <class Row>
fs::path export_report(const std::vector<Row>& rows, ReportFormat format, const fs::path& path) {
    std::string text;
    if constexpr (std::is_same_v<Row, StatsRow>) text = render_stats_report(rows, format);
    else if constexpr (std::is_same_v<Row, MtldRow>) text = render_mtld_report(rows, format);
    else text = render_judge_report(rows, format);
    jsonl::write_file_atomic(path, text);
    return path;
}

} // namespace dialoguegen
