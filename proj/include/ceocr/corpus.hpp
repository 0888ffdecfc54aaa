#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ceocr/types.hpp"

namespace ceocr {

struct CorpusCandidate {
    std::string model;
    std::string text;
    std::optional<std::vector<double>> embedding;
};

// One line of a corpus JSONL file. Candidates are present when outputs were
// pre-recorded; otherwise they are fetched from configured backends at run
// time.
struct CorpusRecord {
    std::string sample_id;
    std::optional<std::string> image_path;
    std::optional<std::string> truth;
    std::optional<std::string> label; // "good" | "bad", for verification eval
    std::vector<CorpusCandidate> candidates;
};

// Parses one JSON object per line. Validation errors carry the source name
// and line number; duplicate sample ids are rejected. Blank lines are
// skipped; an empty stream yields an empty corpus.
std::vector<CorpusRecord> parse_corpus(std::istream& in, const std::string& source_name);
std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path);

Sample to_sample(const CorpusRecord& record);
nlohmann::ordered_json record_to_json(const CorpusRecord& record);

// Per-sample output of the score/ensemble/route/eval commands.
struct ReportRecord {
    std::string sample_id;
    double delta = 0.0;
    std::vector<std::pair<std::string, double>> e_bar;   // (model, value)
    std::vector<std::pair<std::string, double>> weights; // (model, value)
    std::string decision; // "ensemble" | "expert"
    std::optional<std::string> ensemble_text;
    std::optional<std::string> final_text;
    bool expert_used = false;
    std::optional<std::string> rover_text;
    std::vector<std::pair<std::string, double>> scores; // per-model, vs truth
    std::optional<double> ensemble_score;
    std::optional<double> rover_score;
    std::optional<std::string> warning;
    std::optional<double> timing_ms;
};

// Stable field order; timing is dropped when include_timing is false.
nlohmann::ordered_json report_to_json(const ReportRecord& record, bool include_timing);

} // namespace ceocr
