#include "ceocr/corpus.hpp"

#include <fstream>
#include <istream>
#include <unordered_set>

#include "ceocr/errors.hpp"

namespace ceocr {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& message) {
    throw DataError(source + ":" + std::to_string(line) + ": " + message);
}

std::string require_string(const json& j, const char* key, const std::string& source,
                           std::size_t line) {
    if (!j.contains(key)) fail(source, line, std::string("missing field '") + key + "'");
    if (!j[key].is_string()) fail(source, line, std::string("field '") + key + "' must be a string");
    return j[key].get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* key,
                                           const std::string& source, std::size_t line) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_string()) fail(source, line, std::string("field '") + key + "' must be a string");
    return j[key].get<std::string>();
}

} // namespace

std::vector<CorpusRecord> parse_corpus(std::istream& in, const std::string& source_name) {
    std::vector<CorpusRecord> records;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) fail(source_name, line_no, "invalid JSON");
        if (!j.is_object()) fail(source_name, line_no, "record must be a JSON object");

        CorpusRecord record;
        record.sample_id = require_string(j, "sample_id", source_name, line_no);
        if (record.sample_id.empty()) fail(source_name, line_no, "sample_id must be non-empty");
        if (!seen_ids.insert(record.sample_id).second) {
            fail(source_name, line_no, "duplicate sample_id '" + record.sample_id + "'");
        }
        record.image_path = optional_string(j, "image_path", source_name, line_no);
        record.truth = optional_string(j, "truth", source_name, line_no);
        record.label = optional_string(j, "label", source_name, line_no);
        if (record.label && *record.label != "good" && *record.label != "bad") {
            fail(source_name, line_no,
                 "sample '" + record.sample_id + "': label must be \"good\" or \"bad\"");
        }

        if (j.contains("candidates") && !j["candidates"].is_null()) {
            if (!j["candidates"].is_array()) {
                fail(source_name, line_no, "field 'candidates' must be an array");
            }
            std::unordered_set<std::string> models;
            std::size_t dim = 0;
            for (const auto& cj : j["candidates"]) {
                if (!cj.is_object()) {
                    fail(source_name, line_no, "candidate entries must be objects");
                }
                CorpusCandidate candidate;
                candidate.model = require_string(cj, "model", source_name, line_no);
                if (candidate.model.empty()) {
                    fail(source_name, line_no,
                         "sample '" + record.sample_id + "': candidate model must be non-empty");
                }
                if (!models.insert(candidate.model).second) {
                    fail(source_name, line_no, "sample '" + record.sample_id +
                                                   "': duplicate candidate model '" +
                                                   candidate.model + "'");
                }
                candidate.text = require_string(cj, "text", source_name, line_no);
                if (cj.contains("embedding") && !cj["embedding"].is_null()) {
                    if (!cj["embedding"].is_array() || cj["embedding"].empty()) {
                        fail(source_name, line_no,
                             "sample '" + record.sample_id +
                                 "': embedding must be a non-empty array of numbers");
                    }
                    std::vector<double> vec;
                    vec.reserve(cj["embedding"].size());
                    for (const auto& v : cj["embedding"]) {
                        if (!v.is_number()) {
                            fail(source_name, line_no,
                                 "sample '" + record.sample_id + "': embedding entries must be numbers");
                        }
                        vec.push_back(v.get<double>());
                    }
                    if (dim == 0) {
                        dim = vec.size();
                    } else if (vec.size() != dim) {
                        fail(source_name, line_no,
                             "sample '" + record.sample_id + "': embedding dimension mismatch");
                    }
                    candidate.embedding = std::move(vec);
                }
                record.candidates.push_back(std::move(candidate));
            }
            if (record.candidates.size() < 2) {
                fail(source_name, line_no,
                     "sample '" + record.sample_id + "': needs at least 2 candidates, has " +
                         std::to_string(record.candidates.size()));
            }
        }
        records.push_back(std::move(record));
    }
    return records;
}

std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path.string());
    return parse_corpus(in, path.string());
}

Sample to_sample(const CorpusRecord& record) {
    Sample sample;
    sample.sample_id = record.sample_id;
    sample.image_ref = record.image_path;
    sample.truth = record.truth;
    for (const auto& c : record.candidates) {
        sample.candidates.push_back(Candidate{c.model, c.text, c.embedding});
    }
    return sample;
}

ordered_json record_to_json(const CorpusRecord& record) {
    ordered_json j;
    j["sample_id"] = record.sample_id;
    if (record.image_path) j["image_path"] = *record.image_path;
    if (record.truth) j["truth"] = *record.truth;
    if (record.label) j["label"] = *record.label;
    if (!record.candidates.empty()) {
        ordered_json candidates = ordered_json::array();
        for (const auto& c : record.candidates) {
            ordered_json cj;
            cj["model"] = c.model;
            cj["text"] = c.text;
            if (c.embedding) cj["embedding"] = *c.embedding;
            candidates.push_back(std::move(cj));
        }
        j["candidates"] = std::move(candidates);
    }
    return j;
}

ordered_json report_to_json(const ReportRecord& record, bool include_timing) {
    ordered_json j;
    j["sample_id"] = record.sample_id;
    j["delta"] = record.delta;
    ordered_json e_bar;
    for (const auto& [model, value] : record.e_bar) e_bar[model] = value;
    j["e_bar"] = std::move(e_bar);
    ordered_json weights;
    for (const auto& [model, value] : record.weights) weights[model] = value;
    j["weights"] = std::move(weights);
    j["decision"] = record.decision;
    if (record.ensemble_text) j["ensemble_text"] = *record.ensemble_text;
    if (record.final_text) j["final_text"] = *record.final_text;
    j["expert_used"] = record.expert_used;
    if (record.rover_text) j["rover_text"] = *record.rover_text;
    if (!record.scores.empty() || record.ensemble_score || record.rover_score) {
        ordered_json scores;
        for (const auto& [model, value] : record.scores) scores[model] = value;
        if (record.ensemble_score) scores["ensemble"] = *record.ensemble_score;
        if (record.rover_score) scores["rover"] = *record.rover_score;
        j["scores"] = std::move(scores);
    }
    if (record.warning) j["warning"] = *record.warning;
    if (include_timing && record.timing_ms) j["timing_ms"] = *record.timing_ms;
    return j;
}

} // namespace ceocr
