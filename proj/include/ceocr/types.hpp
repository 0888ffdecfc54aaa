#pragma once

#include <optional>
#include <string>
#include <vector>

namespace ceocr {

// One model's text output for a sample.
struct Candidate {
    std::string model_id;
    std::string text;
    std::optional<std::vector<double>> embedding;
};

// One input with the candidate outputs collected for it.
struct Sample {
    std::string sample_id;
    std::optional<std::string> image_ref;
    std::optional<std::string> truth;
    std::vector<Candidate> candidates;
};

// Checks structural invariants: at least two candidates, unique non-empty
// model ids, and consistent embedding dimensions where embeddings are
// present. Throws DataError naming the sample on violation.
void validate_sample(const Sample& sample);

} // namespace ceocr
