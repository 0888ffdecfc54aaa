#include "ceocr/types.hpp"

#include <unordered_set>

#include "ceocr/errors.hpp"

namespace ceocr {

void validate_sample(const Sample& sample) {
    if (sample.candidates.size() < 2) {
        throw DataError("sample '" + sample.sample_id + "': needs at least 2 candidates, has " +
                        std::to_string(sample.candidates.size()));
    }
    std::unordered_set<std::string> seen;
    std::size_t embedding_dim = 0;
    for (const auto& c : sample.candidates) {
        if (c.model_id.empty()) {
            throw DataError("sample '" + sample.sample_id + "': candidate with empty model_id");
        }
        if (!seen.insert(c.model_id).second) {
            throw DataError("sample '" + sample.sample_id + "': duplicate model_id '" +
                            c.model_id + "'");
        }
        if (c.embedding) {
            if (c.embedding->empty()) {
                throw DataError("sample '" + sample.sample_id + "': empty embedding for '" +
                                c.model_id + "'");
            }
            if (embedding_dim == 0) {
                embedding_dim = c.embedding->size();
            } else if (c.embedding->size() != embedding_dim) {
                throw DataError("sample '" + sample.sample_id + "': embedding dimension mismatch (" +
                                std::to_string(c.embedding->size()) + " vs " +
                                std::to_string(embedding_dim) + ") for '" + c.model_id + "'");
            }
        }
    }
}

} // namespace ceocr
