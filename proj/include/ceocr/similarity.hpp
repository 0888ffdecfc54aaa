#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ceocr/types.hpp"

namespace ceocr {

enum class DivergenceMetric { EditDistance, CosineDistance };

const char* to_string(DivergenceMetric metric);
DivergenceMetric divergence_metric_from_string(std::string_view name);

// Minimum number of single-character insertions, deletions and substitutions
// transforming a into b. Characters are unicode scalar values; whitespace and
// indentation count like any other character.
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
std::size_t levenshtein(std::string_view a, std::string_view b);

// levenshtein(a, b) / max(|a|, |b|), in [0, 1]. Both strings empty -> 0.
double normalized_edit_divergence(std::u32string_view a, std::u32string_view b);
double normalized_edit_divergence(std::string_view a, std::string_view b);

// (1 - cos(u, v)) / 2, mapping cosine similarity in [-1, 1] to a divergence
// in [0, 1]. Throws DataError on dimension mismatch or a zero-norm vector.
double cosine_divergence(std::span<const double> u, std::span<const double> v);

// Symmetric pairwise divergences between the candidates of one sample.
struct DivergenceMatrix {
    std::size_t n = 0;
    DivergenceMetric metric = DivergenceMetric::EditDistance;
    std::vector<double> entries; // row-major n*n, zero diagonal, values in [0,1]

    double at(std::size_t i, std::size_t j) const { return entries[i * n + j]; }
    double& at(std::size_t i, std::size_t j) { return entries[i * n + j]; }
};

// Builds the full matrix for a sample. Cosine mode requires every candidate
// to carry an embedding. Throws DataError when n < 2 or a precondition fails.
DivergenceMatrix divergence_matrix(const Sample& sample, DivergenceMetric metric);

// Edit-mode matrix straight from texts, used by scoring paths that have no
// Sample wrapper.
DivergenceMatrix divergence_matrix_from_texts(std::span<const std::string> texts);

// 16-hex-digit FNV-1a digest over the metric, size and entry bytes.
std::string matrix_digest(const DivergenceMatrix& matrix);

} // namespace ceocr
