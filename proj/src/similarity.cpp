#include "ceocr/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>

#include "ceocr/errors.hpp"
#include "ceocr/text.hpp"

namespace ceocr {

const char* to_string(DivergenceMetric metric) {
    switch (metric) {
        case DivergenceMetric::EditDistance: return "edit";
        case DivergenceMetric::CosineDistance: return "cosine";
    }
    return "?";
}

DivergenceMetric divergence_metric_from_string(std::string_view name) {
    if (name == "edit") return DivergenceMetric::EditDistance;
    if (name == "cosine") return DivergenceMetric::CosineDistance;
    throw ConfigError("unknown divergence metric '" + std::string(name) +
                      "' (expected edit|cosine)");
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
    // Shared prefixes and suffixes never contribute edits.
    while (!a.empty() && !b.empty() && a.front() == b.front()) {
        a.remove_prefix(1);
        b.remove_prefix(1);
    }
    while (!a.empty() && !b.empty() && a.back() == b.back()) {
        a.remove_suffix(1);
        b.remove_suffix(1);
    }
    if (a.empty()) return b.size();
    if (b.empty()) return a.size();
    if (b.size() > a.size()) std::swap(a, b); // keep the row over the shorter string

    const std::size_t m = b.size();
    std::vector<std::uint32_t> row(m + 1);
    std::iota(row.begin(), row.end(), 0u);

    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::uint32_t diag = row[0];
        row[0] = static_cast<std::uint32_t>(i);
        const char32_t ca = a[i - 1];
        for (std::size_t j = 1; j <= m; ++j) {
            const std::uint32_t up = row[j];
            std::uint32_t best = diag + (ca != b[j - 1]);
            const std::uint32_t del = up + 1;
            if (del < best) best = del;
            const std::uint32_t ins = row[j - 1] + 1;
            if (ins < best) best = ins;
            row[j] = best;
            diag = up;
        }
    }
    return row[m];
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
    return levenshtein(utf8_decode(a), utf8_decode(b));
}

double normalized_edit_divergence(std::u32string_view a, std::u32string_view b) {
    const std::size_t longest = std::max(a.size(), b.size());
    if (longest == 0) return 0.0;
    return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

double normalized_edit_divergence(std::string_view a, std::string_view b) {
    return normalized_edit_divergence(utf8_decode(a), utf8_decode(b));
}

double cosine_divergence(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw DataError("cosine divergence: dimension mismatch (" + std::to_string(u.size()) +
                        " vs " + std::to_string(v.size()) + ")");
    }
    if (u.empty()) throw DataError("cosine divergence: empty vectors");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) throw DataError("cosine divergence: zero-norm vector");
    double cosine = dot / (std::sqrt(nu) * std::sqrt(nv));
    cosine = std::clamp(cosine, -1.0, 1.0);
    return (1.0 - cosine) / 2.0;
}

namespace {

DivergenceMatrix build_matrix(std::size_t n, DivergenceMetric metric) {
    DivergenceMatrix m;
    m.n = n;
    m.metric = metric;
    m.entries.assign(n * n, 0.0);
    return m;
}

} // namespace

DivergenceMatrix divergence_matrix(const Sample& sample, DivergenceMetric metric) {
    validate_sample(sample);
    const std::size_t n = sample.candidates.size();
    DivergenceMatrix m = build_matrix(n, metric);

    if (metric == DivergenceMetric::EditDistance) {
        std::vector<std::u32string> decoded(n);
        for (std::size_t i = 0; i < n; ++i) decoded[i] = utf8_decode(sample.candidates[i].text);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d = normalized_edit_divergence(decoded[i], decoded[j]);
                m.at(i, j) = d;
                m.at(j, i) = d;
            }
        }
    } else {
        for (const auto& c : sample.candidates) {
            if (!c.embedding) {
                throw DataError("sample '" + sample.sample_id + "': cosine metric needs an embedding for '" +
                                c.model_id + "'");
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d = cosine_divergence(*sample.candidates[i].embedding,
                                                   *sample.candidates[j].embedding);
                m.at(i, j) = d;
                m.at(j, i) = d;
            }
        }
    }
    return m;
}

DivergenceMatrix divergence_matrix_from_texts(std::span<const std::string> texts) {
    if (texts.size() < 2) throw DataError("divergence matrix: needs at least 2 texts");
    const std::size_t n = texts.size();
    DivergenceMatrix m = build_matrix(n, DivergenceMetric::EditDistance);
    std::vector<std::u32string> decoded(n);
    for (std::size_t i = 0; i < n; ++i) decoded[i] = utf8_decode(texts[i]);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = normalized_edit_divergence(decoded[i], decoded[j]);
            m.at(i, j) = d;
            m.at(j, i) = d;
        }
    }
    return m;
}

std::string matrix_digest(const DivergenceMatrix& matrix) {
    std::uint64_t h = 0xCBF29CE484222325ULL; // FNV-1a offset basis
    auto mix = [&h](const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 0x100000001B3ULL;
        }
    };
    const std::uint64_t n64 = matrix.n;
    const std::uint8_t metric8 = matrix.metric == DivergenceMetric::EditDistance ? 0 : 1;
    mix(&metric8, sizeof(metric8));
    mix(&n64, sizeof(n64));
    for (double e : matrix.entries) {
        std::uint64_t bits;
        std::memcpy(&bits, &e, sizeof(bits));
        mix(&bits, sizeof(bits));
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = hex[h & 0xF];
        h >>= 4;
    }
    return out;
}

} // namespace ceocr
