#pragma once

// Test-only oracles and generators, kept independent of the library code
// paths they cross-check.

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ceocr/detail/rng.hpp"

namespace oracle {

using ceocr::detail::SplitMix64;

// Exponential-time recursive edit distance; usable only for tiny strings.
inline std::size_t lev_recursive(std::u32string_view a, std::u32string_view b) {
    if (a.empty()) return b.size();
    if (b.empty()) return a.size();
    const std::size_t sub = lev_recursive(a.substr(1), b.substr(1)) + (a[0] != b[0] ? 1 : 0);
    const std::size_t del = lev_recursive(a.substr(1), b) + 1;
    const std::size_t ins = lev_recursive(a, b.substr(1)) + 1;
    return std::min({sub, del, ins});
}

// Token-level edit distance via an independent full-table DP.
inline std::size_t token_lev(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            d[i][j] = std::min({d[i - 1][j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0),
                                d[i - 1][j] + 1, d[i][j - 1] + 1});
        }
    }
    return d[a.size()][b.size()];
}

inline std::u32string random_u32(SplitMix64& rng, std::size_t max_len, std::uint32_t alphabet) {
    const std::size_t len = rng.below(max_len + 1);
    std::u32string s;
    s.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
        s.push_back(U'a' + static_cast<char32_t>(rng.below(alphabet)));
    }
    return s;
}

inline std::string random_word(SplitMix64& rng, std::size_t min_len = 1, std::size_t max_len = 8) {
    const std::size_t len = min_len + rng.below(max_len - min_len + 1);
    std::string s;
    for (std::size_t i = 0; i < len; ++i) {
        s.push_back(static_cast<char>('a' + rng.below(26)));
    }
    return s;
}

inline std::vector<std::string> random_words(SplitMix64& rng, std::size_t count) {
    std::vector<std::string> words;
    words.reserve(count);
    for (std::size_t i = 0; i < count; ++i) words.push_back(random_word(rng));
    return words;
}

// A truth token sequence plus candidate copies where positions are corrupted
// (substitution/deletion/insertion of unique garbage tokens) in at most
// max_hits candidates each. Truth tokens are distinct, and corrupted
// positions sit at least two apart: under the unit-cost alignment scheme an
// adjacent deletion/substitution pair can tie into a column-merging
// alignment, which would smear one position's corruption across two aligned
// columns.
struct MajorityCase {
    std::vector<std::string> truth;
    std::vector<std::vector<std::string>> candidates;
};

inline MajorityCase make_majority_case(SplitMix64& rng, std::size_t n_candidates,
                                       std::size_t max_hits) {
    MajorityCase made;
    const std::size_t length = 5 + rng.below(24);
    made.truth.reserve(length);
    for (std::size_t p = 0; p < length; ++p) made.truth.push_back("w" + std::to_string(p));
    made.candidates.assign(n_candidates, {});

    // op per (position, candidate): 0 none, 1 substitute, 2 delete, 3 insert
    std::vector<std::vector<int>> ops(n_candidates, std::vector<int>(length, 0));
    std::ptrdiff_t last_corrupted = -2;
    for (std::size_t p = 0; p < length; ++p) {
        if (static_cast<std::ptrdiff_t>(p) - last_corrupted < 2) continue;
        if (rng.unit() >= 0.45) continue;
        last_corrupted = static_cast<std::ptrdiff_t>(p);
        const std::size_t hits = 1 + rng.below(max_hits);
        std::vector<std::size_t> order(n_candidates);
        for (std::size_t i = 0; i < n_candidates; ++i) order[i] = i;
        for (std::size_t i = 0; i < hits; ++i) {
            const std::size_t j = i + rng.below(order.size() - i);
            std::swap(order[i], order[j]);
            ops[order[i]][p] = 1 + static_cast<int>(rng.below(3));
        }
    }

    std::uint64_t garbage_counter = 0;
    auto garbage = [&rng, &garbage_counter] {
        return "zz" + std::to_string(garbage_counter++) + "x" + std::to_string(rng.below(1000));
    };
    for (std::size_t c = 0; c < n_candidates; ++c) {
        for (std::size_t p = 0; p < length; ++p) {
            switch (ops[c][p]) {
                case 0: made.candidates[c].push_back(made.truth[p]); break;
                case 1: made.candidates[c].push_back(garbage()); break;
                case 2: break;
                default:
                    made.candidates[c].push_back(made.truth[p]);
                    made.candidates[c].push_back(garbage());
                    break;
            }
        }
    }
    return made;
}

} // namespace oracle
