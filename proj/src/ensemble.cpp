#include "ceocr/ensemble.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <unordered_map>

#include "ceocr/entropy.hpp"
#include "ceocr/errors.hpp"
#include "ceocr/text.hpp"

namespace ceocr {

const char* to_string(TokenizeMode mode) {
    switch (mode) {
        case TokenizeMode::Word: return "word";
        case TokenizeMode::Char: return "char";
    }
    return "?";
}

TokenizeMode tokenize_mode_from_string(std::string_view name) {
    if (name == "word") return TokenizeMode::Word;
    if (name == "char") return TokenizeMode::Char;
    throw ConfigError("unknown tokenize mode '" + std::string(name) + "' (expected word|char)");
}

std::vector<std::string> tokenize(std::string_view text, TokenizeMode mode) {
    std::vector<std::string> tokens;
    const std::u32string scalars = utf8_decode(text);
    if (mode == TokenizeMode::Char) {
        tokens.reserve(scalars.size());
        for (char32_t c : scalars) {
            std::string t;
            utf8_append(t, c);
            tokens.push_back(std::move(t));
        }
        return tokens;
    }
    std::string current;
    for (char32_t c : scalars) {
        if (is_ascii_space(c)) {
            if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
        } else {
            utf8_append(current, c);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

namespace {

constexpr std::uint32_t kGap = 0xFFFFFFFFu;

// Tokens are interned to integer ids so the alignment DP compares ints, not
// strings.
struct InternPool {
    std::unordered_map<std::string, std::uint32_t> ids;
    std::vector<std::string> tokens;

    std::uint32_t intern(const std::string& token) {
        auto [it, inserted] = ids.try_emplace(token, static_cast<std::uint32_t>(tokens.size()));
        if (inserted) tokens.push_back(token);
        return it->second;
    }
};

enum Move : std::uint8_t { kDiag = 0, kUp = 1, kLeft = 2 };

} // namespace

std::vector<AlignedPair> pairwise_align(std::span<const std::string> a,
                                        std::span<const std::string> b) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::vector<std::uint32_t> cost((n + 1) * (m + 1));
    std::vector<std::uint8_t> move((n + 1) * (m + 1));
    auto idx = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };

    for (std::size_t i = 0; i <= n; ++i) {
        cost[idx(i, 0)] = static_cast<std::uint32_t>(i);
        move[idx(i, 0)] = kUp;
    }
    for (std::size_t j = 0; j <= m; ++j) {
        cost[idx(0, j)] = static_cast<std::uint32_t>(j);
        move[idx(0, j)] = kLeft;
    }
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const std::uint32_t diag = cost[idx(i - 1, j - 1)] + (a[i - 1] != b[j - 1]);
            const std::uint32_t up = cost[idx(i - 1, j)] + 1;
            const std::uint32_t left = cost[idx(i, j - 1)] + 1;
            // Preference on ties: diagonal (match/substitution), then
            // deletion-from-a, then insertion-from-b.
            std::uint32_t best = diag;
            std::uint8_t mv = kDiag;
            if (up < best) {
                best = up;
                mv = kUp;
            }
            if (left < best) {
                best = left;
                mv = kLeft;
            }
            cost[idx(i, j)] = best;
            move[idx(i, j)] = mv;
        }
    }

    std::vector<AlignedPair> pairs;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        const std::uint8_t mv = move[idx(i, j)];
        if (i > 0 && j > 0 && mv == kDiag) {
            pairs.push_back({a[i - 1], b[j - 1]});
            --i;
            --j;
        } else if (i > 0 && (mv == kUp || j == 0)) {
            pairs.push_back({a[i - 1], std::nullopt});
            --i;
        } else {
            pairs.push_back({std::nullopt, b[j - 1]});
            --j;
        }
    }
    std::reverse(pairs.begin(), pairs.end());
    return pairs;
}

AlignmentColumns progressive_alignment(const std::vector<std::vector<std::string>>& candidates,
                                       std::size_t pivot) {
    const std::size_t n = candidates.size();
    if (n < 2) throw DataError("alignment: needs at least 2 candidates");
    if (pivot >= n) throw DataError("alignment: pivot index out of range");

    InternPool pool;
    std::vector<std::vector<std::uint32_t>> seqs(n);
    for (std::size_t i = 0; i < n; ++i) {
        seqs[i].reserve(candidates[i].size());
        for (const auto& t : candidates[i]) seqs[i].push_back(pool.intern(t));
    }

    // cols[k][i] = token id of candidate i at column k, or kGap.
    std::vector<std::vector<std::uint32_t>> cols;
    std::vector<std::vector<std::uint32_t>> present; // distinct ids per column
    cols.reserve(seqs[pivot].size());
    for (std::uint32_t tok : seqs[pivot]) {
        std::vector<std::uint32_t> col(n, kGap);
        col[pivot] = tok;
        cols.push_back(std::move(col));
        present.push_back({tok});
    }

    for (std::size_t cand = 0; cand < n; ++cand) {
        if (cand == pivot) continue;
        const auto& seq = seqs[cand];
        const std::size_t mc = cols.size();
        const std::size_t mt = seq.size();

        std::vector<std::uint32_t> cost((mc + 1) * (mt + 1));
        std::vector<std::uint8_t> move((mc + 1) * (mt + 1));
        auto idx = [mt](std::size_t i, std::size_t j) { return i * (mt + 1) + j; };
        auto contains = [&present](std::size_t col, std::uint32_t tok) {
            const auto& ids = present[col];
            return std::find(ids.begin(), ids.end(), tok) != ids.end();
        };

        for (std::size_t i = 0; i <= mc; ++i) {
            cost[idx(i, 0)] = static_cast<std::uint32_t>(i);
            move[idx(i, 0)] = kUp;
        }
        for (std::size_t j = 0; j <= mt; ++j) {
            cost[idx(0, j)] = static_cast<std::uint32_t>(j);
            move[idx(0, j)] = kLeft;
        }
        for (std::size_t i = 1; i <= mc; ++i) {
            for (std::size_t j = 1; j <= mt; ++j) {
                const std::uint32_t sub = contains(i - 1, seq[j - 1]) ? 0u : 1u;
                const std::uint32_t diag = cost[idx(i - 1, j - 1)] + sub;
                const std::uint32_t up = cost[idx(i - 1, j)] + 1;   // gap at existing column
                const std::uint32_t left = cost[idx(i, j - 1)] + 1; // fresh gap column
                std::uint32_t best = diag;
                std::uint8_t mv = kDiag;
                if (up < best) {
                    best = up;
                    mv = kUp;
                }
                if (left < best) {
                    best = left;
                    mv = kLeft;
                }
                cost[idx(i, j)] = best;
                move[idx(i, j)] = mv;
            }
        }

        // Backtrace into (column index, token-or-gap) placements.
        struct Step {
            std::size_t col;     // existing column index, or npos for an insertion
            std::uint32_t token; // kGap when the candidate skips the column
        };
        constexpr std::size_t npos = static_cast<std::size_t>(-1);
        std::vector<Step> steps;
        std::size_t i = mc, j = mt;
        while (i > 0 || j > 0) {
            const std::uint8_t mv = move[idx(i, j)];
            if (i > 0 && j > 0 && mv == kDiag) {
                steps.push_back({i - 1, seq[j - 1]});
                --i;
                --j;
            } else if (i > 0 && (mv == kUp || j == 0)) {
                steps.push_back({i - 1, kGap});
                --i;
            } else {
                steps.push_back({npos, seq[j - 1]});
                --j;
            }
        }
        std::reverse(steps.begin(), steps.end());

        std::vector<std::vector<std::uint32_t>> new_cols;
        std::vector<std::vector<std::uint32_t>> new_present;
        new_cols.reserve(cols.size() + mt);
        new_present.reserve(cols.size() + mt);
        for (const Step& s : steps) {
            if (s.col == npos) {
                std::vector<std::uint32_t> col(n, kGap);
                col[cand] = s.token;
                new_cols.push_back(std::move(col));
                new_present.push_back({s.token});
            } else {
                auto col = std::move(cols[s.col]);
                auto ids = std::move(present[s.col]);
                col[cand] = s.token;
                if (s.token != kGap &&
                    std::find(ids.begin(), ids.end(), s.token) == ids.end()) {
                    ids.push_back(s.token);
                }
                new_cols.push_back(std::move(col));
                new_present.push_back(std::move(ids));
            }
        }
        cols = std::move(new_cols);
        present = std::move(new_present);
    }

    AlignmentColumns result;
    result.pivot_index = pivot;
    result.candidate_count = n;
    result.columns.reserve(cols.size());
    for (const auto& col : cols) {
        std::vector<std::optional<std::string>> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (col[i] != kGap) out[i] = pool.tokens[col[i]];
        }
        result.columns.push_back(std::move(out));
    }
    return result;
}

std::vector<std::string> column_track(const AlignmentColumns& columns, std::size_t candidate) {
    if (candidate >= columns.candidate_count) throw DataError("column track: index out of range");
    std::vector<std::string> tokens;
    for (const auto& col : columns.columns) {
        if (col[candidate]) tokens.push_back(*col[candidate]);
    }
    return tokens;
}

EnsembleWeights ensemble_weights(std::span<const double> e_bar) {
    return EnsembleWeights{inverse_entropy_weights(e_bar)};
}

std::size_t pick_pivot(std::span<const double> e_bar) {
    if (e_bar.empty()) throw DataError("pivot: empty e_bar");
    std::size_t best = 0;
    for (std::size_t i = 1; i < e_bar.size(); ++i) {
        if (e_bar[i] < e_bar[best]) best = i;
    }
    return best;
}

namespace {

std::string join_tokens(const std::vector<std::string>& tokens, TokenizeMode mode) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (mode == TokenizeMode::Word && i > 0) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

struct VoteEntry {
    double total = 0.0;
    double max_single = 0.0;
    long count = 0;
};

// Shared column-vote loop. `weighted` switches the max-single-weight tie step
// on; with it off and unit weights this is plain ROVER plurality.
std::string vote(const AlignmentColumns& columns, std::span<const double> weights, bool weighted,
                 TokenizeMode mode) {
    const std::size_t n = columns.candidate_count;
    std::vector<std::string> out_tokens;
    std::map<std::string, VoteEntry> token_votes; // ordered: lexicographic tie scan

    for (const auto& col : columns.columns) {
        token_votes.clear();
        VoteEntry gap_votes;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = weights[i];
            VoteEntry& entry = col[i] ? token_votes[*col[i]] : gap_votes;
            entry.total += w;
            entry.max_single = std::max(entry.max_single, w);
            entry.count += 1;
        }

        const std::optional<std::string>& pivot_entry = col[columns.pivot_index];
        bool best_is_gap = true;
        const std::string* best_token = nullptr;
        const VoteEntry* best = &gap_votes;
        auto is_pivots = [&](bool is_gap, const std::string* token) {
            if (is_gap) return !pivot_entry.has_value();
            return pivot_entry.has_value() && *pivot_entry == *token;
        };
        // Gap scans first, then tokens in lexicographic order; a challenger
        // must be strictly better, so the scan order implements the final
        // gap-then-lexicographic tie step.
        for (const auto& [token, entry] : token_votes) {
            bool better = false;
            if (entry.total > best->total) {
                better = true;
            } else if (entry.total == best->total) {
                if (weighted && entry.max_single != best->max_single) {
                    better = entry.max_single > best->max_single;
                } else if (is_pivots(false, &token) && !is_pivots(best_is_gap, best_token)) {
                    better = true;
                }
            }
            if (better) {
                best = &entry;
                best_token = &token;
                best_is_gap = false;
            }
        }
        if (!best_is_gap) out_tokens.push_back(*best_token);
    }
    return join_tokens(out_tokens, mode);
}

} // namespace

std::string weighted_vote(const AlignmentColumns& columns, const EnsembleWeights& weights,
                          TokenizeMode mode) {
    if (weights.weights.size() != columns.candidate_count) {
        throw DataError("vote: weight count does not match candidate count");
    }
    return vote(columns, weights.weights, true, mode);
}

std::string rover_vote(const AlignmentColumns& columns, TokenizeMode mode) {
    const std::vector<double> unit(columns.candidate_count, 1.0);
    return vote(columns, unit, false, mode);
}

EnsembleResult run_ensemble(std::span<const std::string> texts, std::span<const double> e_bar,
                            TokenizeMode mode) {
    if (texts.size() != e_bar.size()) throw DataError("ensemble: texts/e_bar length mismatch");
    if (texts.size() < 2) throw DataError("ensemble: needs at least 2 candidates");

    std::vector<std::vector<std::string>> token_lists;
    token_lists.reserve(texts.size());
    for (const auto& t : texts) token_lists.push_back(tokenize(t, mode));

    EnsembleResult result;
    result.pivot = pick_pivot(e_bar);
    result.columns = progressive_alignment(token_lists, result.pivot);
    result.weights = ensemble_weights(e_bar);
    result.text = weighted_vote(result.columns, result.weights, mode);
    result.rover_text = rover_vote(result.columns, mode);
    return result;
}

} // namespace ceocr
