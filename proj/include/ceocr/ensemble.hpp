#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ceocr {

enum class TokenizeMode { Word, Char };

const char* to_string(TokenizeMode mode);
TokenizeMode tokenize_mode_from_string(std::string_view name);

// Word mode splits on whitespace runs (punctuation stays attached); Char mode
// yields one token per unicode scalar value, whitespace included.
std::vector<std::string> tokenize(std::string_view text, TokenizeMode mode);

struct AlignedPair {
    std::optional<std::string> a;
    std::optional<std::string> b;
};

// Minimum-edit alignment of two token sequences (match 0, mismatch/gap 1).
// Ties resolve match > substitution > deletion-from-a > insertion-from-b,
// applied while backtracking from the end of both sequences.
std::vector<AlignedPair> pairwise_align(std::span<const std::string> a,
                                        std::span<const std::string> b);

// Position-aligned token candidates across all outputs of one sample.
// columns[k][i] is candidate i's token at aligned position k, or nullopt for
// a gap. Reading any candidate's non-gap tokens in column order reproduces
// its token sequence exactly; no column is all-gaps.
struct AlignmentColumns {
    std::vector<std::vector<std::optional<std::string>>> columns;
    std::size_t pivot_index = 0;
    std::size_t candidate_count = 0;
};

// Star alignment: the pivot seeds one column per token, then every other
// candidate (in index order) is aligned against the evolving columns. A token
// matches a column at cost 0 when any candidate already placed there holds an
// equal token; otherwise substitution, skipping a column, and inserting a
// fresh column all cost 1, preferred in that order while backtracking.
AlignmentColumns progressive_alignment(const std::vector<std::vector<std::string>>& candidates,
                                       std::size_t pivot);

// Candidate i's token sequence recovered from its column track.
std::vector<std::string> column_track(const AlignmentColumns& columns, std::size_t candidate);

struct EnsembleWeights {
    std::vector<double> weights; // positive, sum 1
};

// Normalized inverse average-entropy-distance weights; lower distance means
// strictly larger weight. e_bar entries are floored at 1e-9, so an all-zero
// profile yields uniform weights.
EnsembleWeights ensemble_weights(std::span<const double> e_bar);

// Index of the smallest e_bar entry (lowest index on ties); the alignment
// anchor used by run_ensemble.
std::size_t pick_pivot(std::span<const double> e_bar);

// Per column, sums weight per distinct token with the gap votable like a
// token; emits the argmax token (nothing when the gap wins). Ties resolve by
// the largest single backing weight, then the pivot's entry, then gap before
// lexicographically smallest token. Word mode joins with single spaces, Char
// mode concatenates.
std::string weighted_vote(const AlignmentColumns& columns, const EnsembleWeights& weights,
                          TokenizeMode mode);

// Unweighted plurality per column; same tie ladder minus the weight step.
std::string rover_vote(const AlignmentColumns& columns, TokenizeMode mode);

struct EnsembleResult {
    std::string text;
    std::string rover_text;
    EnsembleWeights weights;
    std::size_t pivot = 0;
    AlignmentColumns columns;
};

// Tokenize, anchor at the lowest-e_bar candidate, align, and vote (both
// weighted and ROVER-style over the same columns).
EnsembleResult run_ensemble(std::span<const std::string> texts, std::span<const double> e_bar,
                            TokenizeMode mode);

} // namespace ceocr
