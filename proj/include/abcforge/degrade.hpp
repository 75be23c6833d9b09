#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "abcforge/abc.hpp"
#include "abcforge/rng.hpp"

namespace abcforge::degrade {

/// The ten note letters eligible for pitch swapping, in fixed order. The
/// order matters: replacement letters are drawn by index, so reordering the
/// pool would change every seeded output.
inline constexpr std::array<char, 10> kNotePool = {'C', 'D', 'E', 'F', 'G',
                                                   'A', 'B', 'c', 'd', 'e'};

bool in_note_pool(char c);

struct DegradationConfig {
    std::string alt_key = "D#";     ///< replacement key for every key declaration
    std::string fallback_key = "Eb"; ///< used when the original key is already alt_key
    double swap_probability = 0.1;   ///< per-eligible-letter swap probability
    std::uint32_t max_removable_bars = 4;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument when a field is out of range.
    void check() const;
};

/// Counts reported by the swap stage; used by statistical tests. An attempt
/// is a fired Bernoulli draw, whether or not the sampled letter differs.
struct SwapCounters {
    std::uint64_t eligible = 0;
    std::uint64_t attempts = 0;
};

class DegradeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PairError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Stage 1: rewrites the value of every key declaration (header or body "K:"
/// lines and inline "[K:...]" fields) to cfg.alt_key, or to cfg.fallback_key
/// when the existing value is already alt_key. All other bytes unchanged.
abc::AbcTune change_key(const abc::AbcTune& tune, const DegradationConfig& cfg);

/// Stage 2: for every Note token whose letter is in the pool, with
/// independent probability cfg.swap_probability replaces the letter with a
/// uniformly drawn pool member (possibly the same one). Draws consume the
/// rng in line-major, token-major order; annotations, inline fields,
/// accidentals, durations and metadata lines are untouched.
abc::AbcTune swap_pitches(const abc::AbcTune& tune, const DegradationConfig& cfg,
                          rng::SplitMix64& gen, SwapCounters* counters = nullptr);

/// Stage 3: when the tune has more than one music line, draws
/// k ~ U(1, min(max_removable_bars, music_lines - 1)) and removes k music
/// lines chosen uniformly without replacement. Metadata, comment and blank
/// lines stay in place; at least one music line always survives.
abc::AbcTune truncate_bars(const abc::AbcTune& tune, const DegradationConfig& cfg,
                           rng::SplitMix64& gen);

struct DegradeResult {
    std::string text;
    std::vector<std::string> stages_applied; ///< stage names that changed bytes
};

/// The full pipeline: key change, pitch swap, bar truncation, all drawing
/// from one rng seeded with cfg.seed. Output always passes validation when
/// the input does. Throws DegradeError when the input fails validation.
DegradeResult degrade_abc_detailed(std::string_view text, const DegradationConfig& cfg);

/// Convenience wrapper returning only the degraded text.
std::string degrade_abc(std::string_view text, const DegradationConfig& cfg);

struct PreferencePair {
    std::string id;
    std::string prompt;
    std::string context;
    std::string chosen;
    std::string rejected;
    std::uint64_t seed_used = 0;
    std::vector<std::string> degradations_applied;
};

/// Degrades `target` into a rejected alternative. cfg.seed is the per-record
/// seed; if degradation ever reproduces the chosen bytes the seed is
/// incremented and the pipeline retried, up to `max_attempts` times before
/// PairError. Throws DegradeError when the target fails validation.
PreferencePair make_preference_pair(const std::string& id, const std::string& prompt,
                                    const std::string& context, const std::string& target,
                                    const DegradationConfig& cfg, int max_attempts = 8);

} // namespace abcforge::degrade
