#pragma once

#include <cstdint>
#include <stdexcept>

#include "abcforge/abc.hpp"
#include "abcforge/dataset.hpp"

namespace abcforge::stats {

class ZeroBarsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Number of bars in a tune: barlines preceded by at least one note or rest
/// since the previous barline count, and a trailing non-empty segment with no
/// closing barline counts as one bar. Segments carry across music lines.
std::size_t count_bars(const abc::AbcTune& tune);

/// Note tokens (chord members included, rests and grace groups excluded)
/// divided by count_bars. Throws ZeroBarsError when the tune has no bars.
double notes_per_bar(const abc::AbcTune& tune);

struct CorpusStats {
    std::uint64_t num_samples = 0;
    double avg_input_length = 0.0;  ///< mean code points of prompt + context
    double avg_target_length = 0.0; ///< mean code points of target
    std::uint64_t max_target_length = 0;
    double avg_bars = 0.0;          ///< mean bars over parseable targets
    double notes_per_bar = 0.0;     ///< total notes / total bars over parseable targets
    std::uint64_t skipped_unparseable = 0; ///< targets excluded from bar stats
    bool empty_corpus = false;
};

CorpusStats corpus_stats(const std::vector<dataset::DatasetRecord>& records);

} // namespace abcforge::stats
