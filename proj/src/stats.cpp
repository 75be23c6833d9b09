#include "abcforge/stats.hpp"

#include <algorithm>

namespace abcforge::stats {

using abc::AbcTune;
using abc::LineKind;
using abc::TokenKind;

namespace {

struct BarCounts {
    std::size_t bars = 0;
    std::size_t notes = 0;
};

BarCounts count_tune(const AbcTune& tune) {
    BarCounts counts;
    bool segment_has_content = false;
    for (const auto& line : tune.lines) {
        if (line.kind != LineKind::Music) continue;
        for (const auto& token : line.tokens) {
            switch (token.kind) {
            case TokenKind::Note:
                ++counts.notes;
                segment_has_content = true;
                break;
            case TokenKind::Rest:
                segment_has_content = true;
                break;
            case TokenKind::Barline:
                if (segment_has_content) ++counts.bars;
                segment_has_content = false;
                break;
            default:
                break;
            }
        }
    }
    if (segment_has_content) ++counts.bars; // trailing open segment
    return counts;
}

} // namespace

std::size_t count_bars(const AbcTune& tune) { return count_tune(tune).bars; }

double notes_per_bar(const AbcTune& tune) {
    const BarCounts counts = count_tune(tune);
    if (counts.bars == 0) throw ZeroBarsError("tune has no bars");
    return static_cast<double>(counts.notes) / static_cast<double>(counts.bars);
}

CorpusStats corpus_stats(const std::vector<dataset::DatasetRecord>& records) {
    CorpusStats stats;
    stats.num_samples = records.size();
    if (records.empty()) {
        stats.empty_corpus = true;
        return stats;
    }

    std::uint64_t input_total = 0;
    std::uint64_t target_total = 0;
    std::uint64_t total_bars = 0;
    std::uint64_t total_notes = 0;
    std::uint64_t parsed = 0;

    for (const auto& record : records) {
        input_total += abc::utf8_length(record.prompt) + abc::utf8_length(record.context);
        const std::uint64_t target_len = abc::utf8_length(record.target);
        target_total += target_len;
        stats.max_target_length = std::max(stats.max_target_length, target_len);

        try {
            const abc::AbcTune tune = abc::parse_tune(record.target);
            const BarCounts counts = count_tune(tune);
            total_bars += counts.bars;
            total_notes += counts.notes;
            ++parsed;
        } catch (const abc::ParseError&) {
            ++stats.skipped_unparseable;
        }
    }

    const double n = static_cast<double>(records.size());
    stats.avg_input_length = static_cast<double>(input_total) / n;
    stats.avg_target_length = static_cast<double>(target_total) / n;
    if (parsed > 0)
        stats.avg_bars = static_cast<double>(total_bars) / static_cast<double>(parsed);
    if (total_bars > 0)
        stats.notes_per_bar =
            static_cast<double>(total_notes) / static_cast<double>(total_bars);
    return stats;
}

} // namespace abcforge::stats
