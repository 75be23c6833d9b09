#include "abcforge/degrade.hpp"

#include <algorithm>
#include <utility>

namespace abcforge::degrade {

using abc::AbcTune;
using abc::BodyLine;
using abc::LineKind;
using abc::MusicToken;
using abc::TokenKind;

bool in_note_pool(char c) {
    return std::find(kNotePool.begin(), kNotePool.end(), c) != kNotePool.end();
}

void DegradationConfig::check() const {
    if (swap_probability < 0.0 || swap_probability > 1.0)
        throw std::invalid_argument("swap probability must be in [0, 1]");
    if (max_removable_bars < 1)
        throw std::invalid_argument("max removable bars must be at least 1");
    if (alt_key == fallback_key)
        throw std::invalid_argument("alternative and fallback keys must differ");
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

void retokenize(BodyLine& line) { line.tokens = abc::tokenize_music_line(line.text); }

} // namespace

AbcTune change_key(const AbcTune& tune, const DegradationConfig& cfg) {
    AbcTune out = tune;
    auto pick_key = [&cfg](std::string_view old_value) -> const std::string& {
        return trim(old_value) == cfg.alt_key ? cfg.fallback_key : cfg.alt_key;
    };

    for (auto& line : out.lines) {
        if (line.kind == LineKind::Metadata && line.field_tag == 'K') {
            line.field_value = pick_key(line.field_value);
            line.text = std::string("K:") + line.field_value;
        } else if (line.kind == LineKind::Music) {
            bool edited = false;
            // Right to left so earlier spans stay valid while splicing.
            for (auto it = line.tokens.rbegin(); it != line.tokens.rend(); ++it) {
                if (it->kind != TokenKind::InlineField) continue;
                if (line.text[it->begin + 1] != 'K') continue;
                const std::size_t value_begin = it->begin + 3;
                const std::size_t value_len = it->end - 1 - value_begin;
                const std::string& key = pick_key(
                    std::string_view(line.text).substr(value_begin, value_len));
                line.text.replace(value_begin, value_len, key);
                edited = true;
            }
            if (edited) retokenize(line);
        }
    }
    out.rebuild_raw_text();
    return out;
}

AbcTune swap_pitches(const AbcTune& tune, const DegradationConfig& cfg,
                     rng::SplitMix64& gen, SwapCounters* counters) {
    AbcTune out = tune;
    for (auto& line : out.lines) {
        if (line.kind != LineKind::Music) continue;
        bool edited = false;
        for (auto& token : line.tokens) {
            if (token.kind != TokenKind::Note || !in_note_pool(token.note_letter))
                continue;
            if (counters) ++counters->eligible;
            const double u = gen.next_unit();
            if (u < cfg.swap_probability) {
                if (counters) ++counters->attempts;
                const char replacement = kNotePool[gen.next_below(kNotePool.size())];
                line.text[token.letter_pos] = replacement;
                token.note_letter = replacement;
                edited = true;
            }
        }
        if (edited) retokenize(line);
    }
    out.rebuild_raw_text();
    return out;
}

AbcTune truncate_bars(const AbcTune& tune, const DegradationConfig& cfg,
                      rng::SplitMix64& gen) {
    std::vector<std::size_t> music_lines;
    for (std::size_t i = 0; i < tune.lines.size(); ++i)
        if (tune.lines[i].kind == LineKind::Music) music_lines.push_back(i);

    const std::size_t m = music_lines.size();
    if (m <= 1) return tune; // no draw consumed, mirroring the |M| > 1 gate

    const std::uint64_t upper =
        std::min<std::uint64_t>(cfg.max_removable_bars, m - 1);
    const std::uint64_t k = 1 + gen.next_below(upper);

    // Partial Fisher-Yates: the first k entries are a uniform k-subset.
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    for (std::uint64_t i = 0; i < k; ++i) {
        const std::uint64_t j = i + gen.next_below(m - i);
        std::swap(order[i], order[j]);
    }

    std::vector<std::size_t> removed(order.begin(), order.begin() + k);
    std::sort(removed.begin(), removed.end(), std::greater<>());

    AbcTune out = tune;
    for (std::size_t ordinal : removed) {
        const std::size_t line_index = music_lines[ordinal];
        out.lines.erase(out.lines.begin() + static_cast<std::ptrdiff_t>(line_index));
    }
    out.rebuild_raw_text();
    return out;
}

DegradeResult degrade_abc_detailed(std::string_view text, const DegradationConfig& cfg) {
    cfg.check();
    const auto report = abc::validate(text);
    if (!report.is_valid)
        throw DegradeError("input failed validation; filter before degrading");

    rng::SplitMix64 gen(cfg.seed);
    DegradeResult result;

    AbcTune tune = abc::parse_tune(text);
    std::string before = tune.raw_text;

    tune = change_key(tune, cfg);
    if (tune.raw_text != before) result.stages_applied.emplace_back("key_change");

    before = tune.raw_text;
    tune = swap_pitches(tune, cfg, gen);
    if (tune.raw_text != before) result.stages_applied.emplace_back("pitch_swap");

    before = tune.raw_text;
    tune = truncate_bars(tune, cfg, gen);
    if (tune.raw_text != before) result.stages_applied.emplace_back("bar_truncation");

    result.text = std::move(tune.raw_text);
    return result;
}

std::string degrade_abc(std::string_view text, const DegradationConfig& cfg) {
    return degrade_abc_detailed(text, cfg).text;
}

PreferencePair make_preference_pair(const std::string& id, const std::string& prompt,
                                    const std::string& context, const std::string& target,
                                    const DegradationConfig& cfg, int max_attempts) {
    DegradationConfig attempt_cfg = cfg;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        attempt_cfg.seed = cfg.seed + static_cast<std::uint64_t>(attempt);
        DegradeResult degraded = degrade_abc_detailed(target, attempt_cfg);
        if (degraded.text == target) continue; // degenerate draw, bump the seed

        PreferencePair pair;
        pair.id = id;
        pair.prompt = prompt;
        pair.context = context;
        pair.chosen = target;
        pair.rejected = std::move(degraded.text);
        pair.seed_used = attempt_cfg.seed;
        pair.degradations_applied = std::move(degraded.stages_applied);
        return pair;
    }
    throw PairError("degradation left record '" + id + "' unchanged after " +
                    std::to_string(max_attempts) + " seeds");
}

} // namespace abcforge::degrade
