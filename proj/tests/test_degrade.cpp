#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <json.hpp>
#include <set>

#include "abcforge/degrade.hpp"
#include "support/test_support.hpp"

using namespace abcforge;
using testsupport::SplitMix64;

namespace {

degrade::DegradationConfig config(std::uint64_t seed, double p = 0.1,
                                  std::uint32_t b_max = 4) {
    degrade::DegradationConfig cfg;
    cfg.seed = seed;
    cfg.swap_probability = p;
    cfg.max_removable_bars = b_max;
    return cfg;
}

} // namespace

// Stream values frozen from tests/oracles/degrade_replay_oracle.py, an
// independent Python implementation of the same published algorithm.
TEST_CASE("splitmix64 stream matches the reference implementation") {
    SplitMix64 g0(0);
    CHECK(g0.next_u64() == 16294208416658607535ULL);
    CHECK(g0.next_u64() == 7960286522194355700ULL);
    CHECK(g0.next_u64() == 487617019471545679ULL);
    CHECK(g0.next_u64() == 17909611376780542444ULL);

    SplitMix64 g1(1);
    CHECK(g1.next_u64() == 10451216379200822465ULL);

    SplitMix64 g42(42);
    CHECK(g42.next_u64() == 13679457532755275413ULL);

    SplitMix64 bounded(42);
    const std::vector<std::uint64_t> expected = {3, 1, 8, 4, 0, 2, 5, 8};
    for (const auto want : expected) CHECK(bounded.next_below(10) == want);
}

TEST_CASE("next_unit and next_below stay in range") {
    SplitMix64 gen(77);
    for (int i = 0; i < 1000; ++i) {
        const double u = gen.next_unit();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(gen.next_below(7) < 7);
        CHECK(gen.next_below(1) == 0);
    }
}

TEST_CASE("mix_seed matches the reference implementation") {
    CHECK(rng::mix_seed(42, 0) == 13679457532755275413ULL);
    CHECK(rng::mix_seed(42, 1) == 2949826092126892291ULL);
    CHECK(rng::mix_seed(0, 0) == 16294208416658607535ULL);
    CHECK(rng::mix_seed(123456789, 41) == 11511363070849631528ULL);
}

TEST_CASE("change_key rewrites every key declaration") {
    const auto cfg = config(0);

    auto tune = degrade::change_key(abc::parse_tune("X:1\nK:C\nCDEF|"), cfg);
    CHECK(tune.raw_text == "X:1\nK:D#\nCDEF|");

    // already the alternative key -> fallback
    tune = degrade::change_key(abc::parse_tune("X:1\nK:D#\nCDEF|"), cfg);
    CHECK(tune.raw_text == "X:1\nK:Eb\nCDEF|");

    // inline fields in music lines are rewritten too
    tune = degrade::change_key(abc::parse_tune("X:1\nK:C\nCD[K:G]EF|"), cfg);
    CHECK(tune.raw_text == "X:1\nK:D#\nCD[K:D#]EF|");

    // mid-body K lines count as key declarations
    tune = degrade::change_key(abc::parse_tune("X:1\nK:C\nCDEF|\nK:G\nGABc|"), cfg);
    CHECK(tune.raw_text == "X:1\nK:D#\nCDEF|\nK:D#\nGABc|");

    // no K line anywhere -> byte identical
    const std::string without_key = "X:1\nM:4/4\nCDEF|";
    tune = degrade::change_key(abc::parse_tune(without_key), cfg);
    CHECK(tune.raw_text == without_key);

    // non-key fields such as [M:3/4] stay untouched
    tune = degrade::change_key(abc::parse_tune("X:1\nK:C\nCD[M:3/4]EF|"), cfg);
    CHECK(tune.raw_text == "X:1\nK:D#\nCD[M:3/4]EF|");
}

TEST_CASE("swap with p=0 is the identity") {
    const std::string text = "X:1\nK:C\nCDEF GABc|defg|";
    SplitMix64 gen(99);
    const auto tune = degrade::swap_pitches(abc::parse_tune(text), config(0, 0.0), gen);
    CHECK(tune.raw_text == text);
}

TEST_CASE("swap golden bytes, p=1 seed 7") {
    // frozen from the replay oracle: degrade("X:1\nK:C\nCDEF|", seed 7, p=1)
    const auto cfg = config(7, 1.0);
    CHECK(degrade::degrade_abc("X:1\nK:C\nCDEF|", cfg) == "X:1\nK:D#\nGFAE|");

    const auto detailed = degrade::degrade_abc_detailed("X:1\nK:C\nCDEF|", cfg);
    CHECK(detailed.stages_applied ==
          std::vector<std::string>{"key_change", "pitch_swap"});
}

TEST_CASE("swap ignores lines without eligible letters") {
    SplitMix64 gen(5);
    const std::string text = "X:1\nK:C\n\"C\" z2 |";
    const auto tune = degrade::swap_pitches(abc::parse_tune(text), config(0, 1.0), gen);
    CHECK(tune.raw_text == text);
}

TEST_CASE("swap leaves non-pool letters alone") {
    // f, g, a, b are notes but not pool members; no draw is consumed for them
    SplitMix64 gen(8);
    degrade::SwapCounters counters;
    const auto tune = degrade::swap_pitches(abc::parse_tune("X:1\nK:C\nfgab|"),
                                            config(0, 1.0), gen, &counters);
    CHECK(tune.raw_text == "X:1\nK:C\nfgab|");
    CHECK(counters.eligible == 0);
    CHECK(counters.attempts == 0);
}

TEST_CASE("swap locality: only note letters differ") {
    SplitMix64 fuzz(31415);
    for (int i = 0; i < 120; ++i) {
        const std::string text = testsupport::random_tune(fuzz);
        const auto tune = abc::parse_tune(text);
        SplitMix64 gen(fuzz.next_u64());
        const auto swapped = degrade::swap_pitches(tune, config(0, 0.7), gen);
        REQUIRE(swapped.raw_text.size() == text.size());

        // collect allowed positions: note letters, as global byte offsets
        std::set<std::size_t> allowed;
        std::size_t offset = 0;
        for (const auto& line : tune.lines) {
            if (line.kind == abc::LineKind::Music)
                for (std::size_t pos : testsupport::reference_note_positions(line.text))
                    allowed.insert(offset + pos);
            offset += line.text.size() + line.terminator.size();
        }
        for (std::size_t b = 0; b < text.size(); ++b) {
            if (swapped.raw_text[b] != text[b]) {
                CHECK(allowed.count(b) == 1);
                CHECK(degrade::in_note_pool(swapped.raw_text[b]));
            }
        }
    }
}

TEST_CASE("truncate keeps single music lines intact") {
    SplitMix64 gen(3);
    const std::string text = "X:1\nK:C\nCDEF|GABc|";
    const auto tune = degrade::truncate_bars(abc::parse_tune(text), config(0), gen);
    CHECK(tune.raw_text == text);
}

TEST_CASE("truncate golden, 3 music lines, B_max=10, seed 5") {
    // frozen from the replay oracle: ordinal 1 is removed
    SplitMix64 gen(5);
    degrade::DegradationConfig cfg = config(0, 0.1, 10);
    const auto tune = degrade::truncate_bars(
        abc::parse_tune("X:1\nK:C\nCDE|\nFGA|\nBcd|\n"), cfg, gen);
    CHECK(tune.raw_text == "X:1\nK:C\nCDE|\nBcd|\n");
}

TEST_CASE("truncate bounds and metadata retention") {
    SplitMix64 fuzz(2718);
    const std::string text =
        "X:1\nT:Keeper\nM:4/4\nK:C\n"
        "C|\n% between\nD|\nW:words\nE|\nF|\nG|\n";
    const auto original = abc::parse_tune(text);
    REQUIRE(original.music_line_count() == 5);

    for (int i = 0; i < 200; ++i) {
        SplitMix64 gen(fuzz.next_u64());
        const auto tune = degrade::truncate_bars(original, config(0), gen);
        const auto count = tune.music_line_count();
        CHECK(count >= 1);
        CHECK(count <= 4);
        // every non-music line survives in order
        std::vector<std::string> meta;
        for (const auto& line : tune.lines)
            if (line.kind != abc::LineKind::Music) meta.push_back(line.text);
        CHECK(meta == std::vector<std::string>{"X:1", "T:Keeper", "M:4/4", "K:C",
                                               "% between", "W:words"});
    }
}

TEST_CASE("degrade pipeline composes the three stages") {
    // single music line: only the key stage can act when p=0
    CHECK(degrade::degrade_abc("X:1\nK:C\nCDEF|", config(123, 0.0)) ==
          "X:1\nK:D#\nCDEF|");

    CHECK_THROWS_AS(degrade::degrade_abc("K:C\nCDEF|", config(1)),
                    degrade::DegradeError);
    CHECK_THROWS_AS(degrade::degrade_abc("not abc at all", config(1)),
                    degrade::DegradeError);

    degrade::DegradationConfig bad = config(1);
    bad.swap_probability = 1.5;
    CHECK_THROWS_AS(degrade::degrade_abc("X:1\nK:C\nCDEF|", bad),
                    std::invalid_argument);
}

TEST_CASE("degrade is deterministic and validity preserving") {
    SplitMix64 fuzz(555);
    for (int i = 0; i < 100; ++i) {
        const std::string text = testsupport::random_tune(fuzz);
        for (std::uint64_t seed : {fuzz.next_u64(), fuzz.next_u64()}) {
            const auto cfg = config(seed, 0.3);
            const std::string once = degrade::degrade_abc(text, cfg);
            const std::string twice = degrade::degrade_abc(text, cfg);
            CHECK(once == twice);
            CHECK(abc::validate(once).is_valid);
        }
    }
}

TEST_CASE("preference pair golden, global seed 42, record 0") {
    const auto golden = nlohmann::json::parse(testsupport::read_file(
        std::filesystem::path(ABCFORGE_FIXTURES_DIR) / "pair_golden.json"));

    std::string target = testsupport::read_file(
        std::filesystem::path(ABCFORGE_FIXTURES_DIR) / "pair_tune.abc");
    if (target.ends_with('\n')) target.pop_back();
    REQUIRE(target == golden["chosen"].get<std::string>());

    auto cfg = config(rng::mix_seed(42, 0));
    const auto pair = degrade::make_preference_pair(
        "pairfx-000000", "Continue this tune.", "", target, cfg);

    CHECK(pair.seed_used == golden["seed_used"].get<std::uint64_t>());
    CHECK(pair.rejected == golden["rejected"].get<std::string>());
    CHECK(pair.degradations_applied ==
          golden["degradations_applied"].get<std::vector<std::string>>());
    CHECK(pair.chosen != pair.rejected);
    CHECK(abc::validate(pair.rejected).is_valid);
}

TEST_CASE("preference pairs always differ from the chosen target") {
    SplitMix64 fuzz(808);
    for (int i = 0; i < 60; ++i) {
        std::string text = testsupport::random_tune(fuzz);
        if (text.ends_with('\n')) text.pop_back();
        const auto pair = degrade::make_preference_pair(
            "fuzz", "p", "", text, config(fuzz.next_u64(), 0.2));
        CHECK(pair.chosen == text);
        CHECK(pair.chosen != pair.rejected);
        CHECK(abc::validate(pair.rejected).is_valid);
        CHECK_FALSE(pair.degradations_applied.empty());
    }
}

TEST_CASE("k draws are uniform over the truncation range") {
    const auto tune = abc::parse_tune(
        "X:1\nK:C\nC|\nD|\nE|\nF|\nG|\nA|\n"); // |M| = 6
    REQUIRE(tune.music_line_count() == 6);

    std::array<int, 5> histogram{};
    const int trials = 2000;
    for (int s = 0; s < trials; ++s) {
        SplitMix64 gen(static_cast<std::uint64_t>(s) * 2654435761ULL + 17);
        const auto out = degrade::truncate_bars(tune, config(0, 0.1, 4), gen);
        const auto k = 6 - out.music_line_count();
        REQUIRE(k >= 1);
        REQUIRE(k <= 4);
        ++histogram[k];
    }
    // loose 4-sigma sanity bound; the acceptance suite runs the strict one
    const double expected = trials / 4.0;
    const double sigma = std::sqrt(trials * 0.25 * 0.75);
    for (int k = 1; k <= 4; ++k)
        CHECK(std::abs(histogram[k] - expected) <= 4.0 * sigma);
}
