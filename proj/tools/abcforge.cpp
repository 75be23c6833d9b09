// abcforge: ABC corpus toolkit.
//
// Subcommands: validate, stats, degrade, build-dataset, pair, fmd, ppl.
// Machine output (JSON/JSONL) goes to stdout or --out files; diagnostics and
// human-readable tables go to stderr. Exit codes: 0 success, 1 data or metric
// errors, 2 usage/config errors.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "abcforge/abc.hpp"
#include "abcforge/dataset.hpp"
#include "abcforge/degrade.hpp"
#include "abcforge/metrics.hpp"
#include "abcforge/rng.hpp"
#include "abcforge/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace abcforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDataError = 1;
constexpr int kExitUsage = 2;

std::string read_file_or_throw(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw dataset::IngestError("cannot open input file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text(const fs::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    out.flush();
    if (!out) throw dataset::IoError("write failure on: " + path.string());
}

void require_distinct_paths(const fs::path& out, const std::vector<fs::path>& inputs) {
    for (const auto& input : inputs) {
        std::error_code ec;
        if (out == input || fs::equivalent(out, input, ec))
            throw CLI::ValidationError("--out must not equal an input path: " +
                                       out.string());
    }
}

void write_manifest(const fs::path& beside, const std::string& command,
                    ordered_json parameters, ordered_json results = {}) {
    ordered_json manifest;
    manifest["tool"] = "abcforge";
    manifest["command"] = command;
    manifest["parameters"] = std::move(parameters);
    if (!results.is_null() && !results.empty()) manifest["results"] = std::move(results);
    write_text(fs::path(beside.string() + ".run_manifest.json"),
               manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------- validate

ordered_json report_json(const abc::ValidationReport& report) {
    ordered_json issues = ordered_json::array();
    for (const auto& issue : report.issues) {
        issues.push_back({
            {"severity", issue.severity == abc::Severity::Error ? "error" : "warning"},
            {"offset", issue.offset},
            {"message", issue.message},
        });
    }
    return ordered_json{{"is_valid", report.is_valid}, {"issues", std::move(issues)}};
}

int cmd_validate(const fs::path& input) {
    const auto report = abc::validate(read_file_or_throw(input));
    std::cout << report_json(report).dump() << "\n";
    return report.is_valid ? kExitOk : kExitDataError;
}

// ------------------------------------------------------------------- stats

std::vector<dataset::DatasetRecord> records_from_any(const fs::path& input) {
    if (input.extension() == ".jsonl") return dataset::read_sft(input);
    const std::string text = read_file_or_throw(input);
    std::vector<dataset::DatasetRecord> records;
    std::uint64_t index = 0;
    for (const auto& block : abc::split_tune_blocks(text)) {
        if (!block.is_tune) continue;
        dataset::DatasetRecord record;
        record.id = "tune-" + std::to_string(index++);
        record.source = input.filename().string();
        record.target = block.text;
        if (record.target.ends_with("\r\n"))
            record.target.erase(record.target.size() - 2);
        else if (record.target.ends_with('\n'))
            record.target.pop_back();
        records.push_back(std::move(record));
    }
    return records;
}

ordered_json stats_json(const stats::CorpusStats& s) {
    return ordered_json{
        {"num_samples", s.num_samples},
        {"avg_input_length", s.avg_input_length},
        {"avg_target_length", s.avg_target_length},
        {"max_target_length", s.max_target_length},
        {"avg_bars", s.avg_bars},
        {"notes_per_bar", s.notes_per_bar},
        {"skipped_unparseable", s.skipped_unparseable},
        {"empty_corpus", s.empty_corpus},
    };
}

void print_stats_table(const stats::CorpusStats& s) {
    std::fprintf(stderr, "%-20s %12" PRIu64 "\n", "# Samples", s.num_samples);
    std::fprintf(stderr, "%-20s %12.2f\n", "Avg. Input Length", s.avg_input_length);
    std::fprintf(stderr, "%-20s %12.2f\n", "Avg. Target Length", s.avg_target_length);
    std::fprintf(stderr, "%-20s %12" PRIu64 "\n", "Max Target Length",
                 s.max_target_length);
    std::fprintf(stderr, "%-20s %12.2f\n", "Avg. Bars", s.avg_bars);
    std::fprintf(stderr, "%-20s %12.2f\n", "Notes per Bar", s.notes_per_bar);
}

int cmd_stats(const fs::path& input, const std::string& out) {
    const auto records = records_from_any(input);
    const auto s = stats::corpus_stats(records);
    const std::string payload = stats_json(s).dump() + "\n";
    if (out.empty()) std::cout << payload;
    else {
        require_distinct_paths(out, {input});
        write_text(out, payload);
    }
    print_stats_table(s);
    return kExitOk;
}

// ----------------------------------------------------------------- degrade

int cmd_degrade(const fs::path& input, const std::string& out,
                const degrade::DegradationConfig& cfg) {
    const std::string text = read_file_or_throw(input);
    std::string result;
    std::uint64_t block_index = 0;
    for (const auto& block : abc::split_tune_blocks(text)) {
        if (!block.is_tune) {
            result += block.text;
            continue;
        }
        degrade::DegradationConfig per_block = cfg;
        per_block.seed = rng::mix_seed(cfg.seed, block_index++);
        // keep the block's own trailing terminator out of the tune
        std::string tune = block.text;
        std::string terminator;
        if (tune.ends_with("\r\n")) {
            terminator = "\r\n";
            tune.erase(tune.size() - 2);
        } else if (tune.ends_with('\n')) {
            terminator = "\n";
            tune.pop_back();
        }
        result += degrade::degrade_abc(tune, per_block);
        result += terminator;
    }

    if (out.empty()) {
        std::cout << result;
    } else {
        require_distinct_paths(out, {input});
        write_text(out, result);
        write_manifest(out, "degrade",
                       ordered_json{{"input", input.string()},
                                    {"out", out},
                                    {"seed", cfg.seed},
                                    {"p", cfg.swap_probability},
                                    {"b_max", cfg.max_removable_bars},
                                    {"alt_key", cfg.alt_key},
                                    {"fallback_key", cfg.fallback_key}});
    }
    return kExitOk;
}

// -------------------------------------------------------------------- pair

int cmd_pair(const fs::path& input, const fs::path& out,
             const degrade::DegradationConfig& cfg, int jobs) {
    require_distinct_paths(out, {input});
    const auto records = dataset::read_sft(input);
    const auto report = dataset::emit_dpo(records, cfg, out, jobs);
    for (const auto& id : report.skipped_ids)
        std::fprintf(stderr, "skipped degenerate record: %s\n", id.c_str());
    std::fprintf(stderr, "pairs written: %" PRIu64 ", skipped: %" PRIu64 "\n",
                 report.written, report.skipped);
    write_manifest(out, "pair",
                   ordered_json{{"input", input.string()},
                                {"out", out.string()},
                                {"seed", cfg.seed},
                                {"p", cfg.swap_probability},
                                {"b_max", cfg.max_removable_bars},
                                {"alt_key", cfg.alt_key},
                                {"fallback_key", cfg.fallback_key},
                                {"jobs", jobs}},
                   ordered_json{{"written", report.written},
                                {"skipped", report.skipped}});
    return kExitOk;
}

// ----------------------------------------------------------- build-dataset

dataset::RawFormat format_from_string(const std::string& name) {
    if (name.empty() || name == "auto") return dataset::RawFormat::Auto;
    if (name == "jsonl") return dataset::RawFormat::Jsonl;
    if (name == "abc") return dataset::RawFormat::AbcText;
    throw dataset::ConfigError("unknown source format: " + name);
}

dataset::IngestMapping mapping_from_json(const nlohmann::json& j, const fs::path& base) {
    if (!j.is_object()) throw dataset::ConfigError("mapping entry must be an object");
    dataset::IngestMapping mapping;
    mapping.source = j.value("source", "");
    const std::string raw_path = j.value("path", "");
    if (!raw_path.empty()) {
        fs::path p = raw_path;
        mapping.path = p.is_absolute() ? p : base / p;
    }
    mapping.format = format_from_string(j.value("format", ""));
    mapping.prompt_template = j.value("prompt_template", "");
    if (j.contains("fields")) {
        const auto& fields = j["fields"];
        mapping.prompt_key = fields.value("prompt", "");
        mapping.context_key = fields.value("context", "");
        mapping.target_key = fields.value("target", "");
        mapping.id_key = fields.value("id", "");
        mapping.source_key = fields.value("source", "");
    }
    return mapping;
}

std::vector<dataset::IngestMapping> load_mappings(const fs::path& config_path) {
    nlohmann::json j = nlohmann::json::parse(read_file_or_throw(config_path), nullptr, false);
    if (j.is_discarded())
        throw dataset::ConfigError("mapping config is not valid JSON: " +
                                   config_path.string());
    const fs::path base = config_path.parent_path();
    std::vector<dataset::IngestMapping> mappings;
    if (j.is_array()) {
        for (const auto& entry : j) mappings.push_back(mapping_from_json(entry, base));
    } else if (j.contains("sources")) {
        for (const auto& entry : j["sources"])
            mappings.push_back(mapping_from_json(entry, base));
    } else {
        mappings.push_back(mapping_from_json(j, base));
    }
    return mappings;
}

dataset::FilterConfig load_filter(const fs::path& config_path) {
    nlohmann::json j = nlohmann::json::parse(read_file_or_throw(config_path), nullptr, false);
    if (j.is_discarded())
        throw dataset::ConfigError("filter config is not valid JSON: " +
                                   config_path.string());
    dataset::FilterConfig filter;
    filter.url_pattern_enabled = j.value("url_pattern_enabled", true);
    filter.max_metadata_ratio = j.value("max_metadata_ratio", 0.5);
    if (j.contains("banned_phrases"))
        filter.banned_phrases = j["banned_phrases"].get<std::vector<std::string>>();
    return filter;
}

int cmd_build_dataset(const std::string& mapping_path, const std::string& filter_path,
                      const std::vector<std::string>& inputs, const fs::path& out_prefix,
                      const degrade::DegradationConfig& degradation,
                      std::size_t split_threshold, int jobs, bool with_dpo) {
    dataset::BuildConfig cfg;
    cfg.sources = load_mappings(mapping_path);
    if (!inputs.empty()) {
        if (cfg.sources.size() == 1 && inputs.size() > 1) {
            // broadcast a single mapping over every positional input
            std::vector<dataset::IngestMapping> expanded;
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                auto m = cfg.sources[0];
                m.path = inputs[i];
                m.source += "-" + std::to_string(i);
                expanded.push_back(std::move(m));
            }
            cfg.sources = std::move(expanded);
        } else if (cfg.sources.size() == inputs.size()) {
            for (std::size_t i = 0; i < inputs.size(); ++i)
                cfg.sources[i].path = inputs[i];
        } else if (inputs.size() == 1) {
            for (auto& m : cfg.sources) m.path = inputs[0];
        } else {
            throw dataset::ConfigError(
                "positional inputs do not line up with mapping entries");
        }
    }
    for (const auto& m : cfg.sources)
        if (m.path.empty())
            throw dataset::ConfigError("source '" + m.source + "' has no input path");

    if (!filter_path.empty()) cfg.filter = load_filter(filter_path);
    cfg.degradation = degradation;
    cfg.split_threshold = split_threshold;
    cfg.jobs = jobs;
    cfg.with_dpo = with_dpo;
    cfg.out_prefix = out_prefix;

    std::vector<fs::path> input_paths;
    for (const auto& m : cfg.sources) input_paths.push_back(m.path);
    for (const char* suffix : {".short.sft.jsonl", ".long.sft.jsonl"})
        require_distinct_paths(fs::path(out_prefix.string() + suffix), input_paths);

    const auto report = dataset::build_dataset(cfg);

    std::fprintf(stderr,
                 "ingested: %" PRIu64 "  kept: %" PRIu64 "  filtered: %" PRIu64
                 "  rejected: %" PRIu64 "\n",
                 report.ingested, report.kept, report.filtered, report.rejected);
    std::fprintf(stderr,
                 "short: %" PRIu64 "  long: %" PRIu64 "  pairs: %" PRIu64
                 " (+%" PRIu64 " skipped)\n",
                 report.short_records, report.long_records, report.pairs_written,
                 report.pairs_skipped);

    ordered_json sources = ordered_json::array();
    for (const auto& m : cfg.sources)
        sources.push_back({{"source", m.source}, {"path", m.path.string()}});
    write_manifest(
        out_prefix, "build-dataset",
        ordered_json{{"mapping", mapping_path},
                     {"filter_config", filter_path},
                     {"sources", std::move(sources)},
                     {"out", out_prefix.string()},
                     {"seed", degradation.seed},
                     {"p", degradation.swap_probability},
                     {"b_max", degradation.max_removable_bars},
                     {"alt_key", degradation.alt_key},
                     {"fallback_key", degradation.fallback_key},
                     {"split_threshold", split_threshold},
                     {"jobs", jobs},
                     {"dpo", with_dpo}},
        ordered_json{{"ingested", report.ingested},
                     {"kept", report.kept},
                     {"filtered", report.filtered},
                     {"rejected", report.rejected},
                     {"short_records", report.short_records},
                     {"long_records", report.long_records},
                     {"pairs_written", report.pairs_written},
                     {"pairs_skipped", report.pairs_skipped}});
    return kExitOk;
}

// --------------------------------------------------------------- fmd / ppl

int cmd_fmd(const fs::path& reference, const fs::path& candidate) {
    const auto ref = metrics::load_embeddings(reference);
    const auto cand = metrics::load_embeddings(candidate);
    std::printf("%.10g\n", metrics::fmd(ref, cand));
    return kExitOk;
}

int cmd_ppl(const fs::path& input) {
    std::printf("%.10g\n", metrics::perplexity(metrics::load_logliks(input)));
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"abcforge: ABC corpus toolkit for instruction-tuning datasets,\n"
                 "degradation-based preference pairs, corpus statistics, and\n"
                 "FMD/perplexity evaluation"};
    app.require_subcommand(1);

    // validate
    std::string validate_input;
    auto* validate = app.add_subcommand("validate", "Check an ABC file and print a report");
    validate->add_option("input", validate_input, "ABC file")->required();

    // stats
    std::string stats_input, stats_out;
    auto* stats_cmd = app.add_subcommand(
        "stats", "Corpus statistics over a records JSONL or ABC file");
    stats_cmd->add_option("input", stats_input, "records .jsonl or ABC file")->required();
    stats_cmd->add_option("--out", stats_out, "write the JSON object here instead of stdout");

    // shared degradation flags
    auto add_degradation_flags = [](CLI::App* cmd, degrade::DegradationConfig& cfg,
                                    bool seed_required) {
        auto* seed = cmd->add_option("--seed", cfg.seed,
                                     "64-bit seed for deterministic degradation");
        if (seed_required) seed->required();
        cmd->add_option("--p", cfg.swap_probability,
                        "per-note pitch swap probability in [0,1]");
        cmd->add_option("--b-max", cfg.max_removable_bars,
                        "maximum removable music lines per tune");
        cmd->add_option("--alt-key", cfg.alt_key, "replacement key signature");
        cmd->add_option("--fallback-key", cfg.fallback_key,
                        "key used when the original already equals --alt-key");
    };

    // degrade
    std::string degrade_input, degrade_out;
    degrade::DegradationConfig degrade_cfg;
    auto* degrade_cmd = app.add_subcommand(
        "degrade", "Apply key change, pitch swap, and bar truncation to ABC tunes");
    degrade_cmd->add_option("input", degrade_input, "ABC file (may hold many tunes)")
        ->required();
    degrade_cmd->add_option("--out", degrade_out, "output file (default stdout)");
    add_degradation_flags(degrade_cmd, degrade_cfg, true);

    // pair
    std::string pair_input, pair_out;
    degrade::DegradationConfig pair_cfg;
    int pair_jobs = 1;
    auto* pair_cmd = app.add_subcommand(
        "pair", "Emit DPO preference pairs from a records JSONL file");
    pair_cmd->add_option("input", pair_input, "records .jsonl (emit_sft schema)")
        ->required();
    pair_cmd->add_option("--out", pair_out, "output .dpo.jsonl path")->required();
    pair_cmd->add_option("--jobs", pair_jobs, "worker threads (output order is fixed)");
    add_degradation_flags(pair_cmd, pair_cfg, true);

    // build-dataset
    std::string build_mapping, build_filter, build_out;
    std::vector<std::string> build_inputs;
    degrade::DegradationConfig build_cfg;
    std::size_t build_threshold = dataset::kDefaultSplitThreshold;
    int build_jobs = 1;
    bool build_no_dpo = false;
    auto* build_cmd = app.add_subcommand(
        "build-dataset",
        "Ingest, filter, split, and emit SFT + DPO files with audit sidecars");
    build_cmd->add_option("--mapping", build_mapping, "mapping config JSON")->required();
    build_cmd->add_option("--filter-config", build_filter, "filter config JSON");
    build_cmd->add_option("--out", build_out, "output prefix")->required();
    build_cmd->add_option("inputs", build_inputs,
                          "input files (override mapping paths)");
    build_cmd->add_option("--split-threshold", build_threshold,
                          "short/long boundary in characters");
    build_cmd->add_option("--jobs", build_jobs, "worker threads (output order is fixed)");
    build_cmd->add_flag("--no-dpo", build_no_dpo, "emit only SFT files");
    add_degradation_flags(build_cmd, build_cfg, true);

    // fmd
    std::string fmd_reference, fmd_candidate;
    auto* fmd_cmd = app.add_subcommand(
        "fmd", "Frechet music distance between two embedding files");
    fmd_cmd->add_option("reference", fmd_reference, "reference embedding file")->required();
    fmd_cmd->add_option("candidate", fmd_candidate, "candidate embedding file")->required();

    // ppl
    std::string ppl_input;
    auto* ppl_cmd = app.add_subcommand(
        "ppl", "Corpus perplexity from a token log-likelihood JSONL file");
    ppl_cmd->add_option("input", ppl_input, "log-likelihood .jsonl file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*validate) return cmd_validate(validate_input);
        if (*stats_cmd) return cmd_stats(stats_input, stats_out);
        if (*degrade_cmd) return cmd_degrade(degrade_input, degrade_out, degrade_cfg);
        if (*pair_cmd) return cmd_pair(pair_input, pair_out, pair_cfg, pair_jobs);
        if (*build_cmd)
            return cmd_build_dataset(build_mapping, build_filter, build_inputs,
                                     build_out, build_cfg, build_threshold, build_jobs,
                                     !build_no_dpo);
        if (*fmd_cmd) return cmd_fmd(fmd_reference, fmd_candidate);
        if (*ppl_cmd) return cmd_ppl(ppl_input);
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const dataset::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "invalid parameter: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDataError;
    }
    return kExitUsage;
}
