#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "abcforge/degrade.hpp"

namespace abcforge::dataset {

enum class Split { Short, Long };

std::string_view split_name(Split split);

/// Target length (code points) at or below which a record is Short.
inline constexpr std::size_t kDefaultSplitThreshold = 500;

/// One row of the unified instruction schema.
struct DatasetRecord {
    std::string id;
    std::string source;
    std::string prompt;
    std::string context;
    std::string target;
    Split split = Split::Short;
    std::map<std::string, std::string> meta;

    bool operator==(const DatasetRecord&) const = default;
};

enum class RawFormat { Auto, Jsonl, AbcText };

/// Binds one raw corpus to the unified schema. For JSONL sources the field
/// map names the raw keys to read; for ABC text sources each tune block is
/// the target and prompt_template supplies the prompt.
struct IngestMapping {
    std::string source;
    std::filesystem::path path;
    RawFormat format = RawFormat::Auto;
    std::string prompt_key;
    std::string context_key;
    std::string target_key;
    std::string id_key;
    std::string source_key;
    std::string prompt_template;

    /// Throws ConfigError when mandatory bindings are missing.
    void check(RawFormat resolved) const;
};

struct FilterConfig {
    bool url_pattern_enabled = true;
    double max_metadata_ratio = 0.5;
    std::vector<std::string> banned_phrases;

    void check() const;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IngestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A raw record that failed ingestion; kept for the reject sidecar.
struct RejectedRecord {
    std::string id;     ///< best-effort identifier (may be synthesized)
    std::string source;
    std::uint64_t index = 0; ///< zero-based position in the raw file
    std::string reason;
    std::string detail;
};

struct IngestResult {
    std::vector<DatasetRecord> records;
    std::vector<RejectedRecord> rejected;
    std::uint64_t raw_count = 0; ///< records.size() + rejected.size()
};

/// Reads a raw corpus (JSONL or multi-tune ABC text) into unified records.
/// Records whose target fails validation, duplicate ids, and unparseable
/// JSONL lines land in `rejected`, never silently dropped. Throws
/// IngestError when the file itself cannot be read.
IngestResult ingest(const IngestMapping& mapping,
                    std::size_t split_threshold = kDefaultSplitThreshold);

struct FilterDecision {
    bool keep = true;
    std::vector<std::string> reasons; ///< "url", "metadata_ratio", "banned_phrase"
};

FilterDecision filter_captionlike(const DatasetRecord& record, const FilterConfig& cfg);

/// Stable partition by the record split label.
std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>>
split_by_length(const std::vector<DatasetRecord>& records);

/// Writes records as JSONL with keys id, source, prompt, context, target,
/// split, in that order. Returns the number of lines written.
std::uint64_t emit_sft(const std::vector<DatasetRecord>& records,
                       const std::filesystem::path& out);

struct DpoEmitReport {
    std::uint64_t written = 0;
    std::uint64_t skipped = 0;
    std::vector<std::string> skipped_ids;
};

/// Writes preference pairs as JSONL with keys id, prompt, context, chosen,
/// rejected, seed_used, degradations_applied. Record i is degraded with seed
/// mix_seed(cfg.seed, i); `jobs` threads may run the degradations but output
/// order always matches input order.
DpoEmitReport emit_dpo(const std::vector<DatasetRecord>& records,
                       const degrade::DegradationConfig& cfg,
                       const std::filesystem::path& out, int jobs = 1);

/// Reads back a JSONL file written by emit_sft (or any JSONL with the same
/// keys). Convenience for stats and pairing runs over emitted files.
std::vector<DatasetRecord> read_sft(const std::filesystem::path& path);

struct BuildConfig {
    std::vector<IngestMapping> sources;
    FilterConfig filter;
    degrade::DegradationConfig degradation;
    std::size_t split_threshold = kDefaultSplitThreshold;
    int jobs = 1;
    bool with_dpo = true;
    std::filesystem::path out_prefix;
};

struct BuildReport {
    std::uint64_t ingested = 0;
    std::uint64_t kept = 0;
    std::uint64_t filtered = 0;
    std::uint64_t rejected = 0;
    std::uint64_t short_records = 0;
    std::uint64_t long_records = 0;
    std::uint64_t pairs_written = 0;
    std::uint64_t pairs_skipped = 0;
    std::vector<std::filesystem::path> outputs;
};

/// Full pipeline: ingest every source, filter, split, and emit
///   <prefix>.short.sft.jsonl   <prefix>.long.sft.jsonl
///   <prefix>.short.dpo.jsonl   <prefix>.long.dpo.jsonl   (when with_dpo)
///   <prefix>.filtered.jsonl    <prefix>.rejected.jsonl
/// Audit invariant: ingested == kept + filtered + rejected.
BuildReport build_dataset(const BuildConfig& cfg);

} // namespace abcforge::dataset
