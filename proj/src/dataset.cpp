#include "abcforge/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace abcforge::dataset {

using nlohmann::ordered_json;

std::string_view split_name(Split split) {
    return split == Split::Short ? "short" : "long";
}

void IngestMapping::check(RawFormat resolved) const {
    if (source.empty()) throw ConfigError("mapping needs a source name");
    if (resolved == RawFormat::Jsonl) {
        if (target_key.empty())
            throw ConfigError("JSONL mapping needs a target field binding");
        if (prompt_key.empty() && prompt_template.empty())
            throw ConfigError("mapping needs a prompt binding or a prompt template");
    } else {
        if (prompt_template.empty())
            throw ConfigError("ABC text mapping needs a prompt template");
    }
}

void FilterConfig::check() const {
    if (max_metadata_ratio < 0.0 || max_metadata_ratio > 1.0)
        throw ConfigError("max metadata ratio must be in [0, 1]");
}

namespace {

Split split_for(const std::string& target, std::size_t threshold) {
    return abc::utf8_length(target) <= threshold ? Split::Short : Split::Long;
}

std::string synth_id(const std::string& source, std::uint64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "-%06llu", static_cast<unsigned long long>(index));
    return source + buf;
}

RawFormat resolve_format(const IngestMapping& mapping, const std::string& contents) {
    if (mapping.format != RawFormat::Auto) return mapping.format;
    if (mapping.path.extension() == ".jsonl") return RawFormat::Jsonl;
    const std::size_t first = contents.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && contents[first] == '{') return RawFormat::Jsonl;
    return RawFormat::AbcText;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open input file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) throw IngestError("read failure on: " + path.string());
    return buffer.str();
}

std::string lowered(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

struct RecordSink {
    const IngestMapping& mapping;
    std::size_t threshold;
    IngestResult& result;
    std::set<std::string> seen_ids;

    void reject(std::string id, std::uint64_t index, std::string reason,
                std::string detail) {
        result.rejected.push_back({std::move(id), mapping.source, index,
                                   std::move(reason), std::move(detail)});
    }

    void accept(DatasetRecord record, std::uint64_t index) {
        const auto report = abc::validate(record.target);
        if (!report.is_valid) {
            std::string detail = report.issues.empty() ? "" : report.issues.front().message;
            reject(std::move(record.id), index, "invalid_target", std::move(detail));
            return;
        }
        if (!seen_ids.insert(record.id).second) {
            reject(std::move(record.id), index, "duplicate_id", "");
            return;
        }
        record.split = split_for(record.target, threshold);
        result.records.push_back(std::move(record));
    }
};

void ingest_jsonl(const IngestMapping& mapping, const std::string& contents,
                  RecordSink& sink) {
    std::istringstream stream(contents);
    std::string line;
    std::uint64_t index = 0;
    while (std::getline(stream, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;

        const std::uint64_t raw_index = index++;
        nlohmann::json row = nlohmann::json::parse(line, nullptr, false);
        if (row.is_discarded() || !row.is_object()) {
            sink.reject(synth_id(mapping.source, raw_index), raw_index, "invalid_json",
                        "line is not a JSON object");
            continue;
        }

        auto read_string = [&row](const std::string& key) -> std::optional<std::string> {
            if (key.empty() || !row.contains(key) || !row[key].is_string())
                return std::nullopt;
            return row[key].get<std::string>();
        };

        DatasetRecord record;
        record.source = read_string(mapping.source_key).value_or(mapping.source);
        record.id = read_string(mapping.id_key).value_or(synth_id(mapping.source, raw_index));

        auto target = read_string(mapping.target_key);
        if (!target) {
            sink.reject(record.id, raw_index, "missing_field",
                        "no string value for target key '" + mapping.target_key + "'");
            continue;
        }
        record.target = std::move(*target);
        record.prompt = read_string(mapping.prompt_key).value_or(mapping.prompt_template);
        record.context = read_string(mapping.context_key).value_or("");
        sink.accept(std::move(record), raw_index);
    }
}

void ingest_abc(const IngestMapping& mapping, const std::string& contents,
                RecordSink& sink) {
    std::uint64_t index = 0;
    for (const auto& block : abc::split_tune_blocks(contents)) {
        if (!block.is_tune) continue;
        const std::uint64_t raw_index = index++;

        std::string target = block.text;
        if (target.ends_with("\r\n")) target.erase(target.size() - 2);
        else if (target.ends_with('\n')) target.pop_back();

        DatasetRecord record;
        record.source = mapping.source;
        record.id = synth_id(mapping.source, raw_index);
        record.prompt = mapping.prompt_template;
        record.target = std::move(target);
        sink.accept(std::move(record), raw_index);
    }
}

} // namespace

IngestResult ingest(const IngestMapping& mapping, std::size_t split_threshold) {
    const std::string contents = read_file(mapping.path);
    const RawFormat format = resolve_format(mapping, contents);
    mapping.check(format);

    IngestResult result;
    RecordSink sink{mapping, split_threshold, result, {}};
    if (format == RawFormat::Jsonl) ingest_jsonl(mapping, contents, sink);
    else ingest_abc(mapping, contents, sink);
    result.raw_count = result.records.size() + result.rejected.size();
    return result;
}

FilterDecision filter_captionlike(const DatasetRecord& record, const FilterConfig& cfg) {
    cfg.check();
    FilterDecision decision;

    if (cfg.url_pattern_enabled) {
        static const std::regex url_pattern(R"((https?://|www\.))",
                                            std::regex::icase | std::regex::optimize);
        if (std::regex_search(record.prompt, url_pattern) ||
            std::regex_search(record.context, url_pattern))
            decision.reasons.emplace_back("url");
    }

    try {
        const abc::AbcTune tune = abc::parse_tune(record.target);
        std::size_t metadata = 0;
        std::size_t nonblank = 0;
        for (const auto& line : tune.lines) {
            if (line.kind == abc::LineKind::Blank) continue;
            ++nonblank;
            if (line.kind == abc::LineKind::Metadata) ++metadata;
        }
        if (nonblank > 0) {
            const double ratio = static_cast<double>(metadata) / static_cast<double>(nonblank);
            if (ratio > cfg.max_metadata_ratio)
                decision.reasons.emplace_back("metadata_ratio");
        }
    } catch (const abc::ParseError&) {
        // Unparseable targets are the reject sidecar's business, not the filter's.
    }

    if (!cfg.banned_phrases.empty()) {
        const std::string haystack =
            lowered(record.prompt) + '\n' + lowered(record.context) + '\n' + lowered(record.target);
        for (const auto& phrase : cfg.banned_phrases) {
            if (!phrase.empty() && haystack.find(lowered(phrase)) != std::string::npos) {
                decision.reasons.emplace_back("banned_phrase");
                break;
            }
        }
    }

    decision.keep = decision.reasons.empty();
    return decision;
}

std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>>
split_by_length(const std::vector<DatasetRecord>& records) {
    std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> parts;
    for (const auto& record : records) {
        if (record.split == Split::Short) parts.first.push_back(record);
        else parts.second.push_back(record);
    }
    return parts;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open output file: " + path.string());
    return out;
}

ordered_json record_json(const DatasetRecord& record) {
    ordered_json row;
    row["id"] = record.id;
    row["source"] = record.source;
    row["prompt"] = record.prompt;
    row["context"] = record.context;
    row["target"] = record.target;
    row["split"] = split_name(record.split);
    return row;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions from
/// workers are stashed and rethrown on the caller thread.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const int workers = std::max(1, jobs);
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    const std::size_t count = std::min(static_cast<std::size_t>(workers), n);
    pool.reserve(count);
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace

std::uint64_t emit_sft(const std::vector<DatasetRecord>& records,
                       const std::filesystem::path& out) {
    std::ofstream stream = open_out(out);
    for (const auto& record : records) stream << record_json(record).dump() << '\n';
    stream.flush();
    if (!stream) throw IoError("write failure on: " + out.string());
    return records.size();
}

DpoEmitReport emit_dpo(const std::vector<DatasetRecord>& records,
                       const degrade::DegradationConfig& cfg,
                       const std::filesystem::path& out, int jobs) {
    struct Slot {
        std::optional<degrade::PreferencePair> pair;
        std::string skip_reason;
    };
    std::vector<Slot> slots(records.size());

    parallel_for(records.size(), jobs, [&](std::size_t i) {
        const DatasetRecord& record = records[i];
        degrade::DegradationConfig per_record = cfg;
        per_record.seed = rng::mix_seed(cfg.seed, i);
        try {
            slots[i].pair = degrade::make_preference_pair(
                record.id, record.prompt, record.context, record.target, per_record);
        } catch (const degrade::PairError& e) {
            slots[i].skip_reason = e.what();
        } catch (const degrade::DegradeError& e) {
            slots[i].skip_reason = e.what();
        }
    });

    DpoEmitReport report;
    std::ofstream stream = open_out(out);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i].pair) {
            ++report.skipped;
            report.skipped_ids.push_back(records[i].id);
            continue;
        }
        const auto& pair = *slots[i].pair;
        ordered_json row;
        row["id"] = pair.id;
        row["prompt"] = pair.prompt;
        row["context"] = pair.context;
        row["chosen"] = pair.chosen;
        row["rejected"] = pair.rejected;
        row["seed_used"] = pair.seed_used;
        row["degradations_applied"] = pair.degradations_applied;
        stream << row.dump() << '\n';
        ++report.written;
    }
    stream.flush();
    if (!stream) throw IoError("write failure on: " + out.string());
    return report;
}

std::vector<DatasetRecord> read_sft(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open input file: " + path.string());

    std::vector<DatasetRecord> records;
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json row = nlohmann::json::parse(line, nullptr, false);
        if (row.is_discarded() || !row.is_object())
            throw IngestError("line " + std::to_string(line_no) + " of " + path.string() +
                              " is not a JSON object");
        DatasetRecord record;
        record.id = row.value("id", "");
        record.source = row.value("source", "");
        record.prompt = row.value("prompt", "");
        record.context = row.value("context", "");
        record.target = row.value("target", "");
        if (row.value("split", "") == "long") record.split = Split::Long;
        else if (row.value("split", "") == "short") record.split = Split::Short;
        else record.split = split_for(record.target, kDefaultSplitThreshold);
        records.push_back(std::move(record));
    }
    return records;
}

BuildReport build_dataset(const BuildConfig& cfg) {
    cfg.filter.check();
    cfg.degradation.check();
    if (cfg.sources.empty()) throw ConfigError("no sources configured");

    BuildReport report;
    std::vector<DatasetRecord> kept;
    std::vector<std::pair<DatasetRecord, std::vector<std::string>>> filtered;
    std::vector<RejectedRecord> rejected;

    for (const auto& mapping : cfg.sources) {
        IngestResult result = ingest(mapping, cfg.split_threshold);
        report.ingested += result.raw_count;
        for (auto& reject : result.rejected) rejected.push_back(std::move(reject));
        for (auto& record : result.records) {
            FilterDecision decision = filter_captionlike(record, cfg.filter);
            if (decision.keep) kept.push_back(std::move(record));
            else filtered.emplace_back(std::move(record), std::move(decision.reasons));
        }
    }

    report.kept = kept.size();
    report.filtered = filtered.size();
    report.rejected = rejected.size();

    auto [short_records, long_records] = split_by_length(kept);
    report.short_records = short_records.size();
    report.long_records = long_records.size();

    const std::string prefix = cfg.out_prefix.string();
    auto emit_split_sft = [&](const std::vector<DatasetRecord>& records,
                              std::string_view name) {
        const std::filesystem::path path = prefix + "." + std::string(name) + ".sft.jsonl";
        emit_sft(records, path);
        report.outputs.push_back(path);
    };
    emit_split_sft(short_records, "short");
    emit_split_sft(long_records, "long");

    if (cfg.with_dpo) {
        auto emit_split_dpo = [&](const std::vector<DatasetRecord>& records,
                                  std::string_view name) {
            const std::filesystem::path path =
                prefix + "." + std::string(name) + ".dpo.jsonl";
            const DpoEmitReport dpo = emit_dpo(records, cfg.degradation, path, cfg.jobs);
            report.pairs_written += dpo.written;
            report.pairs_skipped += dpo.skipped;
            report.outputs.push_back(path);
        };
        emit_split_dpo(short_records, "short");
        emit_split_dpo(long_records, "long");
    }

    {
        const std::filesystem::path path = prefix + ".filtered.jsonl";
        std::ofstream stream = open_out(path);
        for (const auto& [record, reasons] : filtered) {
            ordered_json row = record_json(record);
            row["filter_reasons"] = reasons;
            stream << row.dump() << '\n';
        }
        stream.flush();
        if (!stream) throw IoError("write failure on: " + path.string());
        report.outputs.push_back(path);
    }
    {
        const std::filesystem::path path = prefix + ".rejected.jsonl";
        std::ofstream stream = open_out(path);
        for (const auto& reject : rejected) {
            ordered_json row;
            row["id"] = reject.id;
            row["source"] = reject.source;
            row["index"] = reject.index;
            row["reason"] = reject.reason;
            row["detail"] = reject.detail;
            stream << row.dump() << '\n';
        }
        stream.flush();
        if (!stream) throw IoError("write failure on: " + path.string());
        report.outputs.push_back(path);
    }
    return report;
}

} // namespace abcforge::dataset
