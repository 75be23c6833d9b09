#include "abcforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace abcforge::metrics {

GaussianStats fit_gaussian(const EmbeddingSet& set) {
    const auto n = set.vectors.rows();
    const auto d = set.vectors.cols();
    if (n < 2)
        throw TooFewVectorsError("need at least 2 vectors to fit a covariance, got " +
                                 std::to_string(n));

    GaussianStats stats;
    stats.mean = set.vectors.colwise().mean();
    const Eigen::MatrixXd centered = set.vectors.rowwise() - stats.mean.transpose();
    stats.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    stats.cov = ((stats.cov + stats.cov.transpose()) / 2.0).eval();
    stats.cov += kCovarianceEpsilon * Eigen::MatrixXd::Identity(d, d);
    return stats;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    if (a.mean.size() != b.mean.size())
        throw DimensionMismatchError("gaussian dimensions differ: " +
                                     std::to_string(a.mean.size()) + " vs " +
                                     std::to_string(b.mean.size()));

    const double mean_term = (a.mean - b.mean).squaredNorm();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(a.cov);
    if (es_a.info() != Eigen::Success)
        throw NumericalError("eigendecomposition of first covariance failed");
    const Eigen::VectorXd root_eigs = es_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd sqrt_a =
        es_a.eigenvectors() * root_eigs.asDiagonal() * es_a.eigenvectors().transpose();

    Eigen::MatrixXd inner = sqrt_a * b.cov * sqrt_a;
    inner = ((inner + inner.transpose()) / 2.0).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_inner(inner);
    if (es_inner.info() != Eigen::Success)
        throw NumericalError("eigendecomposition of covariance product failed");
    const double trace_sqrt = es_inner.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double d2 = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * trace_sqrt;
    return std::max(d2, 0.0);
}

double fmd(const EmbeddingSet& reference, const EmbeddingSet& candidate) {
    if (reference.count() == 0 || candidate.count() == 0)
        throw TooFewVectorsError("both embedding sets must be nonempty");
    if (reference.dim() != candidate.dim())
        throw DimensionMismatchError("embedding dimensions differ: " +
                                     std::to_string(reference.dim()) + " vs " +
                                     std::to_string(candidate.dim()));
    return frechet_distance(fit_gaussian(reference), fit_gaussian(candidate));
}

double perplexity(const std::vector<LogLikRecord>& records) {
    double log_sum = 0.0;
    std::uint64_t tokens = 0;
    for (const auto& record : records) {
        for (const double lp : record.token_logprobs) {
            if (!(lp <= 0.0) || !std::isfinite(lp))
                throw InvalidLogProbError("record '" + record.id +
                                          "' has a log-probability above 0");
            log_sum += lp;
        }
        tokens += record.token_count();
    }
    if (tokens == 0) throw EmptyCorpusError("no tokens in the corpus");
    return std::exp(-log_sum / static_cast<double>(tokens));
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open embedding file: " + path.string());

    std::string header;
    if (!std::getline(in, header))
        throw FormatError(path.string() + ": missing header line");
    unsigned long long dim = 0;
    unsigned long long count = 0;
    if (std::sscanf(header.c_str(), "dim=%llu count=%llu", &dim, &count) != 2 ||
        dim == 0)
        throw FormatError(path.string() + ": header must be 'dim=<d> count=<n>'");

    EmbeddingSet set;
    set.vectors.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));

    std::string line;
    for (unsigned long long row = 0; row < count; ++row) {
        if (!std::getline(in, line))
            throw FormatError(path.string() + ": expected " + std::to_string(count) +
                              " vector lines, got " + std::to_string(row));
        const char* cursor = line.c_str();
        for (unsigned long long col = 0; col < dim; ++col) {
            char* end = nullptr;
            const double value = std::strtod(cursor, &end);
            if (end == cursor)
                throw FormatError(path.string() + ": line " + std::to_string(row + 2) +
                                  " has fewer than " + std::to_string(dim) + " values");
            set.vectors(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = value;
            cursor = end;
        }
        while (*cursor == ' ' || *cursor == '\t' || *cursor == '\r') ++cursor;
        if (*cursor != '\0')
            throw FormatError(path.string() + ": line " + std::to_string(row + 2) +
                              " has more than " + std::to_string(dim) + " values");
    }
    return set;
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open embedding file for write: " + path.string());
    out << "dim=" << set.dim() << " count=" << set.count() << '\n';
    char buf[64];
    for (Eigen::Index row = 0; row < set.vectors.rows(); ++row) {
        for (Eigen::Index col = 0; col < set.vectors.cols(); ++col) {
            std::snprintf(buf, sizeof(buf), "%.17g", set.vectors(row, col));
            if (col > 0) out << ' ';
            out << buf;
        }
        out << '\n';
    }
    out.flush();
    if (!out) throw FormatError("write failure on: " + path.string());
}

std::vector<LogLikRecord> load_logliks(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open log-likelihood file: " + path.string());

    std::vector<LogLikRecord> records;
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;

        nlohmann::json row = nlohmann::json::parse(line, nullptr, false);
        if (row.is_discarded() || !row.is_object())
            throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                              " is not a JSON object");
        if (!row.contains("id") || !row["id"].is_string())
            throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                              " is missing string key 'id'");
        if (!row.contains("token_logprobs") || !row["token_logprobs"].is_array())
            throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                              " is missing array key 'token_logprobs'");

        LogLikRecord record;
        record.id = row["id"].get<std::string>();
        for (const auto& value : row["token_logprobs"]) {
            if (!value.is_number())
                throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                                  " has a non-numeric log-probability");
            record.token_logprobs.push_back(value.get<double>());
        }
        if (record.token_logprobs.empty())
            throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                              " has an empty token_logprobs list");
        records.push_back(std::move(record));
    }
    return records;
}

} // namespace abcforge::metrics
