#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace abcforge::metrics {

class MetricsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TooFewVectorsError : public MetricsError {
public:
    using MetricsError::MetricsError;
};

class DimensionMismatchError : public MetricsError {
public:
    using MetricsError::MetricsError;
};

class NumericalError : public MetricsError {
public:
    using MetricsError::MetricsError;
};

class FormatError : public MetricsError {
public:
    using MetricsError::MetricsError;
};

class EmptyCorpusError : public MetricsError {
public:
    using MetricsError::MetricsError;
};

class InvalidLogProbError : public MetricsError {
public:
    using MetricsError::MetricsError;
};

/// A set of fixed-dimension embedding vectors, one per row.
struct EmbeddingSet {
    Eigen::MatrixXd vectors; // count x dim

    std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
    std::size_t count() const { return static_cast<std::size_t>(vectors.rows()); }
};

/// Regularizer added to every fitted covariance so near-singular sets (fewer
/// samples than dimensions) still admit a matrix square root.
inline constexpr double kCovarianceEpsilon = 1e-6;

struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Mean and unbiased (n-1) sample covariance, symmetrized and regularized by
/// kCovarianceEpsilon * I. Throws TooFewVectorsError when count < 2.
GaussianStats fit_gaussian(const EmbeddingSet& set);

/// Squared Fréchet distance between two Gaussians:
///   ||mu1 - mu2||^2 + tr(S1) + tr(S2) - 2 tr((S1 S2)^{1/2})
/// The product square-root trace goes through the symmetric form
/// S1^{1/2} S2 S1^{1/2}; negative eigenvalues clamp to zero and the result
/// clamps to >= 0.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Fréchet distance between Gaussians fitted to the two sets.
double fmd(const EmbeddingSet& reference, const EmbeddingSet& candidate);

/// Per-sequence token log-likelihoods (natural log, each entry <= 0).
struct LogLikRecord {
    std::string id;
    std::vector<double> token_logprobs;

    std::size_t token_count() const { return token_logprobs.size(); }
};

/// Corpus perplexity: exp of the token-weighted mean negative log-likelihood
/// over every record. Throws EmptyCorpusError when there are no tokens and
/// InvalidLogProbError when any entry is positive or not finite.
double perplexity(const std::vector<LogLikRecord>& records);

/// Text format: header line "dim=<d> count=<n>", then n lines of d
/// space-separated reals (scientific notation accepted).
EmbeddingSet load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

/// JSONL, one record per line with keys "id" and "token_logprobs".
std::vector<LogLikRecord> load_logliks(const std::filesystem::path& path);

} // namespace abcforge::metrics
