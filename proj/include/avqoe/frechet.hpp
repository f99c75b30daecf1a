#pragma once

// Fréchet distance between Gaussian fits of feature embeddings (FID for
// image features, FVD for video features). Embeddings are computed elsewhere.

#include <Eigen/Dense>
#include <filesystem>
#include <string>

namespace avqoe {

struct GaussianMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Sample mean and (n-1) covariance of the rows of `samples`.
GaussianMoments moments(const Eigen::MatrixXd& samples);

/// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}). Throws DimensionMismatch and
/// NonPsdCovariance (eigenvalue below -1e-6).
double frechet_distance(const GaussianMoments& a, const GaussianMoments& b);
double frechet_distance(const Eigen::MatrixXd& real, const Eigen::MatrixXd& generated);

struct EmbeddingSet {
    Eigen::MatrixXd vectors;  // n x d
    std::string source;       // "real" or "generated"
};

/// One JSON header line {"n":..,"d":..,"source":..} then n*d little-endian f32.
EmbeddingSet read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set);

}  // namespace avqoe
