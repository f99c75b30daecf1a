#include "avqoe/frechet.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "avqoe/error.hpp"
#include "avqoe/json_support.hpp"

namespace avqoe {

namespace {

constexpr double kNegativeEigenTolerance = -1e-6;

Eigen::VectorXd checked_eigenvalues(const Eigen::VectorXd& ev, const char* what) {
    Eigen::VectorXd out = ev;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (out(i) < kNegativeEigenTolerance) {
            throw Error(ErrorCode::NonPsdCovariance,
                        std::string(what) + " has eigenvalue " + std::to_string(out(i)));
        }
        out(i) = std::max(0.0, out(i));
    }
    return out;
}

float to_little_endian(float f) {
    if constexpr (std::endian::native == std::endian::little) {
        return f;
    } else {
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        u = __builtin_bswap32(u);
        std::memcpy(&f, &u, 4);
        return f;
    }
}

}  // namespace

GaussianMoments moments(const Eigen::MatrixXd& samples) {
    if (samples.rows() < 2) {
        throw Error(ErrorCode::DimensionMismatch, "need at least two embedding vectors");
    }
    GaussianMoments m;
    m.mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd centered = samples.rowwise() - m.mean.transpose();
    m.cov = centered.transpose() * centered / static_cast<double>(samples.rows() - 1);
    return m;
}

double frechet_distance(const GaussianMoments& a, const GaussianMoments& b) {
    const auto d = a.mean.size();
    if (b.mean.size() != d || a.cov.rows() != d || a.cov.cols() != d || b.cov.rows() != d || b.cov.cols() != d) {
        throw Error(ErrorCode::DimensionMismatch, "embedding dimensionality differs");
    }
    // Tr((S1 S2)^{1/2}) equals the trace of the symmetric square root of
    // S1^{1/2} S2 S1^{1/2}, which shares the eigenvalues of S1 S2.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(a.cov);
    const Eigen::VectorXd l1 = checked_eigenvalues(e1.eigenvalues(), "first covariance");
    checked_eigenvalues(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(b.cov, Eigen::EigenvaluesOnly).eigenvalues(),
                        "second covariance");
    const Eigen::MatrixXd root1 = e1.eigenvectors() * l1.cwiseSqrt().asDiagonal() * e1.eigenvectors().transpose();
    Eigen::MatrixXd m = root1 * b.cov * root1;
    m = 0.5 * (m + m.transpose());
    const Eigen::VectorXd lm = checked_eigenvalues(
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues(), "S1 S2 product");

    const double dist = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * lm.cwiseSqrt().sum();
    return std::max(0.0, dist);
}

double frechet_distance(const Eigen::MatrixXd& real, const Eigen::MatrixXd& generated) {
    if (real.cols() != generated.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "embedding dimensionality differs: " + std::to_string(real.cols()) +
                                                      " vs " + std::to_string(generated.cols()));
    }
    return frechet_distance(moments(real), moments(generated));
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    std::string header;
    std::getline(in, header);
    Json h;
    try {
        h = Json::parse(header);
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": bad embedding header: " + e.what());
    }
    const auto n = h.value("n", std::int64_t{-1});
    const auto d = h.value("d", std::int64_t{-1});
    if (n < 0 || d <= 0) {
        throw Error(ErrorCode::ParseError, path.string() + ": header needs positive n and d");
    }
    EmbeddingSet set;
    set.source = h.value("source", std::string("real"));
    std::vector<float> buf(static_cast<std::size_t>(n * d));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != buf.size() * sizeof(float)) {
        throw Error(ErrorCode::DimensionMismatch, path.string() + ": payload shorter than n*d floats");
    }
    set.vectors.resize(n, d);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < d; ++j) {
            set.vectors(i, j) = to_little_endian(buf[static_cast<std::size_t>(i * d + j)]);
        }
    }
    return set;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    out << Json{{"n", set.vectors.rows()}, {"d", set.vectors.cols()}, {"source", set.source}}.dump() << '\n';
    for (Eigen::Index i = 0; i < set.vectors.rows(); ++i) {
        for (Eigen::Index j = 0; j < set.vectors.cols(); ++j) {
            const float f = to_little_endian(static_cast<float>(set.vectors(i, j)));
            out.write(reinterpret_cast<const char*>(&f), sizeof f);
        }
    }
}

}  // namespace avqoe
