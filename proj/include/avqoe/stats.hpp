#pragma once

// Score aggregation and the correlation, PCA and regression analyses run on
// MOS tables.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "avqoe/cleansing.hpp"
#include "avqoe/json_support.hpp"
#include "avqoe/provenance.hpp"

namespace avqoe::stats {

enum class Level { clip, condition };

/// How condition-level scores are formed from votes.
enum class ConditionPooling { raw_votes, clip_mean };

struct ScoreRow {
    std::string entity;
    std::string item;
    double mos = 0.0;
    double sd = 0.0;
    std::optional<double> ci95;  // null when n == 1
    int n = 0;

    bool operator==(const ScoreRow&) const = default;
};

struct ScoreTable {
    Level level = Level::clip;
    int scale_points = 5;
    std::vector<ScoreRow> rows;  // sorted by (entity, item)

    const ScoreRow* find(const std::string& entity, const std::string& item) const;
    std::vector<std::string> entities() const;
    std::vector<std::string> items() const;

    bool operator==(const ScoreTable&) const = default;
};

/// Two-sided 95% t critical value for df degrees of freedom.
double t_critical_975(int df);

/// Summary of n integer votes, computed from exact integer sums so the
/// result does not depend on vote order.
ScoreRow summarize(const std::vector<int>& votes);

ScoreTable aggregate(const std::vector<VoteRecord>& votes, Level level, int scale_points,
                     ConditionPooling pooling = ConditionPooling::raw_votes);

/// mos(processed) - mos(reference) + scale_points, clamped to [1, scale].
/// Rows are matched on (entity, item) unless reference_of maps a processed
/// entity to its reference entity.
ScoreTable dmos(const ScoreTable& processed, const ScoreTable& reference, int scale_points,
                const std::map<std::string, std::string>& reference_of = {});

double mean(const std::vector<double>& x);
double pcc(const std::vector<double>& x, const std::vector<double>& y);
/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> ranks(const std::vector<double>& x);
double srcc(const std::vector<double>& x, const std::vector<double>& y);
/// O(n log n) tau-b.
double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y);

struct FomResult {
    double rmse = 0.0;
    double rmse_fom = 0.0;
    /// False when predictions have zero variance; rmse_fom then equals rmse.
    bool fom_defined = true;
};
FomResult rmse_and_fom(const std::vector<double>& predicted, const std::vector<double>& observed);

struct CorrelationReport {
    double pcc = 0.0;
    double srcc = 0.0;
    double kendall_tau_b = 0.0;
    double rmse = 0.0;
    double rmse_fom = 0.0;
    bool fom_defined = true;
    std::size_t n_pairs = 0;
};
CorrelationReport correlate(const std::vector<double>& predicted, const std::vector<double>& observed);

struct PcaResult {
    std::vector<std::string> items;
    Eigen::MatrixXd components;  // items x components, orthonormal columns
    Eigen::MatrixXd loadings;    // components scaled by sqrt(eigenvalue)
    Eigen::VectorXd eigenvalues;
    std::vector<double> explained_variance_ratio;
    int n_components = 0;
};
/// Rows are entities, columns items. Covariance of centred columns by
/// default; standardize switches to the correlation matrix.
PcaResult pca(const Eigen::MatrixXd& data, std::vector<std::string> items = {}, bool standardize = false);

struct RegressionResult {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::size_t n = 0;
};
RegressionResult linreg(const std::vector<double>& x, const std::vector<double>& y);

/// Population SD of the item MOS vector over its mean.
double normalized_std(const std::vector<double>& item_mos);

enum class Comparison { greater, less_equal };

struct RealismFilter {
    Comparison cmp = Comparison::greater;
    double threshold = 2.0;
    std::string item = "realistic";
};
/// Accepts "<op><number>" with op one of >, <=.
RealismFilter parse_realism_filter(const std::string& text);

/// Entities x items matrix of MOS; entities lacking any item are dropped.
struct MosMatrix {
    std::vector<std::string> entities;
    std::vector<std::string> items;
    Eigen::MatrixXd values;
};
MosMatrix mos_matrix(const ScoreTable& table, const std::vector<std::string>& items,
                     const std::optional<RealismFilter>& filter = std::nullopt);

struct CorrelationMatrix {
    std::vector<std::string> items;
    std::vector<std::string> entities;
    Eigen::MatrixXd pcc;
    Eigen::MatrixXd srcc;
};
/// Throws TooFewEntities when fewer than three entities survive the filter.
CorrelationMatrix correlation_matrix(const ScoreTable& table, const std::vector<std::string>& items,
                                     const std::optional<RealismFilter>& filter = std::nullopt);

// --- report files -----------------------------------------------------------

std::string score_table_csv(const ScoreTable& table, const Provenance& prov);
/// Square matrix with PCC above and SRCC below the diagonal.
std::string correlation_matrix_csv(const CorrelationMatrix& m, const Provenance& prov);
Json pca_json(const PcaResult& r, const Provenance& prov);
Json regression_json(const RegressionResult& r, const std::string& x, const std::string& y, const Provenance& prov);
Json score_table_json(const ScoreTable& table);

NLOHMANN_JSON_SERIALIZE_ENUM(Level, {{Level::clip, "clip"}, {Level::condition, "condition"}})

}  // namespace avqoe::stats
