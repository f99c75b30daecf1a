#include "avqoe/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "avqoe/csv.hpp"
#include "avqoe/error.hpp"

namespace avqoe::stats {

namespace {

void require_pairs(const std::vector<double>& x, const std::vector<double>& y, std::size_t min_n, const char* what) {
    if (x.size() != y.size()) {
        throw Error(ErrorCode::DegenerateInput, std::string(what) + ": length mismatch " + std::to_string(x.size()) +
                                                    " vs " + std::to_string(y.size()));
    }
    if (x.size() < min_n) {
        throw Error(ErrorCode::DegenerateInput,
                    std::string(what) + ": needs at least " + std::to_string(min_n) + " points");
    }
}

ScoreRow summarize_real(std::vector<double> v) {
    // Sorting first keeps the floating-point sums independent of input order.
    std::sort(v.begin(), v.end());
    ScoreRow row;
    row.n = static_cast<int>(v.size());
    row.mos = mean(v);
    if (row.n >= 2) {
        double ss = 0.0;
        for (double x : v) {
            ss += (x - row.mos) * (x - row.mos);
        }
        row.sd = std::sqrt(ss / (row.n - 1));
        row.ci95 = t_critical_975(row.n - 1) * row.sd / std::sqrt(static_cast<double>(row.n));
    }
    return row;
}

}  // namespace

const ScoreRow* ScoreTable::find(const std::string& entity, const std::string& item) const {
    const auto it = std::lower_bound(rows.begin(), rows.end(), std::tie(entity, item),
                                     [](const ScoreRow& r, const auto& key) {
                                         return std::tie(r.entity, r.item) < key;
                                     });
    if (it == rows.end() || it->entity != entity || it->item != item) {
        return nullptr;
    }
    return &*it;
}

std::vector<std::string> ScoreTable::entities() const {
    std::vector<std::string> out;
    for (const auto& r : rows) {
        if (out.empty() || out.back() != r.entity) {
            out.push_back(r.entity);
        }
    }
    return out;
}

std::vector<std::string> ScoreTable::items() const {
    std::vector<std::string> out;
    for (const auto& r : rows) {
        out.push_back(r.item);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double t_critical_975(int df) {
    if (df < 1) {
        throw Error(ErrorCode::DegenerateInput, "t quantile needs df >= 1");
    }
    return boost::math::quantile(boost::math::students_t(static_cast<double>(df)), 0.975);
}

ScoreRow summarize(const std::vector<int>& votes) {
    if (votes.empty()) {
        throw Error(ErrorCode::EmptyVotes, "no votes to summarize");
    }
    std::int64_t sum = 0;
    std::int64_t sum_sq = 0;
    for (int v : votes) {
        sum += v;
        sum_sq += static_cast<std::int64_t>(v) * v;
    }
    const auto n = static_cast<std::int64_t>(votes.size());
    ScoreRow row;
    row.n = static_cast<int>(n);
    row.mos = static_cast<double>(sum) / static_cast<double>(n);
    if (n >= 2) {
        const std::int64_t scaled = n * sum_sq - sum * sum;
        row.sd = std::sqrt(static_cast<double>(scaled) / static_cast<double>(n * (n - 1)));
        row.ci95 = t_critical_975(row.n - 1) * row.sd / std::sqrt(static_cast<double>(n));
    }
    return row;
}

ScoreTable aggregate(const std::vector<VoteRecord>& votes, Level level, int scale_points, ConditionPooling pooling) {
    if (votes.empty()) {
        throw Error(ErrorCode::EmptyVotes, "vote list is empty");
    }
    ScoreTable table;
    table.level = level;
    table.scale_points = scale_points;

    std::map<std::pair<std::string, std::string>, std::vector<int>> groups;
    std::map<std::pair<std::string, std::string>, std::vector<int>> by_clip;
    std::map<std::string, std::string> model_of_clip;
    for (const auto& v : votes) {
        if (v.score < 1 || v.score > scale_points) {
            throw Error(ErrorCode::DegenerateInput, "vote " + std::to_string(v.score) + " for " + v.clip_id +
                                                        " outside the " + std::to_string(scale_points) +
                                                        "-point scale");
        }
        const auto& entity = level == Level::clip ? v.clip_id : v.model_id;
        groups[{entity, v.item_id}].push_back(v.score);
        by_clip[{v.clip_id, v.item_id}].push_back(v.score);
        model_of_clip[v.clip_id] = v.model_id;
    }

    if (level == Level::condition && pooling == ConditionPooling::clip_mean) {
        std::map<std::pair<std::string, std::string>, std::vector<double>> clip_means;
        for (const auto& [key, scores] : by_clip) {
            clip_means[{model_of_clip[key.first], key.second}].push_back(summarize(scores).mos);
        }
        for (auto& [key, means] : clip_means) {
            auto row = summarize_real(std::move(means));
            row.entity = key.first;
            row.item = key.second;
            table.rows.push_back(std::move(row));
        }
        return table;
    }
    for (const auto& [key, scores] : groups) {
        auto row = summarize(scores);
        row.entity = key.first;
        row.item = key.second;
        table.rows.push_back(std::move(row));
    }
    return table;
}

ScoreTable dmos(const ScoreTable& processed, const ScoreTable& reference, int scale_points,
                const std::map<std::string, std::string>& reference_of) {
    ScoreTable out;
    out.level = processed.level;
    out.scale_points = scale_points;
    for (const auto& row : processed.rows) {
        const auto mapped = reference_of.find(row.entity);
        const std::string& ref_entity = mapped == reference_of.end() ? row.entity : mapped->second;
        const ScoreRow* ref = reference.find(ref_entity, row.item);
        if (ref == nullptr) {
            throw Error(ErrorCode::UnmatchedEntity,
                        "no reference score for " + row.entity + "/" + row.item + " (looked up " + ref_entity + ")");
        }
        ScoreRow d = row;
        d.mos = std::clamp(row.mos - ref->mos + scale_points, 1.0, static_cast<double>(scale_points));
        out.rows.push_back(std::move(d));
    }
    return out;
}

double mean(const std::vector<double>& x) {
    if (x.empty()) {
        throw Error(ErrorCode::DegenerateInput, "mean of an empty vector");
    }
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double pcc(const std::vector<double>& x, const std::vector<double>& y) {
    require_pairs(x, y, 2, "pcc");
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw Error(ErrorCode::DegenerateInput, "pcc: zero variance input");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) {
            ++j;
        }
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            r[order[k]] = avg;
        }
        i = j + 1;
    }
    return r;
}

double srcc(const std::vector<double>& x, const std::vector<double>& y) {
    require_pairs(x, y, 2, "srcc");
    return pcc(ranks(x), ranks(y));
}

namespace {

// Counts pairs i < j with v[i] > v[j] while sorting v ascending.
std::int64_t count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) {
        return 0;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    std::int64_t inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
    std::size_t i = lo;
    std::size_t j = mid;
    std::size_t k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            inv += static_cast<std::int64_t>(mid - i);
            buf[k++] = v[j++];
        } else {
            buf[k++] = v[i++];
        }
    }
    while (i < mid) {
        buf[k++] = v[i++];
    }
    while (j < hi) {
        buf[k++] = v[j++];
    }
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return inv;
}

template <class Eq>
std::int64_t tied_pairs(std::size_t n, Eq same_as_previous) {
    std::int64_t total = 0;
    std::int64_t run = 1;
    for (std::size_t i = 1; i <= n; ++i) {
        if (i < n && same_as_previous(i)) {
            ++run;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    return total;
}

}  // namespace

double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
    require_pairs(x, y, 2, "kendall_tau_b");
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return std::tie(x[a], y[a]) < std::tie(x[b], y[b]); });

    const std::int64_t n1 = tied_pairs(n, [&](std::size_t i) { return x[order[i]] == x[order[i - 1]]; });
    const std::int64_t n3 = tied_pairs(
        n, [&](std::size_t i) { return x[order[i]] == x[order[i - 1]] && y[order[i]] == y[order[i - 1]]; });

    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        ys[i] = y[order[i]];
    }
    std::vector<double> buf(n);
    const std::int64_t discordant = count_inversions(ys, buf, 0, n);
    const std::int64_t n2 = tied_pairs(n, [&](std::size_t i) { return ys[i] == ys[i - 1]; });

    const auto n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
    const std::int64_t s = n0 - n1 - n2 + n3 - 2 * discordant;
    const double denom = std::sqrt(static_cast<double>(n0 - n1)) * std::sqrt(static_cast<double>(n0 - n2));
    if (denom == 0.0) {
        throw Error(ErrorCode::DegenerateInput, "kendall_tau_b: an input is constant");
    }
    return std::clamp(static_cast<double>(s) / denom, -1.0, 1.0);
}

FomResult rmse_and_fom(const std::vector<double>& predicted, const std::vector<double>& observed) {
    require_pairs(predicted, observed, 1, "rmse");
    const auto n = static_cast<double>(predicted.size());
    FomResult r;
    double ss = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        ss += (predicted[i] - observed[i]) * (predicted[i] - observed[i]);
    }
    r.rmse = std::sqrt(ss / n);

    const double mp = mean(predicted);
    const double mo = mean(observed);
    double spp = 0.0;
    double spo = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        spp += (predicted[i] - mp) * (predicted[i] - mp);
        spo += (predicted[i] - mp) * (observed[i] - mo);
    }
    if (predicted.size() < 3 || spp == 0.0) {
        r.fom_defined = false;
        r.rmse_fom = r.rmse;
        return r;
    }
    const double a = spo / spp;
    const double b = mo - a * mp;
    double ss_fit = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double e = a * predicted[i] + b - observed[i];
        ss_fit += e * e;
    }
    r.rmse_fom = std::min(std::sqrt(ss_fit / n), r.rmse);
    return r;
}

CorrelationReport correlate(const std::vector<double>& predicted, const std::vector<double>& observed) {
    CorrelationReport c;
    c.pcc = pcc(predicted, observed);
    c.srcc = srcc(predicted, observed);
    c.kendall_tau_b = kendall_tau_b(predicted, observed);
    const auto fom = rmse_and_fom(predicted, observed);
    c.rmse = fom.rmse;
    c.rmse_fom = fom.rmse_fom;
    c.fom_defined = fom.fom_defined;
    c.n_pairs = predicted.size();
    return c;
}

PcaResult pca(const Eigen::MatrixXd& data, std::vector<std::string> items, bool standardize) {
    const auto n = data.rows();
    const auto p = data.cols();
    if (n < 2 || p < 2) {
        throw Error(ErrorCode::DegenerateInput, "pca needs at least 2 entities and 2 items");
    }
    if (items.empty()) {
        for (Eigen::Index j = 0; j < p; ++j) {
            items.push_back("item" + std::to_string(j));
        }
    }
    if (static_cast<Eigen::Index>(items.size()) != p) {
        throw Error(ErrorCode::DegenerateInput, "pca: item names do not match the column count");
    }
    Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
    if (standardize) {
        for (Eigen::Index j = 0; j < p; ++j) {
            const double sd = std::sqrt(centered.col(j).squaredNorm() / static_cast<double>(n - 1));
            if (sd == 0.0) {
                throw Error(ErrorCode::DegenerateInput, "pca: item " + items[j] + " is constant");
            }
            centered.col(j) /= sd;
        }
    }
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorCode::DegenerateInput, "pca: eigendecomposition failed");
    }

    PcaResult r;
    r.items = std::move(items);
    r.n_components = static_cast<int>(p);
    r.eigenvalues.resize(p);
    r.components.resize(p, p);
    for (Eigen::Index k = 0; k < p; ++k) {
        const Eigen::Index src = p - 1 - k;  // solver sorts ascending
        r.eigenvalues(k) = std::max(0.0, solver.eigenvalues()(src));
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) {
            v = -v;
        }
        r.components.col(k) = v;
    }
    const double total = r.eigenvalues.sum();
    if (total <= 0.0) {
        throw Error(ErrorCode::DegenerateInput, "pca: data has rank 0");
    }
    r.loadings = r.components * r.eigenvalues.cwiseSqrt().asDiagonal();
    for (Eigen::Index k = 0; k < p; ++k) {
        r.explained_variance_ratio.push_back(r.eigenvalues(k) / total);
    }
    return r;
}

RegressionResult linreg(const std::vector<double>& x, const std::vector<double>& y) {
    require_pairs(x, y, 2, "linreg");
    const double mx = mean(x);
    const double my = mean(y);
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) {
        throw Error(ErrorCode::DegenerateInput, "linreg: x has zero variance");
    }
    RegressionResult r;
    r.n = x.size();
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (r.slope * x[i] + r.intercept);
        ss_res += e * e;
    }
    r.r_squared = syy == 0.0 ? 1.0 : std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
    return r;
}

double normalized_std(const std::vector<double>& item_mos) {
    const double m = mean(item_mos);
    if (m <= 0.0) {
        throw Error(ErrorCode::DegenerateInput, "normalized_std: mean must be positive");
    }
    double ss = 0.0;
    for (double v : item_mos) {
        ss += (v - m) * (v - m);
    }
    return std::sqrt(ss / static_cast<double>(item_mos.size())) / m;
}

RealismFilter parse_realism_filter(const std::string& text) {
    RealismFilter f;
    std::string_view rest = text;
    if (rest.starts_with("<=")) {
        f.cmp = Comparison::less_equal;
        rest.remove_prefix(2);
    } else if (rest.starts_with(">")) {
        f.cmp = Comparison::greater;
        rest.remove_prefix(1);
    } else {
        throw Error(ErrorCode::InvalidConfig, "realism filter must look like '>2' or '<=2', got '" + text + "'");
    }
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), f.threshold);
    if (ec != std::errc{} || ptr != rest.data() + rest.size()) {
        throw Error(ErrorCode::InvalidConfig, "realism filter threshold is not a number: '" + text + "'");
    }
    return f;
}

MosMatrix mos_matrix(const ScoreTable& table, const std::vector<std::string>& items,
                     const std::optional<RealismFilter>& filter) {
    MosMatrix m;
    m.items = items;
    std::vector<std::vector<double>> rows;
    for (const auto& entity : table.entities()) {
        if (filter) {
            const ScoreRow* r = table.find(entity, filter->item);
            if (r == nullptr) {
                continue;
            }
            const bool keep = filter->cmp == Comparison::greater ? r->mos > filter->threshold
                                                                 : r->mos <= filter->threshold;
            if (!keep) {
                continue;
            }
        }
        std::vector<double> row;
        for (const auto& item : items) {
            const ScoreRow* r = table.find(entity, item);
            if (r == nullptr) {
                break;
            }
            row.push_back(r->mos);
        }
        if (row.size() == items.size()) {
            m.entities.push_back(entity);
            rows.push_back(std::move(row));
        }
    }
    m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(items.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < items.size(); ++j) {
            m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

CorrelationMatrix correlation_matrix(const ScoreTable& table, const std::vector<std::string>& items,
                                     const std::optional<RealismFilter>& filter) {
    const auto m = mos_matrix(table, items, filter);
    if (m.entities.size() < 3) {
        throw Error(ErrorCode::TooFewEntities,
                    std::to_string(m.entities.size()) + " entities left after filtering, need at least 3");
    }
    CorrelationMatrix out;
    out.items = items;
    out.entities = m.entities;
    const auto p = static_cast<Eigen::Index>(items.size());
    out.pcc = Eigen::MatrixXd::Identity(p, p);
    out.srcc = Eigen::MatrixXd::Identity(p, p);
    std::vector<std::vector<double>> cols(items.size());
    for (Eigen::Index j = 0; j < p; ++j) {
        cols[j].assign(m.values.col(j).data(), m.values.col(j).data() + m.values.rows());
    }
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = i + 1; j < p; ++j) {
            out.pcc(i, j) = out.pcc(j, i) = pcc(cols[i], cols[j]);
            out.srcc(i, j) = out.srcc(j, i) = srcc(cols[i], cols[j]);
        }
    }
    return out;
}

std::string score_table_csv(const ScoreTable& table, const Provenance& prov) {
    std::string out = prov.header_line() + "\nlevel,entity,item,n,mos,sd,ci95\n";
    const std::string level = table.level == Level::clip ? "clip" : "condition";
    for (const auto& r : table.rows) {
        out += csv::join({level, r.entity, r.item, std::to_string(r.n), csv::format_double(r.mos),
                          csv::format_double(r.sd), r.ci95 ? csv::format_double(*r.ci95) : std::string()});
        out += '\n';
    }
    return out;
}

std::string correlation_matrix_csv(const CorrelationMatrix& m, const Provenance& prov) {
    std::vector<std::string> header{"item"};
    header.insert(header.end(), m.items.begin(), m.items.end());
    std::string out = prov.header_line() + "\n" + csv::join(header) + "\n";
    const auto p = static_cast<Eigen::Index>(m.items.size());
    for (Eigen::Index i = 0; i < p; ++i) {
        std::vector<std::string> row{m.items[i]};
        for (Eigen::Index j = 0; j < p; ++j) {
            row.push_back(csv::format_double(j >= i ? m.pcc(i, j) : m.srcc(i, j)));
        }
        out += csv::join(row) + "\n";
    }
    return out;
}

Json pca_json(const PcaResult& r, const Provenance& prov) {
    Json components = Json::object();
    Json loadings = Json::object();
    for (std::size_t i = 0; i < r.items.size(); ++i) {
        std::vector<double> c;
        std::vector<double> l;
        for (int k = 0; k < r.n_components; ++k) {
            c.push_back(r.components(static_cast<Eigen::Index>(i), k));
            l.push_back(r.loadings(static_cast<Eigen::Index>(i), k));
        }
        components[r.items[i]] = c;
        loadings[r.items[i]] = l;
    }
    return Json{{"provenance", prov.to_json()},
                {"n_components", r.n_components},
                {"eigenvalues", std::vector<double>(r.eigenvalues.data(), r.eigenvalues.data() + r.eigenvalues.size())},
                {"explained_variance_ratio", r.explained_variance_ratio},
                {"components", components},
                {"loadings", loadings}};
}

Json regression_json(const RegressionResult& r, const std::string& x, const std::string& y, const Provenance& prov) {
    return Json{{"provenance", prov.to_json()}, {"x", x},           {"y", y},
                {"n", r.n},                     {"slope", r.slope}, {"intercept", r.intercept},
                {"r_squared", r.r_squared}};
}

Json score_table_json(const ScoreTable& table) {
    Json rows = Json::array();
    for (const auto& r : table.rows) {
        rows.push_back({{"entity", r.entity},
                        {"item", r.item},
                        {"n", r.n},
                        {"mos", r.mos},
                        {"sd", r.sd},
                        {"ci95", r.ci95 ? Json(*r.ci95) : Json(nullptr)}});
    }
    return Json{{"level", table.level}, {"scale_points", table.scale_points}, {"rows", rows}};
}

}  // namespace avqoe::stats
