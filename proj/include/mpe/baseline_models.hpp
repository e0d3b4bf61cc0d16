#pragma once

// Classical comparators over a shared day-level feature vector: ridge/OLS
// regression and gradient-boosted regression trees, both written for small
// tabular data.

#include "mpe/prompt_builder.hpp"

#include <json.hpp>

#include <numeric>

namespace mpe {

using FeatureVector = std::vector<double>;
using FeatureMatrix = std::vector<FeatureVector>;

// ---------------------------------------------------------------------------
// Featurization
// ---------------------------------------------------------------------------

struct FeaturizerConfig {
    std::size_t lag_days = 28;
    std::size_t time_bins = 24;
    std::size_t text_dim = 32;
    AblationConfig ablation;

    void validate() const {
        if (lag_days == 0 || time_bins == 0 || text_dim == 0)
            throw ArgumentError("featurizer dimensions must be positive");
    }
};

/// Feature layout, in order:
///   lags     2 * lag_days   (outflow, inflow) per history day, oldest first;
///                           deviations under r_i, observed demand under o
///   weekday  7              one-hot of the target day, Monday first
///   count    1              number of target-day events        (all but NA)
///   timing   time_bins      event occupancy per time-of-day bin (c_t and richer)
///   text     text_dim       hashed bag of words                 (c_t_h, c_t_h_prime)
/// Blocks excluded by the ablation are omitted, not zero-filled.
inline std::size_t feature_dimension(const FeaturizerConfig& c) {
    std::size_t d = 2 * c.lag_days + 7;
    if (c.ablation.uses_events()) d += 1;
    if (c.ablation.uses_timing()) d += c.time_bins;
    if (c.ablation.uses_raw_text() || c.ablation.uses_formatted_text()) d += c.text_dim;
    return d;
}

/// Lowercased tokens split on ASCII non-alphanumerics (bytes >= 0x80 stay in
/// tokens), tokens shorter than two bytes dropped, each token adding 1 to
/// bucket fnv1a64(token) % dim. L1-normalized when non-zero.
inline FeatureVector hashed_text_vector(std::string_view text, std::size_t dim) {
    if (dim == 0) throw ArgumentError("hashed_text_vector: dim must be >= 1");
    FeatureVector v(dim, 0.0);
    auto is_tok = [](unsigned char c) { return std::isalnum(c) || c >= 0x80; };
    double total = 0.0;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !is_tok(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && is_tok(static_cast<unsigned char>(text[j]))) ++j;
        if (j - i >= 2) {
            v[fnv1a64(to_lower_ascii(text.substr(i, j - i))) % dim] += 1.0;
            total += 1.0;
        }
        i = j;
    }
    if (total > 0.0)
        for (auto& x : v) x /= total;
    return v;
}

/// Adds 1 to every bin that the event's [start, end) span overlaps; an
/// event with start == end marks the bin containing its start.
inline void add_time_occupancy(FeatureVector& bins, TimeOfDay start, TimeOfDay end) {
    const double width = 1440.0 / static_cast<double>(bins.size());
    for (std::size_t k = 0; k < bins.size(); ++k) {
        const double lo = static_cast<double>(k) * width, hi = lo + width;
        const double s = start.minutes(), e = end.minutes();
        const bool covered = (s == e) ? (s >= lo && s < hi) : (s < hi && e > lo);
        if (covered) bins[k] += 1.0;
    }
}

inline FeatureVector featurize_day(const HistoryWindow& window, const DayEvents& target_events,
                                   const FeaturizerConfig& config,
                                   const std::vector<FormattedEvent>& target_formatted = {}) {
    config.validate();
    if (window.days.size() != config.lag_days)
        throw ArgumentError("featurize_day: window has " + std::to_string(window.days.size()) + " days, config expects " +
                            std::to_string(config.lag_days));
    window.validate(target_events.date, config.lag_days);

    FeatureVector x;
    x.reserve(feature_dimension(config));
    for (const auto& day : window.days) {
        const auto& d = *day.decomposition;
        if (config.ablation.decomposed()) {
            x.push_back(d.deviation.outflow);
            x.push_back(d.deviation.inflow);
        } else {
            x.push_back(static_cast<double>(d.actual.outflow));
            x.push_back(static_cast<double>(d.actual.inflow));
        }
    }
    for (unsigned w = 0; w < 7; ++w) x.push_back(target_events.date.weekday_index() == w ? 1.0 : 0.0);

    const auto& ab = config.ablation;
    if (ab.uses_events()) x.push_back(static_cast<double>(target_events.events.size()));
    if (ab.uses_timing()) {
        FeatureVector bins(config.time_bins, 0.0);
        for (const auto& e : target_events.events) add_time_occupancy(bins, e.start_time, e.end_time);
        x.insert(x.end(), bins.begin(), bins.end());
    }
    if (ab.uses_raw_text() || ab.uses_formatted_text()) {
        std::string text;
        if (ab.uses_raw_text()) {
            for (const auto& e : target_events.events) {
                text += e.title + ' ';
                if (e.description) text += *e.description + ' ';
            }
        } else {
            if (target_formatted.size() != target_events.events.size())
                throw ArgumentError("featurize_day: formatted events missing for " + target_events.date.str());
            for (const auto& f : target_formatted) text += f.category + ' ' + f.summary + ' ';
        }
        auto h = hashed_text_vector(text, config.text_dim);
        x.insert(x.end(), h.begin(), h.end());
    }
    return x;
}

namespace detail {

inline void check_design(const FeatureMatrix& X, std::span<const double> y, const char* who) {
    if (X.empty()) throw ArgumentError(std::string(who) + ": no samples");
    if (X.size() != y.size()) throw ArgumentError(std::string(who) + ": X and y lengths differ");
    const auto p = X.front().size();
    for (const auto& row : X)
        if (row.size() != p) throw ArgumentError(std::string(who) + ": ragged feature matrix");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear regression
// ---------------------------------------------------------------------------

struct LinearModel {
    std::vector<double> weights;
    double intercept = 0.0;
    double ridge_lambda = 0.0;
};

/// Ridge regression with an unpenalized intercept: centers X and y, solves
/// (Xc'Xc + lambda I) w = Xc'yc by Cholesky, intercept = mean(y) - mean(X)'w.
inline LinearModel fit_linear(const FeatureMatrix& X, std::span<const double> y, double ridge_lambda) {
    detail::check_design(X, y, "fit_linear");
    if (!(ridge_lambda >= 0.0)) throw ArgumentError("fit_linear: ridge_lambda must be non-negative");
    const std::size_t n = X.size(), p = X.front().size();

    std::vector<double> xbar(p, 0.0);
    double ybar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) xbar[j] += X[i][j];
        ybar += y[i];
    }
    for (auto& v : xbar) v /= static_cast<double>(n);
    ybar /= static_cast<double>(n);

    // Normal equations, lower triangle is enough for Cholesky.
    std::vector<double> A(p * p, 0.0), b(p, 0.0);
    std::vector<double> xc(p);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) xc[j] = X[i][j] - xbar[j];
        const double yc = y[i] - ybar;
        for (std::size_t j = 0; j < p; ++j) {
            b[j] += xc[j] * yc;
            for (std::size_t k = 0; k <= j; ++k) A[j * p + k] += xc[j] * xc[k];
        }
    }
    double scale = 1.0;
    for (std::size_t j = 0; j < p; ++j) {
        scale = std::max(scale, A[j * p + j]);
        A[j * p + j] += ridge_lambda;
    }

    // A = L L', in place.
    const double tol = 1e-12 * scale;
    for (std::size_t j = 0; j < p; ++j) {
        double d = A[j * p + j];
        for (std::size_t k = 0; k < j; ++k) d -= A[j * p + k] * A[j * p + k];
        if (!(d > tol))
            throw NumericalError("fit_linear: normal equations are singular; use ridge_lambda > 0");
        const double ljj = std::sqrt(d);
        A[j * p + j] = ljj;
        for (std::size_t i = j + 1; i < p; ++i) {
            double s = A[i * p + j];
            for (std::size_t k = 0; k < j; ++k) s -= A[i * p + k] * A[j * p + k];
            A[i * p + j] = s / ljj;
        }
    }
    std::vector<double> z(p), w(p);
    for (std::size_t i = 0; i < p; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= A[i * p + k] * z[k];
        z[i] = s / A[i * p + i];
    }
    for (std::size_t i = p; i-- > 0;) {
        double s = z[i];
        for (std::size_t k = i + 1; k < p; ++k) s -= A[k * p + i] * w[k];
        w[i] = s / A[i * p + i];
    }

    LinearModel m;
    m.weights = std::move(w);
    m.intercept = ybar - std::inner_product(xbar.begin(), xbar.end(), m.weights.begin(), 0.0);
    m.ridge_lambda = ridge_lambda;
    return m;
}

inline double predict_linear(const LinearModel& model, std::span<const double> x) {
    if (x.size() != model.weights.size())
        throw ArgumentError("predict_linear: expected " + std::to_string(model.weights.size()) + " features, got " +
                            std::to_string(x.size()));
    return model.intercept + std::inner_product(x.begin(), x.end(), model.weights.begin(), 0.0);
}

// ---------------------------------------------------------------------------
// Gradient-boosted regression trees
// ---------------------------------------------------------------------------

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;   // taken when x[feature] < threshold
    int right = -1;
    double value = 0.0;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    [[nodiscard]] double predict(std::span<const double> x) const {
        int i = 0;
        while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }

    /// Number of split levels on the longest root-to-leaf path.
    [[nodiscard]] int depth() const { return nodes.empty() ? 0 : depth_of(0); }

private:
    [[nodiscard]] int depth_of(int i) const {
        const auto& n = nodes[static_cast<std::size_t>(i)];
        if (n.feature < 0) return 0;
        return 1 + std::max(depth_of(n.left), depth_of(n.right));
    }
};

struct GbdtParams {
    int n_trees = 200;
    int max_depth = 3;
    double learning_rate = 0.05;
    int min_leaf = 5;
};

struct GbdtModel {
    std::vector<RegressionTree> trees;
    double learning_rate = 0.05;
    int n_trees = 0;
    int max_depth = 3;
    int min_leaf = 5;
    double base_prediction = 0.0;
    std::size_t n_features = 0;
    std::vector<double> training_mse;  // before any tree, then after each round
};

namespace detail {

struct SplitCandidate {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

class TreeGrower {
public:
    TreeGrower(const FeatureMatrix& X, const std::vector<std::vector<std::uint32_t>>& sorted, const GbdtParams& params)
        : X_(X), sorted_(sorted), params_(params), member_(X.size(), 0) {}

    RegressionTree grow(const std::vector<double>& residual, std::vector<double>& leaf_output) {
        RegressionTree tree;
        std::vector<std::uint32_t> all(X_.size());
        std::iota(all.begin(), all.end(), 0u);
        build(tree, all, residual, 0, leaf_output);
        return tree;
    }

private:
    int build(RegressionTree& tree, const std::vector<std::uint32_t>& rows, const std::vector<double>& r, int depth,
              std::vector<double>& leaf_output) {
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        double sum = 0.0;
        for (auto i : rows) sum += r[i];
        const double mean = sum / static_cast<double>(rows.size());

        SplitCandidate best;
        if (depth < params_.max_depth && rows.size() >= 2 * static_cast<std::size_t>(params_.min_leaf))
            best = find_split(rows, r, sum);
        if (best.feature < 0) {
            tree.nodes[static_cast<std::size_t>(id)].value = mean;
            for (auto i : rows) leaf_output[i] = mean;
            return id;
        }
        std::vector<std::uint32_t> left, right;
        const auto f = static_cast<std::size_t>(best.feature);
        for (auto i : rows) (X_[i][f] < best.threshold ? left : right).push_back(i);
        tree.nodes[static_cast<std::size_t>(id)].feature = best.feature;
        tree.nodes[static_cast<std::size_t>(id)].threshold = best.threshold;
        const int l = build(tree, left, r, depth + 1, leaf_output);
        const int rr = build(tree, right, r, depth + 1, leaf_output);
        tree.nodes[static_cast<std::size_t>(id)].left = l;
        tree.nodes[static_cast<std::size_t>(id)].right = rr;
        return id;
    }

    // Exhaustive variance-reduction search. Thresholds are midpoints between
    // consecutive distinct observed values. Ties keep the lowest feature index,
    // then the lowest threshold.
    SplitCandidate find_split(const std::vector<std::uint32_t>& rows, const std::vector<double>& r, double total) {
        ++stamp_;
        for (auto i : rows) member_[i] = stamp_;
        const double n = static_cast<double>(rows.size());
        const double parent = total * total / n;
        double sq = 0.0;
        for (auto i : rows) sq += r[i] * r[i];
        const double min_gain = 1e-12 * std::max(sq, 1e-300);
        const auto min_leaf = static_cast<std::size_t>(params_.min_leaf);

        SplitCandidate best;
        std::vector<std::uint32_t> order;
        order.reserve(rows.size());
        for (std::size_t f = 0; f < sorted_.size(); ++f) {
            order.clear();
            for (auto i : sorted_[f])
                if (member_[i] == stamp_) order.push_back(i);
            double left_sum = 0.0;
            for (std::size_t k = 0; k + 1 < order.size(); ++k) {
                left_sum += r[order[k]];
                const double a = X_[order[k]][f], b = X_[order[k + 1]][f];
                const std::size_t nl = k + 1, nr = order.size() - nl;
                if (!(a < b) || nl < min_leaf || nr < min_leaf) continue;
                const double right_sum = total - left_sum;
                const double gain = left_sum * left_sum / static_cast<double>(nl) +
                                    right_sum * right_sum / static_cast<double>(nr) - parent;
                if (gain > min_gain && gain > best.gain) {
                    double mid = a + (b - a) / 2.0;
                    if (!(a < mid)) mid = b;
                    best = {static_cast<int>(f), mid, gain};
                }
            }
        }
        return best;
    }

    const FeatureMatrix& X_;
    const std::vector<std::vector<std::uint32_t>>& sorted_;
    const GbdtParams& params_;
    std::vector<std::uint32_t> member_;
    std::uint32_t stamp_ = 0;
};

}  // namespace detail

/// Least-squares gradient boosting. Rows are first put into a canonical
/// lexicographic order, so the fitted model does not depend on the order in
/// which training rows are supplied.
inline GbdtModel fit_gbdt(const FeatureMatrix& X_in, std::span<const double> y_in, const GbdtParams& params = {}) {
    detail::check_design(X_in, y_in, "fit_gbdt");
    const std::size_t n = X_in.size();
    if (n < 2) throw ArgumentError("fit_gbdt: need at least 2 samples");
    if (params.min_leaf < 1 || static_cast<std::size_t>(params.min_leaf) >= n)
        throw ArgumentError("fit_gbdt: min_leaf must be >= 1 and below the sample count");
    if (params.n_trees < 0) throw ArgumentError("fit_gbdt: n_trees must be non-negative");
    if (params.max_depth < 1) throw ArgumentError("fit_gbdt: max_depth must be positive");
    if (!(params.learning_rate > 0.0 && params.learning_rate <= 1.0))
        throw ArgumentError("fit_gbdt: learning_rate must lie in (0, 1]");

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
        if (X_in[a] != X_in[b]) return X_in[a] < X_in[b];
        return y_in[a] < y_in[b];
    });
    FeatureMatrix X;
    std::vector<double> y;
    X.reserve(n);
    y.reserve(n);
    for (auto i : perm) {
        X.push_back(X_in[i]);
        y.push_back(y_in[i]);
    }
    const std::size_t p = X.front().size();

    std::vector<std::vector<std::uint32_t>> sorted(p, std::vector<std::uint32_t>(n));
    for (std::size_t f = 0; f < p; ++f) {
        std::iota(sorted[f].begin(), sorted[f].end(), 0u);
        std::stable_sort(sorted[f].begin(), sorted[f].end(),
                         [&](std::uint32_t a, std::uint32_t b) { return X[a][f] < X[b][f]; });
    }

    GbdtModel model;
    model.learning_rate = params.learning_rate;
    model.max_depth = params.max_depth;
    model.min_leaf = params.min_leaf;
    model.n_features = p;
    model.base_prediction = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);

    std::vector<double> residual(n);
    for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - model.base_prediction;
    auto mse = [&] {
        double s = 0.0;
        for (double r : residual) s += r * r;
        return s / static_cast<double>(n);
    };
    model.training_mse.push_back(mse());

    detail::TreeGrower grower(X, sorted, params);
    std::vector<double> leaf_output(n, 0.0);
    for (int t = 0; t < params.n_trees; ++t) {
        model.trees.push_back(grower.grow(residual, leaf_output));
        for (std::size_t i = 0; i < n; ++i) residual[i] -= params.learning_rate * leaf_output[i];
        const double now = mse(), before = model.training_mse.back();
        if (now > before * (1.0 + 1e-12) + 1e-12)
            throw NumericalError("fit_gbdt: training MSE increased in round " + std::to_string(t));
        model.training_mse.push_back(now);
    }
    model.n_trees = static_cast<int>(model.trees.size());
    return model;
}

inline double predict_gbdt(const GbdtModel& model, std::span<const double> x) {
    if (x.size() != model.n_features)
        throw ArgumentError("predict_gbdt: expected " + std::to_string(model.n_features) + " features, got " +
                            std::to_string(x.size()));
    double s = 0.0;
    for (const auto& t : model.trees) s += t.predict(x);
    return model.base_prediction + model.learning_rate * s;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::ordered_json to_json(const LinearModel& m) {
    nlohmann::ordered_json j;
    j["format_version"] = kModelFormatVersion;
    j["kind"] = "linear";
    j["params"] = {{"ridge_lambda", m.ridge_lambda}};
    j["intercept"] = m.intercept;
    j["weights"] = m.weights;
    return j;
}

inline nlohmann::ordered_json to_json(const GbdtModel& m) {
    nlohmann::ordered_json j;
    j["format_version"] = kModelFormatVersion;
    j["kind"] = "gbdt";
    j["params"] = {{"n_trees", m.n_trees},
                   {"max_depth", m.max_depth},
                   {"learning_rate", m.learning_rate},
                   {"min_leaf", m.min_leaf}};
    j["n_features"] = m.n_features;
    j["base_prediction"] = m.base_prediction;
    auto trees = nlohmann::ordered_json::array();
    for (const auto& t : m.trees) {
        auto nodes = nlohmann::ordered_json::array();
        for (const auto& n : t.nodes) {
            if (n.feature < 0)
                nodes.push_back({{"value", n.value}});
            else
                nodes.push_back(
                    {{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
        }
        trees.push_back(std::move(nodes));
    }
    j["trees"] = std::move(trees);
    return j;
}

inline LinearModel linear_model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("kind") != "linear" || j.at("format_version") != kModelFormatVersion)
            throw SchemaError("not a version-1 linear model document");
        LinearModel m;
        m.ridge_lambda = j.at("params").at("ridge_lambda").get<double>();
        m.intercept = j.at("intercept").get<double>();
        m.weights = j.at("weights").get<std::vector<double>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed linear model document: ") + e.what());
    }
}

inline GbdtModel gbdt_model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("kind") != "gbdt" || j.at("format_version") != kModelFormatVersion)
            throw SchemaError("not a version-1 gbdt model document");
        GbdtModel m;
        const auto& p = j.at("params");
        m.n_trees = p.at("n_trees").get<int>();
        m.max_depth = p.at("max_depth").get<int>();
        m.learning_rate = p.at("learning_rate").get<double>();
        m.min_leaf = p.at("min_leaf").get<int>();
        m.n_features = j.at("n_features").get<std::size_t>();
        m.base_prediction = j.at("base_prediction").get<double>();
        for (const auto& tj : j.at("trees")) {
            RegressionTree t;
            for (const auto& nj : tj) {
                TreeNode n;
                if (nj.contains("feature")) {
                    n.feature = nj.at("feature").get<int>();
                    n.threshold = nj.at("threshold").get<double>();
                    n.left = nj.at("left").get<int>();
                    n.right = nj.at("right").get<int>();
                } else {
                    n.value = nj.at("value").get<double>();
                }
                t.nodes.push_back(n);
            }
            m.trees.push_back(std::move(t));
        }
        if (static_cast<int>(m.trees.size()) != m.n_trees) throw SchemaError("gbdt document tree count mismatch");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed gbdt model document: ") + e.what());
    }
}

}  // namespace mpe
