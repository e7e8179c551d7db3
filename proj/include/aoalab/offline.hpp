#pragma once
// Offline classification stack over window-level azimuth features:
//   - datasets assembled from feature samples (track labels or LoS/NLoS labels)
//   - five base learners: softmax regression, k-nearest-neighbors, CART
//     decision tree, bagged random forest, gradient-boosted trees
//   - a two-stage hierarchical model (region gate, then per-region track model)
//   - stacked ensembles with out-of-fold meta features
//   - random hyperparameter search over pinned ranges
//   - a buffer-vs-cumulative retraining experiment
// Everything is deterministic given the seed; trained models serialize through
// the byte-stable artifact container in artifact.hpp.

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "aoalab/artifact.hpp"
#include "aoalab/errors.hpp"
#include "aoalab/features.hpp"
#include "aoalab/matrix.hpp"
#include "aoalab/neural.hpp"
#include "aoalab/rng.hpp"

namespace aoalab {

// ---------------------------------------------------------------------------
// kinds and configuration

enum class ModelKind { LR, KNN, DT, RF, GBM, Stack };

inline std::string model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::LR: return "LR";
        case ModelKind::KNN: return "KNN";
        case ModelKind::DT: return "DT";
        case ModelKind::RF: return "RF";
        case ModelKind::GBM: return "GBM";
        case ModelKind::Stack: return "STACK";
    }
    throw InvalidArgument("unhandled model kind");
}

inline ModelKind model_kind_from_name(const std::string& name) {
    if (name == "LR") return ModelKind::LR;
    if (name == "KNN") return ModelKind::KNN;
    if (name == "DT") return ModelKind::DT;
    if (name == "RF") return ModelKind::RF;
    if (name == "GBM") return ModelKind::GBM;
    if (name == "STACK") return ModelKind::Stack;
    throw FormatError("unknown model kind: " + name);
}

enum class FeatureSubset { All, Sqrt, Log2 };

inline std::string feature_subset_name(FeatureSubset mode) {
    switch (mode) {
        case FeatureSubset::All: return "all";
        case FeatureSubset::Sqrt: return "sqrt";
        case FeatureSubset::Log2: return "log2";
    }
    throw InvalidArgument("unhandled feature subset mode");
}

inline FeatureSubset feature_subset_from_name(const std::string& name) {
    if (name == "all") return FeatureSubset::All;
    if (name == "sqrt") return FeatureSubset::Sqrt;
    if (name == "log2") return FeatureSubset::Log2;
    throw FormatError("unknown feature subset mode: " + name);
}

// One flat bag of settings; each learner reads only the fields it uses.
struct ClassifierConfig {
    double lr_c = 1.0;                // inverse L2 strength for softmax regression
    int knn_k = 5;
    bool knn_distance_weights = false;
    int n_estimators = 100;           // forest trees / boosting rounds
    int max_depth = 30;
    FeatureSubset max_features = FeatureSubset::All;
    int min_samples_split = 2;
    int min_samples_leaf = 1;
    double gbm_learning_rate = 0.1;
    double gbm_subsample = 1.0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["lr_c"] = lr_c;
        j["knn_k"] = knn_k;
        j["knn_distance_weights"] = knn_distance_weights;
        j["n_estimators"] = n_estimators;
        j["max_depth"] = max_depth;
        j["max_features"] = feature_subset_name(max_features);
        j["min_samples_split"] = min_samples_split;
        j["min_samples_leaf"] = min_samples_leaf;
        j["gbm_learning_rate"] = gbm_learning_rate;
        j["gbm_subsample"] = gbm_subsample;
        return j;
    }

    static ClassifierConfig from_json(const nlohmann::ordered_json& j) {
        ClassifierConfig c;
        try {
            c.lr_c = j.value("lr_c", c.lr_c);
            c.knn_k = j.value("knn_k", c.knn_k);
            c.knn_distance_weights = j.value("knn_distance_weights", c.knn_distance_weights);
            c.n_estimators = j.value("n_estimators", c.n_estimators);
            c.max_depth = j.value("max_depth", c.max_depth);
            if (j.contains("max_features"))
                c.max_features = feature_subset_from_name(j["max_features"].get<std::string>());
            c.min_samples_split = j.value("min_samples_split", c.min_samples_split);
            c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
            c.gbm_learning_rate = j.value("gbm_learning_rate", c.gbm_learning_rate);
            c.gbm_subsample = j.value("gbm_subsample", c.gbm_subsample);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("bad classifier config: ") + e.what());
        }
        return c;
    }
};

// ---------------------------------------------------------------------------
// datasets

struct Dataset {
    std::vector<AoaSample> samples;
    std::vector<int> labels;      // one per sample
    std::vector<int> class_space; // ordered distinct labels
};

inline Dataset make_track_dataset(const std::vector<AoaSample>& samples) {
    Dataset d;
    std::set<int> seen;
    for (const auto& s : samples) {
        if (!s.valid) continue;
        d.samples.push_back(s);
        d.labels.push_back(s.track_id);
        seen.insert(s.track_id);
    }
    d.class_space.assign(seen.begin(), seen.end());
    return d;
}

inline Dataset make_region_dataset(const std::vector<AoaSample>& samples) {
    Dataset d;
    std::set<int> seen;
    for (const auto& s : samples) {
        if (!s.valid) continue;
        const int label = s.region == Region::LoS ? 0 : 1;
        d.samples.push_back(s);
        d.labels.push_back(label);
        seen.insert(label);
    }
    d.class_space.assign(seen.begin(), seen.end());
    return d;
}

inline Dataset subset(const Dataset& data, const std::vector<std::size_t>& idx) {
    Dataset out;
    std::set<int> seen;
    for (std::size_t i : idx) {
        if (i >= data.samples.size()) throw InvalidArgument("subset index out of range");
        out.samples.push_back(data.samples[i]);
        out.labels.push_back(data.labels[i]);
        seen.insert(data.labels[i]);
    }
    out.class_space.assign(seen.begin(), seen.end());
    return out;
}

// Content hash covering labels, class space, and raw feature bits.
inline std::string dataset_fingerprint(const Dataset& data) {
    std::string buf;
    buf.reserve(64 + data.samples.size() * 24);
    auto put_u64 = [&buf](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
    };
    auto put_double = [&](double x) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &x, sizeof bits);
        put_u64(bits);
    };
    put_u64(data.samples.size());
    put_u64(data.class_space.size());
    for (int c : data.class_space) put_u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(c)));
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        put_u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(data.labels[i])));
        put_u64(data.samples[i].features.size());
        for (double f : data.samples[i].features) put_double(f);
    }
    const std::uint64_t h = fnv1a64(buf);
    static const char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 0; i < 16; ++i) out[15 - i] = digits[(h >> (4 * i)) & 0xfu];
    return out;
}

namespace detail {

struct Xy {
    Matrix x;            // n x dim
    std::vector<int> y;  // class indices into class_space
};

inline Xy to_xy(const Dataset& data) {
    if (data.samples.empty()) throw DegenerateDataset("dataset holds no samples");
    if (data.labels.size() != data.samples.size())
        throw DimensionMismatch("dataset labels and samples differ in length");
    if (data.class_space.size() < 2)
        throw DegenerateDataset("training needs at least two classes");
    std::map<int, int> index;
    for (std::size_t c = 0; c < data.class_space.size(); ++c)
        index[data.class_space[c]] = static_cast<int>(c);

    const std::size_t dim = data.samples.front().features.size();
    if (dim == 0) throw DegenerateDataset("samples carry no features");
    Xy out;
    out.x = Matrix(data.samples.size(), dim);
    out.y.resize(data.samples.size());
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const auto& s = data.samples[i];
        if (!s.valid) throw InvalidArgument("dataset contains a sample flagged invalid");
        if (s.features.size() != dim)
            throw DimensionMismatch("samples disagree on feature width");
        for (std::size_t d = 0; d < dim; ++d) out.x.at(i, d) = s.features[d];
        const auto it = index.find(data.labels[i]);
        if (it == index.end()) throw InvalidArgument("label missing from the class space");
        out.y[i] = it->second;
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// stratified splitting

inline std::vector<std::size_t> stratified_folds(const std::vector<int>& labels,
                                                 std::size_t folds, std::uint64_t seed) {
    if (folds < 2) throw InvalidArgument("cross-validation needs at least two folds");
    std::map<int, std::vector<std::size_t>> per_class;
    for (std::size_t i = 0; i < labels.size(); ++i) per_class[labels[i]].push_back(i);
    for (const auto& [label, idxs] : per_class)
        if (idxs.size() < folds)
            throw FoldTooSmall("class " + std::to_string(label) + " has " +
                               std::to_string(idxs.size()) + " samples for " +
                               std::to_string(folds) + " folds");
    std::vector<std::size_t> out(labels.size(), 0);
    Rng rng(seed);
    for (auto& [label, idxs] : per_class) {
        rng.shuffle(idxs);
        for (std::size_t pos = 0; pos < idxs.size(); ++pos) out[idxs[pos]] = pos % folds;
    }
    return out;
}

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> holdout;
};

inline SplitIndices stratified_split(const std::vector<int>& labels, double holdout_fraction,
                                     std::uint64_t seed) {
    if (!(holdout_fraction > 0.0) || !(holdout_fraction < 1.0))
        throw InvalidArgument("holdout fraction must lie in (0, 1)");
    std::map<int, std::vector<std::size_t>> per_class;
    for (std::size_t i = 0; i < labels.size(); ++i) per_class[labels[i]].push_back(i);
    SplitIndices out;
    Rng rng(seed);
    for (auto& [label, idxs] : per_class) {
        rng.shuffle(idxs);
        const std::size_t nh = static_cast<std::size_t>(
            std::floor(holdout_fraction * static_cast<double>(idxs.size()) + 1e-9));
        for (std::size_t pos = 0; pos < idxs.size(); ++pos)
            (pos < nh ? out.holdout : out.train).push_back(idxs[pos]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.holdout.begin(), out.holdout.end());
    return out;
}

// ---------------------------------------------------------------------------
// softmax regression (full-batch gradient descent with backtracking line search)

class LogisticRegression final : public Model {
public:
    std::vector<int> classes;
    std::size_t dim = 0;
    std::vector<double> w;  // classes x dim, row-major
    std::vector<double> b;  // classes

    std::string kind_name() const override { return "LR"; }
    std::size_t feature_dim() const override { return dim; }
    const std::vector<int>& class_space() const override { return classes; }

    std::vector<double> predict_proba(const double* x, std::size_t d) const override {
        if (d != dim) throw DimensionMismatch("softmax regression input width mismatch");
        const std::size_t k = classes.size();
        std::vector<double> s(k, 0.0);
        for (std::size_t c = 0; c < k; ++c) {
            double acc = b[c];
            for (std::size_t j = 0; j < dim; ++j) acc += w[c * dim + j] * x[j];
            s[c] = acc;
        }
        double peak = s[0];
        for (double v : s) peak = std::max(peak, v);
        double denom = 0.0;
        for (double& v : s) {
            v = std::exp(v - peak);
            denom += v;
        }
        for (double& v : s) v /= denom;
        return s;
    }

    nlohmann::ordered_json payload() const override {
        nlohmann::ordered_json j;
        j["classes"] = classes;
        j["dim"] = dim;
        j["weights"] = detail::hex_from_doubles(w);
        j["bias"] = detail::hex_from_doubles(b);
        return j;
    }

    static LogisticRegression from_payload(const nlohmann::ordered_json& p) {
        LogisticRegression m;
        try {
            m.classes = p.at("classes").get<std::vector<int>>();
            m.dim = p.at("dim").get<std::size_t>();
            m.w = detail::doubles_from_hex(p.at("weights").get<std::string>());
            m.b = detail::doubles_from_hex(p.at("bias").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("bad softmax payload: ") + e.what());
        }
        if (m.w.size() != m.classes.size() * m.dim || m.b.size() != m.classes.size())
            throw FormatError("softmax payload has inconsistent shapes");
        return m;
    }

    static LogisticRegression fit(const Matrix& x, const std::vector<int>& y,
                                  std::vector<int> classes, double c_reg) {
        const std::size_t n = x.rows, d = x.cols, k = classes.size();
        LogisticRegression m;
        m.classes = std::move(classes);
        m.dim = d;
        m.w.assign(k * d, 0.0);
        m.b.assign(k, 0.0);
        const double reg = 1.0 / (std::max(c_reg, 1e-12) * static_cast<double>(n));

        auto objective = [&](const std::vector<double>& wv, const std::vector<double>& bv,
                             XentResult* xe_out) {
            Matrix s(n, k);
            for (std::size_t i = 0; i < n; ++i) {
                const double* row = x.row(i);
                for (std::size_t c = 0; c < k; ++c) {
                    double acc = bv[c];
                    for (std::size_t j = 0; j < d; ++j) acc += wv[c * d + j] * row[j];
                    s.at(i, c) = acc;
                }
            }
            XentResult xe = softmax_xent(s, y);
            double penalty = 0.0;
            for (double v : wv) penalty += v * v;
            const double loss = xe.loss;
            if (xe_out) *xe_out = std::move(xe);
            return loss + 0.5 * reg * penalty;
        };

        XentResult xe;
        double obj = objective(m.w, m.b, &xe);
        std::vector<double> gw(k * d), gb(k), wt(k * d), bt(k);
        for (int iter = 0; iter < 1000; ++iter) {
            std::fill(gw.begin(), gw.end(), 0.0);
            std::fill(gb.begin(), gb.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double* row = x.row(i);
                for (std::size_t c = 0; c < k; ++c) {
                    const double g = xe.grad.at(i, c);
                    gb[c] += g;
                    for (std::size_t j = 0; j < d; ++j) gw[c * d + j] += g * row[j];
                }
            }
            for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += reg * m.w[i];
            double gnorm2 = 0.0;
            for (double v : gw) gnorm2 += v * v;
            for (double v : gb) gnorm2 += v * v;
            if (std::sqrt(gnorm2) <= 1e-8) break;

            bool accepted = false;
            for (double step = 1.0; step >= 1e-12; step *= 0.5) {
                for (std::size_t i = 0; i < wt.size(); ++i) wt[i] = m.w[i] - step * gw[i];
                for (std::size_t i = 0; i < bt.size(); ++i) bt[i] = m.b[i] - step * gb[i];
                XentResult xet;
                const double trial = objective(wt, bt, &xet);
                if (trial <= obj - 1e-4 * step * gnorm2) {
                    m.w.swap(wt);
                    m.b.swap(bt);
                    obj = trial;
                    xe = std::move(xet);
                    accepted = true;
                    break;
                }
            }
            if (!accepted) break;  // no descent step left at this scale
        }
        return m;
    }
};

// ---------------------------------------------------------------------------
// k-nearest-neighbors

class Knn final : public Model {
public:
    std::vector<int> classes;
    std::size_t dim = 0;
    std::vector<double> exemplars;    // count x dim, row-major
    std::vector<int> exemplar_labels; // class indices
    int k = 5;
    bool distance_weights = false;

    std::string kind_name() const override { return "KNN"; }
    std::size_t feature_dim() const override { return dim; }
    const std::vector<int>& class_space() const override { return classes; }

    std::vector<double> predict_proba(const double* x, std::size_t d) const override {
        if (d != dim) throw DimensionMismatch("nearest-neighbor input width mismatch");
        const std::size_t n = exemplar_labels.size();
        if (n == 0) throw InvalidArgument("nearest-neighbor model holds no exemplars");
        std::vector<std::pair<double, std::size_t>> dist(n);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            const double* row = exemplars.data() + i * dim;
            for (std::size_t j = 0; j < dim; ++j) {
                const double diff = row[j] - x[j];
                acc += diff * diff;
            }
            dist[i] = {acc, i};
        }
        const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), n);
        std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
        std::vector<double> votes(classes.size(), 0.0);
        double total = 0.0;
        for (std::size_t r = 0; r < kk; ++r) {
            const double weight =
                distance_weights ? 1.0 / std::max(std::sqrt(dist[r].first), 1e-12) : 1.0;
            votes[exemplar_labels[dist[r].second]] += weight;
            total += weight;
        }
        for (double& v : votes) v /= total;
        return votes;
    }

    nlohmann::ordered_json payload() const override {
        nlohmann::ordered_json j;
        j["classes"] = classes;
        j["dim"] = dim;
        j["k"] = k;
        j["distance_weights"] = distance_weights;
        j["labels"] = exemplar_labels;
        j["points"] = detail::hex_from_doubles(exemplars);
        return j;
    }

    static Knn from_payload(const nlohmann::ordered_json& p) {
        Knn m;
        try {
            m.classes = p.at("classes").get<std::vector<int>>();
            m.dim = p.at("dim").get<std::size_t>();
            m.k = p.at("k").get<int>();
            m.distance_weights = p.at("distance_weights").get<bool>();
            m.exemplar_labels = p.at("labels").get<std::vector<int>>();
            m.exemplars = detail::doubles_from_hex(p.at("points").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("bad nearest-neighbor payload: ") + e.what());
        }
        if (m.exemplars.size() != m.exemplar_labels.size() * m.dim)
            throw FormatError("nearest-neighbor payload has inconsistent shapes");
        for (int c : m.exemplar_labels)
            if (c < 0 || static_cast<std::size_t>(c) >= m.classes.size())
                throw FormatError("nearest-neighbor payload label out of range");
        return m;
    }
};

// ---------------------------------------------------------------------------
// trees

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double gain = 0.0;        // impurity decrease that produced this split
    std::size_t count = 0;    // training samples that reached the node
    double value = 0.0;       // regression output (leaves)
    std::vector<double> dist; // class distribution (classification)
};

namespace detail {

struct TreeParams {
    int max_depth = 30;
    int min_samples_split = 2;
    int min_samples_leaf = 1;
    FeatureSubset subset = FeatureSubset::All;
};

inline TreeParams tree_params(const ClassifierConfig& cfg) {
    return {cfg.max_depth, cfg.min_samples_split, cfg.min_samples_leaf, cfg.max_features};
}

inline std::size_t subset_size(FeatureSubset mode, std::size_t dim) {
    switch (mode) {
        case FeatureSubset::All: return dim;
        case FeatureSubset::Sqrt:
            return std::max<std::size_t>(
                1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(dim)))));
        case FeatureSubset::Log2:
            return std::max<std::size_t>(
                1, static_cast<std::size_t>(std::floor(std::log2(static_cast<double>(dim)))));
    }
    return dim;
}

// Draw `want` distinct feature indices, returned sorted so candidate scans keep
// a fixed order and split ties resolve to the lowest feature index.
inline std::vector<std::size_t> pick_features(std::size_t dim, std::size_t want, Rng& rng) {
    std::vector<std::size_t> all(dim);
    std::iota(all.begin(), all.end(), 0);
    if (want >= dim) return all;
    for (std::size_t i = 0; i < want; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(dim - i));
        std::swap(all[i], all[j]);
    }
    all.resize(want);
    std::sort(all.begin(), all.end());
    return all;
}

inline double gini_impurity(const std::vector<std::size_t>& counts, std::size_t total) {
    double g = 1.0;
    for (std::size_t c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        g -= p * p;
    }
    return g;
}

// CART with the Gini criterion.  Splits scan features in ascending index order
// and thresholds (midpoints of consecutive distinct values) in ascending value
// order; only strictly better gains replace the incumbent, so ties go to the
// first candidate.  A node becomes a leaf when no candidate improves impurity.
class ClassTreeBuilder {
public:
    ClassTreeBuilder(const Matrix& x, const std::vector<int>& y, std::size_t n_classes,
                     const TreeParams& params, Rng& rng)
        : x_(x), y_(y), n_classes_(n_classes), params_(params), rng_(rng) {}

    std::vector<TreeNode> build(std::vector<std::size_t> idx) {
        nodes_.clear();
        grow(std::move(idx), 0);
        return std::move(nodes_);
    }

private:
    int grow(std::vector<std::size_t> idx, int depth) {
        const std::size_t n = idx.size();
        const int me = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        std::vector<std::size_t> counts(n_classes_, 0);
        for (std::size_t i : idx) ++counts[static_cast<std::size_t>(y_[i])];
        nodes_[me].count = n;
        nodes_[me].dist.resize(n_classes_);
        for (std::size_t c = 0; c < n_classes_; ++c)
            nodes_[me].dist[c] = static_cast<double>(counts[c]) / static_cast<double>(n);

        bool pure = false;
        for (std::size_t c : counts) pure = pure || c == n;
        if (pure || depth >= params_.max_depth ||
            n < static_cast<std::size_t>(params_.min_samples_split))
            return me;

        const auto feats = pick_features(x_.cols, subset_size(params_.subset, x_.cols), rng_);
        const double parent = gini_impurity(counts, n);
        int best_f = -1;
        double best_thr = 0.0, best_gain = 0.0;
        std::vector<std::size_t> order;
        for (std::size_t f : feats) {
            order = idx;
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const double va = x_.at(a, f), vb = x_.at(b, f);
                return va < vb || (va == vb && a < b);
            });
            std::vector<std::size_t> left(n_classes_, 0);
            std::vector<std::size_t> right = counts;
            for (std::size_t p = 1; p < n; ++p) {
                const std::size_t moved = static_cast<std::size_t>(y_[order[p - 1]]);
                ++left[moved];
                --right[moved];
                const double lo = x_.at(order[p - 1], f);
                const double hi = x_.at(order[p], f);
                if (!(hi > lo)) continue;
                if (p < static_cast<std::size_t>(params_.min_samples_leaf) ||
                    n - p < static_cast<std::size_t>(params_.min_samples_leaf))
                    continue;
                const double gain =
                    parent -
                    (static_cast<double>(p) / n) * gini_impurity(left, p) -
                    (static_cast<double>(n - p) / n) * gini_impurity(right, n - p);
                if (gain > best_gain) {
                    best_f = static_cast<int>(f);
                    best_thr = 0.5 * (lo + hi);
                    best_gain = gain;
                }
            }
        }
        if (best_f < 0 || best_gain <= 1e-12) return me;

        nodes_[me].feature = best_f;
        nodes_[me].threshold = best_thr;
        nodes_[me].gain = best_gain;
        std::vector<std::size_t> li, ri;
        for (std::size_t i : idx)
            (x_.at(i, static_cast<std::size_t>(best_f)) <= best_thr ? li : ri).push_back(i);
        const int l = grow(std::move(li), depth + 1);
        const int r = grow(std::move(ri), depth + 1);
        nodes_[me].left = l;
        nodes_[me].right = r;
        return me;
    }

    const Matrix& x_;
    const std::vector<int>& y_;
    std::size_t n_classes_;
    TreeParams params_;
    Rng& rng_;
    std::vector<TreeNode> nodes_;
};

// Variance-reduction regression tree for boosting.  Leaf outputs use the
// one-step Newton value scale * sum(r) / sum(|r| * (1 - |r|)).
class RegressionTreeBuilder {
public:
    RegressionTreeBuilder(const Matrix& x, const std::vector<double>& target,
                          const TreeParams& params, double leaf_scale, Rng& rng)
        : x_(x), target_(target), params_(params), leaf_scale_(leaf_scale), rng_(rng) {}

    std::vector<TreeNode> build(std::vector<std::size_t> idx) {
        nodes_.clear();
        grow(std::move(idx), 0);
        return std::move(nodes_);
    }

private:
    double leaf_value(const std::vector<std::size_t>& idx) const {
        double num = 0.0, den = 0.0;
        for (std::size_t i : idx) {
            const double r = target_[i];
            num += r;
            den += std::abs(r) * (1.0 - std::abs(r));
        }
        if (den < 1e-300) return 0.0;
        return leaf_scale_ * num / den;
    }

    int grow(std::vector<std::size_t> idx, int depth) {
        const std::size_t n = idx.size();
        const int me = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        nodes_[me].count = n;
        nodes_[me].value = leaf_value(idx);

        double sum = 0.0, sumsq = 0.0;
        for (std::size_t i : idx) {
            sum += target_[i];
            sumsq += target_[i] * target_[i];
        }
        const double parent_sse = sumsq - sum * sum / static_cast<double>(n);
        if (depth >= params_.max_depth ||
            n < static_cast<std::size_t>(params_.min_samples_split) || parent_sse <= 1e-12)
            return me;

        const auto feats = pick_features(x_.cols, subset_size(params_.subset, x_.cols), rng_);
        int best_f = -1;
        double best_thr = 0.0, best_gain = 0.0;
        std::vector<std::size_t> order;
        for (std::size_t f : feats) {
            order = idx;
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const double va = x_.at(a, f), vb = x_.at(b, f);
                return va < vb || (va == vb && a < b);
            });
            double lsum = 0.0, lsq = 0.0, rsum = sum, rsq = sumsq;
            for (std::size_t p = 1; p < n; ++p) {
                const double moved = target_[order[p - 1]];
                lsum += moved;
                lsq += moved * moved;
                rsum -= moved;
                rsq -= moved * moved;
                const double lo = x_.at(order[p - 1], f);
                const double hi = x_.at(order[p], f);
                if (!(hi > lo)) continue;
                if (p < static_cast<std::size_t>(params_.min_samples_leaf) ||
                    n - p < static_cast<std::size_t>(params_.min_samples_leaf))
                    continue;
                const double sse_l = lsq - lsum * lsum / static_cast<double>(p);
                const double sse_r = rsq - rsum * rsum / static_cast<double>(n - p);
                const double gain = parent_sse - sse_l - sse_r;
                if (gain > best_gain) {
                    best_f = static_cast<int>(f);
                    best_thr = 0.5 * (lo + hi);
                    best_gain = gain;
                }
            }
        }
        if (best_f < 0 || best_gain <= 1e-12) return me;

        nodes_[me].feature = best_f;
        nodes_[me].threshold = best_thr;
        nodes_[me].gain = best_gain;
        std::vector<std::size_t> li, ri;
        for (std::size_t i : idx)
            (x_.at(i, static_cast<std::size_t>(best_f)) <= best_thr ? li : ri).push_back(i);
        const int l = grow(std::move(li), depth + 1);
        const int r = grow(std::move(ri), depth + 1);
        nodes_[me].left = l;
        nodes_[me].right = r;
        return me;
    }

    const Matrix& x_;
    const std::vector<double>& target_;
    TreeParams params_;
    double leaf_scale_;
    Rng& rng_;
    std::vector<TreeNode> nodes_;
};

inline nlohmann::ordered_json tree_to_json(const std::vector<TreeNode>& nodes,
                                           std::size_t n_classes) {
    nlohmann::ordered_json t;
    std::vector<int> feature, left, right;
    std::vector<std::size_t> count;
    std::vector<double> threshold, gain, value, dist;
    for (const auto& node : nodes) {
        feature.push_back(node.feature);
        left.push_back(node.left);
        right.push_back(node.right);
        count.push_back(node.count);
        threshold.push_back(node.threshold);
        gain.push_back(node.gain);
        if (n_classes == 0) {
            value.push_back(node.value);
        } else {
            if (node.dist.size() != n_classes)
                throw InvalidArgument("tree node distribution width mismatch");
            dist.insert(dist.end(), node.dist.begin(), node.dist.end());
        }
    }
    t["feature"] = feature;
    t["threshold"] = hex_from_doubles(threshold);
    t["left"] = left;
    t["right"] = right;
    t["gain"] = hex_from_doubles(gain);
    t["count"] = count;
    if (n_classes == 0)
        t["value"] = hex_from_doubles(value);
    else
        t["dist"] = hex_from_doubles(dist);
    return t;
}

inline std::vector<TreeNode> tree_from_json(const nlohmann::ordered_json& t,
                                            std::size_t n_classes) {
    std::vector<int> feature, left, right;
    std::vector<std::size_t> count;
    std::vector<double> threshold, gain, value, dist;
    try {
        feature = t.at("feature").get<std::vector<int>>();
        left = t.at("left").get<std::vector<int>>();
        right = t.at("right").get<std::vector<int>>();
        count = t.at("count").get<std::vector<std::size_t>>();
        threshold = doubles_from_hex(t.at("threshold").get<std::string>());
        gain = doubles_from_hex(t.at("gain").get<std::string>());
        if (n_classes == 0)
            value = doubles_from_hex(t.at("value").get<std::string>());
        else
            dist = doubles_from_hex(t.at("dist").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad tree payload: ") + e.what());
    }
    const std::size_t n = feature.size();
    if (left.size() != n || right.size() != n || count.size() != n || threshold.size() != n ||
        gain.size() != n || (n_classes == 0 ? value.size() != n : dist.size() != n * n_classes))
        throw FormatError("tree payload arrays disagree on length");
    std::vector<TreeNode> nodes(n);
    for (std::size_t i = 0; i < n; ++i) {
        nodes[i].feature = feature[i];
        nodes[i].threshold = threshold[i];
        nodes[i].left = left[i];
        nodes[i].right = right[i];
        nodes[i].gain = gain[i];
        nodes[i].count = count[i];
        if (n_classes == 0) {
            nodes[i].value = value[i];
        } else {
            nodes[i].dist.assign(dist.begin() + static_cast<std::ptrdiff_t>(i * n_classes),
                                 dist.begin() + static_cast<std::ptrdiff_t>((i + 1) * n_classes));
        }
        const int n_int = static_cast<int>(n);
        if (nodes[i].feature >= 0 &&
            (nodes[i].left < 0 || nodes[i].left >= n_int || nodes[i].right < 0 ||
             nodes[i].right >= n_int))
            throw FormatError("tree payload has a split with bad child links");
    }
    return nodes;
}

inline const TreeNode& walk_tree(const std::vector<TreeNode>& nodes, const double* x) {
    std::size_t at = 0;
    while (nodes[at].feature >= 0)
        at = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[at].feature)] <=
                                              nodes[at].threshold
                                          ? nodes[at].left
                                          : nodes[at].right);
    return nodes[at];
}

}  // namespace detail

class DecisionTree final : public Model {
public:
    std::vector<int> classes;
    std::size_t dim = 0;
    std::vector<TreeNode> nodes_;

    const std::vector<TreeNode>& nodes() const { return nodes_; }

    std::string kind_name() const override { return "DT"; }
    std::size_t feature_dim() const override { return dim; }
    const std::vector<int>& class_space() const override { return classes; }

    std::vector<double> predict_proba(const double* x, std::size_t d) const override {
        if (d != dim) throw DimensionMismatch("decision tree input width mismatch");
        return detail::walk_tree(nodes_, x).dist;
    }

    nlohmann::ordered_json payload() const override {
        nlohmann::ordered_json j;
        j["classes"] = classes;
        j["dim"] = dim;
        j["tree"] = detail::tree_to_json(nodes_, classes.size());
        return j;
    }

    static DecisionTree from_payload(const nlohmann::ordered_json& p) {
        DecisionTree m;
        try {
            m.classes = p.at("classes").get<std::vector<int>>();
            m.dim = p.at("dim").get<std::size_t>();
            m.nodes_ = detail::tree_from_json(p.at("tree"), m.classes.size());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("bad decision tree payload: ") + e.what());
        }
        return m;
    }

    static DecisionTree fit(const Matrix& x, const std::vector<int>& y, std::vector<int> classes,
                            std::vector<std::size_t> idx, const detail::TreeParams& params,
                            Rng& rng) {
        DecisionTree m;
        m.dim = x.cols;
        m.classes = std::move(classes);
        detail::ClassTreeBuilder builder(x, y, m.classes.size(), params, rng);
        m.nodes_ = builder.build(std::move(idx));
        return m;
    }

    static DecisionTree train(const Dataset& data, const ClassifierConfig& cfg,
                              std::uint64_t seed) {
        const auto xy = detail::to_xy(data);
        Rng rng(seed_for(seed, "tree"));
        std::vector<std::size_t> idx(xy.x.rows);
        std::iota(idx.begin(), idx.end(), 0);
        return fit(xy.x, xy.y, data.class_space, std::move(idx), detail::tree_params(cfg), rng);
    }
};

class RandomForest final : public Model {
public:
    std::vector<int> classes;
    std::size_t dim = 0;
    std::vector<DecisionTree> trees_;

    const std::vector<DecisionTree>& trees() const { return trees_; }

    std::string kind_name() const override { return "RF"; }
    std::size_t feature_dim() const override { return dim; }
    const std::vector<int>& class_space() const override { return classes; }

    std::vector<double> predict_proba(const double* x, std::size_t d) const override {
        if (d != dim) throw DimensionMismatch("random forest input width mismatch");
        std::vector<double> acc(classes.size(), 0.0);
        for (const auto& tree : trees_) {
            const auto& dist = detail::walk_tree(tree.nodes_, x).dist;
            for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += dist[c];
        }
        for (double& v : acc) v /= static_cast<double>(trees_.size());
        return acc;
    }

    nlohmann::ordered_json payload() const override {
        nlohmann::ordered_json j;
        j["classes"] = classes;
        j["dim"] = dim;
        nlohmann::ordered_json trees = nlohmann::ordered_json::array();
        for (const auto& tree : trees_) trees.push_back(detail::tree_to_json(tree.nodes_, classes.size()));
        j["trees"] = std::move(trees);
        return j;
    }

    static RandomForest from_payload(const nlohmann::ordered_json& p) {
        RandomForest m;
        try {
            m.classes = p.at("classes").get<std::vector<int>>();
            m.dim = p.at("dim").get<std::size_t>();
            if (!p.at("trees").is_array()) throw FormatError("forest payload lacks a tree array");
            for (const auto& t : p.at("trees")) {
                DecisionTree tree;
                tree.classes = m.classes;
                tree.dim = m.dim;
                tree.nodes_ = detail::tree_from_json(t, m.classes.size());
                m.trees_.push_back(std::move(tree));
            }
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("bad forest payload: ") + e.what());
        }
        if (m.trees_.empty()) throw FormatError("forest payload holds no trees");
        return m;
    }

    static RandomForest train(const Dataset& data, const ClassifierConfig& cfg,
                              std::uint64_t seed) {
        const auto xy = detail::to_xy(data);
        RandomForest m;
        m.classes = data.class_space;
        m.dim = xy.x.cols;
        const auto params = detail::tree_params(cfg);
        const std::size_t n = xy.x.rows;
        for (int t = 0; t < cfg.n_estimators; ++t) {
            Rng rng(seed_for(seed, "tree/" + std::to_string(t)));
            std::vector<std::size_t> boot(n);
            for (std::size_t i = 0; i < n; ++i)
                boot[i] = static_cast<std::size_t>(rng.uniform_index(n));
            std::sort(boot.begin(), boot.end());
            m.trees_.push_back(
                DecisionTree::fit(xy.x, xy.y, m.classes, std::move(boot), params, rng));
        }
        return m;
    }
};

// ---------------------------------------------------------------------------
// gradient-boosted trees (multinomial deviance, one regression tree per class
// per round on the softmax residuals, optional per-round row subsampling)

class Gbm final : public Model {
public:
    std::vector<int> classes;
    std::size_t dim = 0;
    double learning_rate = 0.1;
    std::vector<std::vector<std::vector<TreeNode>>> rounds_;  // [round][class] -> tree

    std::string kind_name() const override { return "GBM"; }
    std::size_t feature_dim() const override { return dim; }
    const std::vector<int>& class_space() const override { return classes; }

    std::vector<double> predict_proba(const double* x, std::size_t d) const override {
        if (d != dim) throw DimensionMismatch("boosted trees input width mismatch");
        const std::size_t k = classes.size();
        std::vector<double> score(k, 0.0);
        for (const auto& round : rounds_)
            for (std::size_t c = 0; c < k; ++c)
                score[c] += learning_rate * detail::walk_tree(round[c], x).value;
        double peak = score[0];
        for (double v : score) peak = std::max(peak, v);
        double denom = 0.0;
        for (double& v : score) {
            v = std::exp(v - peak);
            denom += v;
        }
        for (double& v : score) v /= denom;
        return score;
    }

    nlohmann::ordered_json payload() const override {
        nlohmann::ordered_json j;
        j["classes"] = classes;
        j["dim"] = dim;
        j["learning_rate"] = learning_rate;
        nlohmann::ordered_json rounds = nlohmann::ordered_json::array();
        for (const auto& round : rounds_) {
            nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
            for (const auto& tree : round) per_class.push_back(detail::tree_to_json(tree, 0));
            rounds.push_back(std::move(per_class));
        }
        j["rounds"] = std::move(rounds);
        return j;
    }

    static Gbm from_payload(const nlohmann::ordered_json& p) {
        Gbm m;
        try {
            m.classes = p.at("classes").get<std::vector<int>>();
            m.dim = p.at("dim").get<std::size_t>();
            m.learning_rate = p.at("learning_rate").get<double>();
            for (const auto& round : p.at("rounds")) {
                std::vector<std::vector<TreeNode>> per_class;
                for (const auto& t : round) per_class.push_back(detail::tree_from_json(t, 0));
                if (per_class.size() != m.classes.size())
                    throw FormatError("boosting round is missing class trees");
                m.rounds_.push_back(std::move(per_class));
            }
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("bad boosted trees payload: ") + e.what());
        }
        return m;
    }

    static Gbm train(const Dataset& data, const ClassifierConfig& cfg, std::uint64_t seed) {
        const auto xy = detail::to_xy(data);
        const std::size_t n = xy.x.rows;
        const std::size_t k = data.class_space.size();
        Gbm m;
        m.classes = data.class_space;
        m.dim = xy.x.cols;
        m.learning_rate = cfg.gbm_learning_rate;
        const auto params = detail::tree_params(cfg);
        const double leaf_scale = (static_cast<double>(k) - 1.0) / static_cast<double>(k);

        std::vector<double> score(n * k, 0.0);
        std::vector<double> prob(k), residual(n);
        for (int round = 0; round < cfg.n_estimators; ++round) {
            const std::string round_label = "round/" + std::to_string(round);
            std::vector<std::size_t> rows(n);
            std::iota(rows.begin(), rows.end(), 0);
            if (cfg.gbm_subsample < 1.0) {
                Rng row_rng(seed_for(seed, round_label + "/rows"));
                row_rng.shuffle(rows);
                rows.resize(std::max<std::size_t>(
                    1, static_cast<std::size_t>(std::floor(
                           cfg.gbm_subsample * static_cast<double>(n) + 1e-9))));
                std::sort(rows.begin(), rows.end());
            }
            // softmax residuals against the scores entering this round
            std::vector<std::vector<TreeNode>> per_class(k);
            std::vector<double> probs(n * k, 0.0);
            for (std::size_t i : rows) {
                const double* s = score.data() + i * k;
                double peak = s[0];
                for (std::size_t c = 0; c < k; ++c) peak = std::max(peak, s[c]);
                double denom = 0.0;
                for (std::size_t c = 0; c < k; ++c) {
                    prob[c] = std::exp(s[c] - peak);
                    denom += prob[c];
                }
                for (std::size_t c = 0; c < k; ++c) probs[i * k + c] = prob[c] / denom;
            }
            for (std::size_t c = 0; c < k; ++c) {
                std::fill(residual.begin(), residual.end(), 0.0);
                for (std::size_t i : rows)
                    residual[i] = (static_cast<std::size_t>(xy.y[i]) == c ? 1.0 : 0.0) -
                                  probs[i * k + c];
                Rng rng(seed_for(seed, round_label + "/class/" + std::to_string(c)));
                detail::RegressionTreeBuilder builder(xy.x, residual, params, leaf_scale, rng);
                per_class[c] = builder.build(rows);
                for (std::size_t i = 0; i < n; ++i)
                    score[i * k + c] +=
                        m.learning_rate * detail::walk_tree(per_class[c], xy.x.row(i)).value;
            }
            m.rounds_.push_back(std::move(per_class));
        }
        return m;
    }
};

// ---------------------------------------------------------------------------
// artifact assembly and loading

inline ModelArtifact wrap_model(std::shared_ptr<const Model> model, const ClassifierConfig& cfg,
                                std::uint64_t seed, std::string data_fingerprint) {
    if (!model) throw InvalidArgument("cannot wrap a null model");
    ModelArtifact artifact;
    artifact.kind = model->kind_name();
    artifact.config = cfg.to_json();
    artifact.seed = seed;
    artifact.data_fingerprint = std::move(data_fingerprint);
    artifact.runtime = std::move(model);
    return artifact;
}

class StackModel;  // defined below; participates in the loader dispatch

inline std::shared_ptr<const Model> model_from_payload(const std::string& kind,
                                                       const nlohmann::ordered_json& payload);

inline ModelArtifact artifact_from_doc(const nlohmann::ordered_json& doc) {
    detail::check_artifact_doc(doc);
    ModelArtifact artifact;
    artifact.kind = doc["kind"].get<std::string>();
    artifact.config = doc["config"];
    artifact.seed = doc["seed"].get<std::uint64_t>();
    artifact.data_fingerprint = doc["data_fingerprint"].get<std::string>();
    artifact.runtime = model_from_payload(artifact.kind, doc["payload"]);
    return artifact;
}

inline ModelArtifact load_artifact(const std::string& bytes) {
    return artifact_from_doc(detail::parse_artifact_bytes(bytes));
}

inline ModelArtifact load_artifact_as(const std::string& bytes, const std::string& expected_kind) {
    ModelArtifact artifact = load_artifact(bytes);
    if (artifact.kind != expected_kind)
        throw KindMismatch("expected a " + expected_kind + " model, found " + artifact.kind);
    return artifact;
}

// ---------------------------------------------------------------------------
// stacked ensemble: base models feed class probabilities to a softmax meta model

class StackModel final : public Model {
public:
    std::vector<int> classes;
    std::size_t dim = 0;
    std::vector<ModelArtifact> bases_;
    LogisticRegression meta_;

    std::string kind_name() const override { return "STACK"; }
    std::size_t feature_dim() const override { return dim; }
    const std::vector<int>& class_space() const override { return classes; }

    std::vector<double> meta_features(const double* x, std::size_t d) const {
        std::vector<double> z;
        z.reserve(bases_.size() * classes.size());
        for (const auto& base : bases_) {
            const auto p = base.runtime->predict_proba(x, d);
            z.insert(z.end(), p.begin(), p.end());
        }
        return z;
    }

    std::vector<double> predict_proba(const double* x, std::size_t d) const override {
        if (d != dim) throw DimensionMismatch("stacked ensemble input width mismatch");
        const auto z = meta_features(x, d);
        return meta_.predict_proba(z.data(), z.size());
    }

    nlohmann::ordered_json payload() const override {
        nlohmann::ordered_json j;
        j["classes"] = classes;
        j["dim"] = dim;
        nlohmann::ordered_json bases = nlohmann::ordered_json::array();
        for (const auto& base : bases_) bases.push_back(artifact_doc(base));
        j["bases"] = std::move(bases);
        j["meta"] = meta_.payload();
        return j;
    }

    static StackModel from_payload(const nlohmann::ordered_json& p) {
        StackModel m;
        try {
            m.classes = p.at("classes").get<std::vector<int>>();
            m.dim = p.at("dim").get<std::size_t>();
            for (const auto& doc : p.at("bases")) m.bases_.push_back(artifact_from_doc(doc));
            m.meta_ = LogisticRegression::from_payload(p.at("meta"));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("bad stacked ensemble payload: ") + e.what());
        }
        if (m.bases_.empty()) throw FormatError("stacked ensemble payload holds no base models");
        return m;
    }
};

inline std::shared_ptr<const Model> model_from_payload(const std::string& kind,
                                                       const nlohmann::ordered_json& payload) {
    if (kind == "LR")
        return std::make_shared<LogisticRegression>(LogisticRegression::from_payload(payload));
    if (kind == "KNN") return std::make_shared<Knn>(Knn::from_payload(payload));
    if (kind == "DT") return std::make_shared<DecisionTree>(DecisionTree::from_payload(payload));
    if (kind == "RF") return std::make_shared<RandomForest>(RandomForest::from_payload(payload));
    if (kind == "GBM") return std::make_shared<Gbm>(Gbm::from_payload(payload));
    if (kind == "STACK") return std::make_shared<StackModel>(StackModel::from_payload(payload));
    throw FormatError("unknown model kind in container: " + kind);
}

// ---------------------------------------------------------------------------
// training entry points

namespace detail {

inline void validate_config(ModelKind kind, const ClassifierConfig& cfg) {
    switch (kind) {
        case ModelKind::LR:
            if (!(cfg.lr_c > 0.0)) throw InvalidArgument("regularization constant must be positive");
            break;
        case ModelKind::KNN:
            if (cfg.knn_k < 1) throw InvalidArgument("neighbor count must be at least 1");
            break;
        case ModelKind::DT:
        case ModelKind::RF:
        case ModelKind::GBM:
            if (cfg.max_depth < 1) throw InvalidArgument("tree depth must be at least 1");
            if (cfg.min_samples_split < 2)
                throw InvalidArgument("min samples per split must be at least 2");
            if (cfg.min_samples_leaf < 1)
                throw InvalidArgument("min samples per leaf must be at least 1");
            if (kind != ModelKind::DT && cfg.n_estimators < 1)
                throw InvalidArgument("ensemble size must be at least 1");
            if (kind == ModelKind::GBM) {
                if (!(cfg.gbm_learning_rate > 0.0))
                    throw InvalidArgument("boosting learning rate must be positive");
                if (!(cfg.gbm_subsample > 0.0) || cfg.gbm_subsample > 1.0)
                    throw InvalidArgument("row subsample fraction must lie in (0, 1]");
            }
            break;
        case ModelKind::Stack:
            break;
    }
}

}  // namespace detail

inline ModelArtifact train_classifier(ModelKind kind, const Dataset& data,
                                      const ClassifierConfig& cfg, std::uint64_t seed) {
    detail::validate_config(kind, cfg);
    std::shared_ptr<const Model> runtime;
    switch (kind) {
        case ModelKind::LR: {
            const auto xy = detail::to_xy(data);
            runtime = std::make_shared<LogisticRegression>(
                LogisticRegression::fit(xy.x, xy.y, data.class_space, cfg.lr_c));
            break;
        }
        case ModelKind::KNN: {
            const auto xy = detail::to_xy(data);
            Knn m;
            m.classes = data.class_space;
            m.dim = xy.x.cols;
            m.exemplars = xy.x.data;
            m.exemplar_labels = xy.y;
            m.k = cfg.knn_k;
            m.distance_weights = cfg.knn_distance_weights;
            runtime = std::make_shared<Knn>(std::move(m));
            break;
        }
        case ModelKind::DT:
            runtime = std::make_shared<DecisionTree>(DecisionTree::train(data, cfg, seed));
            break;
        case ModelKind::RF:
            runtime = std::make_shared<RandomForest>(RandomForest::train(data, cfg, seed));
            break;
        case ModelKind::GBM:
            runtime = std::make_shared<Gbm>(Gbm::train(data, cfg, seed));
            break;
        case ModelKind::Stack:
            throw InvalidArgument("stacked ensembles are trained through stacking_train");
    }
    return wrap_model(std::move(runtime), cfg, seed, dataset_fingerprint(data));
}

inline std::vector<double> predict_proba(const ModelArtifact& artifact, const AoaSample& sample) {
    if (!artifact.runtime) throw InvalidArgument("artifact carries no runtime model");
    if (sample.features.size() != artifact.runtime->feature_dim())
        throw DimensionMismatch("sample width does not match the model input width");
    return artifact.runtime->predict_proba(sample.features.data(), sample.features.size());
}

// argmax with ties broken toward the lowest class index
inline int predict_label(const ModelArtifact& artifact, const AoaSample& sample) {
    const auto p = predict_proba(artifact, sample);
    std::size_t best = 0;
    for (std::size_t c = 1; c < p.size(); ++c)
        if (p[c] > p[best]) best = c;
    return artifact.runtime->class_space()[best];
}

// ---------------------------------------------------------------------------
// evaluation

struct EvalReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    double train_seconds = 0.0;
    double infer_ms_mean = 0.0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["accuracy"] = accuracy;
        j["macro_f1"] = macro_f1;
        j["confusion_matrix"] = confusion;
        j["train_seconds"] = train_seconds;
        j["infer_ms_mean"] = infer_ms_mean;
        return j;
    }
};

inline EvalReport evaluate(const ModelArtifact& artifact, const Dataset& data,
                           double train_seconds = 0.0) {
    if (!artifact.runtime) throw InvalidArgument("artifact carries no runtime model");
    const auto& classes = artifact.runtime->class_space();
    std::map<int, std::size_t> index;
    for (std::size_t c = 0; c < classes.size(); ++c) index[classes[c]] = c;
    if (data.samples.empty()) throw InvalidArgument("evaluation dataset is empty");

    EvalReport report;
    report.train_seconds = train_seconds;
    report.confusion.assign(classes.size(), std::vector<std::size_t>(classes.size(), 0));
    std::size_t hits = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const int pred = predict_label(artifact, data.samples[i]);
        const auto ti = index.find(data.labels[i]);
        if (ti == index.end())
            throw InvalidArgument("evaluation label missing from the model class space");
        report.confusion[ti->second][index[pred]] += 1;
        if (pred == data.labels[i]) ++hits;
    }
    const auto t1 = std::chrono::steady_clock::now();
    report.infer_ms_mean = std::chrono::duration<double, std::milli>(t1 - t0).count() /
                           static_cast<double>(data.samples.size());
    report.accuracy = static_cast<double>(hits) / static_cast<double>(data.samples.size());

    double f1_sum = 0.0;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::size_t tp = report.confusion[c][c], row = 0, col = 0;
        for (std::size_t r = 0; r < classes.size(); ++r) {
            row += report.confusion[c][r];  // all true-c samples
            col += report.confusion[r][c];  // all predicted-c samples
        }
        const double precision = col == 0 ? 0.0 : static_cast<double>(tp) / col;
        const double recall = row == 0 ? 0.0 : static_cast<double>(tp) / row;
        f1_sum += (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall)
                                             : 0.0;
    }
    report.macro_f1 = f1_sum / static_cast<double>(classes.size());
    return report;
}

// ---------------------------------------------------------------------------
// hierarchical two-stage model: region gate, then the per-region track model

struct HierarchicalModel {
    ModelArtifact stage1;      // class 0 = LoS branch, class 1 = NLoS branch
    ModelArtifact stage2_los;
    ModelArtifact stage2_nlos;
};

struct RouteInfo {
    Region region = Region::LoS;
    std::vector<double> stage1_probs;
};

inline HierarchicalModel train_hierarchical(const Dataset& los, const Dataset& nlos,
                                            ModelKind stage1_kind, ModelKind stage2_los_kind,
                                            ModelKind stage2_nlos_kind, std::uint64_t seed,
                                            const ClassifierConfig& stage1_cfg = {},
                                            const ClassifierConfig& stage2_los_cfg = {},
                                            const ClassifierConfig& stage2_nlos_cfg = {}) {
    if (los.samples.empty()) throw MissingRegion("hierarchical training lacks LoS samples");
    if (nlos.samples.empty()) throw MissingRegion("hierarchical training lacks NLoS samples");

    // stage-1 labels come from which dataset a sample belongs to
    Dataset gate;
    for (const auto& s : los.samples) {
        gate.samples.push_back(s);
        gate.labels.push_back(0);
    }
    for (const auto& s : nlos.samples) {
        gate.samples.push_back(s);
        gate.labels.push_back(1);
    }
    gate.class_space = {0, 1};

    HierarchicalModel model;
    model.stage1 = train_classifier(stage1_kind, gate, stage1_cfg, seed_for(seed, "stage1"));
    model.stage2_los =
        train_classifier(stage2_los_kind, los, stage2_los_cfg, seed_for(seed, "stage2/los"));
    model.stage2_nlos =
        train_classifier(stage2_nlos_kind, nlos, stage2_nlos_cfg, seed_for(seed, "stage2/nlos"));
    return model;
}

inline int hierarchical_predict_forced(const HierarchicalModel& model, const AoaSample& sample,
                                       Region forced) {
    return predict_label(forced == Region::LoS ? model.stage2_los : model.stage2_nlos, sample);
}

inline int hierarchical_predict(const HierarchicalModel& model, const AoaSample& sample,
                                RouteInfo* info = nullptr) {
    const auto probs = predict_proba(model.stage1, sample);
    const Region region = probs[0] >= probs[1] ? Region::LoS : Region::NLoS;
    if (info) {
        info->region = region;
        info->stage1_probs = probs;
    }
    return hierarchical_predict_forced(model, sample, region);
}

inline std::string hierarchical_to_bytes(const HierarchicalModel& model) {
    nlohmann::ordered_json doc;
    doc["format"] = kModelFormatTag;
    doc["kind"] = "HIER";
    doc["stage1"] = artifact_doc(model.stage1);
    doc["stage2_los"] = artifact_doc(model.stage2_los);
    doc["stage2_nlos"] = artifact_doc(model.stage2_nlos);
    return doc.dump(2) + "\n";
}

inline HierarchicalModel load_hierarchical(const std::string& bytes) {
    const auto doc = detail::parse_artifact_bytes(bytes);
    if (!doc.is_object() || !doc.contains("format") || !doc["format"].is_string() ||
        doc["format"].get<std::string>() != kModelFormatTag)
        throw FormatError("hierarchical container has a missing or unsupported format tag");
    if (!doc.contains("kind") || !doc["kind"].is_string())
        throw FormatError("hierarchical container lacks a kind");
    if (doc["kind"].get<std::string>() != "HIER")
        throw KindMismatch("expected a HIER container, found " + doc["kind"].get<std::string>());
    for (const char* key : {"stage1", "stage2_los", "stage2_nlos"})
        if (!doc.contains(key))
            throw FormatError(std::string("hierarchical container lacks stage: ") + key);
    HierarchicalModel model;
    model.stage1 = artifact_from_doc(doc["stage1"]);
    model.stage2_los = artifact_from_doc(doc["stage2_los"]);
    model.stage2_nlos = artifact_from_doc(doc["stage2_nlos"]);
    return model;
}

// ---------------------------------------------------------------------------
// stacked ensemble training: out-of-fold base probabilities feed the meta model

inline ModelArtifact stacking_train(const std::vector<ModelKind>& base_kinds, const Dataset& data,
                                    std::size_t folds, std::uint64_t seed,
                                    std::vector<ClassifierConfig> configs = {}) {
    if (base_kinds.empty()) throw InvalidArgument("stacking needs at least one base model");
    if (configs.empty()) configs.resize(base_kinds.size());
    if (configs.size() != base_kinds.size())
        throw DimensionMismatch("one config per base model required");
    const auto xy = detail::to_xy(data);
    const std::size_t n = xy.x.rows;
    const std::size_t k = data.class_space.size();
    const auto fold_of = stratified_folds(data.labels, folds, seed_for(seed, "folds"));

    Matrix meta_x(n, base_kinds.size() * k);
    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < n; ++i)
            (fold_of[i] == f ? test_idx : train_idx).push_back(i);
        const Dataset fold_train = subset(data, train_idx);
        for (std::size_t b = 0; b < base_kinds.size(); ++b) {
            const auto base = train_classifier(
                base_kinds[b], fold_train, configs[b],
                seed_for(seed, "fold/" + std::to_string(f) + "/base/" + std::to_string(b)));
            for (std::size_t i : test_idx) {
                const auto p = base.runtime->predict_proba(xy.x.row(i), xy.x.cols);
                for (std::size_t c = 0; c < k; ++c) meta_x.at(i, b * k + c) = p[c];
            }
        }
    }

    auto stack = std::make_shared<StackModel>();
    stack->classes = data.class_space;
    stack->dim = xy.x.cols;
    std::vector<int> meta_classes(k);
    for (std::size_t c = 0; c < k; ++c) meta_classes[c] = static_cast<int>(c);
    stack->meta_ = LogisticRegression::fit(meta_x, xy.y, meta_classes, 1.0);
    for (std::size_t b = 0; b < base_kinds.size(); ++b)
        stack->bases_.push_back(train_classifier(base_kinds[b], data, configs[b],
                                                 seed_for(seed, "base/" + std::to_string(b))));

    nlohmann::ordered_json cfg;
    cfg["folds"] = folds;
    nlohmann::ordered_json kinds = nlohmann::ordered_json::array();
    for (ModelKind kind : base_kinds) kinds.push_back(model_kind_name(kind));
    cfg["base_kinds"] = std::move(kinds);
    nlohmann::ordered_json cfg_list = nlohmann::ordered_json::array();
    for (const auto& c : configs) cfg_list.push_back(c.to_json());
    cfg["base_configs"] = std::move(cfg_list);

    ModelArtifact artifact;
    artifact.kind = "STACK";
    artifact.config = std::move(cfg);
    artifact.seed = seed;
    artifact.data_fingerprint = dataset_fingerprint(data);
    artifact.runtime = std::move(stack);
    return artifact;
}

// ---------------------------------------------------------------------------
// cross-validation and random hyperparameter search

inline double cross_val_accuracy(ModelKind kind, const ClassifierConfig& cfg, const Dataset& data,
                                 std::size_t folds, std::uint64_t seed) {
    const auto fold_of = stratified_folds(data.labels, folds, seed_for(seed, "folds"));
    std::size_t correct = 0;
    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < data.samples.size(); ++i)
            (fold_of[i] == f ? test_idx : train_idx).push_back(i);
        const auto model = train_classifier(kind, subset(data, train_idx), cfg,
                                            seed_for(seed, "fold/" + std::to_string(f)));
        for (std::size_t i : test_idx)
            if (predict_label(model, data.samples[i]) == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.samples.size());
}

// Sampling ranges for the random search.  Collapsing a range to a single point
// (min == max) makes every draw deterministic.
struct HyperparamSpace {
    double lr_c_min = 1e-5, lr_c_max = 1e2;  // log-uniform

    int knn_k_min = 1, knn_k_max = 30;
    bool knn_try_distance_weights = true;  // false pins uniform votes

    int tree_estimators_min = 50, tree_estimators_max = 300;
    int tree_depth_min = 3, tree_depth_max = 30;
    int split_min = 2, split_max = 10;
    int leaf_min = 1, leaf_max = 10;
    std::vector<FeatureSubset> feature_subsets{FeatureSubset::Sqrt, FeatureSubset::Log2,
                                               FeatureSubset::All};

    double gbm_lr_min = 1e-3, gbm_lr_max = 0.3;  // log-uniform
    int gbm_depth_min = 3, gbm_depth_max = 10;
    double gbm_subsample_min = 0.5, gbm_subsample_max = 1.0;
};

inline ClassifierConfig sample_config(ModelKind kind, const HyperparamSpace& space, Rng& rng) {
    auto log_uniform = [&rng](double lo, double hi) {
        if (!(lo > 0.0) || hi < lo) throw InvalidArgument("bad log-uniform range");
        return lo == hi ? lo : std::exp(rng.uniform(std::log(lo), std::log(hi)));
    };
    auto int_uniform = [&rng](int lo, int hi) {
        if (hi < lo) throw InvalidArgument("bad integer range");
        return lo + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
    };
    auto subset_pick = [&rng, &space]() {
        if (space.feature_subsets.empty()) throw InvalidArgument("empty feature subset choices");
        return space.feature_subsets[rng.uniform_index(space.feature_subsets.size())];
    };

    ClassifierConfig cfg;
    switch (kind) {
        case ModelKind::LR:
            cfg.lr_c = log_uniform(space.lr_c_min, space.lr_c_max);
            break;
        case ModelKind::KNN:
            cfg.knn_k = int_uniform(space.knn_k_min, space.knn_k_max);
            cfg.knn_distance_weights =
                space.knn_try_distance_weights ? rng.uniform() < 0.5 : false;
            break;
        case ModelKind::DT:
            cfg.max_depth = int_uniform(space.tree_depth_min, space.tree_depth_max);
            cfg.max_features = subset_pick();
            cfg.min_samples_split = int_uniform(space.split_min, space.split_max);
            cfg.min_samples_leaf = int_uniform(space.leaf_min, space.leaf_max);
            break;
        case ModelKind::RF:
            cfg.n_estimators = int_uniform(space.tree_estimators_min, space.tree_estimators_max);
            cfg.max_depth = int_uniform(space.tree_depth_min, space.tree_depth_max);
            cfg.max_features = subset_pick();
            cfg.min_samples_split = int_uniform(space.split_min, space.split_max);
            cfg.min_samples_leaf = int_uniform(space.leaf_min, space.leaf_max);
            break;
        case ModelKind::GBM:
            cfg.n_estimators = int_uniform(space.tree_estimators_min, space.tree_estimators_max);
            cfg.gbm_learning_rate = log_uniform(space.gbm_lr_min, space.gbm_lr_max);
            cfg.max_depth = int_uniform(space.gbm_depth_min, space.gbm_depth_max);
            cfg.gbm_subsample = rng.uniform(space.gbm_subsample_min, space.gbm_subsample_max);
            cfg.max_features = subset_pick();
            break;
        case ModelKind::Stack:
            throw InvalidArgument("stacked ensembles are not searched directly");
    }
    return cfg;
}

struct TrialRecord {
    ClassifierConfig config;
    double score = 0.0;
};

struct SearchResult {
    std::vector<TrialRecord> log;
    std::size_t best_index = 0;
    ClassifierConfig best_config;
    double best_score = -1.0;
};

inline SearchResult random_search(ModelKind kind, const HyperparamSpace& space,
                                  const Dataset& data, std::size_t trials, std::size_t folds,
                                  std::uint64_t seed) {
    if (trials < 1) throw InvalidArgument("search needs at least one trial");
    SearchResult result;
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng(seed_for(seed, "trial/" + std::to_string(t)));
        TrialRecord trial;
        trial.config = sample_config(kind, space, rng);
        // the same outer seed keeps the folds shared across trials
        trial.score = cross_val_accuracy(kind, trial.config, data, folds, seed);
        if (trial.score > result.best_score) {
            result.best_score = trial.score;
            result.best_index = t;
            result.best_config = trial.config;
        }
        result.log.push_back(std::move(trial));
    }
    return result;
}

// ---------------------------------------------------------------------------
// buffer-vs-cumulative retraining over a batched stream of labeled windows

enum class RetrainStrategy { Buffer, Cumulative };

struct RetrainCurve {
    std::vector<std::size_t> train_sizes;     // per batch index
    std::vector<double> mean_accuracy;        // over trials, on the fixed holdout
    std::vector<double> stddev_accuracy;      // population standard deviation
};

inline RetrainCurve retraining_experiment(const Dataset& data, ModelKind kind,
                                          RetrainStrategy strategy, std::size_t batches,
                                          std::size_t trials, std::uint64_t seed,
                                          const ClassifierConfig& cfg = {}) {
    if (batches < 1) throw InvalidArgument("experiment needs at least one batch");
    if (trials < 1) throw InvalidArgument("experiment needs at least one trial");
    const auto split = stratified_split(data.labels, 0.2, seed_for(seed, "holdout"));
    if (split.holdout.empty()) throw TooFewSamples("holdout split came out empty");

    // per-class pools; every batch takes an equal per-class share, leftovers
    // are dropped so batch sizes stay constant across trials
    std::map<int, std::vector<std::size_t>> pools;
    for (std::size_t i : split.train) pools[data.labels[i]].push_back(i);
    std::size_t batch_size = 0;
    for (const auto& [label, pool] : pools) {
        const std::size_t per = pool.size() / batches;
        if (per == 0)
            throw TooFewSamples("class " + std::to_string(label) +
                                " cannot fill every batch with at least one sample");
        batch_size += per;
    }

    RetrainCurve curve;
    curve.train_sizes.resize(batches);
    for (std::size_t b = 0; b < batches; ++b)
        curve.train_sizes[b] =
            strategy == RetrainStrategy::Cumulative ? batch_size * (b + 1) : batch_size;

    std::vector<std::vector<double>> acc(batches);
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng(seed_for(seed, "trial/" + std::to_string(t)));
        std::vector<std::vector<std::size_t>> batch_idx(batches);
        for (const auto& [label, pool] : pools) {
            auto shuffled = pool;
            rng.shuffle(shuffled);
            const std::size_t per = pool.size() / batches;
            for (std::size_t b = 0; b < batches; ++b)
                for (std::size_t j = 0; j < per; ++j)
                    batch_idx[b].push_back(shuffled[b * per + j]);
        }
        std::vector<std::size_t> cumulative;
        for (std::size_t b = 0; b < batches; ++b) {
            std::vector<std::size_t> train_idx;
            if (strategy == RetrainStrategy::Buffer) {
                train_idx = batch_idx[b];
            } else {
                cumulative.insert(cumulative.end(), batch_idx[b].begin(), batch_idx[b].end());
                train_idx = cumulative;
            }
            std::sort(train_idx.begin(), train_idx.end());
            const auto model = train_classifier(
                kind, subset(data, train_idx), cfg,
                seed_for(seed, "trial/" + std::to_string(t) + "/batch/" + std::to_string(b)));
            std::size_t hits = 0;
            for (std::size_t i : split.holdout)
                if (predict_label(model, data.samples[i]) == data.labels[i]) ++hits;
            acc[b].push_back(static_cast<double>(hits) /
                             static_cast<double>(split.holdout.size()));
        }
    }

    curve.mean_accuracy.resize(batches);
    curve.stddev_accuracy.resize(batches);
    for (std::size_t b = 0; b < batches; ++b) {
        double mean = 0.0;
        for (double a : acc[b]) mean += a;
        mean /= static_cast<double>(trials);
        double var = 0.0;
        for (double a : acc[b]) var += (a - mean) * (a - mean);
        var /= static_cast<double>(trials);
        curve.mean_accuracy[b] = mean;
        curve.stddev_accuracy[b] = std::sqrt(std::max(var, 0.0));
    }
    return curve;
}

}  // namespace aoalab
