// Single-pass incremental learners and the confidence-gated prequential
// protocol.
//
// Six learners share one interface: Gaussian naive Bayes, an incremental
// decision tree driven by a Hoeffding-style split bound, its drift-adaptive
// variant, two bagged tree ensembles (adaptive forest, random patches), and an
// aggregated Mondrian forest.  Everything is strictly one sample at a time;
// prediction never mutates learned state, and a fixed seed reproduces a stream
// run bit for bit.
//
// Conventions shared across the file:
//   * class spaces are sorted distinct labels, fixed at construction;
//   * probability vectors are indexed like the class space and sum to one;
//   * an untrained model predicts the uniform distribution;
//   * the feature dimension is pinned by the first sample a model sees.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aoalab/errors.hpp"
#include "aoalab/features.hpp"
#include "aoalab/rng.hpp"

namespace aoalab {

// --------------------------------------------------------------------------
// configuration

struct StreamLearnerConfig {
    // Incremental tree family.
    std::size_t grace_period = 200;  // observations between split attempts
    double split_delta = 1e-7;       // confidence for the split bound
    double tie_threshold = 0.05;     // split anyway once the bound drops below
    std::size_t split_candidates = 10;  // thresholds probed per feature

    // Tree ensembles.
    std::size_t ensemble_size = 10;
    double adwin_delta = 0.002;   // drift detector confidence
    double warning_delta = 0.01;  // early-warning detector (adaptive forest)
    double poisson_lambda = 6.0;  // online bagging weight distribution
    double patch_fraction = 0.6;  // feature share per random-patch member

    // Aggregated Mondrian forest.
    double amf_step = 1.0;       // exponential-weights learning step
    double amf_dirichlet = 0.5;  // Jeffreys prior pseudo-count per class
    bool amf_aggregation = true;

    // Gaussian naive Bayes.
    double variance_floor = 1e-9;
};

struct StreamConfig {
    double warmup_fraction = 0.10;  // learned unconditionally, then re-scored
    double tau = 0.5;               // min confidence for an online update
    std::uint64_t seed = 0;
};

// --------------------------------------------------------------------------
// logs and reports

struct StreamRecord {
    std::size_t t = 0;  // contiguous online index, starting at zero
    int true_label = 0;
    int predicted_label = 0;
    double confidence = 0.0;  // top class probability at prediction time
    bool accepted = false;    // confidence >= tau, so the model was updated
    bool correct = false;
    double infer_ms = 0.0;
    double update_ms = 0.0;  // zero when the sample was rejected
};

using StreamLog = std::vector<StreamRecord>;

struct StreamReport {
    double warmup_accuracy = 0.0;  // re-prediction of the warmup slice
    double online_accuracy = 0.0;  // prequential: correct / online count
    double acceptance_rate = 0.0;
    double forgetting_rate = 0.0;
    double infer_ms_mean = 0.0;
    double infer_ms_total = 0.0;
    double update_ms_mean = 0.0;
    double update_ms_total = 0.0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["warmup_accuracy"] = warmup_accuracy;
        j["online_accuracy"] = online_accuracy;
        j["acceptance_rate"] = acceptance_rate;
        j["forgetting_rate"] = forgetting_rate;
        j["infer_ms_mean"] = infer_ms_mean;
        j["infer_ms_total"] = infer_ms_total;
        j["update_ms_mean"] = update_ms_mean;
        j["update_ms_total"] = update_ms_total;
        return j;
    }
};

inline std::string stream_log_to_csv(const StreamLog& log) {
    std::string out = "t,true,pred,conf,accepted,correct,infer_ms,update_ms\n";
    char buf[192];
    for (const auto& rec : log) {
        std::snprintf(buf, sizeof(buf), "%zu,%d,%d,%.17g,%d,%d,%.6f,%.6f\n", rec.t,
                      rec.true_label, rec.predicted_label, rec.confidence, rec.accepted ? 1 : 0,
                      rec.correct ? 1 : 0, rec.infer_ms, rec.update_ms);
        out += buf;
    }
    return out;
}

// --------------------------------------------------------------------------
// split-decision bound

// eps = sqrt(R^2 ln(1/delta) / 2n): with probability 1-delta the true mean of
// a range-R variable lies within eps of the n-sample average.
inline double hoeffding_bound(double range_r, double delta, std::size_t n) {
    if (!(delta > 0.0) || !(delta < 1.0))
        throw InvalidDelta("confidence delta must lie strictly inside (0, 1)");
    if (n == 0) throw InvalidArgument("sample count must be positive");
    return std::sqrt(range_r * range_r * std::log(1.0 / delta) /
                     (2.0 * static_cast<double>(n)));
}

namespace detail {

// Weighted-count variant used internally where bagging makes counts fractional.
inline double hoeffding_bound_w(double range_r, double delta, double n) {
    const double nn = std::max(n, 1.0);
    return std::sqrt(range_r * range_r * std::log(1.0 / delta) / (2.0 * nn));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Weighted Welford accumulator; variance is the population variance.
struct RunningGaussian {
    double n = 0.0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x, double w = 1.0) {
        n += w;
        const double delta = x - mean;
        mean += w * delta / n;
        m2 += w * delta * (x - mean);
    }
    double variance() const { return n > 0.0 ? std::max(m2 / n, 0.0) : 0.0; }
};

inline std::vector<int> normalize_class_space(std::vector<int> classes) {
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.empty()) throw InvalidArgument("class space must not be empty");
    return classes;
}

inline std::size_t class_index(const std::vector<int>& classes, int label) {
    const auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || *it != label)
        throw LabelOutOfRange("label " + std::to_string(label) + " is not in the class space");
    return static_cast<std::size_t>(it - classes.begin());
}

inline std::size_t argmax_index(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// Normalize a nonnegative vector into a distribution; all-zero becomes uniform.
inline std::vector<double> to_distribution(std::vector<double> v) {
    double total = 0.0;
    for (const double x : v) total += x;
    if (total <= 0.0) {
        std::fill(v.begin(), v.end(), 1.0 / static_cast<double>(v.size()));
        return v;
    }
    for (double& x : v) x /= total;
    return v;
}

// k distinct indices out of d, ascending.
inline std::vector<std::size_t> draw_sorted_subset(Rng& rng, std::size_t d, std::size_t k) {
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t kk = std::min(k, d);
    for (std::size_t i = 0; i < kk; ++i) {
        const std::size_t j = i + rng.uniform_index(d - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(kk);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace detail

// --------------------------------------------------------------------------
// adaptive sliding window (exponential-histogram variant)
//
// Keeps a compressed window of recent values in [0, 1]; add() returns true
// when the head and tail of the window have statistically distinct means, in
// which case the stale tail has been dropped.

class Adwin {
  public:
    explicit Adwin(double delta = 0.002) : delta_(delta) {}

    bool add(double x) {
        insert(x);
        return shrink();
    }

    double mean() const { return count_ > 0 ? sum_ / static_cast<double>(count_) : 0.0; }
    std::size_t width() const { return count_; }

  private:
    struct Bucket {
        double sum = 0.0;
        double m2 = 0.0;  // within-bucket sum of squared deviations
        std::size_t count = 0;
    };

    static constexpr std::size_t kMaxPerRow = 5;
    static constexpr std::size_t kMinCut = 5;  // smallest sub-window worth testing

    double delta_;
    // rows_[r] holds buckets of 2^r items, newest at the front; older data
    // lives in higher rows.
    std::vector<std::deque<Bucket>> rows_;
    double sum_ = 0.0;
    std::size_t count_ = 0;

    static Bucket merge(const Bucket& newer, const Bucket& older) {
        Bucket out;
        out.count = newer.count + older.count;
        out.sum = newer.sum + older.sum;
        const double ma = newer.sum / static_cast<double>(newer.count);
        const double mb = older.sum / static_cast<double>(older.count);
        const double cross = (ma - mb) * (ma - mb) * static_cast<double>(newer.count) *
                             static_cast<double>(older.count) / static_cast<double>(out.count);
        out.m2 = newer.m2 + older.m2 + cross;
        return out;
    }

    void insert(double x) {
        if (rows_.empty()) rows_.emplace_back();
        rows_[0].push_front(Bucket{x, 0.0, 1});
        sum_ += x;
        count_ += 1;
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            if (rows_[r].size() <= kMaxPerRow) break;
            Bucket older = rows_[r].back();
            rows_[r].pop_back();
            Bucket newer = rows_[r].back();
            rows_[r].pop_back();
            if (r + 1 == rows_.size()) rows_.emplace_back();
            rows_[r + 1].push_front(merge(newer, older));
        }
    }

    double window_variance() const {
        double n = 0.0, s = 0.0, m2 = 0.0;
        for (const auto& row : rows_) {
            for (const auto& b : row) {
                if (b.count == 0) continue;
                if (n == 0.0) {
                    n = static_cast<double>(b.count);
                    s = b.sum;
                    m2 = b.m2;
                    continue;
                }
                const double nb = static_cast<double>(b.count);
                const double diff = b.sum / nb - s / n;
                m2 += b.m2 + diff * diff * n * nb / (n + nb);
                s += b.sum;
                n += nb;
            }
        }
        return n > 0.0 ? std::max(m2 / n, 0.0) : 0.0;
    }

    std::size_t bucket_count() const {
        std::size_t b = 0;
        for (const auto& row : rows_) b += row.size();
        return b;
    }

    // Oldest-first bucket visit; returns true when a significant cut exists.
    bool find_cut() const {
        const double var_w = window_variance();
        // Union bound over the cut points actually probed: one per bucket
        // boundary, so O(log n) of them rather than n.
        const double dprime = delta_ / static_cast<double>(std::max<std::size_t>(bucket_count(), 1));
        const double lg = std::log(2.0 / dprime);
        double n0 = 0.0, s0 = 0.0;
        for (auto row = rows_.rbegin(); row != rows_.rend(); ++row) {
            for (auto b = row->rbegin(); b != row->rend(); ++b) {
                n0 += static_cast<double>(b->count);
                s0 += b->sum;
                const double n1 = static_cast<double>(count_) - n0;
                const double s1 = sum_ - s0;
                if (n0 < kMinCut || n1 < kMinCut) continue;
                const double m = 1.0 / (1.0 / n0 + 1.0 / n1);
                const double eps =
                    std::sqrt(2.0 / m * var_w * lg) + 2.0 / (3.0 * m) * lg;
                if (std::abs(s0 / n0 - s1 / n1) > eps) return true;
            }
        }
        return false;
    }

    void drop_oldest() {
        for (auto row = rows_.rbegin(); row != rows_.rend(); ++row) {
            if (row->empty()) continue;
            const Bucket b = row->back();
            row->pop_back();
            sum_ -= b.sum;
            count_ -= b.count;
            break;
        }
        while (!rows_.empty() && rows_.back().empty()) rows_.pop_back();
    }

    bool shrink() {
        bool changed = false;
        while (count_ >= 2 * kMinCut && find_cut()) {
            drop_oldest();
            changed = true;
        }
        return changed;
    }
};

// --------------------------------------------------------------------------
// learner interface

class StreamModel {
  public:
    virtual ~StreamModel() = default;
    virtual const char* kind_name() const = 0;
    virtual const std::vector<int>& class_space() const = 0;
    virtual void learn_one(const double* x, std::size_t dim, int label) = 0;
    virtual std::vector<double> predict_one(const double* x, std::size_t dim) = 0;
};

enum class StreamKind { GNB, HT, HAT, ARF, SRP, AMF };

inline const char* stream_kind_name(StreamKind kind) {
    switch (kind) {
        case StreamKind::GNB: return "GNB";
        case StreamKind::HT: return "HT";
        case StreamKind::HAT: return "HAT";
        case StreamKind::ARF: return "ARF";
        case StreamKind::SRP: return "SRP";
        case StreamKind::AMF: return "AMF";
    }
    throw InvalidArgument("unhandled stream kind");
}

inline StreamKind stream_kind_from_name(const std::string& name) {
    if (name == "GNB") return StreamKind::GNB;
    if (name == "HT") return StreamKind::HT;
    if (name == "HAT") return StreamKind::HAT;
    if (name == "ARF") return StreamKind::ARF;
    if (name == "SRP") return StreamKind::SRP;
    if (name == "AMF") return StreamKind::AMF;
    throw FormatError("unknown stream learner kind: " + name);
}

// --------------------------------------------------------------------------
// Gaussian naive Bayes

class GaussianNaiveBayes : public StreamModel {
  public:
    GaussianNaiveBayes(std::vector<int> classes, const StreamLearnerConfig& cfg)
        : classes_(detail::normalize_class_space(std::move(classes))), cfg_(cfg) {}

    const char* kind_name() const override { return "GNB"; }
    const std::vector<int>& class_space() const override { return classes_; }

    void learn_one(const double* x, std::size_t dim, int label) override {
        pin(dim);
        const std::size_t y = detail::class_index(classes_, label);
        counts_[y] += 1.0;
        for (std::size_t j = 0; j < dim_; ++j) stats_[y * dim_ + j].add(x[j]);
    }

    std::vector<double> predict_one(const double* x, std::size_t dim) override {
        pin(dim);
        const std::size_t k = classes_.size();
        const double total = std::accumulate(counts_.begin(), counts_.end(), 0.0);
        if (total <= 0.0) return std::vector<double>(k, 1.0 / static_cast<double>(k));

        std::vector<double> score(k, -std::numeric_limits<double>::infinity());
        for (std::size_t c = 0; c < k; ++c) {
            if (counts_[c] <= 0.0) continue;
            double s = std::log(counts_[c] / total);
            for (std::size_t j = 0; j < dim_; ++j) {
                const auto& g = stats_[c * dim_ + j];
                const double var = std::max(g.variance(), cfg_.variance_floor);
                const double diff = x[j] - g.mean;
                s += -0.5 * (std::log(2.0 * M_PI * var) + diff * diff / var);
            }
            score[c] = s;
        }
        const double peak = *std::max_element(score.begin(), score.end());
        std::vector<double> probs(k, 0.0);
        double norm = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (std::isinf(score[c])) continue;
            probs[c] = std::exp(score[c] - peak);
            norm += probs[c];
        }
        for (double& p : probs) p /= norm;
        return probs;
    }

    double class_count(int label) const {
        return counts_[detail::class_index(classes_, label)];
    }
    double mean(int label, std::size_t feature) const {
        return stat(label, feature).mean;
    }
    // Operative variance: the raw estimate clamped from below by the floor.
    double variance(int label, std::size_t feature) const {
        return std::max(stat(label, feature).variance(), cfg_.variance_floor);
    }

  private:
    std::vector<int> classes_;
    StreamLearnerConfig cfg_;
    std::size_t dim_ = 0;
    std::vector<double> counts_;
    std::vector<detail::RunningGaussian> stats_;  // class-major, dim entries each

    void pin(std::size_t dim) {
        if (dim == 0) throw InvalidArgument("feature dimension must be positive");
        if (dim_ == 0) {
            dim_ = dim;
            counts_.assign(classes_.size(), 0.0);
            stats_.assign(classes_.size() * dim_, detail::RunningGaussian{});
        } else if (dim != dim_) {
            throw DimensionMismatch("expected " + std::to_string(dim_) + " features, got " +
                                    std::to_string(dim));
        }
    }

    const detail::RunningGaussian& stat(int label, std::size_t feature) const {
        const std::size_t y = detail::class_index(classes_, label);
        if (dim_ == 0 || feature >= dim_)
            throw InvalidArgument("feature index out of range");
        return stats_[y * dim_ + feature];
    }
};

// --------------------------------------------------------------------------
// incremental decision tree core
//
// Leaves accumulate per-(feature, class) Gaussian summaries.  Every
// grace_period observations a leaf ranks features by their best Gini gain over
// split_candidates thresholds spread across the class envelopes; it splits
// when the gap between the two best features exceeds the Hoeffding bound, or
// when the bound itself has shrunk below the tie threshold (two features are
// then interchangeable — with a single contender the tie rule stays off).
// In adaptive mode every node also watches the tree's prequential error with
// an ADWIN detector; a drifting internal node grows a background subtree that
// replaces it once measurably better, and a drifting leaf restarts its
// statistics.

namespace detail {

// Feed an error indicator to a detector and report drift only when the
// estimate moved the wrong way.  A raw window cut fires on any distribution
// change, including the error *dropping* while a model learns; treating that
// as drift would make a learner churn away its own progress.
inline bool error_worsened(Adwin& detector, double err) {
    const double before = detector.mean();
    const bool cut = detector.add(err);
    return cut && detector.mean() > before;
}

class VfdtCore;

struct VfdtNode {
    bool leaf = true;
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> counts;  // observed class weight (drives split logic)
    std::vector<double> prior;   // mass carried over from the parent split (prediction only)
    std::vector<RunningGaussian> obs;  // active_feature x class, leaves only
    double weight_seen = 0.0;
    double weight_at_attempt = 0.0;
    // adaptive extras
    Adwin adwin{0.002};
    std::unique_ptr<VfdtCore> alt;  // background subtree candidate
    Adwin alt_adwin{0.002};
};

class VfdtCore {
  public:
    std::vector<int> classes;
    std::vector<std::size_t> active_features;  // split candidates; empty = all, filled on pin
    StreamLearnerConfig cfg;
    bool adaptive = false;
    std::size_t dim = 0;
    std::vector<VfdtNode> nodes;

    VfdtCore(std::vector<int> cls, const StreamLearnerConfig& c, bool adapt)
        : classes(std::move(cls)), cfg(c), adaptive(adapt) {
        nodes.push_back(make_leaf());
    }

    void learn(const double* x, std::size_t d, int label, double w) {
        pin(d);
        const std::size_t y = class_index(classes, label);

        std::vector<std::size_t> path;
        std::size_t v = 0;
        while (true) {
            path.push_back(v);
            if (nodes[v].leaf) break;
            v = route(v, x);
        }

        if (adaptive && !monitor_path(path, x, d, label, y, w)) return;

        leaf_update(v, x, y, w);
        maybe_split(v);
    }

    std::vector<double> predict(const double* x, std::size_t d) {
        pin(d);
        std::size_t v = 0;
        while (!nodes[v].leaf) v = route(v, x);
        return to_distribution(node_mass(nodes[v]));
    }

  private:
    VfdtNode make_leaf() const {
        VfdtNode node;
        node.counts.assign(classes.size(), 0.0);
        node.prior.assign(classes.size(), 0.0);
        node.adwin = Adwin(cfg.adwin_delta);
        node.alt_adwin = Adwin(cfg.adwin_delta);
        return node;
    }

    void pin(std::size_t d) {
        if (d == 0) throw InvalidArgument("feature dimension must be positive");
        if (dim == 0) {
            dim = d;
            if (active_features.empty()) {
                active_features.resize(d);
                std::iota(active_features.begin(), active_features.end(), std::size_t{0});
            }
        } else if (d != dim) {
            throw DimensionMismatch("expected " + std::to_string(dim) + " features, got " +
                                    std::to_string(d));
        }
    }

    std::size_t route(std::size_t v, const double* x) const {
        const auto& nd = nodes[v];
        return static_cast<std::size_t>(x[nd.feature] <= nd.threshold ? nd.left : nd.right);
    }

    static std::vector<double> node_mass(const VfdtNode& nd) {
        std::vector<double> mass(nd.counts.size());
        for (std::size_t c = 0; c < mass.size(); ++c) mass[c] = nd.prior[c] + nd.counts[c];
        return mass;
    }

    void leaf_update(std::size_t v, const double* x, std::size_t y, double w) {
        auto& nd = nodes[v];
        nd.weight_seen += w;
        nd.counts[y] += w;
        if (nd.obs.empty())
            nd.obs.assign(active_features.size() * classes.size(), RunningGaussian{});
        for (std::size_t i = 0; i < active_features.size(); ++i)
            nd.obs[i * classes.size() + y].add(x[active_features[i]], w);
    }

    static double gini(const std::vector<double>& dist, double total) {
        if (total <= 0.0) return 0.0;
        double sum_sq = 0.0;
        for (const double c : dist) sum_sq += (c / total) * (c / total);
        return 1.0 - sum_sq;
    }

    struct SplitChoice {
        double gain = 0.0;
        std::size_t feature = 0;  // real feature index
        double threshold = 0.0;
        std::vector<double> left_mass, right_mass;
    };

    void maybe_split(std::size_t v) {
        auto& nd = nodes[v];
        if (!nd.leaf) return;
        if (nd.weight_seen - nd.weight_at_attempt < static_cast<double>(cfg.grace_period))
            return;
        nd.weight_at_attempt = nd.weight_seen;

        const std::size_t k = classes.size();
        std::size_t present = 0;
        for (const double c : nd.counts) present += c > 0.0 ? 1 : 0;
        if (present < 2 || nd.obs.empty()) return;

        const double parent_total = std::accumulate(nd.counts.begin(), nd.counts.end(), 0.0);
        const double parent_gini = gini(nd.counts, parent_total);

        SplitChoice best;
        double best_gain = 0.0, second_gain = 0.0;
        bool have_best = false;
        for (std::size_t i = 0; i < active_features.size(); ++i) {
            // Envelope of the per-class Gaussians decides where to probe.
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (std::size_t c = 0; c < k; ++c) {
                const auto& g = nd.obs[i * k + c];
                if (g.n <= 0.0) continue;
                const double s = std::sqrt(g.variance());
                lo = std::min(lo, g.mean - 3.0 * s);
                hi = std::max(hi, g.mean + 3.0 * s);
            }
            if (!(lo < hi)) continue;

            SplitChoice feat;
            bool have_feat = false;
            for (std::size_t ci = 1; ci <= cfg.split_candidates; ++ci) {
                const double t =
                    lo + (hi - lo) * static_cast<double>(ci) /
                             static_cast<double>(cfg.split_candidates + 1);
                std::vector<double> left(k, 0.0), right(k, 0.0);
                double left_total = 0.0, right_total = 0.0;
                for (std::size_t c = 0; c < k; ++c) {
                    const auto& g = nd.obs[i * k + c];
                    if (g.n <= 0.0) continue;
                    const double s = std::sqrt(g.variance());
                    double below;
                    if (s < 1e-12)
                        below = g.mean <= t ? g.n : 0.0;
                    else
                        below = g.n * normal_cdf((t - g.mean) / s);
                    left[c] = below;
                    right[c] = g.n - below;
                    left_total += left[c];
                    right_total += right[c];
                }
                const double total = left_total + right_total;
                if (total <= 0.0) continue;
                const double child_gini = (left_total * gini(left, left_total) +
                                           right_total * gini(right, right_total)) /
                                          total;
                const double gain = parent_gini - child_gini;
                if (!have_feat || gain > feat.gain) {
                    feat = SplitChoice{gain, active_features[i], t, std::move(left),
                                       std::move(right)};
                    have_feat = true;
                }
            }
            if (!have_feat) continue;
            if (!have_best || feat.gain > best_gain) {
                second_gain = have_best ? best_gain : 0.0;
                best_gain = feat.gain;
                best = std::move(feat);
                have_best = true;
            } else if (feat.gain > second_gain) {
                second_gain = feat.gain;
            }
        }
        if (!have_best || best_gain <= 1e-12) return;

        const double eps = hoeffding_bound_w(1.0, cfg.split_delta, nd.weight_seen);
        const bool clear_winner = best_gain - second_gain > eps;
        const bool tie = second_gain > 1e-12 && eps < cfg.tie_threshold;
        if (!clear_winner && !tie) return;

        VfdtNode left = make_leaf();
        VfdtNode right = make_leaf();
        left.prior = best.left_mass;
        right.prior = best.right_mass;
        const int li = static_cast<int>(nodes.size());
        nodes.push_back(std::move(left));
        const int ri = static_cast<int>(nodes.size());
        nodes.push_back(std::move(right));
        auto& parent = nodes[v];  // re-borrow: pushes may have reallocated
        parent.leaf = false;
        parent.feature = static_cast<int>(best.feature);
        parent.threshold = best.threshold;
        parent.left = li;
        parent.right = ri;
        parent.obs.clear();
        parent.obs.shrink_to_fit();
    }

    // ---- adaptive machinery ----

    std::size_t leaf_majority(std::size_t v) const {
        const auto mass = node_mass(nodes[v]);
        return argmax_index(mass);
    }

    void reset_leaf(std::size_t v) {
        auto& nd = nodes[v];
        std::fill(nd.counts.begin(), nd.counts.end(), 0.0);
        std::fill(nd.prior.begin(), nd.prior.end(), 0.0);
        nd.obs.clear();
        nd.weight_seen = 0.0;
        nd.weight_at_attempt = 0.0;
        nd.adwin = Adwin(cfg.adwin_delta);
    }

    // Install the background tree in place of the subtree rooted at `at`.
    void splice(std::size_t at, std::unique_ptr<VfdtCore> alt) {
        const int base = static_cast<int>(nodes.size());
        for (auto& an : alt->nodes) {
            if (an.left != -1) an.left += base;
            if (an.right != -1) an.right += base;
            nodes.push_back(std::move(an));
        }
        nodes[at] = std::move(nodes[static_cast<std::size_t>(base)]);
        // The vacated slot stays behind as an unreachable stub; at desk scale
        // the waste is irrelevant and index stability is worth keeping.
        nodes[static_cast<std::size_t>(base)] = make_leaf();
    }

    // Returns false when the sample was consumed by a promoted background tree.
    bool monitor_path(const std::vector<std::size_t>& path, const double* x, std::size_t d,
                      int label, std::size_t y, double w) {
        // Prequential error of the tree on this sample, charged to every node
        // it traverses.
        const double err = leaf_majority(path.back()) != y ? 1.0 : 0.0;
        std::size_t swap_at = std::numeric_limits<std::size_t>::max();
        for (const std::size_t idx : path) {
            auto& nd = nodes[idx];
            const bool drift = error_worsened(nd.adwin, err);
            if (nd.leaf) {
                if (drift) reset_leaf(idx);
                continue;
            }
            if (drift && !nd.alt) {
                nd.alt = std::make_unique<VfdtCore>(classes, cfg, adaptive);
                nd.alt->active_features = active_features;
                nd.alt_adwin = Adwin(cfg.adwin_delta);
            }
            if (!nd.alt) continue;
            const auto alt_probs = nd.alt->predict(x, d);
            nd.alt_adwin.add(argmax_index(alt_probs) != y ? 1.0 : 0.0);
            nd.alt->learn(x, d, label, w);

            const double wm = static_cast<double>(nd.adwin.width());
            const double wa = static_cast<double>(nd.alt_adwin.width());
            if (wm < static_cast<double>(cfg.grace_period) ||
                wa < static_cast<double>(cfg.grace_period))
                continue;
            const double margin = hoeffding_bound_w(1.0, 0.05, std::min(wm, wa));
            if (nd.alt_adwin.mean() + margin < nd.adwin.mean()) {
                swap_at = idx;
                break;
            }
            if (nd.alt_adwin.mean() - margin > nd.adwin.mean()) nd.alt.reset();
        }
        if (swap_at != std::numeric_limits<std::size_t>::max()) {
            auto alt = std::move(nodes[swap_at].alt);
            splice(swap_at, std::move(alt));
            return false;  // the background tree already learned this sample
        }
        return true;
    }
};

}  // namespace detail

class HoeffdingTreeModel : public StreamModel {
  public:
    HoeffdingTreeModel(std::vector<int> classes, const StreamLearnerConfig& cfg)
        : core_(detail::normalize_class_space(std::move(classes)), cfg, false) {}

    const char* kind_name() const override { return "HT"; }
    const std::vector<int>& class_space() const override { return core_.classes; }
    void learn_one(const double* x, std::size_t dim, int label) override {
        core_.learn(x, dim, label, 1.0);
    }
    std::vector<double> predict_one(const double* x, std::size_t dim) override {
        return core_.predict(x, dim);
    }
    const detail::VfdtCore& core() const { return core_; }

  private:
    detail::VfdtCore core_;
};

class HoeffdingAdaptiveTreeModel : public StreamModel {
  public:
    HoeffdingAdaptiveTreeModel(std::vector<int> classes, const StreamLearnerConfig& cfg)
        : core_(detail::normalize_class_space(std::move(classes)), cfg, true) {}

    const char* kind_name() const override { return "HAT"; }
    const std::vector<int>& class_space() const override { return core_.classes; }
    void learn_one(const double* x, std::size_t dim, int label) override {
        core_.learn(x, dim, label, 1.0);
    }
    std::vector<double> predict_one(const double* x, std::size_t dim) override {
        return core_.predict(x, dim);
    }
    const detail::VfdtCore& core() const { return core_; }

  private:
    detail::VfdtCore core_;
};

// --------------------------------------------------------------------------
// adaptive random forest
//
// Members are incremental trees on fixed sqrt-sized feature subspaces, updated
// with Poisson(lambda) bagging weights.  Each member runs a warning detector
// (starts a background tree) and a drift detector (promotes the background or
// restarts).  Both are fed the member's own prequential error.

class AdaptiveRandomForest : public StreamModel {
  public:
    struct Member {
        detail::VfdtCore tree;
        Rng rng;
        Adwin warn;
        Adwin drift;
        std::unique_ptr<detail::VfdtCore> background;
    };

    AdaptiveRandomForest(std::vector<int> classes, const StreamLearnerConfig& cfg,
                         std::uint64_t seed)
        : classes_(detail::normalize_class_space(std::move(classes))), cfg_(cfg) {
        for (std::size_t m = 0; m < cfg_.ensemble_size; ++m)
            members_.push_back(Member{detail::VfdtCore(classes_, cfg_, false),
                                      Rng(seed_for(seed, "member/" + std::to_string(m))),
                                      Adwin(cfg_.warning_delta), Adwin(cfg_.adwin_delta),
                                      nullptr});
    }

    const char* kind_name() const override { return "ARF"; }
    const std::vector<int>& class_space() const override { return classes_; }

    void learn_one(const double* x, std::size_t dim, int label) override {
        ensure_dim(dim);
        const std::size_t y = detail::class_index(classes_, label);
        for (auto& member : members_) {
            const auto probs = member.tree.predict(x, dim);
            const double err = detail::argmax_index(probs) != y ? 1.0 : 0.0;
            if (detail::error_worsened(member.warn, err) && !member.background)
                member.background = fresh_tree(member.rng);
            const bool drifted = detail::error_worsened(member.drift, err);

            const auto k = member.rng.poisson(cfg_.poisson_lambda);
            if (k > 0) {
                const double w = static_cast<double>(k);
                member.tree.learn(x, dim, label, w);
                if (member.background) member.background->learn(x, dim, label, w);
            }
            if (drifted) {
                member.tree = member.background ? std::move(*member.background)
                                                : std::move(*fresh_tree(member.rng));
                member.background.reset();
                member.warn = Adwin(cfg_.warning_delta);
                member.drift = Adwin(cfg_.adwin_delta);
            }
        }
    }

    std::vector<double> predict_one(const double* x, std::size_t dim) override {
        ensure_dim(dim);
        std::vector<double> sum(classes_.size(), 0.0);
        for (auto& member : members_) {
            const auto probs = member.tree.predict(x, dim);
            for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += probs[c];
        }
        for (double& s : sum) s /= static_cast<double>(members_.size());
        return sum;
    }

    std::vector<Member>& members() { return members_; }

  private:
    std::vector<int> classes_;
    StreamLearnerConfig cfg_;
    std::size_t dim_ = 0;
    std::vector<Member> members_;

    std::size_t subset_size() const {
        const auto s = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(dim_))));
        return std::max<std::size_t>(1, s);
    }

    std::unique_ptr<detail::VfdtCore> fresh_tree(Rng& rng) {
        auto tree = std::make_unique<detail::VfdtCore>(classes_, cfg_, false);
        if (dim_ > 0)
            tree->active_features = detail::draw_sorted_subset(rng, dim_, subset_size());
        return tree;
    }

    void ensure_dim(std::size_t dim) {
        if (dim == 0) throw InvalidArgument("feature dimension must be positive");
        if (dim_ == 0) {
            dim_ = dim;
            for (auto& member : members_)
                member.tree.active_features =
                    detail::draw_sorted_subset(member.rng, dim_, subset_size());
        } else if (dim != dim_) {
            throw DimensionMismatch("expected " + std::to_string(dim_) + " features, got " +
                                    std::to_string(dim));
        }
    }
};

// --------------------------------------------------------------------------
// streaming random patches
//
// Like the adaptive forest but each member trains on a larger random patch
// (60% of the features by default) and drift simply restarts the member on a
// freshly drawn patch.

class StreamingRandomPatches : public StreamModel {
  public:
    struct Member {
        detail::VfdtCore tree;
        Rng rng;
        Adwin drift;
    };

    StreamingRandomPatches(std::vector<int> classes, const StreamLearnerConfig& cfg,
                           std::uint64_t seed)
        : classes_(detail::normalize_class_space(std::move(classes))), cfg_(cfg) {
        for (std::size_t m = 0; m < cfg_.ensemble_size; ++m)
            members_.push_back(Member{detail::VfdtCore(classes_, cfg_, false),
                                      Rng(seed_for(seed, "member/" + std::to_string(m))),
                                      Adwin(cfg_.adwin_delta)});
    }

    const char* kind_name() const override { return "SRP"; }
    const std::vector<int>& class_space() const override { return classes_; }

    void learn_one(const double* x, std::size_t dim, int label) override {
        ensure_dim(dim);
        const std::size_t y = detail::class_index(classes_, label);
        for (auto& member : members_) {
            const auto probs = member.tree.predict(x, dim);
            const double err = detail::argmax_index(probs) != y ? 1.0 : 0.0;
            const bool drifted = detail::error_worsened(member.drift, err);
            const auto k = member.rng.poisson(cfg_.poisson_lambda);
            if (k > 0) member.tree.learn(x, dim, label, static_cast<double>(k));
            if (drifted) {
                member.tree = detail::VfdtCore(classes_, cfg_, false);
                member.tree.active_features =
                    detail::draw_sorted_subset(member.rng, dim_, patch_size());
                member.drift = Adwin(cfg_.adwin_delta);
            }
        }
    }

    std::vector<double> predict_one(const double* x, std::size_t dim) override {
        ensure_dim(dim);
        std::vector<double> sum(classes_.size(), 0.0);
        for (auto& member : members_) {
            const auto probs = member.tree.predict(x, dim);
            for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += probs[c];
        }
        for (double& s : sum) s /= static_cast<double>(members_.size());
        return sum;
    }

    std::vector<Member>& members() { return members_; }

  private:
    std::vector<int> classes_;
    StreamLearnerConfig cfg_;
    std::size_t dim_ = 0;
    std::vector<Member> members_;

    std::size_t patch_size() const {
        const auto s = static_cast<std::size_t>(
            std::llround(cfg_.patch_fraction * static_cast<double>(dim_)));
        return std::min(dim_, std::max<std::size_t>(1, s));
    }

    void ensure_dim(std::size_t dim) {
        if (dim == 0) throw InvalidArgument("feature dimension must be positive");
        if (dim_ == 0) {
            dim_ = dim;
            for (auto& member : members_)
                member.tree.active_features =
                    detail::draw_sorted_subset(member.rng, dim_, patch_size());
        } else if (dim != dim_) {
            throw DimensionMismatch("expected " + std::to_string(dim_) + " features, got " +
                                    std::to_string(dim));
        }
    }
};

// --------------------------------------------------------------------------
// aggregated Mondrian forest
//
// Each tree is an online Mondrian process: nodes own axis-aligned boxes, and a
// sample falling outside a node's box may cut a new split above it, with the
// cut time drawn exponentially in the box extension and the cut position
// uniform over the extension.  Pure nodes never split.  Class predictions use
// a Jeffreys-smoothed leaf posterior; with aggregation on, every ancestor is
// mixed in with an exponential weight learned from its own one-step losses
// (prior weight one half at each level).

struct MondrianNode {
    bool leaf = true;
    int parent = -1;
    int left = -1;
    int right = -1;
    int feature = -1;
    double threshold = 0.0;
    double time = 0.0;  // birth time: the split time of the parent edge
    std::vector<double> lo, hi;  // box of all points seen at this node
    std::vector<double> counts;
    double n = 0.0;
    double log_weight = 0.0;
    double log_weight_tree = 0.0;
};

class MondrianForest : public StreamModel {
  public:
    struct Tree {
        std::vector<MondrianNode> nodes;
        Rng rng;
    };

    MondrianForest(std::vector<int> classes, const StreamLearnerConfig& cfg, std::uint64_t seed)
        : classes_(detail::normalize_class_space(std::move(classes))), cfg_(cfg) {
        for (std::size_t t = 0; t < cfg_.ensemble_size; ++t) {
            Tree tree{{}, Rng(seed_for(seed, "tree/" + std::to_string(t)))};
            MondrianNode root;
            root.counts.assign(classes_.size(), 0.0);
            tree.nodes.push_back(std::move(root));
            trees_.push_back(std::move(tree));
        }
    }

    const char* kind_name() const override { return "AMF"; }
    const std::vector<int>& class_space() const override { return classes_; }

    void learn_one(const double* x, std::size_t dim, int label) override {
        ensure_dim(dim);
        const std::size_t y = detail::class_index(classes_, label);
        for (auto& tree : trees_) tree_learn(tree, x, y);
    }

    std::vector<double> predict_one(const double* x, std::size_t dim) override {
        ensure_dim(dim);
        std::vector<double> sum(classes_.size(), 0.0);
        for (auto& tree : trees_) {
            const auto probs = tree_predict(tree, x);
            for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += probs[c];
        }
        for (double& s : sum) s /= static_cast<double>(trees_.size());
        return sum;
    }

    const std::vector<Tree>& trees() const { return trees_; }

  private:
    std::vector<int> classes_;
    StreamLearnerConfig cfg_;
    std::size_t dim_ = 0;
    std::vector<Tree> trees_;

    void ensure_dim(std::size_t dim) {
        if (dim == 0) throw InvalidArgument("feature dimension must be positive");
        if (dim_ == 0)
            dim_ = dim;
        else if (dim != dim_)
            throw DimensionMismatch("expected " + std::to_string(dim_) + " features, got " +
                                    std::to_string(dim));
    }

    std::vector<double> jeffreys(const MondrianNode& nd) const {
        const double a = cfg_.amf_dirichlet;
        const double k = static_cast<double>(classes_.size());
        std::vector<double> p(classes_.size());
        for (std::size_t c = 0; c < p.size(); ++c) p[c] = (nd.counts[c] + a) / (nd.n + a * k);
        return p;
    }

    void update_downwards(MondrianNode& nd, const double* x, std::size_t y) {
        if (nd.lo.empty()) {
            nd.lo.assign(x, x + dim_);
            nd.hi.assign(x, x + dim_);
        } else {
            for (std::size_t j = 0; j < dim_; ++j) {
                nd.lo[j] = std::min(nd.lo[j], x[j]);
                nd.hi[j] = std::max(nd.hi[j], x[j]);
            }
        }
        if (cfg_.amf_aggregation) {
            // One-step log loss of this node's own predictive, before it sees
            // the sample.
            const double a = cfg_.amf_dirichlet;
            const double k = static_cast<double>(classes_.size());
            const double p = (nd.counts[y] + a) / (nd.n + a * k);
            nd.log_weight += cfg_.amf_step * std::log(std::max(p, 1e-300));
        }
        nd.counts[y] += 1.0;
        nd.n += 1.0;
    }

    static double log_add_exp(double a, double b) {
        const double hi = std::max(a, b), lo = std::min(a, b);
        return hi + std::log1p(std::exp(lo - hi));
    }

    void update_weight_tree(Tree& tree, int v) {
        auto& nd = tree.nodes[static_cast<std::size_t>(v)];
        if (nd.leaf) {
            nd.log_weight_tree = nd.log_weight;
        } else {
            const double ln_half = -M_LN2;
            const double stay = ln_half + nd.log_weight;
            const double split =
                ln_half + tree.nodes[static_cast<std::size_t>(nd.left)].log_weight_tree +
                tree.nodes[static_cast<std::size_t>(nd.right)].log_weight_tree;
            nd.log_weight_tree = log_add_exp(stay, split);
        }
    }

    void tree_learn(Tree& tree, const double* x, std::size_t y) {
        auto& nodes = tree.nodes;
        std::size_t v = 0;
        while (true) {
            // Extension of this node's box by the incoming point.
            double rate = 0.0;
            std::vector<double> ext;
            if (!nodes[v].lo.empty()) {
                ext.resize(dim_);
                for (std::size_t j = 0; j < dim_; ++j) {
                    ext[j] = std::max(x[j] - nodes[v].hi[j], 0.0) +
                             std::max(nodes[v].lo[j] - x[j], 0.0);
                    rate += ext[j];
                }
            }
            const bool dirac = nodes[v].n > 0.0 && nodes[v].counts[y] == nodes[v].n;
            if (rate > 0.0 && !dirac) {
                const double cand = nodes[v].time + tree.rng.exponential(rate);
                const double bound =
                    nodes[v].leaf
                        ? std::numeric_limits<double>::infinity()
                        : nodes[static_cast<std::size_t>(nodes[v].left)].time;
                if (cand < bound) {
                    split_above(tree, v, x, y, ext, rate, cand);
                    // split_above finishes the downward pass at the fresh leaf
                    v = static_cast<std::size_t>(nodes.size() - 1);
                    break;
                }
            }
            update_downwards(nodes[v], x, y);
            if (nodes[v].leaf) break;
            const auto& nd = nodes[v];
            v = static_cast<std::size_t>(x[nd.feature] <= nd.threshold ? nd.left : nd.right);
        }
        if (cfg_.amf_aggregation)
            for (int u = static_cast<int>(v); u != -1;
                 u = tree.nodes[static_cast<std::size_t>(u)].parent)
                update_weight_tree(tree, u);
    }

    // Cut a new split above node v at time `cand`: v keeps its index and
    // becomes the new internal node, its previous content moves into a copied
    // child, and the incoming point gets a fresh sibling leaf.
    void split_above(Tree& tree, std::size_t v, const double* x, std::size_t y,
                     const std::vector<double>& ext, double rate, double cand) {
        auto& nodes = tree.nodes;
        // Feature drawn proportionally to its share of the extension.
        double u = tree.rng.uniform() * rate;
        std::size_t f = 0;
        for (; f + 1 < dim_; ++f) {
            u -= ext[f];
            if (u <= 0.0) break;
        }
        while (ext[f] <= 0.0) ++f;  // never pick a direction with no extension
        const bool right_ext = x[f] > nodes[v].hi[f];
        const double thr = right_ext ? tree.rng.uniform(nodes[v].hi[f], x[f])
                                     : tree.rng.uniform(x[f], nodes[v].lo[f]);

        const int idx_copy = static_cast<int>(nodes.size());
        nodes.push_back(nodes[v]);  // the old subtree, demoted one level
        nodes[static_cast<std::size_t>(idx_copy)].parent = static_cast<int>(v);
        nodes[static_cast<std::size_t>(idx_copy)].time = cand;
        if (!nodes[static_cast<std::size_t>(idx_copy)].leaf) {
            auto& cp = nodes[static_cast<std::size_t>(idx_copy)];
            nodes[static_cast<std::size_t>(cp.left)].parent = idx_copy;
            nodes[static_cast<std::size_t>(cp.right)].parent = idx_copy;
        }
        const int idx_fresh = static_cast<int>(nodes.size());
        MondrianNode fresh;
        fresh.parent = static_cast<int>(v);
        fresh.time = cand;
        fresh.counts.assign(classes_.size(), 0.0);
        nodes.push_back(std::move(fresh));

        auto& nv = nodes[v];
        nv.leaf = false;
        nv.feature = static_cast<int>(f);
        nv.threshold = thr;
        nv.left = right_ext ? idx_copy : idx_fresh;
        nv.right = right_ext ? idx_fresh : idx_copy;

        update_downwards(nodes[v], x, y);
        update_downwards(nodes[static_cast<std::size_t>(idx_fresh)], x, y);
    }

    std::vector<double> tree_predict(Tree& tree, const double* x) const {
        const auto& nodes = tree.nodes;
        std::size_t v = 0;
        while (!nodes[v].leaf) {
            const auto& nd = nodes[v];
            v = static_cast<std::size_t>(x[nd.feature] <= nd.threshold ? nd.left : nd.right);
        }
        auto probs = jeffreys(nodes[v]);
        if (!cfg_.amf_aggregation) return probs;
        for (int u = nodes[v].parent; u != -1; u = nodes[static_cast<std::size_t>(u)].parent) {
            const auto& nd = nodes[static_cast<std::size_t>(u)];
            const double half_w = 0.5 * std::exp(nd.log_weight - nd.log_weight_tree);
            const auto own = jeffreys(nd);
            for (std::size_t c = 0; c < probs.size(); ++c)
                probs[c] = half_w * own[c] + (1.0 - half_w) * probs[c];
        }
        return probs;
    }
};

// --------------------------------------------------------------------------
// factory

inline std::unique_ptr<StreamModel> make_stream_model(StreamKind kind, std::vector<int> classes,
                                                      const StreamLearnerConfig& cfg = {},
                                                      std::uint64_t seed = 0) {
    switch (kind) {
        case StreamKind::GNB:
            return std::make_unique<GaussianNaiveBayes>(std::move(classes), cfg);
        case StreamKind::HT:
            return std::make_unique<HoeffdingTreeModel>(std::move(classes), cfg);
        case StreamKind::HAT:
            return std::make_unique<HoeffdingAdaptiveTreeModel>(std::move(classes), cfg);
        case StreamKind::ARF:
            return std::make_unique<AdaptiveRandomForest>(std::move(classes), cfg, seed);
        case StreamKind::SRP:
            return std::make_unique<StreamingRandomPatches>(std::move(classes), cfg, seed);
        case StreamKind::AMF:
            return std::make_unique<MondrianForest>(std::move(classes), cfg, seed);
    }
    throw InvalidArgument("unhandled stream kind");
}

// --------------------------------------------------------------------------
// forgetting metric

// FR = FE / T over the online log: a forgetting event is a correct prediction
// immediately followed by a mistake.
inline double forgetting_rate(const StreamLog& log) {
    if (log.size() < 2)
        throw TooShort("forgetting rate needs at least two online records");
    std::size_t events = 0;
    for (std::size_t t = 1; t < log.size(); ++t)
        if (log[t - 1].correct && !log[t].correct) ++events;
    return static_cast<double>(events) / static_cast<double>(log.size());
}

// --------------------------------------------------------------------------
// prequential protocol

struct PrequentialResult {
    StreamLog log;
    StreamReport report;
};

// Warm-up slice (first warmup_fraction of the stream) is learned
// unconditionally, then re-predicted to give the warm-up accuracy.  Every
// remaining sample is predicted first and only used for an update when the
// predicted confidence clears tau.
inline PrequentialResult run_prequential(StreamModel& model,
                                         const std::vector<std::vector<double>>& xs,
                                         const std::vector<int>& ys, const StreamConfig& cfg) {
    if (!(cfg.warmup_fraction >= 0.0) || !(cfg.warmup_fraction < 1.0))
        throw InvalidArgument("warmup fraction must lie in [0, 1)");
    if (!(cfg.tau >= 0.0) || !(cfg.tau <= 1.0))
        throw InvalidArgument("confidence threshold must lie in [0, 1]");
    if (xs.empty()) throw EmptyStream("stream has no samples");
    if (xs.size() != ys.size())
        throw ShapeMismatch("feature rows and labels differ in length");
    const auto& classes = model.class_space();
    for (const int y : ys) detail::class_index(classes, y);  // validate up front

    using clock = std::chrono::steady_clock;
    const auto ms_between = [](clock::time_point a, clock::time_point b) {
        return std::chrono::duration<double, std::milli>(b - a).count();
    };

    const std::size_t n = xs.size();
    const std::size_t warm =
        static_cast<std::size_t>(std::floor(cfg.warmup_fraction * static_cast<double>(n) + 1e-9));
    for (std::size_t i = 0; i < warm; ++i)
        model.learn_one(xs[i].data(), xs[i].size(), ys[i]);

    std::size_t warm_correct = 0;
    for (std::size_t i = 0; i < warm; ++i) {
        const auto probs = model.predict_one(xs[i].data(), xs[i].size());
        if (classes[detail::argmax_index(probs)] == ys[i]) ++warm_correct;
    }

    PrequentialResult out;
    std::size_t accepted = 0, correct = 0;
    double infer_total = 0.0, update_total = 0.0;
    for (std::size_t i = warm; i < n; ++i) {
        StreamRecord rec;
        rec.t = i - warm;
        rec.true_label = ys[i];

        const auto t0 = clock::now();
        const auto probs = model.predict_one(xs[i].data(), xs[i].size());
        const auto t1 = clock::now();
        rec.infer_ms = ms_between(t0, t1);

        const std::size_t best = detail::argmax_index(probs);
        rec.predicted_label = classes[best];
        rec.confidence = probs[best];
        rec.correct = rec.predicted_label == rec.true_label;
        rec.accepted = rec.confidence >= cfg.tau;
        if (rec.accepted) {
            const auto u0 = clock::now();
            model.learn_one(xs[i].data(), xs[i].size(), ys[i]);
            const auto u1 = clock::now();
            rec.update_ms = ms_between(u0, u1);
        }
        accepted += rec.accepted ? 1 : 0;
        correct += rec.correct ? 1 : 0;
        infer_total += rec.infer_ms;
        update_total += rec.update_ms;
        out.log.push_back(rec);
    }

    const auto online = static_cast<double>(out.log.size());
    auto& rep = out.report;
    rep.warmup_accuracy =
        warm > 0 ? static_cast<double>(warm_correct) / static_cast<double>(warm) : 0.0;
    rep.online_accuracy = static_cast<double>(correct) / online;
    rep.acceptance_rate = static_cast<double>(accepted) / online;
    rep.forgetting_rate = out.log.size() >= 2 ? forgetting_rate(out.log) : 0.0;
    rep.infer_ms_total = infer_total;
    rep.infer_ms_mean = infer_total / online;
    rep.update_ms_total = update_total;
    rep.update_ms_mean = update_total / online;
    return out;
}

// Window features carry their own labels: the track id is the class.
inline PrequentialResult run_prequential(StreamModel& model,
                                         const std::vector<AoaSample>& samples,
                                         const StreamConfig& cfg) {
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    xs.reserve(samples.size());
    ys.reserve(samples.size());
    for (const auto& s : samples) {
        xs.push_back(s.features);
        ys.push_back(s.track_id);
    }
    return run_prequential(model, xs, ys, cfg);
}

}  // namespace aoalab
