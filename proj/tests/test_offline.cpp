// Offline classification stack: single learners, hierarchical routing,
// stacked ensembles, random hyperparameter search, and the buffer-vs-cumulative
// retraining experiment.  Oracle helpers at the top are coded against the
// definitions directly (exhaustive split search, manual vote counting) so the
// library implementations are checked against independent arithmetic.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "aoalab/channel.hpp"
#include "aoalab/features.hpp"
#include "aoalab/offline.hpp"
#include "aoalab/rng.hpp"

namespace {

using aoalab::AoaSample;
using aoalab::ClassifierConfig;
using aoalab::Dataset;
using aoalab::ModelKind;
using aoalab::Region;

// --------------------------------------------------------------------------
// synthetic data helpers

// Gaussian blob per class; track_id doubles as the class label.
std::vector<AoaSample> blob_samples(const std::vector<std::vector<double>>& centers,
                                    const std::vector<int>& track_ids, std::size_t per_class,
                                    double spread, std::uint64_t seed,
                                    const std::vector<Region>& regions = {}) {
    std::vector<AoaSample> out;
    aoalab::Rng rng(seed);
    for (std::size_t c = 0; c < centers.size(); ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            AoaSample s;
            s.features.resize(centers[c].size());
            for (std::size_t d = 0; d < centers[c].size(); ++d)
                s.features[d] = centers[c][d] + rng.normal(0.0, spread);
            s.track_id = track_ids[c];
            s.region = regions.empty() ? Region::LoS : regions[c];
            s.window_index = i;
            out.push_back(std::move(s));
        }
    }
    return out;
}

// Two interleaved diagonals: linearly inseparable, trivially separable for trees.
std::vector<AoaSample> xor_samples(std::size_t per_cluster, double spread, std::uint64_t seed) {
    return blob_samples({{-30.0, -30.0}, {30.0, 30.0}, {-30.0, 30.0}, {30.0, -30.0}},
                        {1, 1, 2, 2}, per_cluster, spread, seed);
}

double holdout_accuracy(const aoalab::ModelArtifact& model, const Dataset& data,
                        const std::vector<std::size_t>& idx) {
    std::size_t hit = 0;
    for (std::size_t i : idx)
        if (aoalab::predict_label(model, data.samples[i]) == data.labels[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(idx.size());
}

// --------------------------------------------------------------------------
// oracle: exhaustive best root split by Gini impurity decrease.
// Scans features in index order and candidate thresholds (midpoints between
// consecutive distinct sorted values) in ascending order, keeping strictly
// better gains only, so ties resolve to the first candidate — the same rule the
// tree builder must follow.  Left branch takes x[f] <= threshold.

double gini_of(const std::map<int, std::size_t>& counts, std::size_t total) {
    double g = 1.0;
    for (const auto& [label, n] : counts) {
        const double p = static_cast<double>(n) / static_cast<double>(total);
        g -= p * p;
    }
    return g;
}

struct SplitOracle {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

SplitOracle best_root_split(const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
    const std::size_t n = x.size();
    const std::size_t dim = x.front().size();
    std::map<int, std::size_t> all;
    for (int label : y) ++all[label];
    const double parent = gini_of(all, n);

    SplitOracle best;
    for (std::size_t f = 0; f < dim; ++f) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return x[a][f] < x[b][f]; });
        std::map<int, std::size_t> left;
        std::map<int, std::size_t> right = all;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const std::size_t idx = order[i];
            ++left[y[idx]];
            if (--right[y[idx]] == 0) right.erase(y[idx]);
            const double lo = x[idx][f];
            const double hi = x[order[i + 1]][f];
            if (!(hi > lo)) continue;  // identical values cannot be separated
            const double thr = 0.5 * (lo + hi);
            const std::size_t nl = i + 1, nr = n - nl;
            const double gain = parent -
                                (static_cast<double>(nl) / n) * gini_of(left, nl) -
                                (static_cast<double>(nr) / n) * gini_of(right, nr);
            if (gain > best.gain) {
                best.feature = static_cast<int>(f);
                best.threshold = thr;
                best.gain = gain;
            }
        }
    }
    return best;
}

// oracle: walk one decision tree by hand and return its leaf distribution.
const std::vector<double>& tree_leaf_dist(const aoalab::DecisionTree& tree,
                                          const std::vector<double>& x) {
    const auto& nodes = tree.nodes();
    std::size_t at = 0;
    while (nodes[at].feature >= 0)
        at = x[static_cast<std::size_t>(nodes[at].feature)] <= nodes[at].threshold
                 ? static_cast<std::size_t>(nodes[at].left)
                 : static_cast<std::size_t>(nodes[at].right);
    return nodes[at].dist;
}

AoaSample probe(const std::vector<double>& feats) {
    AoaSample s;
    s.features = feats;
    return s;
}

}  // namespace

// ==========================================================================
// datasets

TEST(OfflineDataset, TrackBuilderOrdersClassSpaceAndDropsInvalid) {
    auto samples = blob_samples({{0.0}, {10.0}, {-10.0}}, {9, 2, 5}, 4, 0.5, 11);
    samples[1].valid = false;
    const Dataset data = aoalab::make_track_dataset(samples);
    EXPECT_EQ(data.samples.size(), 11u);
    EXPECT_EQ(data.labels.size(), 11u);
    ASSERT_EQ(data.class_space, (std::vector<int>{2, 5, 9}));
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        EXPECT_TRUE(data.samples[i].valid);
        EXPECT_EQ(data.labels[i], data.samples[i].track_id);
    }
}

TEST(OfflineDataset, RegionBuilderUsesRegionLabels) {
    auto samples = blob_samples({{0.0, 0.0}, {20.0, 20.0}}, {1, 7}, 3, 0.5, 13,
                                {Region::NLoS, Region::LoS});
    const Dataset data = aoalab::make_region_dataset(samples);
    ASSERT_EQ(data.class_space, (std::vector<int>{0, 1}));
    for (std::size_t i = 0; i < data.samples.size(); ++i)
        EXPECT_EQ(data.labels[i], data.samples[i].region == Region::LoS ? 0 : 1);
}

TEST(OfflineDataset, FingerprintTracksContent) {
    const auto a = aoalab::make_track_dataset(blob_samples({{0.0}, {5.0}}, {1, 2}, 5, 0.3, 1));
    const auto a2 = aoalab::make_track_dataset(blob_samples({{0.0}, {5.0}}, {1, 2}, 5, 0.3, 1));
    const auto b = aoalab::make_track_dataset(blob_samples({{0.0}, {5.0}}, {1, 2}, 5, 0.3, 2));
    EXPECT_EQ(aoalab::dataset_fingerprint(a), aoalab::dataset_fingerprint(a2));
    EXPECT_NE(aoalab::dataset_fingerprint(a), aoalab::dataset_fingerprint(b));
    EXPECT_EQ(aoalab::dataset_fingerprint(a).size(), 16u);
}

TEST(OfflineDataset, DegenerateInputsRejected) {
    EXPECT_THROW(aoalab::train_classifier(ModelKind::LR, Dataset{}, {}, 1),
                 aoalab::DegenerateDataset);
    const auto one = aoalab::make_track_dataset(blob_samples({{0.0}}, {3}, 6, 0.3, 5));
    EXPECT_THROW(aoalab::train_classifier(ModelKind::KNN, one, {}, 1), aoalab::DegenerateDataset);
}

// ==========================================================================
// single learners

TEST(OfflineLearners, AllKindsFitSeparableBlobs) {
    const auto samples = blob_samples(
        {{-50.0, -50.0, 0.0}, {0.0, 50.0, -40.0}, {50.0, -20.0, 40.0}}, {1, 2, 3}, 40, 2.0, 21);
    const Dataset data = aoalab::make_track_dataset(samples);
    const auto split = aoalab::stratified_split(data.labels, 0.25, 77);

    for (ModelKind kind :
         {ModelKind::LR, ModelKind::KNN, ModelKind::DT, ModelKind::RF, ModelKind::GBM}) {
        ClassifierConfig cfg;
        cfg.n_estimators = 40;
        const auto sub = aoalab::subset(data, split.train);
        const auto model = aoalab::train_classifier(kind, sub, cfg, 123);
        EXPECT_DOUBLE_EQ(holdout_accuracy(model, data, split.train), 1.0)
            << aoalab::model_kind_name(kind);
        EXPECT_DOUBLE_EQ(holdout_accuracy(model, data, split.holdout), 1.0)
            << aoalab::model_kind_name(kind);
    }
}

TEST(OfflineLearners, NearestNeighborMemorizesTrainingSet) {
    const auto samples =
        blob_samples({{-20.0, 0.0}, {0.0, 20.0}, {20.0, -20.0}}, {4, 5, 6}, 30, 6.0, 31);
    const Dataset data = aoalab::make_track_dataset(samples);
    ClassifierConfig cfg;
    cfg.knn_k = 1;
    const auto model = aoalab::train_classifier(ModelKind::KNN, data, cfg, 3);
    for (std::size_t i = 0; i < data.samples.size(); ++i)
        EXPECT_EQ(aoalab::predict_label(model, data.samples[i]), data.labels[i]);
}

TEST(OfflineLearners, NearestNeighborWeightingHandlesZeroDistance) {
    aoalab::Knn knn;
    knn.classes = {0, 1};
    knn.dim = 2;
    knn.exemplars = {0.0, 0.0, 0.0, 1.0, 3.0, 0.0, 4.0, 0.0};
    knn.exemplar_labels = {0, 0, 1, 1};
    knn.k = 3;
    knn.distance_weights = true;
    const std::vector<double> q{0.0, 0.0};
    const auto p = knn.predict_proba(q.data(), q.size());
    // neighbors: d=0 (guarded at 1e-12), d=1, d=3 -> class 0 mass ~ 1
    const double w0 = 1.0 / 1e-12 + 1.0;
    const double w1 = 1.0 / 3.0;
    ASSERT_EQ(p.size(), 2u);
    EXPECT_NEAR(p[0], w0 / (w0 + w1), 1e-12);
    EXPECT_NEAR(p[1], w1 / (w0 + w1), 1e-12);

    knn.distance_weights = false;
    const auto u = knn.predict_proba(q.data(), q.size());
    EXPECT_NEAR(u[0], 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(u[1], 1.0 / 3.0, 1e-12);
}

TEST(OfflineLearners, NearestNeighborClampsKToSampleCount) {
    const auto samples = blob_samples({{-10.0}, {10.0}}, {1, 2}, 4, 0.5, 41);
    const Dataset data = aoalab::make_track_dataset(samples);
    ClassifierConfig cfg;
    cfg.knn_k = 30;  // more neighbors than samples
    const auto model = aoalab::train_classifier(ModelKind::KNN, data, cfg, 3);
    const auto p = aoalab::predict_proba(model, data.samples[0]);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
}

TEST(OfflineLearners, ZeroWeightSoftmaxIsUniform) {
    aoalab::LogisticRegression lr;
    lr.classes = {0, 1, 2};
    lr.dim = 3;
    lr.w.assign(9, 0.0);
    lr.b.assign(3, 0.0);
    const std::vector<double> x{12.0, -5.0, 30.0};
    const auto p = lr.predict_proba(x.data(), x.size());
    ASSERT_EQ(p.size(), 3u);
    for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
}

TEST(OfflineLearners, ForestBeatsLinearModelOnInterleavedClusters) {
    const Dataset data = aoalab::make_track_dataset(xor_samples(80, 6.0, 51));
    const auto split = aoalab::stratified_split(data.labels, 0.25, 9);
    const auto train = aoalab::subset(data, split.train);

    ClassifierConfig rf_cfg;  // forest settings used throughout the pipeline
    rf_cfg.n_estimators = 297;
    rf_cfg.max_depth = 27;
    rf_cfg.max_features = aoalab::FeatureSubset::Log2;
    rf_cfg.min_samples_split = 3;
    rf_cfg.min_samples_leaf = 2;
    const auto rf = aoalab::train_classifier(ModelKind::RF, train, rf_cfg, 7);
    const auto lr = aoalab::train_classifier(ModelKind::LR, train, {}, 7);

    const double rf_acc = holdout_accuracy(rf, data, split.holdout);
    const double lr_acc = holdout_accuracy(lr, data, split.holdout);
    EXPECT_GE(rf_acc, lr_acc);
    EXPECT_GE(rf_acc, 0.9);
    EXPECT_LE(lr_acc, 0.75);
}

// ==========================================================================
// decision tree internals

TEST(OfflineTree, RootSplitMatchesExhaustiveSearch) {
    for (std::uint64_t seed : {101u, 202u, 303u}) {
        aoalab::Rng rng(seed);
        std::vector<std::vector<double>> x;
        std::vector<int> y;
        std::vector<AoaSample> samples;
        for (std::size_t i = 0; i < 48; ++i) {
            std::vector<double> row{rng.uniform(-60.0, 60.0), rng.uniform(-60.0, 60.0),
                                    rng.uniform(-60.0, 60.0)};
            const int label = (row[1] + 0.3 * row[2] > 5.0) ? 1 : (rng.uniform() < 0.2 ? 1 : 0);
            AoaSample s;
            s.features = row;
            s.track_id = label;
            samples.push_back(s);
            x.push_back(row);
            y.push_back(label);
        }
        const Dataset data = aoalab::make_track_dataset(samples);
        ClassifierConfig cfg;
        cfg.max_depth = 1;
        const auto stump = aoalab::DecisionTree::train(data, cfg, seed);

        const auto want = best_root_split(x, y);
        ASSERT_FALSE(stump.nodes().empty());
        const auto& root = stump.nodes()[0];
        ASSERT_GE(root.feature, 0) << "seed " << seed;
        EXPECT_EQ(root.feature, want.feature) << "seed " << seed;
        EXPECT_NEAR(root.threshold, want.threshold, 1e-12);
        EXPECT_NEAR(root.gain, want.gain, 1e-12);
    }
}

TEST(OfflineTree, EverySplitHasPositiveImpurityDecrease) {
    const Dataset data = aoalab::make_track_dataset(xor_samples(40, 8.0, 61));
    ClassifierConfig cfg;
    cfg.n_estimators = 25;
    cfg.max_features = aoalab::FeatureSubset::Sqrt;
    cfg.min_samples_leaf = 2;
    const auto model = aoalab::train_classifier(ModelKind::RF, data, cfg, 17);
    const auto* rf = dynamic_cast<const aoalab::RandomForest*>(model.runtime.get());
    ASSERT_NE(rf, nullptr);
    std::size_t internal = 0;
    for (const auto& tree : rf->trees()) {
        for (const auto& node : tree.nodes()) {
            if (node.feature >= 0) {
                EXPECT_GT(node.gain, 0.0);
                ++internal;
            } else {
                double sum = 0.0;
                for (double v : node.dist) sum += v;
                EXPECT_NEAR(sum, 1.0, 1e-9);
            }
        }
    }
    EXPECT_GT(internal, 0u);
}

TEST(OfflineForest, ProbabilitiesAreEnumeratedLeafVotes) {
    const auto samples =
        blob_samples({{-40.0, 0.0}, {0.0, 40.0}, {40.0, -40.0}}, {1, 2, 3}, 25, 5.0, 71);
    const Dataset data = aoalab::make_track_dataset(samples);
    ClassifierConfig cfg;
    cfg.n_estimators = 10;
    cfg.max_features = aoalab::FeatureSubset::Sqrt;
    const auto model = aoalab::train_classifier(ModelKind::RF, data, cfg, 29);
    const auto* rf = dynamic_cast<const aoalab::RandomForest*>(model.runtime.get());
    ASSERT_NE(rf, nullptr);
    ASSERT_EQ(rf->trees().size(), 10u);

    aoalab::Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        const std::vector<double> x{rng.uniform(-60.0, 60.0), rng.uniform(-60.0, 60.0)};
        std::vector<double> manual(3, 0.0);
        for (const auto& tree : rf->trees()) {
            const auto& dist = tree_leaf_dist(tree, x);
            for (std::size_t c = 0; c < 3; ++c) manual[c] += dist[c] / 10.0;
        }
        const auto got = rf->predict_proba(x.data(), x.size());
        ASSERT_EQ(got.size(), 3u);
        for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(got[c], manual[c], 1e-12);
    }
}

// ==========================================================================
// probability contract

TEST(OfflineProba, SumsToOneAndNonNegativeForEveryKind) {
    const auto samples =
        blob_samples({{-30.0, 10.0}, {10.0, -30.0}, {30.0, 30.0}}, {2, 4, 8}, 30, 8.0, 81);
    const Dataset data = aoalab::make_track_dataset(samples);
    aoalab::Rng rng(6);
    for (ModelKind kind :
         {ModelKind::LR, ModelKind::KNN, ModelKind::DT, ModelKind::RF, ModelKind::GBM}) {
        ClassifierConfig cfg;
        cfg.n_estimators = 30;
        const auto model = aoalab::train_classifier(kind, data, cfg, 37);
        for (int rep = 0; rep < 10; ++rep) {
            const auto s = probe({rng.uniform(-200.0, 200.0), rng.uniform(-200.0, 200.0)});
            const auto p = aoalab::predict_proba(model, s);
            ASSERT_EQ(p.size(), 3u);
            double sum = 0.0;
            for (double v : p) {
                EXPECT_GE(v, 0.0);
                sum += v;
            }
            EXPECT_NEAR(sum, 1.0, 1e-9) << aoalab::model_kind_name(kind);
        }
        EXPECT_THROW(aoalab::predict_proba(model, probe({1.0, 2.0, 3.0})),
                     aoalab::DimensionMismatch);
    }
}

// ==========================================================================
// persistence

TEST(OfflineArtifact, RoundTripIsByteIdentical) {
    const auto samples = blob_samples({{-20.0, 5.0}, {25.0, -15.0}}, {3, 9}, 20, 4.0, 91);
    const Dataset data = aoalab::make_track_dataset(samples);
    ClassifierConfig cfg;
    cfg.n_estimators = 12;
    for (ModelKind kind :
         {ModelKind::LR, ModelKind::KNN, ModelKind::DT, ModelKind::RF, ModelKind::GBM}) {
        const auto model = aoalab::train_classifier(kind, data, cfg, 55);
        const std::string bytes = model.to_bytes();
        const auto loaded = aoalab::load_artifact(bytes);
        EXPECT_EQ(loaded.to_bytes(), bytes) << aoalab::model_kind_name(kind);
        EXPECT_EQ(loaded.kind, model.kind);
        EXPECT_EQ(loaded.seed, model.seed);
        EXPECT_EQ(loaded.data_fingerprint, model.data_fingerprint);
        aoalab::Rng rng(8);
        for (int rep = 0; rep < 8; ++rep) {
            const auto s = probe({rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0)});
            const auto a = aoalab::predict_proba(model, s);
            const auto b = aoalab::predict_proba(loaded, s);
            ASSERT_EQ(a.size(), b.size());
            for (std::size_t c = 0; c < a.size(); ++c) EXPECT_EQ(a[c], b[c]);
        }
    }
}

TEST(OfflineArtifact, RetrainingWithSameSeedReproducesBytes) {
    const Dataset data = aoalab::make_track_dataset(xor_samples(30, 5.0, 95));
    ClassifierConfig cfg;
    cfg.n_estimators = 20;
    cfg.max_features = aoalab::FeatureSubset::Sqrt;
    const auto a = aoalab::train_classifier(ModelKind::RF, data, cfg, 1234);
    const auto b = aoalab::train_classifier(ModelKind::RF, data, cfg, 1234);
    EXPECT_EQ(a.to_bytes(), b.to_bytes());
    const auto c = aoalab::train_classifier(ModelKind::RF, data, cfg, 1235);
    EXPECT_NE(a.to_bytes(), c.to_bytes());
}

TEST(OfflineArtifact, KindMismatchAndCorruptionFailLoudly) {
    const auto samples = blob_samples({{-10.0}, {10.0}}, {1, 2}, 10, 2.0, 97);
    const Dataset data = aoalab::make_track_dataset(samples);
    const auto model = aoalab::train_classifier(ModelKind::DT, data, {}, 5);
    const std::string bytes = model.to_bytes();

    EXPECT_NO_THROW(aoalab::load_artifact_as(bytes, "DT"));
    EXPECT_THROW(aoalab::load_artifact_as(bytes, "RF"), aoalab::KindMismatch);

    std::string corrupt = bytes;
    const auto at = corrupt.find("AOALB-MODEL-v1");
    ASSERT_NE(at, std::string::npos);
    corrupt[at + 13] = '9';
    EXPECT_THROW(aoalab::load_artifact(corrupt), aoalab::FormatError);
    EXPECT_THROW(aoalab::load_artifact("not json at all"), aoalab::FormatError);
}

TEST(OfflineArtifact, ConfigSurvivesJsonRoundTrip) {
    ClassifierConfig cfg;
    cfg.lr_c = 0.037;
    cfg.knn_k = 17;
    cfg.knn_distance_weights = true;
    cfg.n_estimators = 123;
    cfg.max_depth = 9;
    cfg.max_features = aoalab::FeatureSubset::Log2;
    cfg.min_samples_split = 4;
    cfg.min_samples_leaf = 3;
    cfg.gbm_learning_rate = 0.071;
    cfg.gbm_subsample = 0.62;
    const auto back = ClassifierConfig::from_json(cfg.to_json());
    EXPECT_EQ(back.lr_c, cfg.lr_c);
    EXPECT_EQ(back.knn_k, cfg.knn_k);
    EXPECT_EQ(back.knn_distance_weights, cfg.knn_distance_weights);
    EXPECT_EQ(back.n_estimators, cfg.n_estimators);
    EXPECT_EQ(back.max_depth, cfg.max_depth);
    EXPECT_EQ(back.max_features, cfg.max_features);
    EXPECT_EQ(back.min_samples_split, cfg.min_samples_split);
    EXPECT_EQ(back.min_samples_leaf, cfg.min_samples_leaf);
    EXPECT_EQ(back.gbm_learning_rate, cfg.gbm_learning_rate);
    EXPECT_EQ(back.gbm_subsample, cfg.gbm_subsample);
}

// ==========================================================================
// evaluation report

TEST(OfflineEval, ReportMatchesHandComputedConfusion) {
    // Constant classifier (all-zero softmax, ties resolve to the lowest class
    // index) predicts label 5 for everything.  With 30 true 5s and 20 true 9s:
    //   accuracy = 30/50, precision(5) = 0.6, recall(5) = 1 -> F1(5) = 0.75,
    //   F1(9) = 0 -> macro F1 = 0.375.
    auto lr = std::make_shared<aoalab::LogisticRegression>();
    lr->classes = {5, 9};
    lr->dim = 2;
    lr->w.assign(4, 0.0);
    lr->b.assign(2, 0.0);
    const auto model = aoalab::wrap_model(lr, ClassifierConfig{}, 0, "0000000000000000");

    std::vector<AoaSample> samples;
    auto a = blob_samples({{0.0, 0.0}}, {5}, 30, 1.0, 3);
    auto b = blob_samples({{10.0, 10.0}}, {9}, 20, 1.0, 4);
    samples.insert(samples.end(), a.begin(), a.end());
    samples.insert(samples.end(), b.begin(), b.end());
    const Dataset data = aoalab::make_track_dataset(samples);

    const auto report = aoalab::evaluate(model, data, 1.5);
    EXPECT_NEAR(report.accuracy, 0.6, 1e-12);
    EXPECT_NEAR(report.macro_f1, 0.375, 1e-12);
    ASSERT_EQ(report.confusion.size(), 2u);
    EXPECT_EQ(report.confusion[0], (std::vector<std::size_t>{30, 0}));
    EXPECT_EQ(report.confusion[1], (std::vector<std::size_t>{20, 0}));
    EXPECT_DOUBLE_EQ(report.train_seconds, 1.5);
    EXPECT_GE(report.infer_ms_mean, 0.0);

    const auto j = report.to_json();
    EXPECT_TRUE(j.contains("accuracy"));
    EXPECT_TRUE(j.contains("macro_f1"));
    EXPECT_TRUE(j.contains("confusion_matrix"));
    EXPECT_TRUE(j.contains("train_seconds"));
    EXPECT_TRUE(j.contains("infer_ms_mean"));
}

// ==========================================================================
// stratified splitting

TEST(OfflineFolds, PerClassCountsBalancedWithinOne) {
    std::vector<int> labels;
    for (int i = 0; i < 17; ++i) labels.push_back(1);
    for (int i = 0; i < 8; ++i) labels.push_back(2);
    for (int i = 0; i < 5; ++i) labels.push_back(7);
    const auto folds = aoalab::stratified_folds(labels, 4, 99);
    ASSERT_EQ(folds.size(), labels.size());
    std::map<int, std::vector<std::size_t>> per_class(
        {{1, std::vector<std::size_t>(4, 0)}, {2, std::vector<std::size_t>(4, 0)},
         {7, std::vector<std::size_t>(4, 0)}});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ASSERT_LT(folds[i], 4u);
        ++per_class[labels[i]][folds[i]];
    }
    for (const auto& [label, counts] : per_class) {
        const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
        EXPECT_LE(*hi - *lo, 1u) << "class " << label;
    }
    EXPECT_THROW(aoalab::stratified_folds(labels, 6, 1), aoalab::FoldTooSmall);
}

TEST(OfflineFolds, HoldoutSplitIsStratifiedAndDisjoint) {
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) labels.push_back(0);
    for (int i = 0; i < 20; ++i) labels.push_back(3);
    const auto split = aoalab::stratified_split(labels, 0.25, 5);
    EXPECT_EQ(split.train.size() + split.holdout.size(), labels.size());
    std::set<std::size_t> seen(split.train.begin(), split.train.end());
    for (std::size_t i : split.holdout) EXPECT_EQ(seen.count(i), 0u);
    std::size_t h0 = 0, h3 = 0;
    for (std::size_t i : split.holdout) (labels[i] == 0 ? h0 : h3) += 1;
    EXPECT_EQ(h0, 10u);
    EXPECT_EQ(h3, 5u);
}

// ==========================================================================
// hierarchical two-stage model

TEST(OfflineHierarchical, MissingRegionRejected) {
    const auto los = aoalab::make_track_dataset(blob_samples({{-10.0}, {10.0}}, {1, 2}, 8, 1.0, 7));
    EXPECT_THROW(aoalab::train_hierarchical(los, Dataset{}, ModelKind::DT, ModelKind::DT,
                                            ModelKind::DT, 1),
                 aoalab::MissingRegion);
    EXPECT_THROW(aoalab::train_hierarchical(Dataset{}, los, ModelKind::DT, ModelKind::DT,
                                            ModelKind::DT, 1),
                 aoalab::MissingRegion);
}

TEST(OfflineHierarchical, RoutingSelectsStageTwoClassSpace) {
    const auto los_samples = blob_samples({{-40.0, -40.0}, {-40.0, 40.0}}, {1, 2}, 25, 3.0, 103,
                                          {Region::LoS, Region::LoS});
    const auto nlos_samples = blob_samples({{40.0, -40.0}, {40.0, 40.0}}, {11, 12}, 25, 3.0, 104,
                                           {Region::NLoS, Region::NLoS});
    const auto los = aoalab::make_track_dataset(los_samples);
    const auto nlos = aoalab::make_track_dataset(nlos_samples);
    const auto model = aoalab::train_hierarchical(los, nlos, ModelKind::RF, ModelKind::DT,
                                                  ModelKind::DT, 19);

    std::size_t los_routed = 0, nlos_routed = 0;
    auto check = [&](const std::vector<AoaSample>& batch, const std::vector<int>& space) {
        for (const auto& s : batch) {
            aoalab::RouteInfo info;
            const int label = aoalab::hierarchical_predict(model, s, &info);
            EXPECT_NEAR(info.stage1_probs[0] + info.stage1_probs[1], 1.0, 1e-9);
            const auto& expect_space =
                info.region == Region::LoS ? los.class_space : nlos.class_space;
            EXPECT_NE(std::find(expect_space.begin(), expect_space.end(), label),
                      expect_space.end());
            (info.region == Region::LoS ? los_routed : nlos_routed) += 1;
            (void)space;
        }
    };
    check(los_samples, los.class_space);
    check(nlos_samples, nlos.class_space);
    EXPECT_EQ(los_routed, 50u);
    EXPECT_EQ(nlos_routed, 50u);
}

TEST(OfflineHierarchical, ForcedRouteOverridesStageOne) {
    const auto los = aoalab::make_track_dataset(
        blob_samples({{-40.0, 0.0}, {-40.0, 30.0}}, {1, 2}, 20, 2.0, 105));
    const auto nlos = aoalab::make_track_dataset(
        blob_samples({{40.0, 0.0}, {40.0, 30.0}}, {11, 12}, 20, 2.0, 106));
    const auto model = aoalab::train_hierarchical(los, nlos, ModelKind::RF, ModelKind::DT,
                                                  ModelKind::DT, 23);
    // clearly a LoS-looking point, forced down the other branch
    const auto s = probe({-40.0, 0.0});
    const int forced = aoalab::hierarchical_predict_forced(model, s, Region::NLoS);
    EXPECT_TRUE(forced == 11 || forced == 12);
    const int natural = aoalab::hierarchical_predict(model, s, nullptr);
    EXPECT_TRUE(natural == 1 || natural == 2);
}

TEST(OfflineHierarchical, BytesRoundTrip) {
    const auto los = aoalab::make_track_dataset(
        blob_samples({{-30.0, 0.0}, {-30.0, 30.0}}, {1, 2}, 12, 2.0, 107));
    const auto nlos = aoalab::make_track_dataset(
        blob_samples({{30.0, 0.0}, {30.0, 30.0}}, {11, 12}, 12, 2.0, 108));
    const auto model = aoalab::train_hierarchical(los, nlos, ModelKind::DT, ModelKind::DT,
                                                  ModelKind::DT, 29);
    const std::string bytes = aoalab::hierarchical_to_bytes(model);
    const auto loaded = aoalab::load_hierarchical(bytes);
    EXPECT_EQ(aoalab::hierarchical_to_bytes(loaded), bytes);
    aoalab::Rng rng(9);
    for (int rep = 0; rep < 10; ++rep) {
        const auto s = probe({rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0)});
        EXPECT_EQ(aoalab::hierarchical_predict(model, s, nullptr),
                  aoalab::hierarchical_predict(loaded, s, nullptr));
    }
}

// Windows carved from ten synthetic tracks (five per region, reduced subcarrier
// count to keep this quick).  Dominant-path windows give tight azimuth features
// while dense-scattering windows spread, so the region stage should route nearly
// every holdout window to the right side.  Not literally every one: a diffuse
// track can still land close enough to a dominant-path drift tube to trade a
// window or two, so the bar is 90% rather than perfection.
TEST(OfflineHierarchical, RegionStageSeparatesGeneratedCampaignHoldout) {
    auto plan = aoalab::default_campaign_plan(6000);
    plan.geometry.subcarriers = 8;
    const auto wplan = aoalab::make_window_plan(1000, 0.5, 6000);

    std::vector<AoaSample> all;
    for (const auto& track : plan.tracks) {
        const auto csi = aoalab::generate_track(plan.geometry, track, 424242);
        auto feats = aoalab::extract_features(csi, wplan, aoalab::Estimator::ESPRIT);
        all.insert(all.end(), feats.begin(), feats.end());
    }
    ASSERT_EQ(all.size(), 110u);

    const auto region_data = aoalab::make_region_dataset(all);
    const auto split = aoalab::stratified_split(region_data.labels, 0.2, 31);

    std::vector<AoaSample> train_los, train_nlos;
    for (std::size_t i : split.train) {
        const auto& s = region_data.samples[i];
        (s.region == Region::LoS ? train_los : train_nlos).push_back(s);
    }
    ClassifierConfig cfg;
    cfg.n_estimators = 60;
    cfg.max_features = aoalab::FeatureSubset::Sqrt;
    const auto model = aoalab::train_hierarchical(
        aoalab::make_track_dataset(train_los), aoalab::make_track_dataset(train_nlos),
        ModelKind::RF, ModelKind::DT, ModelKind::DT, 47, cfg);

    std::size_t correct = 0;
    std::size_t routed_los = 0, routed_nlos = 0;
    for (std::size_t i : split.holdout) {
        aoalab::RouteInfo info;
        aoalab::hierarchical_predict(model, region_data.samples[i], &info);
        (info.region == Region::LoS ? routed_los : routed_nlos)++;
        if (info.region == region_data.samples[i].region) ++correct;
    }
    ASSERT_FALSE(split.holdout.empty());
    const double acc = double(correct) / double(split.holdout.size());
    EXPECT_GE(acc, 0.9) << "routed " << correct << "/" << split.holdout.size();
    // Both branches must actually be exercised, otherwise a constant router
    // could sneak past the accuracy bar.
    EXPECT_GT(routed_los, 0u);
    EXPECT_GT(routed_nlos, 0u);
}

// ==========================================================================
// stacked ensemble

TEST(OfflineStacking, FoldCountMustFitSmallestClass) {
    const auto data = aoalab::make_track_dataset(blob_samples({{-10.0}, {10.0}}, {1, 2}, 3, 1.0, 7));
    EXPECT_THROW(aoalab::stacking_train({ModelKind::LR}, data, 5, 1), aoalab::FoldTooSmall);
}

TEST(OfflineStacking, SingleBaseStackTracksBaseAccuracy) {
    const auto samples = blob_samples(
        {{-40.0, -10.0}, {0.0, 35.0}, {40.0, -30.0}}, {1, 2, 3}, 40, 3.0, 111);
    const Dataset data = aoalab::make_track_dataset(samples);
    const auto split = aoalab::stratified_split(data.labels, 0.25, 13);
    const auto train = aoalab::subset(data, split.train);

    ClassifierConfig cfg;
    cfg.n_estimators = 40;
    const auto base = aoalab::train_classifier(ModelKind::RF, train, cfg, 77);
    const auto stack = aoalab::stacking_train({ModelKind::RF}, train, 5, 77, {cfg});
    const double base_acc = holdout_accuracy(base, data, split.holdout);
    const double stack_acc = holdout_accuracy(stack, data, split.holdout);
    EXPECT_NEAR(stack_acc, base_acc, 0.02 + 1e-12);
}

TEST(OfflineStacking, DuplicateBaseKindsAreAllowed) {
    const auto samples = blob_samples({{-20.0, 0.0}, {20.0, 10.0}}, {1, 2}, 20, 4.0, 113);
    const Dataset data = aoalab::make_track_dataset(samples);
    const auto stack = aoalab::stacking_train({ModelKind::KNN, ModelKind::KNN}, data, 4, 3);
    const auto p = aoalab::predict_proba(stack, data.samples[0]);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-9);
    const auto loaded = aoalab::load_artifact(stack.to_bytes());
    EXPECT_EQ(loaded.to_bytes(), stack.to_bytes());
}

TEST(OfflineStacking, FourKindStackKeepsUpWithBestSingle) {
    // overlapping clusters: no base model is perfect, the stack should not
    // trail the best of them by more than a point on the holdout
    const auto samples = blob_samples(
        {{-15.0, -10.0}, {0.0, 12.0}, {14.0, -8.0}}, {1, 2, 3}, 150, 9.0, 117);
    const Dataset data = aoalab::make_track_dataset(samples);
    const auto split = aoalab::stratified_split(data.labels, 0.3, 21);
    const auto train = aoalab::subset(data, split.train);

    ClassifierConfig cfg;
    cfg.n_estimators = 60;
    double best_single = 0.0;
    const std::vector<ModelKind> kinds{ModelKind::LR, ModelKind::KNN, ModelKind::RF,
                                       ModelKind::GBM};
    for (ModelKind kind : kinds) {
        const auto m = aoalab::train_classifier(kind, train, cfg, 19);
        best_single = std::max(best_single, holdout_accuracy(m, data, split.holdout));
    }
    const auto stack = aoalab::stacking_train(kinds, train, 5, 19, {cfg, cfg, cfg, cfg});
    const double stack_acc = holdout_accuracy(stack, data, split.holdout);
    EXPECT_GE(stack_acc, best_single - 0.01 - 1e-12);
}

// ==========================================================================
// random hyperparameter search

TEST(OfflineSearch, SingleTrialReturnsItsOwnScore) {
    const auto data = aoalab::make_track_dataset(
        blob_samples({{-20.0, 0.0}, {20.0, 5.0}}, {1, 2}, 20, 5.0, 121));
    aoalab::HyperparamSpace space;
    const auto result = aoalab::random_search(ModelKind::KNN, space, data, 1, 4, 51);
    ASSERT_EQ(result.log.size(), 1u);
    EXPECT_EQ(result.best_index, 0u);
    EXPECT_EQ(result.best_score, result.log[0].score);
    EXPECT_EQ(result.best_config.knn_k, result.log[0].config.knn_k);
}

TEST(OfflineSearch, CollapsedSpaceEqualsDirectCrossValidation) {
    const auto data = aoalab::make_track_dataset(
        blob_samples({{-25.0, 0.0}, {0.0, 20.0}, {25.0, -5.0}}, {1, 2, 3}, 16, 6.0, 123));
    aoalab::HyperparamSpace space;
    space.knn_k_min = space.knn_k_max = 7;
    space.knn_try_distance_weights = false;

    const auto result = aoalab::random_search(ModelKind::KNN, space, data, 5, 4, 61);
    ClassifierConfig cfg;
    cfg.knn_k = 7;
    cfg.knn_distance_weights = false;
    const double direct = aoalab::cross_val_accuracy(ModelKind::KNN, cfg, data, 4, 61);
    EXPECT_EQ(result.best_score, direct);
    for (const auto& trial : result.log) {
        EXPECT_EQ(trial.config.knn_k, 7);
        EXPECT_EQ(trial.score, direct);
    }
}

TEST(OfflineSearch, FiftyTrialsDoNotLoseToDefaultNeighbors) {
    // mildly noisy data where the best k is unlikely to be exactly the default
    const auto data = aoalab::make_track_dataset(
        blob_samples({{-12.0, 0.0}, {0.0, 10.0}, {12.0, -6.0}}, {1, 2, 3}, 30, 7.0, 127));
    aoalab::HyperparamSpace space;
    const auto result = aoalab::random_search(ModelKind::KNN, space, data, 50, 5, 71);
    EXPECT_EQ(result.log.size(), 50u);

    ClassifierConfig default_cfg;  // k = 5, uniform votes
    const double default_score =
        aoalab::cross_val_accuracy(ModelKind::KNN, default_cfg, data, 5, 71);
    EXPECT_GE(result.best_score, default_score - 1e-12);
    for (const auto& trial : result.log) {
        EXPECT_GE(trial.config.knn_k, 1);
        EXPECT_LE(trial.config.knn_k, 30);
        EXPECT_GE(result.best_score, trial.score - 1e-12);
    }
}

TEST(OfflineSearch, CrossValidationIsDeterministic) {
    const auto data = aoalab::make_track_dataset(
        blob_samples({{-15.0, 2.0}, {15.0, -2.0}}, {1, 2}, 24, 6.0, 131));
    ClassifierConfig cfg;
    cfg.n_estimators = 25;
    const double a = aoalab::cross_val_accuracy(ModelKind::RF, cfg, data, 4, 81);
    const double b = aoalab::cross_val_accuracy(ModelKind::RF, cfg, data, 4, 81);
    EXPECT_EQ(a, b);
}

// ==========================================================================
// buffer-vs-cumulative retraining

TEST(OfflineRetrain, RejectsDatasetsTooSmallToBatch) {
    const auto data = aoalab::make_track_dataset(blob_samples({{-10.0}, {10.0}}, {1, 2}, 4, 1.0, 3));
    EXPECT_THROW(aoalab::retraining_experiment(data, ModelKind::DT,
                                               aoalab::RetrainStrategy::Cumulative, 10, 2, 1),
                 aoalab::TooFewSamples);
}

TEST(OfflineRetrain, SingleBatchMakesStrategiesIdentical) {
    const auto data = aoalab::make_track_dataset(
        blob_samples({{-20.0, 0.0}, {20.0, 5.0}}, {1, 2}, 30, 5.0, 137));
    const auto buffer = aoalab::retraining_experiment(data, ModelKind::DT,
                                                      aoalab::RetrainStrategy::Buffer, 1, 4, 91);
    const auto cumulative = aoalab::retraining_experiment(
        data, ModelKind::DT, aoalab::RetrainStrategy::Cumulative, 1, 4, 91);
    ASSERT_EQ(buffer.mean_accuracy.size(), 1u);
    ASSERT_EQ(cumulative.mean_accuracy.size(), 1u);
    EXPECT_EQ(buffer.mean_accuracy[0], cumulative.mean_accuracy[0]);
    EXPECT_EQ(buffer.stddev_accuracy[0], cumulative.stddev_accuracy[0]);
    EXPECT_EQ(buffer.train_sizes[0], cumulative.train_sizes[0]);
}

TEST(OfflineRetrain, CumulativeSizesGrowLinearly) {
    // 3 classes x 100 each, 20% holdout -> 240 in the pool, 10 batches:
    // every batch holds 8 per class, so cumulative sizes step by 24 exactly.
    const auto data = aoalab::make_track_dataset(blob_samples(
        {{-30.0, 0.0}, {0.0, 25.0}, {30.0, -10.0}}, {1, 2, 3}, 100, 6.0, 139));
    const auto buffer = aoalab::retraining_experiment(data, ModelKind::DT,
                                                      aoalab::RetrainStrategy::Buffer, 10, 3, 93);
    const auto cumulative = aoalab::retraining_experiment(
        data, ModelKind::DT, aoalab::RetrainStrategy::Cumulative, 10, 3, 93);
    ASSERT_EQ(buffer.train_sizes.size(), 10u);
    ASSERT_EQ(cumulative.train_sizes.size(), 10u);
    for (std::size_t b = 0; b < 10; ++b) {
        EXPECT_EQ(buffer.train_sizes[b], 24u);
        EXPECT_EQ(cumulative.train_sizes[b], 24u * (b + 1));
    }
}

TEST(OfflineRetrain, CumulativeDoesNotTrailBufferOnStationaryData) {
    const auto data = aoalab::make_track_dataset(blob_samples(
        {{-25.0, 0.0}, {0.0, 20.0}, {25.0, -10.0}}, {1, 2, 3}, 60, 8.0, 149));
    const auto buffer = aoalab::retraining_experiment(data, ModelKind::DT,
                                                      aoalab::RetrainStrategy::Buffer, 10, 6, 97);
    const auto cumulative = aoalab::retraining_experiment(
        data, ModelKind::DT, aoalab::RetrainStrategy::Cumulative, 10, 6, 97);
    EXPECT_GE(cumulative.mean_accuracy.back(), buffer.mean_accuracy.back() - 0.02);
    for (double sd : cumulative.stddev_accuracy) EXPECT_GE(sd, 0.0);
}
