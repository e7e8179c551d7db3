// Conditional generative augmentation: ELBO training, conditional sampling,
// replay-buffer upsampling, and classifier-based quality scoring.
//
// Oracles used here: the step log must satisfy the ELBO decomposition
// identity exactly as logged; the assembled encoder/reparameterization/decoder
// gradient is checked against central finite differences; moment matching on
// known Gaussian clusters compares generated class means against the real
// empirical moments; the macro metrics are verified against a hand-computed
// confusion table; and upsampling counts reduce to integer arithmetic.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "aoalab/augment.hpp"
#include "aoalab/errors.hpp"
#include "aoalab/offline.hpp"
#include "aoalab/rng.hpp"
#include "support/finite_difference.hpp"

using aoalab::AoaSample;
using aoalab::AugmentMetrics;
using aoalab::CvaeConfig;
using aoalab::CvaeModel;
using aoalab::CvaeSampleStats;
using aoalab::CvaeTrainResult;
using aoalab::Dataset;
using aoalab::Matrix;
using aoalab::ModelArtifact;
using aoalab::ReplayBuffer;
using aoalab::Rng;

namespace {

// Gaussian blobs keyed by track id; one blob per class, isotropic noise.
Dataset blob_pool(const std::vector<std::vector<double>>& centers, std::size_t per_class,
                  double sigma, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<AoaSample> samples;
    for (std::size_t c = 0; c < centers.size(); ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            AoaSample s;
            s.track_id = static_cast<int>(c);
            s.features.resize(centers[c].size());
            for (std::size_t d = 0; d < centers[c].size(); ++d)
                s.features[d] = centers[c][d] + rng.normal(0.0, sigma);
            samples.push_back(std::move(s));
        }
    }
    return aoalab::make_track_dataset(samples);
}

std::vector<std::vector<double>> random_centers(std::size_t classes, std::size_t dim,
                                                double spread, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
    for (auto& c : centers)
        for (auto& v : c) v = rng.uniform() < 0.5 ? -spread : spread;
    return centers;
}

// One constant feature vector repeated; degenerate but legal training data.
Dataset constant_pool(const std::vector<std::vector<double>>& vectors, std::size_t copies) {
    std::vector<AoaSample> samples;
    for (std::size_t c = 0; c < vectors.size(); ++c) {
        for (std::size_t i = 0; i < copies; ++i) {
            AoaSample s;
            s.track_id = static_cast<int>(c);
            s.features = vectors[c];
            samples.push_back(std::move(s));
        }
    }
    return aoalab::make_track_dataset(samples);
}

// Small network sized to the data; keeps module tests fast.
CvaeConfig small_cfg(std::size_t dim) {
    CvaeConfig cfg;
    cfg.feature_dim = dim;
    cfg.latent_dim = 8;
    cfg.encoder_hidden = {16, 8};
    cfg.decoder_hidden = {8, 16};
    cfg.epochs = 5;
    cfg.batch = 32;
    return cfg;
}

CvaeTrainResult quick_train(const Dataset& data, std::size_t epochs, std::uint64_t seed) {
    auto cfg = small_cfg(data.samples.front().features.size());
    cfg.epochs = epochs;
    return aoalab::cvae_train(data, cfg, seed);
}

std::map<int, std::size_t> label_histogram(const Dataset& data) {
    std::map<int, std::size_t> hist;
    for (int l : data.labels) ++hist[l];
    return hist;
}

// ---------------------------------------------------------------------------
// training

TEST(AugmentTraining, ElboDecompositionHoldsAtEveryStep) {
    const auto data = blob_pool(random_centers(3, 8, 2.0, 11), 30, 0.8, 12);
    for (double beta : {0.7, 2.0}) {
        auto cfg = small_cfg(8);
        cfg.beta = beta;
        cfg.epochs = 15;
        const auto result = aoalab::cvae_train(data, cfg, 77);
        ASSERT_FALSE(result.step_log.empty());
        for (const auto& step : result.step_log) {
            EXPECT_NEAR(step.total, step.recon + beta * step.kl, 1e-10);
            EXPECT_GE(step.kl, 0.0);
            EXPECT_GE(step.recon, 0.0);
        }
        EXPECT_EQ(result.val_elbo.size(), cfg.epochs);
        // The reported checkpoint is the first validation minimum.
        std::size_t arg = 0;
        for (std::size_t e = 1; e < result.val_elbo.size(); ++e)
            if (result.val_elbo[e] < result.val_elbo[arg]) arg = e;
        EXPECT_EQ(result.best_epoch, arg);
    }
}

TEST(AugmentTraining, BetaZeroMemorizesConstantVectors) {
    // One constant vector per class; with the divergence weight off, the
    // decoder can push the reconstruction error to zero by memorizing the
    // per-condition target.
    const std::vector<std::vector<double>> vectors = {
        {4.0, -2.0, 1.0, 0.5, -1.5, 3.0}, {-3.0, 2.5, -0.5, 1.0, 2.0, -4.0}};
    const auto data = constant_pool(vectors, 8);
    auto cfg = small_cfg(6);
    cfg.beta = 0.0;
    cfg.epochs = 500;
    cfg.batch = 16;
    cfg.lr = 5e-3;
    const auto result = aoalab::cvae_train(data, cfg, 3);
    ASSERT_GE(result.step_log.size(), 100u);
    double tail = 0.0;
    for (std::size_t i = result.step_log.size() - 20; i < result.step_log.size(); ++i)
        tail += result.step_log[i].recon;
    tail /= 20.0;
    EXPECT_LT(tail, 1e-2);
    EXPECT_LT(tail, result.step_log.front().recon / 100.0);
}

TEST(AugmentTraining, TrainingIsDeterministicInTheSeed) {
    const auto data = blob_pool(random_centers(2, 6, 2.0, 21), 20, 0.7, 22);
    const auto a = quick_train(data, 6, 99);
    const auto b = quick_train(data, 6, 99);
    ASSERT_EQ(a.step_log.size(), b.step_log.size());
    for (std::size_t i = 0; i < a.step_log.size(); ++i) {
        EXPECT_EQ(a.step_log[i].total, b.step_log[i].total);
        EXPECT_EQ(a.step_log[i].recon, b.step_log[i].recon);
        EXPECT_EQ(a.step_log[i].kl, b.step_log[i].kl);
    }
    const auto c = quick_train(data, 6, 100);
    bool differs = c.step_log.size() != a.step_log.size();
    for (std::size_t i = 0; !differs && i < a.step_log.size(); ++i)
        differs = a.step_log[i].total != c.step_log[i].total;
    EXPECT_TRUE(differs);
}

TEST(AugmentTraining, RejectsOversizedClassSpaces) {
    std::vector<std::vector<double>> centers(21, std::vector<double>(4, 0.0));
    for (std::size_t c = 0; c < centers.size(); ++c) centers[c][0] = static_cast<double>(c);
    const auto data = blob_pool(centers, 2, 0.1, 5);
    EXPECT_THROW(quick_train(data, 2, 1), aoalab::TooManyClasses);
}

TEST(AugmentTraining, RejectsDegenerateDatasets) {
    EXPECT_THROW(aoalab::cvae_train(Dataset{}, small_cfg(4), 1), aoalab::DegenerateDataset);

    AoaSample lone;
    lone.features = {1.0, 2.0, 3.0, 4.0};
    const auto single = aoalab::make_track_dataset({lone});
    EXPECT_THROW(aoalab::cvae_train(single, small_cfg(4), 1), aoalab::DegenerateDataset);

    // Width disagreement between the data and the configured input layer.
    const auto data = blob_pool(random_centers(2, 3, 1.0, 31), 5, 0.5, 32);
    EXPECT_THROW(aoalab::cvae_train(data, small_cfg(4), 1), aoalab::InvalidArgument);
}

TEST(AugmentTraining, StepGradientsMatchFiniteDifferences) {
    // The assembled chain (encoder trunk, two heads, noise reparameterization,
    // decoder, reconstruction + weighted divergence) has hand-written glue
    // gradients between the networks; probe all four parameter blocks.
    CvaeConfig cfg;
    cfg.feature_dim = 5;
    cfg.condition_dim = 4;
    cfg.latent_dim = 3;
    cfg.encoder_hidden = {6};
    cfg.decoder_hidden = {6};
    cfg.beta = 0.8;
    CvaeModel model(cfg, {0, 1}, 42);

    const std::size_t n = 4;
    Rng rng(7);
    Matrix x(n, cfg.feature_dim);
    for (auto& v : x.data) v = rng.normal();
    Matrix cond(n, cfg.condition_dim);
    for (std::size_t r = 0; r < n; ++r) cond.at(r, r % 2) = 1.0;
    Matrix eps(n, cfg.latent_dim);
    for (auto& v : eps.data) v = rng.normal();

    const auto loss = [&]() {
        return aoalab::detail::cvae_batch_step(model, x, cond, eps, false).total;
    };
    aoalab::detail::cvae_batch_step(model, x, cond, eps, true);

    struct Block {
        const char* name;
        aoalab::Mlp* net;
    };
    const std::vector<Block> blocks = {{"trunk", &model.trunk()},
                                       {"mu", &model.mu_head()},
                                       {"logvar", &model.logvar_head()},
                                       {"decoder", &model.decoder()}};
    for (const auto& block : blocks) {
        const std::vector<double> analytic = block.net->grads();
        Rng probe(301);
        const double worst = testsupport::max_gradient_error(
            loss, block.net->mutable_params(), analytic, 50, probe);
        EXPECT_LT(worst, 1e-4) << block.name;
    }
}

TEST(AugmentTraining, MomentMatchingOnKnownClusters) {
    // Train on ten well-separated Gaussian clusters, then compare generated
    // per-class means against the real empirical moments: the mean absolute
    // deviation per feature must stay below half the within-class spread.
    const std::size_t classes = 10, dim = 20, per_class = 60;
    const auto centers = random_centers(classes, dim, 3.0, 41);
    const auto data = blob_pool(centers, per_class, 0.6, 42);

    CvaeConfig cfg;
    cfg.feature_dim = dim;
    cfg.latent_dim = 16;
    cfg.encoder_hidden = {64, 32};
    cfg.decoder_hidden = {32, 64};
    cfg.epochs = 200;
    auto result = aoalab::cvae_train(data, cfg, 7);

    // Real per-class empirical moments.
    std::vector<std::vector<double>> real_mean(classes, std::vector<double>(dim, 0.0));
    std::vector<std::vector<double>> real_sq(classes, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(classes, 0);
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const auto c = static_cast<std::size_t>(data.labels[i]);
        ++counts[c];
        for (std::size_t d = 0; d < dim; ++d) {
            real_mean[c][d] += data.samples[i].features[d];
            real_sq[c][d] += data.samples[i].features[d] * data.samples[i].features[d];
        }
    }

    CvaeSampleStats stats;
    std::vector<std::vector<double>> gen_means(classes);
    double within_std_sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t d = 0; d < dim; ++d) {
            real_mean[c][d] /= static_cast<double>(counts[c]);
            real_sq[c][d] = real_sq[c][d] / static_cast<double>(counts[c]) -
                            real_mean[c][d] * real_mean[c][d];
        }
        const auto generated = aoalab::cvae_sample(result.model, static_cast<int>(c), 1000,
                                                   aoalab::seed_for(900, std::to_string(c)),
                                                   &stats);
        ASSERT_EQ(generated.size(), 1000u);
        std::vector<double> gen_mean(dim, 0.0);
        for (const auto& s : generated)
            for (std::size_t d = 0; d < dim; ++d) gen_mean[d] += s.features[d];
        double dev = 0.0, spread = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            gen_mean[d] /= 1000.0;
            dev += std::fabs(gen_mean[d] - real_mean[c][d]);
            spread += std::sqrt(std::max(0.0, real_sq[c][d]));
        }
        dev /= static_cast<double>(dim);
        spread /= static_cast<double>(dim);
        EXPECT_LT(dev, 0.5 * spread) << "class " << c;
        gen_means[c] = std::move(gen_mean);
        within_std_sum += spread;
    }

    // Conditioning keeps the clusters apart: mean pairwise distance between
    // generated class means must exceed the mean within-class spread.
    double pairwise = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < classes; ++a) {
        for (std::size_t b = a + 1; b < classes; ++b) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff = gen_means[a][d] - gen_means[b][d];
                d2 += diff * diff;
            }
            pairwise += std::sqrt(d2);
            ++pairs;
        }
    }
    EXPECT_GT(pairwise / static_cast<double>(pairs), within_std_sum / static_cast<double>(classes));

    // Angular clamping is a rare event on in-range data.
    ASSERT_GT(stats.values, 0u);
    EXPECT_LE(static_cast<double>(stats.clamped), 0.01 * static_cast<double>(stats.values));
}

TEST(AugmentTraining, ZeroNoiseReconstructionIsDeterministic) {
    const auto data = blob_pool(random_centers(2, 6, 2.0, 51), 15, 0.5, 52);
    auto result = quick_train(data, 30, 8);
    const auto a = aoalab::cvae_reconstruct(result.model, data, true, 1);
    const auto b = aoalab::cvae_reconstruct(result.model, data, true, 2);
    ASSERT_EQ(a.size(), data.samples.size());
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].size(), data.samples[i].features.size());
        for (std::size_t d = 0; d < a[i].size(); ++d) EXPECT_EQ(a[i][d], b[i][d]);
    }
    // With noise on, the seed decides the outcome.
    const auto c = aoalab::cvae_reconstruct(result.model, data, false, 3);
    const auto e = aoalab::cvae_reconstruct(result.model, data, false, 3);
    const auto f = aoalab::cvae_reconstruct(result.model, data, false, 4);
    EXPECT_EQ(c, e);
    EXPECT_NE(c, f);
}

// ---------------------------------------------------------------------------
// sampling

TEST(AugmentSampling, CountZeroYieldsEmptyList) {
    const auto data = blob_pool(random_centers(2, 4, 1.5, 61), 10, 0.5, 62);
    auto result = quick_train(data, 3, 9);
    EXPECT_TRUE(aoalab::cvae_sample(result.model, 0, 0, 5).empty());
}

TEST(AugmentSampling, SameSeedReproducesSamples) {
    const auto data = blob_pool(random_centers(2, 4, 1.5, 63), 10, 0.5, 64);
    auto result = quick_train(data, 3, 10);
    const auto a = aoalab::cvae_sample(result.model, 1, 25, 77);
    const auto b = aoalab::cvae_sample(result.model, 1, 25, 77);
    const auto c = aoalab::cvae_sample(result.model, 1, 25, 78);
    ASSERT_EQ(a.size(), 25u);
    ASSERT_EQ(b.size(), 25u);
    bool identical = true, differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        identical = identical && a[i].features == b[i].features;
        differs = differs || a[i].features != c[i].features;
    }
    EXPECT_TRUE(identical);
    EXPECT_TRUE(differs);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_TRUE(a[i].synthetic);
        EXPECT_TRUE(a[i].valid);
        EXPECT_EQ(a[i].track_id, 1);
        EXPECT_EQ(a[i].window_index, i);
        EXPECT_EQ(a[i].features.size(), 4u);
    }
}

TEST(AugmentSampling, UnknownClassIsRejected) {
    const auto data = blob_pool(random_centers(2, 4, 1.5, 65), 10, 0.5, 66);
    auto result = quick_train(data, 3, 11);
    EXPECT_THROW(aoalab::cvae_sample(result.model, 9, 5, 1), aoalab::UnknownClass);
}

TEST(AugmentSampling, BalancedGenerationBookkeeping) {
    const auto data = blob_pool(random_centers(10, 6, 2.0, 67), 12, 0.5, 68);
    auto result = quick_train(data, 3, 12);
    std::map<int, std::size_t> per_class;
    std::size_t total = 0;
    CvaeSampleStats stats;
    for (int c = 0; c < 10; ++c) {
        const auto s = aoalab::cvae_sample(result.model, c, 1000,
                                           aoalab::seed_for(5, std::to_string(c)), &stats);
        per_class[c] = s.size();
        total += s.size();
    }
    EXPECT_EQ(total, 10000u);
    for (int c = 0; c < 10; ++c) EXPECT_EQ(per_class[c], 1000u);
    EXPECT_EQ(stats.values, 10000u * 6u);
}

TEST(AugmentSampling, OutOfRangeDecodesAreClampedAndCounted) {
    // A single constant vector outside the angular range: standardization
    // collapses the target to zero deviation, so every decoded feature lands
    // at the stored mean of 91 degrees and must be clamped back to 90.
    const auto data = constant_pool({{91.0, 91.0, 91.0, 91.0}}, 12);
    auto cfg = small_cfg(4);
    cfg.beta = 0.0;
    const auto result = aoalab::cvae_train(data, cfg, 13);
    CvaeSampleStats stats;
    auto model = result.model;
    const auto samples = aoalab::cvae_sample(model, 0, 200, 14, &stats);
    ASSERT_EQ(samples.size(), 200u);
    for (const auto& s : samples)
        for (double f : s.features) EXPECT_DOUBLE_EQ(f, 90.0);
    EXPECT_EQ(stats.values, 200u * 4u);
    EXPECT_EQ(stats.clamped, stats.values);
}

// ---------------------------------------------------------------------------
// classifier-based evaluation

// Deterministic stand-in classifier: predicts the class written into the
// first feature of each sample, over class space {0, 1, 2}.
struct FixedModel final : aoalab::Model {
    std::vector<int> classes{0, 1, 2};
    std::string kind_name() const override { return "fixed"; }
    std::size_t feature_dim() const override { return 1; }
    const std::vector<int>& class_space() const override { return classes; }
    std::vector<double> predict_proba(const double* x, std::size_t) const override {
        std::vector<double> p(classes.size(), 0.0);
        auto idx = static_cast<std::size_t>(std::max(0.0, std::min(2.0, x[0])));
        p[idx] = 1.0;
        return p;
    }
    nlohmann::ordered_json payload() const override {
        return nlohmann::ordered_json::object();
    }
};

ModelArtifact fixed_artifact() {
    ModelArtifact artifact;
    artifact.kind = "fixed";
    artifact.config = nlohmann::ordered_json::object();
    artifact.runtime = std::make_shared<FixedModel>();
    return artifact;
}

Dataset labeled_predictions(const std::vector<int>& truths, const std::vector<int>& preds) {
    std::vector<AoaSample> samples;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        AoaSample s;
        s.track_id = truths[i];
        s.features = {static_cast<double>(preds[i])};
        samples.push_back(std::move(s));
    }
    return aoalab::make_track_dataset(samples);
}

TEST(AugmentEval, MacroMetricsMatchHandComputedTable) {
    // truths 0,0,1,1,2,2 against predictions 0,1,1,1,2,0:
    //   class 0: TP=1 FP=1 FN=1  -> P=1/2  R=1/2  F1=1/2
    //   class 1: TP=2 FP=1 FN=0  -> P=2/3  R=1    F1=4/5
    //   class 2: TP=1 FP=0 FN=1  -> P=1    R=1/2  F1=2/3
    const auto data = labeled_predictions({0, 0, 1, 1, 2, 2}, {0, 1, 1, 1, 2, 0});
    const auto m = aoalab::augment_eval(fixed_artifact(), data);
    EXPECT_NEAR(m.accuracy, 4.0 / 6.0, 1e-12);
    EXPECT_NEAR(m.precision, (0.5 + 2.0 / 3.0 + 1.0) / 3.0, 1e-12);
    EXPECT_NEAR(m.recall, (0.5 + 1.0 + 0.5) / 3.0, 1e-12);
    EXPECT_NEAR(m.f1, (0.5 + 0.8 + 2.0 / 3.0) / 3.0, 1e-12);
}

TEST(AugmentEval, UndefinedPrecisionCountsAsZero) {
    // Nothing is ever predicted as class 2, and class 0 absorbs everything:
    // the empty-denominator convention scores the missing class at zero.
    const auto data = labeled_predictions({0, 1, 2}, {0, 0, 0});
    const auto m = aoalab::augment_eval(fixed_artifact(), data);
    EXPECT_NEAR(m.accuracy, 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(m.precision, (1.0 / 3.0 + 0.0 + 0.0) / 3.0, 1e-12);
    EXPECT_NEAR(m.recall, (1.0 + 0.0 + 0.0) / 3.0, 1e-12);
    EXPECT_NEAR(m.f1, (0.5 + 0.0 + 0.0) / 3.0, 1e-12);
}

TEST(AugmentEval, IdentitySetMatchesTrainingAccuracy) {
    const auto data = blob_pool(random_centers(4, 8, 2.5, 71), 25, 0.8, 72);
    aoalab::ClassifierConfig cfg;
    cfg.n_estimators = 20;
    cfg.max_depth = 8;
    const auto artifact = aoalab::train_classifier(aoalab::ModelKind::RF, data, cfg, 19);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const auto& f = data.samples[i].features;
        const auto proba = artifact.runtime->predict_proba(f.data(), f.size());
        const auto arg = static_cast<std::size_t>(
            std::max_element(proba.begin(), proba.end()) - proba.begin());
        if (artifact.runtime->class_space()[arg] == data.labels[i]) ++correct;
    }
    const double train_acc =
        static_cast<double>(correct) / static_cast<double>(data.samples.size());

    const auto m = aoalab::augment_eval(artifact, data);
    EXPECT_DOUBLE_EQ(m.accuracy, train_acc);
}

TEST(AugmentEval, PermutedLabelsScoreAtChance) {
    const auto data = blob_pool(random_centers(4, 8, 2.5, 73), 25, 0.8, 74);
    aoalab::ClassifierConfig cfg;
    cfg.n_estimators = 20;
    cfg.max_depth = 8;
    const auto artifact = aoalab::train_classifier(aoalab::ModelKind::RF, data, cfg, 20);

    Dataset shifted = data;
    for (auto& l : shifted.labels) l = (l + 1) % 4;
    const auto m = aoalab::augment_eval(artifact, shifted);
    EXPECT_LE(m.accuracy, 0.25 + 0.1);
}

TEST(AugmentEval, ClassSpaceMismatchIsRejected) {
    const auto data = blob_pool(random_centers(3, 6, 2.0, 75), 10, 0.6, 76);
    aoalab::ClassifierConfig cfg;
    cfg.n_estimators = 5;
    const auto artifact = aoalab::train_classifier(aoalab::ModelKind::RF, data, cfg, 21);

    Dataset rogue = data;
    rogue.labels[0] = 99;
    rogue.class_space.push_back(99);
    EXPECT_THROW(aoalab::augment_eval(artifact, rogue), aoalab::ClassSpaceMismatch);
}

TEST(AugmentEval, SyntheticBenchmarkScoresWell) {
    // End-to-end quality gate: a forest trained on real clusters must score
    // well above chance on generated samples labeled by their conditioning.
    const std::size_t classes = 5, dim = 20;
    const auto data = blob_pool(random_centers(classes, dim, 3.0, 81), 80, 0.8, 82);
    aoalab::ClassifierConfig rf_cfg;
    rf_cfg.n_estimators = 50;
    rf_cfg.max_depth = 12;
    const auto artifact = aoalab::train_classifier(aoalab::ModelKind::RF, data, rf_cfg, 23);

    CvaeConfig cfg;
    cfg.feature_dim = dim;
    cfg.latent_dim = 16;
    cfg.encoder_hidden = {64, 32};
    cfg.decoder_hidden = {32, 64};
    cfg.epochs = 150;
    auto result = aoalab::cvae_train(data, cfg, 24);

    std::vector<AoaSample> generated;
    std::vector<int> labels;
    for (std::size_t c = 0; c < classes; ++c) {
        auto s = aoalab::cvae_sample(result.model, static_cast<int>(c), 100,
                                     aoalab::seed_for(25, std::to_string(c)));
        for (auto& sample : s) {
            generated.push_back(std::move(sample));
            labels.push_back(static_cast<int>(c));
        }
    }
    Dataset synthetic;
    synthetic.samples = std::move(generated);
    synthetic.labels = std::move(labels);
    synthetic.class_space = data.class_space;

    const auto m = aoalab::augment_eval(artifact, synthetic);
    EXPECT_GE(m.accuracy, 0.75);
    // Balanced ground truth makes macro recall coincide with accuracy.
    EXPECT_NEAR(m.recall, m.accuracy, 1e-12);
    for (double v : {m.precision, m.recall, m.f1}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

// ---------------------------------------------------------------------------
// replay buffer and upsampling

AoaSample tagged_sample(int track, std::size_t window, double value, std::size_t dim = 4) {
    AoaSample s;
    s.track_id = track;
    s.window_index = window;
    s.features.assign(dim, value);
    return s;
}

TEST(AugmentBuffer, FifoEvictionKeepsMostRecent) {
    ReplayBuffer buffer(3, {0, 1});
    for (std::size_t i = 0; i < 5; ++i) {
        buffer.push(tagged_sample(static_cast<int>(i % 2), i, 1.0), static_cast<int>(i % 2));
        EXPECT_LE(buffer.size(), 3u);
    }
    ASSERT_EQ(buffer.size(), 3u);
     std::vector<std::size_t> windows;
    for (const auto& entry : buffer.stored()) windows.push_back(entry.sample.window_index);
    EXPECT_EQ(windows, (std::vector<std::size_t>{2, 3, 4}));
}

TEST(AugmentBuffer, RejectsLabelsOutsideClassSpace) {
    ReplayBuffer buffer(4, {0, 1});
    EXPECT_THROW(buffer.push(tagged_sample(7, 0, 1.0), 7), aoalab::UnknownClass);
    EXPECT_THROW(ReplayBuffer(0, {0}), aoalab::InvalidArgument);
}

TEST(AugmentBuffer, AtTargetBufferPassesThroughUntouched) {
    const auto data = blob_pool(random_centers(2, 4, 1.5, 91), 12, 0.5, 92);
    auto result = quick_train(data, 3, 26);
    ReplayBuffer buffer(64, data.class_space);
    for (std::size_t i = 0; i < data.samples.size(); ++i)
        buffer.push(data.samples[i], data.labels[i]);

    const auto out = aoalab::upsample_buffer(buffer, result.model, 12, 27);
    EXPECT_EQ(out.samples.size(), 24u);
    for (const auto& s : out.samples) EXPECT_FALSE(s.synthetic);
    const auto hist = label_histogram(out);
    EXPECT_EQ(hist.at(0), 12u);
    EXPECT_EQ(hist.at(1), 12u);
    EXPECT_EQ(out.class_space, data.class_space);
}

TEST(AugmentBuffer, EmptyClassIsFilledSynthetically) {
    const auto data = blob_pool(random_centers(2, 4, 1.5, 93), 12, 0.5, 94);
    auto result = quick_train(data, 3, 28);
    ReplayBuffer buffer(16, data.class_space);
    for (std::size_t i = 0; i < data.samples.size(); ++i)
        if (data.labels[i] == 0 && buffer.size() < 3) buffer.push(data.samples[i], 0);

    const auto out = aoalab::upsample_buffer(buffer, result.model, 4, 29);
    std::map<int, std::size_t> real, synth;
    for (std::size_t i = 0; i < out.samples.size(); ++i)
        ++(out.samples[i].synthetic ? synth : real)[out.labels[i]];
    EXPECT_EQ(real[0], 3u);
    EXPECT_EQ(synth[0], 1u);
    EXPECT_EQ(real[1], 0u);
    EXPECT_EQ(synth[1], 4u);
    EXPECT_EQ(out.samples.size(), 8u);
}

TEST(AugmentBuffer, UpsampleArithmeticIsExact) {
    const auto data = blob_pool(random_centers(5, 6, 2.0, 95), 10, 0.5, 96);
    auto result = quick_train(data, 2, 30);
    ReplayBuffer buffer(64, data.class_space);
    for (std::size_t i = 0; i < data.samples.size(); ++i)
        buffer.push(data.samples[i], data.labels[i]);

    const auto out = aoalab::upsample_buffer(buffer, result.model, 100, 31);
    EXPECT_EQ(out.samples.size(), 500u);
    std::map<int, std::size_t> real, synth;
    for (std::size_t i = 0; i < out.samples.size(); ++i)
        ++(out.samples[i].synthetic ? synth : real)[out.labels[i]];
    for (int c = 0; c < 5; ++c) {
        EXPECT_EQ(real[c], 10u) << "class " << c;
        EXPECT_EQ(synth[c], 90u) << "class " << c;
    }
}

TEST(AugmentBuffer, UncoveredBufferClassIsRejected) {
    const auto data = blob_pool(random_centers(2, 4, 1.5, 97), 10, 0.5, 98);
    auto result = quick_train(data, 2, 32);
    ReplayBuffer buffer(8, {0, 1, 2});
    buffer.push(tagged_sample(2, 0, 1.0), 2);
    EXPECT_THROW(aoalab::upsample_buffer(buffer, result.model, 4, 33), aoalab::UncoveredClass);

    ReplayBuffer empty(8, {0, 1});
    EXPECT_THROW(aoalab::upsample_buffer(empty, result.model, 4, 34), aoalab::InvalidArgument);
}

TEST(AugmentBuffer, UpsamplingIsDeterministic) {
    const auto data = blob_pool(random_centers(3, 5, 1.5, 99), 6, 0.5, 100);
    auto result = quick_train(data, 2, 35);
    ReplayBuffer buffer(32, data.class_space);
    for (std::size_t i = 0; i < data.samples.size(); ++i)
        buffer.push(data.samples[i], data.labels[i]);

    const auto a = aoalab::upsample_buffer(buffer, result.model, 10, 36);
    const auto b = aoalab::upsample_buffer(buffer, result.model, 10, 36);
    ASSERT_EQ(a.samples.size(), b.samples.size());
    EXPECT_EQ(a.labels, b.labels);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        EXPECT_EQ(a.samples[i].features, b.samples[i].features);
        EXPECT_EQ(a.samples[i].synthetic, b.samples[i].synthetic);
    }
}

// ---------------------------------------------------------------------------
// provenance CSV

TEST(AugmentCsv, ProvenanceColumnRoundTrips) {
    const auto dir = std::filesystem::temp_directory_path() / "aoalab_augment_csv";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "mixed.csv").string();

    std::vector<AoaSample> samples;
    samples.push_back(tagged_sample(3, 7, 1.25));
    samples.back().region = aoalab::Region::NLoS;
    samples.back().estimator = aoalab::Estimator::ESPRIT;
    samples.push_back(tagged_sample(1, 2, -3.5));
    samples.back().synthetic = true;
    samples.push_back(tagged_sample(0, 0, 0.125));
    samples.back().valid = false;

    aoalab::write_augmented_csv(path, samples);
    const auto loaded = aoalab::read_augmented_csv(path);
    ASSERT_EQ(loaded.size(), samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        EXPECT_EQ(loaded[i].features, samples[i].features);
        EXPECT_EQ(loaded[i].region, samples[i].region);
        EXPECT_EQ(loaded[i].track_id, samples[i].track_id);
        EXPECT_EQ(loaded[i].window_index, samples[i].window_index);
        EXPECT_EQ(loaded[i].estimator, samples[i].estimator);
        EXPECT_EQ(loaded[i].valid, samples[i].valid);
        EXPECT_EQ(loaded[i].synthetic, samples[i].synthetic);
    }
}

TEST(AugmentCsv, MalformedProvenanceIsRejected) {
    const auto dir = std::filesystem::temp_directory_path() / "aoalab_augment_csv_bad";
    std::filesystem::create_directories(dir);

    const auto good = (dir / "good.csv").string();
    aoalab::write_augmented_csv(good, {tagged_sample(0, 0, 1.0, 2)});
    auto text = [&](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), {});
    };
    std::string body = text(good);

    // Unknown provenance value.
    {
        auto broken = body;
        const auto pos = broken.rfind("real");
        ASSERT_NE(pos, std::string::npos);
        broken.replace(pos, 4, "bogus");
        const auto path = (dir / "bad_value.csv").string();
        std::ofstream(path, std::ios::binary) << broken;
        EXPECT_THROW(aoalab::read_augmented_csv(path), aoalab::FormatError);
    }
    // Header without the provenance column is a different format.
    {
        const auto path = (dir / "no_column.csv").string();
        aoalab::write_features_csv(path, {tagged_sample(0, 0, 1.0, 2)});
        EXPECT_THROW(aoalab::read_augmented_csv(path), aoalab::FormatError);
    }
}

}  // namespace
