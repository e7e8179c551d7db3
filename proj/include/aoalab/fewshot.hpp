#pragma once

// Prototypical-network few-shot learning on AoA feature vectors.
//
// An episode draws N classes, K support and Q query samples per class.  The
// embedding MLP maps features to a compact space; each class is summarized by
// the mean of its support embeddings and queries are scored by negative
// squared distance to those prototypes, softmaxed into class probabilities.
// Only the embedding parameters are trained — prototypes are recomputed from
// scratch every episode.
//
// Two regimes share the machinery: the standard episodic loop (sampling with
// reuse, one optimizer step per episode) and a continual variant where indices
// are never reused, episodes arrive until the pool is exhausted, and every
// update is followed by a re-evaluation of all earlier episodes to measure
// forgetting.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aoalab/errors.hpp"
#include "aoalab/matrix.hpp"
#include "aoalab/neural.hpp"
#include "aoalab/offline.hpp"
#include "aoalab/rng.hpp"

namespace aoalab {

// --- Episode ----------------------------------------------------------------

struct Episode {
    std::size_t way_n = 0;    // classes in the episode
    std::size_t shot_k = 0;   // support samples per class
    std::size_t query_q = 0;  // query samples per class
    std::vector<int> classes;                       // drawn class labels, way_n entries
    std::vector<std::vector<std::size_t>> support;  // [way][shot] dataset indices
    std::vector<std::vector<std::size_t>> query;    // [way][query] dataset indices
    std::size_t episode_index = 0;
};

// --- Model ------------------------------------------------------------------

struct ProtoNetConfig {
    std::size_t input_dim = 200;
    std::vector<std::size_t> hidden = {128, 64};  // batchnorm+relu+dropout stages
    std::size_t embed_dim = 32;                   // plain linear output
    double dropout = 0.3;
    bool batchnorm = true;
    double lr = 1e-3;  // Adam step size; 0 freezes the model entirely
};

namespace detail {

inline std::vector<LayerSpec> protonet_layers(const ProtoNetConfig& cfg) {
    std::vector<LayerSpec> specs;
    std::size_t prev = cfg.input_dim;
    for (std::size_t width : cfg.hidden) {
        specs.push_back({prev, width, cfg.batchnorm, Activation::relu, cfg.dropout});
        prev = width;
    }
    specs.push_back({prev, cfg.embed_dim, false, Activation::none, 0.0});
    return specs;
}

}  // namespace detail

class ProtoNetModel {
  public:
    ProtoNetModel(const ProtoNetConfig& cfg, std::uint64_t seed)
        : cfg_(cfg),
          net_(detail::protonet_layers(cfg), seed_for(seed, "embed/init")),
          adam_(cfg.lr),
          dropout_rng_(seed_for(seed, "embed/dropout")) {}

    const ProtoNetConfig& config() const { return cfg_; }
    Mlp& net() { return net_; }
    const Mlp& net() const { return net_; }
    AdamState& optimizer() { return adam_; }
    Rng& dropout_rng() { return dropout_rng_; }

  private:
    ProtoNetConfig cfg_;
    Mlp net_;
    AdamState adam_;
    Rng dropout_rng_;
};

// --- Episode sampling -------------------------------------------------------

// Draws an episode without replacement: first the classes (uniform over those
// with at least shot+query unused samples), then the samples within each class.
// When `exclusions` is given the chosen indices are added to it, which is what
// makes the continual regime a no-reuse stream; without it sampling is
// independent across calls.  Throws InsufficientSamples once fewer than `n`
// classes can still field a full episode — that exhaustion is what bounds the
// episode count of a continual run.
inline Episode sample_episode(const Dataset& data, std::size_t n, std::size_t k, std::size_t q,
                              std::uint64_t seed,
                              std::unordered_set<std::size_t>* exclusions = nullptr) {
    if (n == 0 || k == 0 || q == 0)
        throw InvalidArgument("sample_episode: way, shot, and query must all be positive");
    const std::size_t classes = data.class_space.size();
    std::vector<std::vector<std::size_t>> pools(classes);
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        if (exclusions && exclusions->count(i)) continue;
        const auto it = std::lower_bound(data.class_space.begin(), data.class_space.end(),
                                         data.labels[i]);
        if (it == data.class_space.end() || *it != data.labels[i])
            throw InvalidArgument("sample_episode: label outside the dataset class space");
        pools[static_cast<std::size_t>(it - data.class_space.begin())].push_back(i);
    }

    const std::size_t need = k + q;
    std::vector<std::size_t> eligible;
    for (std::size_t c = 0; c < classes; ++c)
        if (pools[c].size() >= need) eligible.push_back(c);
    if (eligible.size() < n)
        throw InsufficientSamples("sample_episode: only " + std::to_string(eligible.size()) +
                                  " classes can field " + std::to_string(need) +
                                  " unused samples, need " + std::to_string(n));

    Rng rng(seed);
    Episode ep;
    ep.way_n = n;
    ep.shot_k = k;
    ep.query_q = q;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + rng.uniform_index(eligible.size() - i);
        std::swap(eligible[i], eligible[j]);
    }
    for (std::size_t c = 0; c < n; ++c) {
        auto& pool = pools[eligible[c]];
        for (std::size_t i = 0; i < need; ++i) {
            const std::size_t j = i + rng.uniform_index(pool.size() - i);
            std::swap(pool[i], pool[j]);
        }
        ep.classes.push_back(data.class_space[eligible[c]]);
        ep.support.emplace_back(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
        ep.query.emplace_back(pool.begin() + static_cast<std::ptrdiff_t>(k),
                              pool.begin() + static_cast<std::ptrdiff_t>(need));
        if (exclusions)
            exclusions->insert(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(need));
    }
    return ep;
}

// --- Episode forward pass ---------------------------------------------------

namespace detail {

// Stacks the episode into one batch: support rows first, then query rows, both
// class-major.  Keeping everything in a single forward pass means batchnorm
// sees support and query through the same statistics during training.
inline Matrix episode_batch(const Episode& ep, const Dataset& data, std::size_t dim) {
    if (ep.support.size() != ep.way_n || ep.query.size() != ep.way_n)
        throw InvalidArgument("episode_batch: malformed episode");
    Matrix batch(ep.way_n * (ep.shot_k + ep.query_q), dim);
    std::size_t r = 0;
    const auto copy_row = [&](std::size_t idx) {
        if (idx >= data.samples.size())
            throw InvalidArgument("episode_batch: sample index out of range");
        const auto& f = data.samples[idx].features;
        if (f.size() != dim)
            throw DimensionMismatch("episode_batch: feature width does not match the embedding");
        std::copy(f.begin(), f.end(), batch.row(r));
        ++r;
    };
    for (const auto& s : ep.support) {
        if (s.size() != ep.shot_k) throw InvalidArgument("episode_batch: short support list");
        for (std::size_t idx : s) copy_row(idx);
    }
    for (const auto& qs : ep.query) {
        if (qs.size() != ep.query_q) throw InvalidArgument("episode_batch: short query list");
        for (std::size_t idx : qs) copy_row(idx);
    }
    return batch;
}

struct DistanceHead {
    Matrix prototypes;  // way x embed
    Matrix logits;      // (way*query) x way, negative squared distances
};

inline DistanceHead distance_head(const Matrix& z, std::size_t way, std::size_t shot,
                                  std::size_t query) {
    const std::size_t dim = z.cols;
    DistanceHead head;
    head.prototypes = Matrix(way, dim);
    for (std::size_t c = 0; c < way; ++c) {
        double* proto = head.prototypes.row(c);
        for (std::size_t s = 0; s < shot; ++s) {
            const double* row = z.row(c * shot + s);
            for (std::size_t d = 0; d < dim; ++d) proto[d] += row[d];
        }
        for (std::size_t d = 0; d < dim; ++d) proto[d] /= static_cast<double>(shot);
    }
    head.logits = Matrix(way * query, way);
    for (std::size_t r = 0; r < way * query; ++r) {
        const double* zq = z.row(way * shot + r);
        for (std::size_t c = 0; c < way; ++c) {
            const double* proto = head.prototypes.row(c);
            double dist = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff = zq[d] - proto[d];
                dist += diff * diff;
            }
            head.logits.at(r, c) = -dist;
        }
    }
    return head;
}

inline std::vector<int> query_truth(std::size_t way, std::size_t query) {
    std::vector<int> truth(way * query);
    for (std::size_t c = 0; c < way; ++c)
        for (std::size_t i = 0; i < query; ++i) truth[c * query + i] = static_cast<int>(c);
    return truth;
}

inline int row_argmax(const double* row, std::size_t n) {
    int best = 0;
    for (std::size_t c = 1; c < n; ++c)
        if (row[c] > row[best]) best = static_cast<int>(c);
    return best;
}

inline double head_accuracy(const Matrix& logits, const std::vector<int>& truth) {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < logits.rows; ++r)
        if (row_argmax(logits.row(r), logits.cols) == truth[r]) ++hits;
    return logits.rows == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(logits.rows);
}

inline Matrix row_softmax(const Matrix& logits) {
    Matrix probs(logits.rows, logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const double* in = logits.row(r);
        double peak = in[0];
        for (std::size_t c = 1; c < logits.cols; ++c) peak = std::max(peak, in[c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) denom += std::exp(in[c] - peak);
        for (std::size_t c = 0; c < logits.cols; ++c)
            probs.at(r, c) = std::exp(in[c] - peak) / denom;
    }
    return probs;
}

}  // namespace detail

struct EpisodeForwardResult {
    Matrix prototypes;         // way x embed
    Matrix logits;             // (way*query) x way
    Matrix probabilities;      // softmax over logits, rowwise
    std::vector<int> predictions;  // argmax class position per query row
    std::vector<int> truth;        // true class position per query row
    double accuracy = 0.0;
};

// Evaluation-mode pass: running batchnorm statistics, no dropout, no gradients.
inline EpisodeForwardResult episode_infer(ProtoNetModel& model, const Episode& ep,
                                          const Dataset& data) {
    const Matrix batch = detail::episode_batch(ep, data, model.config().input_dim);
    const Matrix z = model.net().forward(batch, NetMode::eval);
    auto head = detail::distance_head(z, ep.way_n, ep.shot_k, ep.query_q);
    EpisodeForwardResult out;
    out.truth = detail::query_truth(ep.way_n, ep.query_q);
    out.probabilities = detail::row_softmax(head.logits);
    out.predictions.resize(head.logits.rows);
    for (std::size_t r = 0; r < head.logits.rows; ++r)
        out.predictions[r] = detail::row_argmax(head.logits.row(r), head.logits.cols);
    out.accuracy = detail::head_accuracy(head.logits, out.truth);
    out.prototypes = std::move(head.prototypes);
    out.logits = std::move(head.logits);
    return out;
}

struct EpisodeLossResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Training-mode pass: one batch through the embedding (support and query share
// batch statistics), cross-entropy over the distance logits, and a backward
// sweep that reaches query embeddings directly and support embeddings through
// the prototype means.  Parameter gradients are left in model.net().grads();
// `input_grad` (optional) receives dLoss/dInput for the whole batch.
inline EpisodeLossResult episode_loss(ProtoNetModel& model, const Episode& ep,
                                      const Dataset& data, Matrix* input_grad = nullptr) {
    const std::size_t way = ep.way_n, shot = ep.shot_k, query = ep.query_q;
    const Matrix batch = detail::episode_batch(ep, data, model.config().input_dim);
    ForwardCache cache;
    const Matrix z = model.net().forward(batch, NetMode::train, &model.dropout_rng(), &cache);
    const auto head = detail::distance_head(z, way, shot, query);
    const std::vector<int> truth = detail::query_truth(way, query);
    const XentResult xr = softmax_xent(head.logits, truth);

    const std::size_t dim = z.cols;
    Matrix upstream(z.rows, z.cols);
    std::vector<double> dproto(dim);
    for (std::size_t c = 0; c < way; ++c) {
        std::fill(dproto.begin(), dproto.end(), 0.0);
        const double* proto = head.prototypes.row(c);
        for (std::size_t r = 0; r < way * query; ++r) {
            const double g = xr.grad.at(r, c);
            const std::size_t zrow = way * shot + r;
            const double* zq = z.row(zrow);
            double* uq = upstream.row(zrow);
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff = zq[d] - proto[d];
                uq[d] += g * (-2.0) * diff;   // query path
                dproto[d] += g * 2.0 * diff;  // prototype path
            }
        }
        for (std::size_t s = 0; s < shot; ++s) {
            double* us = upstream.row(c * shot + s);
            for (std::size_t d = 0; d < dim; ++d)
                us[d] += dproto[d] / static_cast<double>(shot);
        }
    }

    model.net().zero_grads();
    Matrix dinput = model.net().backward(cache, upstream);
    if (input_grad) *input_grad = std::move(dinput);

    EpisodeLossResult out;
    out.loss = xr.loss;
    out.accuracy = detail::head_accuracy(head.logits, truth);
    return out;
}

// --- Standard episodic loops ------------------------------------------------

struct MetaTrainConfig {
    std::size_t episodes = 1000;
    std::size_t way = 3;
    std::size_t shot = 1;
    std::size_t query = 3;
};

struct MetaTrainLog {
    std::vector<double> loss;      // one entry per episode
    std::vector<double> accuracy;  // query accuracy per episode
};

// Samples with reuse, one Adam step per episode; the per-episode loss and
// accuracy form the training curve.
inline MetaTrainLog meta_train(ProtoNetModel& model, const Dataset& data,
                               const MetaTrainConfig& cfg, std::uint64_t seed) {
    MetaTrainLog log;
    for (std::size_t e = 0; e < cfg.episodes; ++e) {
        Episode ep = sample_episode(data, cfg.way, cfg.shot, cfg.query,
                                    seed_for(seed, "episode/" + std::to_string(e)));
        ep.episode_index = e;
        const EpisodeLossResult r = episode_loss(model, ep, data);
        model.optimizer().update(model.net().mutable_params(), model.net().grads());
        log.loss.push_back(r.loss);
        log.accuracy.push_back(r.accuracy);
    }
    return log;
}

struct MetaTestConfig {
    std::size_t episodes = 200;
    std::size_t way = 3;
    std::size_t shot = 1;
    std::size_t query = 3;
};

struct MetaTestResult {
    double mean_accuracy = 0.0;
    double ci95 = 0.0;  // 1.96 * sample std / sqrt(episodes)
    std::vector<double> per_episode;
};

namespace detail {

inline std::pair<double, double> mean_and_ci95(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    return {mean, 1.96 * sd / std::sqrt(static_cast<double>(xs.size()))};
}

}  // namespace detail

// Fixed-parameter evaluation over freshly sampled episodes (with reuse).
inline MetaTestResult meta_test(ProtoNetModel& model, const Dataset& data,
                                const MetaTestConfig& cfg, std::uint64_t seed) {
    MetaTestResult out;
    for (std::size_t e = 0; e < cfg.episodes; ++e) {
        Episode ep = sample_episode(data, cfg.way, cfg.shot, cfg.query,
                                    seed_for(seed, "episode/" + std::to_string(e)));
        ep.episode_index = e;
        out.per_episode.push_back(episode_infer(model, ep, data).accuracy);
    }
    const auto [mean, ci] = detail::mean_and_ci95(out.per_episode);
    out.mean_accuracy = mean;
    out.ci95 = ci;
    return out;
}

// --- Forgetting -------------------------------------------------------------

// FR(e) over episodes 1..e-1: mean positive accuracy drop across the stored
// episodes, comparing their evaluation before and after update e.
inline double episode_forgetting(const std::vector<double>& acc_before,
                                 const std::vector<double>& acc_after, std::size_t e) {
    if (e < 2) throw InvalidArgument("episode_forgetting: defined for e >= 2");
    if (acc_before.size() != e - 1 || acc_after.size() != e - 1)
        throw IndexMismatch("episode_forgetting: need one accuracy per episode 1..e-1");
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < e; ++i)
        total += std::max(0.0, acc_before[i] - acc_after[i]);
    return total / static_cast<double>(e - 1);
}

// --- Continual regime -------------------------------------------------------

struct ContinualConfig {
    std::size_t way = 3;
    std::size_t shot = 1;
    std::size_t query = 3;
    std::size_t steps_per_episode = 5;  // Adam steps after each episode
};

struct ContinualResult {
    ContinualConfig config;
    std::vector<Episode> episodes;        // in arrival order, indices never reused
    std::vector<double> accuracy_trace;   // eval accuracy on each episode at arrival
    std::vector<double> fr_trace;         // FR(e) for e = 2..E
    double final_accuracy = 0.0;
    double ci95 = 0.0;                    // spread of the accuracy trace
    double mean_infer_ms = 0.0;
    double mean_update_ms = 0.0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["k"] = config.shot;
        j["n"] = config.way;
        j["q"] = config.query;
        j["E"] = episodes.size();
        j["final_accuracy"] = final_accuracy;
        j["ci95"] = ci95;
        j["fr_trace"] = fr_trace;
        j["accuracy_trace"] = accuracy_trace;
        j["mean_infer_ms"] = mean_infer_ms;
        j["mean_update_ms"] = mean_update_ms;
        return j;
    }
};

// No-reuse episodic stream: each arriving episode is evaluated (test-then-
// train), trained on for a few Adam steps, and then every earlier episode is
// re-evaluated to measure how much the update degraded it.  Runs until the
// pool cannot field another episode.  A model with lr 0 (or zero steps) skips
// updates entirely, which is the frozen baseline: its forgetting is exactly 0.
inline ContinualResult continual_run(ProtoNetModel& model, const Dataset& data,
                                     const ContinualConfig& cfg, std::uint64_t seed) {
    using clock = std::chrono::steady_clock;
    const auto ms_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };

    ContinualResult out;
    out.config = cfg;
    const bool frozen = cfg.steps_per_episode == 0 || model.optimizer().lr <= 0.0;
    std::unordered_set<std::size_t> used;
    std::vector<double> current;  // stored episodes' accuracy under current parameters
    double infer_total = 0.0, update_total = 0.0;

    for (std::size_t e = 0;; ++e) {
        Episode ep;
        try {
            ep = sample_episode(data, cfg.way, cfg.shot, cfg.query,
                                seed_for(seed, "episode/" + std::to_string(e)), &used);
        } catch (const InsufficientSamples&) {
            break;
        }
        ep.episode_index = e;

        const auto t_infer = clock::now();
        out.accuracy_trace.push_back(episode_infer(model, ep, data).accuracy);
        infer_total += ms_since(t_infer);

        if (!frozen) {
            const auto t_update = clock::now();
            for (std::size_t s = 0; s < cfg.steps_per_episode; ++s) {
                episode_loss(model, ep, data);
                model.optimizer().update(model.net().mutable_params(), model.net().grads());
            }
            update_total += ms_since(t_update);
        }

        if (!out.episodes.empty()) {
            std::vector<double> after;
            after.reserve(out.episodes.size());
            for (const Episode& prev : out.episodes)
                after.push_back(episode_infer(model, prev, data).accuracy);
            out.fr_trace.push_back(episode_forgetting(current, after, out.episodes.size() + 1));
            current = std::move(after);
        }
        current.push_back(episode_infer(model, ep, data).accuracy);
        out.episodes.push_back(std::move(ep));
    }

    if (out.episodes.empty())
        throw InsufficientSamples("continual_run: the pool cannot field a single episode");
    out.final_accuracy = out.accuracy_trace.back();
    out.ci95 = detail::mean_and_ci95(out.accuracy_trace).second;
    const double count = static_cast<double>(out.episodes.size());
    out.mean_infer_ms = infer_total / count;
    out.mean_update_ms = update_total / count;
    return out;
}

}  // namespace aoalab
