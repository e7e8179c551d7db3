#pragma once

// Conditional variational autoencoder over AoA feature vectors.  The encoder
// maps a standardized feature row concatenated with a one-hot class condition
// through a shared trunk into mean and log-variance heads; a reparameterized
// latent draw plus the same condition is decoded back to feature space.
// Training minimizes reconstruction error plus a weighted Gaussian divergence
// (the negative ELBO), keeping the parameters from the epoch with the best
// held-out score.  On top of the generator sit conditional sampling back into
// degree space, replay-buffer upsampling for rehearsal, and a classifier-based
// quality check that scores generated samples against their conditioning.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "aoalab/errors.hpp"
#include "aoalab/features.hpp"
#include "aoalab/neural.hpp"
#include "aoalab/offline.hpp"
#include "aoalab/rng.hpp"

namespace aoalab {

struct CvaeConfig {
    std::size_t feature_dim = 200;
    std::size_t condition_dim = 20;  // one-hot slots; unused upper slots stay zero
    std::size_t latent_dim = 64;
    std::vector<std::size_t> encoder_hidden{256, 128};
    std::vector<std::size_t> decoder_hidden{128, 256};
    double beta = 1.0;  // weight of the divergence term
    std::size_t epochs = 200;
    std::size_t batch = 64;
    double lr = 1e-3;
    double validation_fraction = 0.1;  // held out for checkpoint selection
};

namespace detail {

inline const CvaeConfig& checked_cvae_config(const CvaeConfig& cfg) {
    if (cfg.feature_dim == 0 || cfg.latent_dim == 0 || cfg.condition_dim == 0)
        throw InvalidArgument("generator dimensions must be positive");
    if (cfg.encoder_hidden.empty() || cfg.decoder_hidden.empty())
        throw InvalidArgument("encoder and decoder need at least one hidden layer");
    for (std::size_t w : cfg.encoder_hidden)
        if (w == 0) throw InvalidArgument("encoder hidden widths must be positive");
    for (std::size_t w : cfg.decoder_hidden)
        if (w == 0) throw InvalidArgument("decoder hidden widths must be positive");
    if (cfg.epochs == 0 || cfg.batch == 0) throw InvalidArgument("epochs and batch must be positive");
    if (!(cfg.lr > 0.0)) throw InvalidArgument("learning rate must be positive");
    if (!(cfg.validation_fraction > 0.0) || !(cfg.validation_fraction < 1.0))
        throw InvalidArgument("validation fraction must lie in (0, 1)");
    return cfg;
}

inline std::vector<int> checked_condition_classes(std::vector<int> classes,
                                                  std::size_t condition_dim) {
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.empty()) throw InvalidArgument("conditional model needs at least one class");
    if (classes.size() > condition_dim)
        throw TooManyClasses("class count " + std::to_string(classes.size()) +
                             " exceeds the " + std::to_string(condition_dim) +
                             " condition slots");
    return classes;
}

inline std::vector<LayerSpec> encoder_trunk_layers(const CvaeConfig& cfg) {
    std::vector<LayerSpec> layers;
    std::size_t prev = cfg.feature_dim + cfg.condition_dim;
    for (std::size_t width : cfg.encoder_hidden) {
        layers.push_back({prev, width, false, Activation::relu, 0.0});
        prev = width;
    }
    return layers;
}

inline std::vector<LayerSpec> head_layers(const CvaeConfig& cfg) {
    return {{cfg.encoder_hidden.back(), cfg.latent_dim, false, Activation::none, 0.0}};
}

inline std::vector<LayerSpec> decoder_layers(const CvaeConfig& cfg) {
    std::vector<LayerSpec> layers;
    std::size_t prev = cfg.latent_dim + cfg.condition_dim;
    for (std::size_t width : cfg.decoder_hidden) {
        layers.push_back({prev, width, false, Activation::relu, 0.0});
        prev = width;
    }
    // Linear output: features are unbounded angles; range is enforced by the
    // sampling-side clamp, not by a squashing activation.
    layers.push_back({prev, cfg.feature_dim, false, Activation::none, 0.0});
    return layers;
}

}  // namespace detail

class CvaeModel {
public:
    CvaeModel(const CvaeConfig& cfg, std::vector<int> classes, std::uint64_t seed)
        : cfg_(detail::checked_cvae_config(cfg)),
          classes_(detail::checked_condition_classes(std::move(classes), cfg.condition_dim)),
          trunk_(detail::encoder_trunk_layers(cfg), seed_for(seed, "enc/init")),
          mu_head_(detail::head_layers(cfg), seed_for(seed, "mu/init")),
          logvar_head_(detail::head_layers(cfg), seed_for(seed, "logvar/init")),
          decoder_(detail::decoder_layers(cfg), seed_for(seed, "dec/init")),
          trunk_opt_(cfg.lr),
          mu_opt_(cfg.lr),
          logvar_opt_(cfg.lr),
          dec_opt_(cfg.lr),
          feature_mean_(cfg.feature_dim, 0.0),
          feature_scale_(cfg.feature_dim, 1.0) {}

    const CvaeConfig& config() const { return cfg_; }
    const std::vector<int>& classes() const { return classes_; }

    Mlp& trunk() { return trunk_; }
    Mlp& mu_head() { return mu_head_; }
    Mlp& logvar_head() { return logvar_head_; }
    Mlp& decoder() { return decoder_; }
    const Mlp& trunk() const { return trunk_; }
    const Mlp& mu_head() const { return mu_head_; }
    const Mlp& logvar_head() const { return logvar_head_; }
    const Mlp& decoder() const { return decoder_; }

    std::size_t condition_slot(int label) const {
        const auto it = std::lower_bound(classes_.begin(), classes_.end(), label);
        if (it == classes_.end() || *it != label)
            throw UnknownClass("label " + std::to_string(label) +
                               " is outside the generator's class space");
        return static_cast<std::size_t>(it - classes_.begin());
    }

    Matrix one_hot(const std::vector<int>& labels) const {
        Matrix cond(labels.size(), cfg_.condition_dim);
        for (std::size_t i = 0; i < labels.size(); ++i)
            cond.at(i, condition_slot(labels[i])) = 1.0;
        return cond;
    }

    void set_standardization(std::vector<double> mean, std::vector<double> scale) {
        if (mean.size() != cfg_.feature_dim || scale.size() != cfg_.feature_dim)
            throw InvalidArgument("standardization width does not match the input layer");
        feature_mean_ = std::move(mean);
        feature_scale_ = std::move(scale);
    }
    const std::vector<double>& feature_mean() const { return feature_mean_; }
    const std::vector<double>& feature_scale() const { return feature_scale_; }

    void apply_gradients() {
        trunk_opt_.update(trunk_.mutable_params(), trunk_.grads());
        mu_opt_.update(mu_head_.mutable_params(), mu_head_.grads());
        logvar_opt_.update(logvar_head_.mutable_params(), logvar_head_.grads());
        dec_opt_.update(decoder_.mutable_params(), decoder_.grads());
    }

private:
    CvaeConfig cfg_;
    std::vector<int> classes_;
    Mlp trunk_, mu_head_, logvar_head_, decoder_;
    AdamState trunk_opt_, mu_opt_, logvar_opt_, dec_opt_;
    std::vector<double> feature_mean_, feature_scale_;
};

namespace detail {

struct CvaeBatchLoss {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

inline Matrix hstack(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, a.cols + b.cols);
    for (std::size_t r = 0; r < a.rows; ++r) {
        std::copy(a.row(r), a.row(r) + a.cols, out.row(r));
        std::copy(b.row(r), b.row(r) + b.cols, out.row(r) + a.cols);
    }
    return out;
}

// One forward (and optionally backward) pass over a standardized batch with
// caller-supplied latent noise.  With gradients on, parameter gradients for
// all four networks are left in their grads() buffers; the caller applies
// the optimizer.  The glue math between the networks:
//   z = mu + exp(lv / 2) * eps
//   d z / d mu = 1,   d z / d lv = eps * exp(lv / 2) / 2
// and the divergence contributes beta-weighted analytic terms to both heads.
inline CvaeBatchLoss cvae_batch_step(CvaeModel& model, const Matrix& x, const Matrix& cond,
                                     const Matrix& eps, bool with_grads) {
    const std::size_t n = x.rows;
    const auto& cfg = model.config();
    const std::size_t latent = cfg.latent_dim;
    const NetMode mode = with_grads ? NetMode::train : NetMode::eval;

    ForwardCache trunk_cache, mu_cache, lv_cache, dec_cache;
    const Matrix enc_in = hstack(x, cond);
    const Matrix h = model.trunk().forward(enc_in, mode, nullptr, with_grads ? &trunk_cache : nullptr);
    const Matrix mu = model.mu_head().forward(h, mode, nullptr, with_grads ? &mu_cache : nullptr);
    const Matrix lv =
        model.logvar_head().forward(h, mode, nullptr, with_grads ? &lv_cache : nullptr);

    Matrix z(n, latent);
    for (std::size_t i = 0; i < z.data.size(); ++i)
        z.data[i] = mu.data[i] + std::exp(0.5 * lv.data[i]) * eps.data[i];

    const Matrix dec_in = hstack(z, cond);
    const Matrix decoded =
        model.decoder().forward(dec_in, mode, nullptr, with_grads ? &dec_cache : nullptr);

    const auto recon = mse_loss(decoded, x);
    const auto kl = gaussian_kl(mu, lv);
    CvaeBatchLoss out{recon.loss + cfg.beta * kl.value, recon.loss, kl.value};
    if (!with_grads) return out;

    model.decoder().zero_grads();
    const Matrix d_dec_in = model.decoder().backward(dec_cache, recon.grad);

    Matrix d_mu(n, latent), d_lv(n, latent);
    for (std::size_t r = 0; r < n; ++r) {
        const double* dz = d_dec_in.row(r);  // latent columns come first
        for (std::size_t c = 0; c < latent; ++c) {
            const double sigma = std::exp(0.5 * lv.at(r, c));
            d_mu.at(r, c) = dz[c] + cfg.beta * kl.d_mu.at(r, c);
            d_lv.at(r, c) = dz[c] * eps.at(r, c) * 0.5 * sigma + cfg.beta * kl.d_log_var.at(r, c);
        }
    }

    model.mu_head().zero_grads();
    Matrix dh = model.mu_head().backward(mu_cache, d_mu);
    model.logvar_head().zero_grads();
    const Matrix dh_lv = model.logvar_head().backward(lv_cache, d_lv);
    for (std::size_t i = 0; i < dh.data.size(); ++i) dh.data[i] += dh_lv.data[i];
    model.trunk().zero_grads();
    model.trunk().backward(trunk_cache, dh);
    return out;
}

inline Matrix gather_standardized(const Dataset& data, const std::vector<std::size_t>& rows,
                                  const std::vector<double>& mean,
                                  const std::vector<double>& scale) {
    const std::size_t dim = mean.size();
    Matrix out(rows.size(), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& f = data.samples[rows[r]].features;
        for (std::size_t d = 0; d < dim; ++d) out.at(r, d) = (f[d] - mean[d]) / scale[d];
    }
    return out;
}

}  // namespace detail

struct CvaeStepLoss {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

struct CvaeTrainResult {
    CvaeModel model;
    std::vector<CvaeStepLoss> step_log;  // one entry per optimizer step
    std::vector<double> val_elbo;        // one entry per epoch
    std::size_t best_epoch = 0;
};

inline CvaeTrainResult cvae_train(const Dataset& data, const CvaeConfig& cfg,
                                  std::uint64_t seed) {
    detail::checked_cvae_config(cfg);
    if (data.samples.size() < 2)
        throw DegenerateDataset("need at least two samples to hold out validation data");
    if (data.labels.size() != data.samples.size())
        throw InvalidArgument("dataset labels and samples disagree in length");
    for (const auto& s : data.samples)
        if (s.features.size() != cfg.feature_dim)
            throw InvalidArgument("sample width " + std::to_string(s.features.size()) +
                                  " does not match the configured input width " +
                                  std::to_string(cfg.feature_dim));

    CvaeTrainResult out{CvaeModel(cfg, data.class_space, seed), {}, {}, 0};
    CvaeModel& model = out.model;
    const std::size_t n = data.samples.size();
    const std::size_t dim = cfg.feature_dim;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng split_rng(seed_for(seed, "split"));
    split_rng.shuffle(order);
    std::size_t val_n = static_cast<std::size_t>(
        std::floor(cfg.validation_fraction * static_cast<double>(n) + 1e-9));
    val_n = std::min(std::max<std::size_t>(val_n, 1), n - 1);
    const std::vector<std::size_t> val_rows(order.begin(), order.begin() + val_n);
    std::vector<std::size_t> train_rows(order.begin() + val_n, order.end());

    // Per-feature standardization from the training split only; the floor
    // keeps constant features harmless instead of dividing by zero.
    std::vector<double> mean(dim, 0.0), scale(dim, 0.0);
    for (std::size_t r : train_rows)
        for (std::size_t d = 0; d < dim; ++d) mean[d] += data.samples[r].features[d];
    for (double& m : mean) m /= static_cast<double>(train_rows.size());
    for (std::size_t r : train_rows)
        for (std::size_t d = 0; d < dim; ++d) {
            const double dev = data.samples[r].features[d] - mean[d];
            scale[d] += dev * dev;
        }
    for (double& s : scale)
        s = std::max(std::sqrt(s / static_cast<double>(train_rows.size())), 1e-8);
    model.set_standardization(mean, scale);

    const Matrix x_val = detail::gather_standardized(data, val_rows, mean, scale);
    std::vector<int> val_labels(val_rows.size());
    for (std::size_t i = 0; i < val_rows.size(); ++i) val_labels[i] = data.labels[val_rows[i]];
    const Matrix cond_val = model.one_hot(val_labels);
    Matrix eps_val(val_rows.size(), cfg.latent_dim);
    {
        // A noise draw fixed across epochs keeps the held-out scores comparable.
        Rng rng(seed_for(seed, "val/eps"));
        for (auto& v : eps_val.data) v = rng.normal();
    }

    Rng order_rng(seed_for(seed, "order"));
    Rng eps_rng(seed_for(seed, "eps"));
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> best_trunk, best_mu, best_lv, best_dec;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(train_rows);
        for (std::size_t start = 0; start < train_rows.size(); start += cfg.batch) {
            const std::size_t count = std::min(cfg.batch, train_rows.size() - start);
            const std::vector<std::size_t> rows(train_rows.begin() + start,
                                                train_rows.begin() + start + count);
            const Matrix xb = detail::gather_standardized(data, rows, mean, scale);
            std::vector<int> labels(count);
            for (std::size_t i = 0; i < count; ++i) labels[i] = data.labels[rows[i]];
            const Matrix cb = model.one_hot(labels);
            Matrix eps(count, cfg.latent_dim);
            for (auto& v : eps.data) v = eps_rng.normal();

            const auto loss = detail::cvae_batch_step(model, xb, cb, eps, true);
            model.apply_gradients();
            out.step_log.push_back({loss.total, loss.recon, loss.kl});
        }

        const auto val = detail::cvae_batch_step(model, x_val, cond_val, eps_val, false);
        out.val_elbo.push_back(val.total);
        if (val.total < best) {
            best = val.total;
            out.best_epoch = epoch;
            best_trunk = model.trunk().params();
            best_mu = model.mu_head().params();
            best_lv = model.logvar_head().params();
            best_dec = model.decoder().params();
        }
    }

    if (std::isfinite(best)) {
        model.trunk().mutable_params() = best_trunk;
        model.mu_head().mutable_params() = best_mu;
        model.logvar_head().mutable_params() = best_lv;
        model.decoder().mutable_params() = best_dec;
    }
    return out;
}

// ---------------------------------------------------------------------------
// conditional sampling

struct CvaeSampleStats {
    std::size_t clamped = 0;  // decoded values pushed back into [-90, 90]
    std::size_t values = 0;
};

inline std::vector<AoaSample> cvae_sample(CvaeModel& model, int class_label, std::size_t count,
                                          std::uint64_t seed, CvaeSampleStats* stats = nullptr) {
    const std::size_t slot = model.condition_slot(class_label);
    std::vector<AoaSample> out;
    if (count == 0) return out;

    const auto& cfg = model.config();
    Matrix dec_in(count, cfg.latent_dim + cfg.condition_dim);
    Rng rng(seed);
    for (std::size_t r = 0; r < count; ++r) {
        double* row = dec_in.row(r);
        for (std::size_t c = 0; c < cfg.latent_dim; ++c) row[c] = rng.normal();
        row[cfg.latent_dim + slot] = 1.0;
    }
    const Matrix decoded = model.decoder().forward(dec_in, NetMode::eval);

    const auto& mean = model.feature_mean();
    const auto& scale = model.feature_scale();
    std::size_t clamped = 0;
    out.reserve(count);
    for (std::size_t r = 0; r < count; ++r) {
        AoaSample s;
        s.features.resize(cfg.feature_dim);
        for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
            double v = decoded.at(r, d) * scale[d] + mean[d];
            if (v > 90.0) {
                v = 90.0;
                ++clamped;
            } else if (v < -90.0) {
                v = -90.0;
                ++clamped;
            }
            s.features[d] = v;
        }
        s.track_id = class_label;
        s.window_index = r;
        s.valid = true;
        s.synthetic = true;
        out.push_back(std::move(s));
    }
    if (stats) {
        stats->clamped += clamped;
        stats->values += count * cfg.feature_dim;
    }
    return out;
}

// Encode-decode round trip in degree space; with zero_noise the latent is the
// posterior mean and the result is a deterministic function of the inputs.
inline std::vector<std::vector<double>> cvae_reconstruct(CvaeModel& model, const Dataset& data,
                                                         bool zero_noise, std::uint64_t seed) {
    const auto& cfg = model.config();
    if (data.labels.size() != data.samples.size())
        throw InvalidArgument("dataset labels and samples disagree in length");
    std::vector<std::vector<double>> out;
    if (data.samples.empty()) return out;
    for (const auto& s : data.samples)
        if (s.features.size() != cfg.feature_dim)
            throw InvalidArgument("sample width does not match the generator input width");

    std::vector<std::size_t> rows(data.samples.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    const Matrix x =
        detail::gather_standardized(data, rows, model.feature_mean(), model.feature_scale());
    const Matrix cond = model.one_hot(data.labels);

    const Matrix h = model.trunk().forward(detail::hstack(x, cond), NetMode::eval);
    const Matrix mu = model.mu_head().forward(h, NetMode::eval);
    const Matrix lv = model.logvar_head().forward(h, NetMode::eval);
    Matrix z(mu.rows, mu.cols);
    if (zero_noise) {
        z.data = mu.data;
    } else {
        Rng rng(seed);
        for (std::size_t i = 0; i < z.data.size(); ++i)
            z.data[i] = mu.data[i] + std::exp(0.5 * lv.data[i]) * rng.normal();
    }
    const Matrix decoded = model.decoder().forward(detail::hstack(z, cond), NetMode::eval);

    const auto& mean = model.feature_mean();
    const auto& scale = model.feature_scale();
    out.resize(decoded.rows);
    for (std::size_t r = 0; r < decoded.rows; ++r) {
        out[r].resize(cfg.feature_dim);
        for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
            const double v = decoded.at(r, d) * scale[d] + mean[d];
            out[r][d] = std::min(90.0, std::max(-90.0, v));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// classifier-based quality scoring

struct AugmentMetrics {
    double accuracy = 0.0;
    double precision = 0.0;  // macro
    double recall = 0.0;     // macro
    double f1 = 0.0;         // macro
};

// Scores generated samples against their conditioning labels with a
// classifier trained on real data.  Macro averages run over the ground-truth
// class space; empty denominators score zero.
inline AugmentMetrics augment_eval(const ModelArtifact& real_model, const Dataset& synthetic) {
    if (!real_model.runtime) throw InvalidArgument("model container carries no runtime model");
    if (synthetic.samples.empty()) throw InvalidArgument("nothing to evaluate");
    if (synthetic.labels.size() != synthetic.samples.size())
        throw InvalidArgument("dataset labels and samples disagree in length");

    const Model& model = *real_model.runtime;
    const auto& model_space = model.class_space();
    for (int c : synthetic.class_space)
        if (std::find(model_space.begin(), model_space.end(), c) == model_space.end())
            throw ClassSpaceMismatch("ground-truth label " + std::to_string(c) +
                                     " is unknown to the classifier");

    const auto& space = synthetic.class_space;
    auto class_index = [&](int label) -> std::size_t {
        const auto it = std::lower_bound(space.begin(), space.end(), label);
        if (it == space.end() || *it != label) return space.size();  // outside macro set
        return static_cast<std::size_t>(it - space.begin());
    };

    std::vector<std::size_t> tp(space.size(), 0), fp(space.size(), 0), fn(space.size(), 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < synthetic.samples.size(); ++i) {
        const auto& f = synthetic.samples[i].features;
        if (f.size() != model.feature_dim())
            throw InvalidArgument("sample width does not match the classifier input width");
        const auto proba = model.predict_proba(f.data(), f.size());
        const auto arg = static_cast<std::size_t>(
            std::max_element(proba.begin(), proba.end()) - proba.begin());
        const int predicted = model_space[arg];
        const int truth = synthetic.labels[i];
        if (predicted == truth) {
            ++correct;
            ++tp[class_index(truth)];
        } else {
            ++fn[class_index(truth)];
            const std::size_t k = class_index(predicted);
            if (k < space.size()) ++fp[k];
        }
    }

    AugmentMetrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(synthetic.samples.size());
    for (std::size_t k = 0; k < space.size(); ++k) {
        const double p = tp[k] + fp[k] > 0
                             ? static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fp[k])
                             : 0.0;
        const double r = tp[k] + fn[k] > 0
                             ? static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fn[k])
                             : 0.0;
        m.precision += p;
        m.recall += r;
        m.f1 += p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    const auto classes = static_cast<double>(space.size());
    m.precision /= classes;
    m.recall /= classes;
    m.f1 /= classes;
    return m;
}

// ---------------------------------------------------------------------------
// replay buffer and rehearsal upsampling

struct ReplayEntry {
    AoaSample sample;
    int label = 0;
};

// Bounded FIFO store of labeled samples awaiting rehearsal.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::vector<int> class_space)
        : capacity_(capacity), class_space_(std::move(class_space)) {
        if (capacity_ == 0) throw InvalidArgument("replay buffer capacity must be positive");
        std::sort(class_space_.begin(), class_space_.end());
        class_space_.erase(std::unique(class_space_.begin(), class_space_.end()),
                           class_space_.end());
        if (class_space_.empty()) throw InvalidArgument("replay buffer needs a class space");
    }

    void push(AoaSample sample, int label) {
        if (!std::binary_search(class_space_.begin(), class_space_.end(), label))
            throw UnknownClass("label " + std::to_string(label) +
                               " is outside the buffer's class space");
        if (entries_.size() == capacity_) entries_.pop_front();
        entries_.push_back({std::move(sample), label});
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t capacity() const { return capacity_; }
    const std::vector<int>& class_space() const { return class_space_; }
    const std::deque<ReplayEntry>& stored() const { return entries_; }

private:
    std::size_t capacity_;
    std::vector<int> class_space_;
    std::deque<ReplayEntry> entries_;
};

// Tops up every class the generator knows to target_per_class: stored real
// samples first (FIFO order), generated ones for the shortfall.  Classes
// already at or above target pass through untouched.
inline Dataset upsample_buffer(const ReplayBuffer& buffer, CvaeModel& model,
                               std::size_t target_per_class, std::uint64_t seed) {
    if (buffer.empty()) throw InvalidArgument("replay buffer is empty");
    const auto& classes = model.classes();
    for (const auto& entry : buffer.stored())
        if (!std::binary_search(classes.begin(), classes.end(), entry.label))
            throw UncoveredClass("buffer label " + std::to_string(entry.label) +
                                 " is not covered by the generator");

    Dataset out;
    for (int c : classes) {
        std::size_t real = 0;
        for (const auto& entry : buffer.stored()) {
            if (entry.label != c) continue;
            out.samples.push_back(entry.sample);
            out.labels.push_back(c);
            ++real;
        }
        std::size_t emitted = real;
        if (real < target_per_class) {
            auto generated = cvae_sample(model, c, target_per_class - real,
                                         seed_for(seed, "class/" + std::to_string(c)));
            for (auto& s : generated) {
                out.samples.push_back(std::move(s));
                out.labels.push_back(c);
                ++emitted;
            }
        }
        if (emitted > 0) out.class_space.push_back(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// provenance CSV: the plain feature layout plus a trailing provenance column
// distinguishing measured rows from generated ones.

inline void write_augmented_csv(const std::string& path, const std::vector<AoaSample>& samples) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    const std::size_t width = samples.empty() ? 200 : samples.front().features.size();
    for (std::size_t i = 0; i < width; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "f%03u,", static_cast<unsigned>(i));
        f << buf;
    }
    f << "region,track_id,window_index,estimator,valid,provenance\n";
    for (const auto& s : samples) {
        if (s.features.size() != width)
            throw InvalidArgument("inconsistent feature widths in one file");
        char buf[32];
        for (double v : s.features) {
            std::snprintf(buf, sizeof(buf), "%.6f,", v);
            f << buf;
        }
        f << region_name(s.region) << ',' << s.track_id << ',' << s.window_index << ','
          << estimator_name(s.estimator) << ',' << (s.valid ? 1 : 0) << ','
          << (s.synthetic ? "synthetic" : "real") << '\n';
    }
    if (!f) throw IoError("short write: " + path);
}

inline std::vector<AoaSample> read_augmented_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);

    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find(',', start);
            if (pos == std::string::npos) {
                out.push_back(line.substr(start));
                break;
            }
            out.push_back(line.substr(start, pos - start));
            start = pos + 1;
        }
        return out;
    };

    std::string header;
    if (!std::getline(f, header)) throw FormatError("empty feature file: " + path);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    const auto names = split(header);
    std::size_t width = 0;
    while (width < names.size()) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "f%03u", static_cast<unsigned>(width));
        if (names[width] != buf) break;
        ++width;
    }
    const std::vector<std::string> tail{"region",    "track_id", "window_index",
                                        "estimator", "valid",    "provenance"};
    if (width == 0 || names.size() != width + tail.size())
        throw FormatError("malformed augmented header: " + path);
    for (std::size_t i = 0; i < tail.size(); ++i)
        if (names[width + i] != tail[i]) throw FormatError("malformed augmented header: " + path);

    std::vector<AoaSample> out;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != width + tail.size())
            throw FormatError(path + ":" + std::to_string(lineno) + ": wrong column count");
        AoaSample s;
        s.features.resize(width);
        auto parse_double = [&](const std::string& cell) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0')
                throw FormatError(path + ":" + std::to_string(lineno) + ": bad number '" + cell +
                                  "'");
            return v;
        };
        for (std::size_t i = 0; i < width; ++i) s.features[i] = parse_double(cells[i]);
        try {
            s.region = region_from_name(cells[width]);
            s.estimator = estimator_from_name(cells[width + 3]);
        } catch (const FormatError& e) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        s.track_id = static_cast<int>(parse_double(cells[width + 1]));
        s.window_index = static_cast<std::size_t>(parse_double(cells[width + 2]));
        const auto& valid = cells[width + 4];
        if (valid != "0" && valid != "1")
            throw FormatError(path + ":" + std::to_string(lineno) + ": bad validity flag");
        s.valid = valid == "1";
        const auto& provenance = cells[width + 5];
        if (provenance == "real") {
            s.synthetic = false;
        } else if (provenance == "synthetic") {
            s.synthetic = true;
        } else {
            throw FormatError(path + ":" + std::to_string(lineno) + ": bad provenance '" +
                              provenance + "'");
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace aoalab
