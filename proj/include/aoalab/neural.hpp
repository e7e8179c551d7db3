#pragma once

// Minimal dense network kernel: linear layers with optional batchnorm, ReLU and
// inverted dropout, plus the loss heads (softmax cross-entropy, MSE, Gaussian
// KL) and Adam. Backward passes are explicit and analytic — no autodiff graph,
// just the fixed layer set the two architectures in this project need.

#include <cmath>
#include <cstdint>
#include <vector>

#include "aoalab/errors.hpp"
#include "aoalab/matrix.hpp"
#include "aoalab/rng.hpp"

namespace aoalab {

enum class Activation { none, relu };
enum class NetMode { train, eval };

struct LayerSpec {
    std::size_t in = 0;
    std::size_t out = 0;
    bool batchnorm = false;
    Activation act = Activation::none;
    double dropout = 0.0;  // drop probability; 0 disables the stage
};

struct LayerCache {
    Matrix input;        // layer input
    Matrix bn_xhat;      // normalized values (batchnorm layers only)
    std::vector<double> bn_invstd;
    Matrix act_input;    // values entering the activation
    Matrix drop_mask;    // scaled keep-mask (train-mode dropout only)
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    NetMode mode = NetMode::eval;
    std::uint64_t revision = 0;
    bool valid = false;
};

class Mlp {
public:
    Mlp(std::vector<LayerSpec> specs, std::uint64_t init_seed) : specs_(std::move(specs)) {
        if (specs_.empty()) throw InvalidArgument("Mlp: no layers");
        for (std::size_t l = 0; l + 1 < specs_.size(); ++l)
            if (specs_[l].out != specs_[l + 1].in)
                throw DimensionMismatch("Mlp: consecutive layer dimensions do not chain");
        std::size_t offset = 0;
        for (const LayerSpec& s : specs_) {
            if (s.in == 0 || s.out == 0) throw InvalidArgument("Mlp: zero-sized layer");
            if (s.dropout < 0.0 || s.dropout >= 1.0) throw InvalidArgument("Mlp: dropout outside [0,1)");
            Offsets o;
            o.weight = offset;
            offset += s.in * s.out;
            o.bias = offset;
            offset += s.out;
            if (s.batchnorm) {
                o.gamma = offset;
                offset += s.out;
                o.beta = offset;
                offset += s.out;
            }
            offsets_.push_back(o);
        }
        params_.assign(offset, 0.0);
        grads_.assign(offset, 0.0);

        Rng rng(init_seed);
        for (std::size_t l = 0; l < specs_.size(); ++l) {
            const LayerSpec& s = specs_[l];
            const double limit = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
            for (std::size_t i = 0; i < s.in * s.out; ++i)
                params_[offsets_[l].weight + i] = rng.uniform(-limit, limit);
            if (s.batchnorm) {
                for (std::size_t i = 0; i < s.out; ++i) params_[offsets_[l].gamma + i] = 1.0;
                running_mean_.emplace_back(s.out, 0.0);
                running_var_.emplace_back(s.out, 1.0);
            } else {
                running_mean_.emplace_back();
                running_var_.emplace_back();
            }
        }
    }

    std::size_t layer_count() const { return specs_.size(); }
    const LayerSpec& layer_spec(std::size_t l) const { return specs_[l]; }
    std::size_t param_count() const { return params_.size(); }

    std::size_t weight_offset(std::size_t l) const { return offsets_[l].weight; }
    std::size_t bias_offset(std::size_t l) const { return offsets_[l].bias; }
    std::size_t gamma_offset(std::size_t l) const { return offsets_[l].gamma; }
    std::size_t beta_offset(std::size_t l) const { return offsets_[l].beta; }

    const double* weight(std::size_t l) const { return params_.data() + offsets_[l].weight; }
    const double* bias(std::size_t l) const { return params_.data() + offsets_[l].bias; }
    const double* bn_gamma(std::size_t l) const { return params_.data() + offsets_[l].gamma; }
    const double* bn_beta(std::size_t l) const { return params_.data() + offsets_[l].beta; }
    const std::vector<double>& running_mean(std::size_t l) const { return running_mean_[l]; }
    const std::vector<double>& running_var(std::size_t l) const { return running_var_[l]; }

    const std::vector<double>& params() const { return params_; }
    std::vector<double>& mutable_params() {
        ++revision_;
        return params_;
    }
    void set_running_stats(std::size_t l, std::vector<double> mean, std::vector<double> var) {
        ++revision_;
        running_mean_[l] = std::move(mean);
        running_var_[l] = std::move(var);
    }

    const std::vector<double>& grads() const { return grads_; }
    void zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

    Matrix forward(const Matrix& batch, NetMode mode, Rng* rng = nullptr, ForwardCache* cache = nullptr) {
        if (batch.cols != specs_.front().in)
            throw DimensionMismatch("Mlp::forward: batch width does not match first layer");
        if (cache) {
            cache->layers.assign(specs_.size(), LayerCache{});
            cache->mode = mode;
            cache->revision = revision_;
            cache->valid = true;
        }
        const std::size_t B = batch.rows;
        Matrix x = batch;
        for (std::size_t l = 0; l < specs_.size(); ++l) {
            const LayerSpec& s = specs_[l];
            if (cache) cache->layers[l].input = x;

            Matrix z(B, s.out);
            const double* w = params_.data() + offsets_[l].weight;
            const double* b = params_.data() + offsets_[l].bias;
            for (std::size_t r = 0; r < B; ++r) {
                const double* xin = x.row(r);
                double* zout = z.row(r);
                for (std::size_t o = 0; o < s.out; ++o) {
                    const double* wrow = w + o * s.in;
                    double acc = b[o];
                    for (std::size_t i = 0; i < s.in; ++i) acc += wrow[i] * xin[i];
                    zout[o] = acc;
                }
            }

            if (s.batchnorm) {
                const double* gamma = params_.data() + offsets_[l].gamma;
                const double* beta = params_.data() + offsets_[l].beta;
                Matrix xhat(B, s.out);
                std::vector<double> invstd(s.out);
                if (mode == NetMode::train) {
                    for (std::size_t o = 0; o < s.out; ++o) {
                        double mean = 0.0;
                        for (std::size_t r = 0; r < B; ++r) mean += z.at(r, o);
                        mean /= static_cast<double>(B);
                        double var = 0.0;
                        for (std::size_t r = 0; r < B; ++r) {
                            const double d = z.at(r, o) - mean;
                            var += d * d;
                        }
                        var /= static_cast<double>(B);
                        const double is = 1.0 / std::sqrt(var + kBnEps);
                        invstd[o] = is;
                        for (std::size_t r = 0; r < B; ++r) xhat.at(r, o) = (z.at(r, o) - mean) * is;
                        running_mean_[l][o] = 0.9 * running_mean_[l][o] + 0.1 * mean;
                        running_var_[l][o] = 0.9 * running_var_[l][o] + 0.1 * var;
                    }
                } else {
                    for (std::size_t o = 0; o < s.out; ++o) {
                        const double is = 1.0 / std::sqrt(running_var_[l][o] + kBnEps);
                        invstd[o] = is;
                        for (std::size_t r = 0; r < B; ++r)
                            xhat.at(r, o) = (z.at(r, o) - running_mean_[l][o]) * is;
                    }
                }
                for (std::size_t r = 0; r < B; ++r)
                    for (std::size_t o = 0; o < s.out; ++o) z.at(r, o) = gamma[o] * xhat.at(r, o) + beta[o];
                if (cache) {
                    cache->layers[l].bn_xhat = std::move(xhat);
                    cache->layers[l].bn_invstd = std::move(invstd);
                }
            }

            if (cache) cache->layers[l].act_input = z;
            if (s.act == Activation::relu)
                for (double& v : z.data) v = v > 0.0 ? v : 0.0;

            if (s.dropout > 0.0 && mode == NetMode::train) {
                if (!rng) throw InvalidArgument("Mlp::forward: dropout in train mode needs an rng");
                const double keep = 1.0 - s.dropout;
                Matrix mask(B, s.out);
                for (std::size_t i = 0; i < mask.data.size(); ++i)
                    mask.data[i] = (rng->uniform() < keep) ? 1.0 / keep : 0.0;
                for (std::size_t i = 0; i < z.data.size(); ++i) z.data[i] *= mask.data[i];
                if (cache) cache->layers[l].drop_mask = std::move(mask);
            }

            x = std::move(z);
        }
        return x;
    }

    // Accumulates parameter gradients into grads() and returns dLoss/dInput.
    Matrix backward(const ForwardCache& cache, const Matrix& upstream) {
        if (!cache.valid || cache.layers.size() != specs_.size())
            throw StaleCache("Mlp::backward: cache does not belong to this network");
        if (cache.revision != revision_)
            throw StaleCache("Mlp::backward: parameters changed since forward");
        Matrix dy = upstream;
        for (std::size_t li = specs_.size(); li-- > 0;) {
            const LayerSpec& s = specs_[li];
            const LayerCache& lc = cache.layers[li];
            const std::size_t B = lc.input.rows;
            if (dy.rows != B || dy.cols != s.out)
                throw DimensionMismatch("Mlp::backward: upstream gradient shape mismatch");

            if (s.dropout > 0.0 && cache.mode == NetMode::train)
                for (std::size_t i = 0; i < dy.data.size(); ++i) dy.data[i] *= lc.drop_mask.data[i];

            if (s.act == Activation::relu)
                for (std::size_t i = 0; i < dy.data.size(); ++i)
                    if (lc.act_input.data[i] <= 0.0) dy.data[i] = 0.0;

            if (s.batchnorm) {
                const double* gamma = params_.data() + offsets_[li].gamma;
                double* dgamma = grads_.data() + offsets_[li].gamma;
                double* dbeta = grads_.data() + offsets_[li].beta;
                Matrix dz(B, s.out);
                if (cache.mode == NetMode::train) {
                    for (std::size_t o = 0; o < s.out; ++o) {
                        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                        for (std::size_t r = 0; r < B; ++r) {
                            const double g = dy.at(r, o);
                            dgamma[o] += g * lc.bn_xhat.at(r, o);
                            dbeta[o] += g;
                            const double dxhat = g * gamma[o];
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * lc.bn_xhat.at(r, o);
                        }
                        const double scale = lc.bn_invstd[o] / static_cast<double>(B);
                        for (std::size_t r = 0; r < B; ++r) {
                            const double dxhat = dy.at(r, o) * gamma[o];
                            dz.at(r, o) = scale * (static_cast<double>(B) * dxhat - sum_dxhat -
                                                   lc.bn_xhat.at(r, o) * sum_dxhat_xhat);
                        }
                    }
                } else {
                    for (std::size_t o = 0; o < s.out; ++o)
                        for (std::size_t r = 0; r < B; ++r) {
                            const double g = dy.at(r, o);
                            dgamma[o] += g * lc.bn_xhat.at(r, o);
                            dbeta[o] += g;
                            dz.at(r, o) = g * gamma[o] * lc.bn_invstd[o];
                        }
                }
                dy = std::move(dz);
            }

            const double* w = params_.data() + offsets_[li].weight;
            double* dw = grads_.data() + offsets_[li].weight;
            double* db = grads_.data() + offsets_[li].bias;
            Matrix dx(B, s.in);
            for (std::size_t r = 0; r < B; ++r) {
                const double* dyrow = dy.row(r);
                const double* xin = lc.input.row(r);
                double* dxrow = dx.row(r);
                for (std::size_t o = 0; o < s.out; ++o) {
                    const double g = dyrow[o];
                    if (g == 0.0) continue;
                    db[o] += g;
                    double* dwrow = dw + o * s.in;
                    const double* wrow = w + o * s.in;
                    for (std::size_t i = 0; i < s.in; ++i) {
                        dwrow[i] += g * xin[i];
                        dxrow[i] += g * wrow[i];
                    }
                }
            }
            dy = std::move(dx);
        }
        return dy;
    }

private:
    static constexpr double kBnEps = 1e-5;
    struct Offsets {
        std::size_t weight = 0, bias = 0, gamma = 0, beta = 0;
    };
    std::vector<LayerSpec> specs_;
    std::vector<Offsets> offsets_;
    std::vector<double> params_;
    std::vector<double> grads_;
    std::vector<std::vector<double>> running_mean_;
    std::vector<std::vector<double>> running_var_;
    std::uint64_t revision_ = 0;
};

// --- Loss heads -------------------------------------------------------------

struct XentResult {
    double loss = 0.0;
    Matrix grad;  // d loss / d logits
};

inline XentResult softmax_xent(const Matrix& logits, const std::vector<int>& labels) {
    if (labels.size() != logits.rows) throw DimensionMismatch("softmax_xent: one label per row required");
    const std::size_t B = logits.rows, C = logits.cols;
    XentResult out;
    out.grad = Matrix(B, C);
    for (std::size_t r = 0; r < B; ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= C)
            throw LabelOutOfRange("softmax_xent: label outside class range");
        const double* row = logits.row(r);
        double peak = row[0];
        for (std::size_t c = 1; c < C; ++c) peak = std::max(peak, row[c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < C; ++c) denom += std::exp(row[c] - peak);
        const double log_denom = std::log(denom);
        out.loss += -(row[labels[r]] - peak - log_denom);
        for (std::size_t c = 0; c < C; ++c) {
            const double soft = std::exp(row[c] - peak) / denom;
            out.grad.at(r, c) = (soft - (static_cast<int>(c) == labels[r] ? 1.0 : 0.0)) /
                                static_cast<double>(B);
        }
    }
    out.loss /= static_cast<double>(B);
    return out;
}

struct MseResult {
    double loss = 0.0;  // squared error summed over features, averaged over batch
    Matrix grad;
};

inline MseResult mse_loss(const Matrix& pred, const Matrix& target) {
    if (pred.rows != target.rows || pred.cols != target.cols)
        throw DimensionMismatch("mse_loss: shape mismatch");
    MseResult out;
    out.grad = Matrix(pred.rows, pred.cols);
    const double inv_b = 1.0 / static_cast<double>(pred.rows);
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        out.loss += d * d;
        out.grad.data[i] = 2.0 * d * inv_b;
    }
    out.loss *= inv_b;
    return out;
}

struct KlResult {
    double value = 0.0;  // summed over latent dims, averaged over batch
    Matrix d_mu;
    Matrix d_log_var;
};

inline KlResult gaussian_kl(const Matrix& mu, const Matrix& log_var) {
    if (mu.rows != log_var.rows || mu.cols != log_var.cols)
        throw DimensionMismatch("gaussian_kl: shape mismatch");
    for (double v : mu.data)
        if (!std::isfinite(v)) throw InvalidArgument("gaussian_kl: non-finite mu");
    for (double v : log_var.data)
        if (!std::isfinite(v)) throw InvalidArgument("gaussian_kl: non-finite log_var");
    KlResult out;
    out.d_mu = Matrix(mu.rows, mu.cols);
    out.d_log_var = Matrix(mu.rows, mu.cols);
    const double inv_b = 1.0 / static_cast<double>(mu.rows);
    for (std::size_t i = 0; i < mu.data.size(); ++i) {
        const double m = mu.data[i];
        const double var = std::exp(log_var.data[i]);
        out.value += 0.5 * (m * m + var - log_var.data[i] - 1.0);
        out.d_mu.data[i] = m * inv_b;
        out.d_log_var.data[i] = 0.5 * (var - 1.0) * inv_b;
    }
    out.value *= inv_b;
    return out;
}

// --- Adam -------------------------------------------------------------------

struct AdamState {
    double lr, beta1, beta2, eps;
    std::vector<double> m, v;
    long step = 0;

    explicit AdamState(double learning_rate, double b1 = 0.9, double b2 = 0.999, double e = 1e-8)
        : lr(learning_rate), beta1(b1), beta2(b2), eps(e) {}

    void update(std::vector<double>& params, const std::vector<double>& grads) {
        if (params.size() != grads.size()) throw ShapeMismatch("AdamState: params/grads size mismatch");
        if (m.empty()) {
            m.assign(params.size(), 0.0);
            v.assign(params.size(), 0.0);
        } else if (m.size() != params.size()) {
            throw ShapeMismatch("AdamState: parameter count changed between steps");
        }
        ++step;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
};

}  // namespace aoalab
