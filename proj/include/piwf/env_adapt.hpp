#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "piwf/dataset.hpp"
#include "piwf/errors.hpp"
#include "piwf/loss.hpp"
#include "piwf/model.hpp"
#include "piwf/nn/layers.hpp"
#include "piwf/rng.hpp"
#include "piwf/training.hpp"

namespace piwf {

// Pair classifier: shared-weight encoder per tensor, element-wise sum
// combine, then a small head. The sum makes D(a,b) == D(b,a) exactly.
template <typename T>
class EnvDiscriminator {
public:
    explicit EnvDiscriminator(std::uint64_t seed = 0, std::size_t width = 64)
        : width_(width),
          conv_("disc.enc.conv", kInputChannels, width, 3, 3),
          enc_relu_("disc.enc.relu"),
          fc1_("disc.enc.fc", width, width),
          fc1_relu_("disc.enc.fc.relu"),
          fc2_("disc.head.fc1", width, width / 2),
          fc2_relu_("disc.head.relu"),
          fc3_("disc.head.fc2", width / 2, 1),
          sig_("disc.head.sigmoid") {
        Rng rng(derive_seed(seed, 0xD15C));
        conv_.init(rng);
        fc1_.init(rng);
        fc2_.init(rng);
        fc3_.init(rng);
    }

    // a, b: {B,150,3,3}; returns same-environment probabilities {B,1}.
    Tensor<T> forward(const Tensor<T>& a, const Tensor<T>& b) {
        const std::size_t n = a.dim(0);
        if (!a.same_shape(b)) throw ShapeError("discriminator: pair shape mismatch");
        Tensor<T> stacked({2 * n, a.dim(1), a.dim(2), a.dim(3)});
        std::copy(a.data(), a.data() + a.size(), stacked.data());
        std::copy(b.data(), b.data() + b.size(), stacked.data() + a.size());
        Tensor<T> e = enc_relu_.forward(conv_.forward(stacked));  // {2n, w, 1, 1}
        e.reshape({2 * n, width_});
        e = fc1_relu_.forward(fc1_.forward(e));
        Tensor<T> h({n, width_});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < width_; ++c) h.at(i, c) = e.at(i, c) + e.at(n + i, c);
        return sig_.forward(fc3_.forward(fc2_relu_.forward(fc2_.forward(h))));
    }

    // Returns gradients w.r.t. both inputs (parameter gradients accumulate
    // too; callers that keep D frozen simply never step them).
    std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& gp) {
        Tensor<T> gh = fc2_.backward(fc2_relu_.backward(fc3_.backward(sig_.backward(gp))));
        const std::size_t n = gh.dim(0);
        Tensor<T> ge({2 * n, width_});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < width_; ++c) {
                ge.at(i, c) = gh.at(i, c);
                ge.at(n + i, c) = gh.at(i, c);
            }
        Tensor<T> g = fc1_.backward(fc1_relu_.backward(ge));
        g.reshape({2 * n, width_, 1, 1});
        Tensor<T> gx = conv_.backward(enc_relu_.backward(g));
        Tensor<T> ga({n, gx.dim(1), gx.dim(2), gx.dim(3)});
        Tensor<T> gb(ga.shape());
        std::copy(gx.data(), gx.data() + ga.size(), ga.data());
        std::copy(gx.data() + ga.size(), gx.data() + 2 * ga.size(), gb.data());
        return {std::move(ga), std::move(gb)};
    }

    nn::ParamList<T> params() {
        nn::ParamList<T> out;
        conv_.collect_params("", out);
        fc1_.collect_params("", out);
        fc2_.collect_params("", out);
        fc3_.collect_params("", out);
        return out;
    }

private:
    std::size_t width_;
    nn::Conv2d<T> conv_;
    nn::ReLU<T> enc_relu_;
    nn::Dense<T> fc1_;
    nn::ReLU<T> fc1_relu_;
    nn::Dense<T> fc2_;
    nn::ReLU<T> fc2_relu_;
    nn::Dense<T> fc3_;
    nn::Sigmoid<T> sig_;
};

// Shape-preserving CSI-to-CSI transform: encoder down to 1x1, broadcast back
// up, concat with the input, zero-initialized 1x1 output added residually, so
// a fresh generator is exactly the identity.
template <typename T>
class EnvGenerator {
public:
    explicit EnvGenerator(std::uint64_t seed = 0, std::size_t width = 96)
        : width_(width),
          enc_("gen.enc", kInputChannels, width, 3, 3),
          relu_("gen.relu"),
          up_("gen.up", 1, 1, kTxAntennas, kRxAntennas),
          cat_("gen.cat"),
          out_("gen.out", kInputChannels + width, kInputChannels, 1, 1, 1, 1, 0, 0, 1, 1,
               /*zero_init=*/true) {
        Rng rng(derive_seed(seed, 0x6E4E));
        enc_.init(rng);
        out_.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x) {
        Tensor<T> u = up_.forward(relu_.forward(enc_.forward(x)));
        Tensor<T> delta = out_.forward(cat_.forward(x, u));
        delta += x;
        return delta;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        auto [gx_cat, gu] = cat_.backward(out_.backward(gy));
        Tensor<T> gx = enc_.backward(relu_.backward(up_.backward(gu)));
        gx += gx_cat;
        gx += gy;  // residual path
        return gx;
    }

    nn::ParamList<T> params() {
        nn::ParamList<T> out;
        enc_.collect_params("", out);
        out_.collect_params("", out);
        return out;
    }

private:
    std::size_t width_;
    nn::Conv2d<T> enc_;
    nn::ReLU<T> relu_;
    nn::BilinearResize<T> up_;
    nn::Concat<T> cat_;
    nn::Conv2d<T> out_;
};

// ---------------------------------------------------------------------------
// Step 1: environment discriminator pretraining
// ---------------------------------------------------------------------------

struct DiscriminatorTrainConfig {
    std::size_t steps = 400;
    std::size_t batch = 32;
    double learning_rate = 1e-3;
    double holdout_fraction = 0.2;
    std::size_t eval_pairs = 200;
    std::uint64_t seed = 0;
};

struct DiscriminatorTrainResult {
    double holdout_accuracy = 0.0;
    double final_loss = 0.0;
};

namespace detail {

inline Tensor<float> gather_inputs(const FrameDataset& ds, const std::vector<std::size_t>& idx) {
    Tensor<float> x({idx.size(), kInputChannels, kTxAntennas, kRxAntennas});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto& in = ds.records[idx[i]].input;
        std::copy(in.data(), in.data() + in.size(), x.data() + i * in.size());
    }
    return x;
}

}  // namespace detail

template <typename T>
DiscriminatorTrainResult pretrain_discriminator(EnvDiscriminator<T>& disc, const FrameDataset& ds,
                                                const DiscriminatorTrainConfig& cfg) {
    const auto envs = ds.environments();
    if (envs.size() < 2)
        throw InsufficientEnvError("pretrain_discriminator: need at least two environments");

    Rng rng(derive_seed(cfg.seed, 0xD7A1));
    std::vector<std::vector<std::size_t>> train_pool(envs.size()), hold_pool(envs.size());
    for (std::size_t e = 0; e < envs.size(); ++e) {
        auto idx = ds.indices_for_env(envs[e]);
        rng.shuffle(idx);
        const auto cut = static_cast<std::size_t>(
            std::ceil((1.0 - cfg.holdout_fraction) * static_cast<double>(idx.size())));
        train_pool[e].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
        hold_pool[e].assign(idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
        if (train_pool[e].empty() || hold_pool[e].empty())
            throw DataError("pretrain_discriminator: environment too small to split");
    }

    auto draw_pair = [&](Rng& r, const std::vector<std::vector<std::size_t>>& pool, bool same)
        -> std::pair<std::size_t, std::size_t> {
        if (same) {
            const std::size_t e = static_cast<std::size_t>(r.below(pool.size()));
            return {pool[e][r.below(pool[e].size())], pool[e][r.below(pool[e].size())]};
        }
        const std::size_t e1 = static_cast<std::size_t>(r.below(pool.size()));
        std::size_t e2 = static_cast<std::size_t>(r.below(pool.size() - 1));
        if (e2 >= e1) ++e2;
        return {pool[e1][r.below(pool[e1].size())], pool[e2][r.below(pool[e2].size())]};
    };

    auto opt_params = disc.params();
    Adam<T> opt(cfg.learning_rate, 0.9, 0.999);
    DiscriminatorTrainResult result;
    for (std::size_t s = 0; s < cfg.steps; ++s) {
        std::vector<std::size_t> ia, ib;
        Tensor<T> labels({cfg.batch, 1});
        for (std::size_t i = 0; i < cfg.batch; ++i) {
            const bool same = i % 2 == 0;
            const auto [a, b] = draw_pair(rng, train_pool, same);
            ia.push_back(a);
            ib.push_back(b);
            labels.at(i, 0) = same ? T{1} : T{0};
        }
        const auto xa = detail::gather_inputs(ds, ia).template cast<T>();
        const auto xb = detail::gather_inputs(ds, ib).template cast<T>();
        Tensor<T> p = disc.forward(xa, xb);
        Tensor<T> gp(p.shape());
        result.final_loss = static_cast<double>(bce_grad(p, labels, T{1}, gp));
        nn::zero_grads(opt_params);
        disc.backward(gp);
        opt.step(opt_params);
    }

    Rng eval_rng(derive_seed(cfg.seed, 0xE7A1));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < cfg.eval_pairs; ++i) {
        const bool same = i % 2 == 0;
        const auto [a, b] = draw_pair(eval_rng, hold_pool, same);
        std::vector<std::size_t> ia{a}, ib{b};
        const auto xa = detail::gather_inputs(ds, ia).template cast<T>();
        const auto xb = detail::gather_inputs(ds, ib).template cast<T>();
        const Tensor<T> p = disc.forward(xa, xb);
        const bool said_same = static_cast<double>(p.at(0, 0)) > 0.5;
        if (said_same == same) ++correct;
    }
    result.holdout_accuracy = static_cast<double>(correct) / static_cast<double>(cfg.eval_pairs);
    return result;
}

// ---------------------------------------------------------------------------
// Step 2: adversarial generator + perception training against a frozen
// discriminator
// ---------------------------------------------------------------------------

struct AdaptConfig {
    std::string train_env = "A";  // labeled environment
    std::size_t epochs = 5;
    std::size_t steps_per_epoch = 50;
    std::size_t batch = 16;
    double learning_rate = 1e-3;
    double adversarial_weight = 0.1;
    MatthewWeightParams mw_jhm{1.0, 1.0};
    MatthewWeightParams mw_paf{1.0, 0.3};
    LossWeights loss_weights{0.1, 1.0, 1.0};
    std::uint64_t seed = 0;
    double divergence_factor = 10.0;
    std::size_t divergence_patience = 100;
};

struct AdaptLogRecord {
    std::size_t epoch = 0;
    double perception_total = 0.0;
    double adv_loss = 0.0;
    double d_pass_rate = 0.0;  // mean D output on generated cross-env pairs
};

struct AdaptResult {
    std::vector<AdaptLogRecord> history;
    bool aborted = false;
    std::string diagnostic;
};

template <typename T>
AdaptResult adversarial_train(EnvGenerator<T>& gen, EnvDiscriminator<T>& disc,
                              PerceptionNet<T>& net, const FrameDataset& ds,
                              const std::vector<std::size_t>& labeled_train_indices,
                              const AdaptConfig& cfg) {
    std::vector<std::size_t> labeled;
    for (auto i : labeled_train_indices)
        if (ds.records[i].env == cfg.train_env) labeled.push_back(i);
    std::vector<std::size_t> unlabeled;
    for (std::size_t i = 0; i < ds.records.size(); ++i)
        if (ds.records[i].env != cfg.train_env) unlabeled.push_back(i);
    if (labeled.empty() || unlabeled.empty())
        throw InsufficientEnvError("adversarial_train: need labeled and cross-env samples");

    nn::ParamList<T> opt_params = gen.params();
    for (auto& p : net.params()) opt_params.push_back(p);
    Adam<T> opt(cfg.learning_rate, 0.9, 0.999);
    Rng rng(derive_seed(cfg.seed, 0xADA7));

    AdaptResult result;
    double initial_total = -1.0;
    std::size_t high_loss_streak = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        AdaptLogRecord rec;
        rec.epoch = epoch;
        for (std::size_t s = 0; s < cfg.steps_per_epoch; ++s) {
            std::vector<std::size_t> i1, i2;
            for (std::size_t i = 0; i < cfg.batch; ++i) {
                i1.push_back(labeled[rng.below(labeled.size())]);
                i2.push_back(unlabeled[rng.below(unlabeled.size())]);
            }
            Batch b1 = make_batch(ds, i1);
            const auto x1 = b1.x.template cast<T>();
            const auto x2 = detail::gather_inputs(ds, i2).template cast<T>();

            // one generator pass over both halves keeps the layer state whole
            Tensor<T> stacked({2 * cfg.batch, kInputChannels, kTxAntennas, kRxAntennas});
            std::copy(x1.data(), x1.data() + x1.size(), stacked.data());
            std::copy(x2.data(), x2.data() + x2.size(), stacked.data() + x1.size());
            Tensor<T> g_all = gen.forward(stacked);
            Tensor<T> g1({cfg.batch, kInputChannels, kTxAntennas, kRxAntennas});
            Tensor<T> g2(g1.shape());
            std::copy(g_all.data(), g_all.data() + g1.size(), g1.data());
            std::copy(g_all.data() + g1.size(), g_all.data() + 2 * g1.size(), g2.data());

            auto outs = net.forward(g1);
            Tensor<T> gl_sm(outs.sm.shape()), gl_jhm(outs.jhm.shape()), gl_paf(outs.paf.shape());
            const LossBreakdown perc = composite_loss_grad(
                outs.sm, outs.jhm, outs.paf, b1.sm.template cast<T>(), b1.jhm.template cast<T>(),
                b1.paf.template cast<T>(), cfg.loss_weights, cfg.mw_jhm, cfg.mw_paf, gl_sm, gl_jhm,
                gl_paf);

            Tensor<T> p = disc.forward(g1, g2);
            Tensor<T> ones = Tensor<T>::full(p.shape(), T{1});
            Tensor<T> gp(p.shape());
            const double adv =
                static_cast<double>(bce_grad(p, ones, static_cast<T>(cfg.adversarial_weight), gp));

            const double total = perc.total + cfg.adversarial_weight * adv;
            if (!std::isfinite(total)) {
                result.aborted = true;
                result.diagnostic = "non-finite loss in adversarial step";
                return result;
            }
            if (initial_total < 0.0) initial_total = std::max(total, 1e-12);
            high_loss_streak = total > cfg.divergence_factor * initial_total ? high_loss_streak + 1 : 0;
            if (high_loss_streak >= cfg.divergence_patience) {
                result.aborted = true;
                result.diagnostic = "adversarial training diverged (loss above " +
                                    std::to_string(cfg.divergence_factor) + "x initial for " +
                                    std::to_string(cfg.divergence_patience) + " steps)";
                return result;
            }

            nn::zero_grads(opt_params);
            Tensor<T> g1_grad = net.backward(gl_sm, gl_jhm, gl_paf);
            auto disc_params = disc.params();
            nn::zero_grads(disc_params);  // frozen: gradients through, no update
            auto [ga, gb] = disc.backward(gp);
            g1_grad += ga;
            Tensor<T> stacked_grad(stacked.shape());
            std::copy(g1_grad.data(), g1_grad.data() + g1_grad.size(), stacked_grad.data());
            std::copy(gb.data(), gb.data() + gb.size(), stacked_grad.data() + g1_grad.size());
            gen.backward(stacked_grad);
            opt.step(opt_params);

            rec.perception_total += perc.total;
            rec.adv_loss += adv;
            double mean_p = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) mean_p += static_cast<double>(p[i]);
            rec.d_pass_rate += mean_p / static_cast<double>(p.size());
        }
        rec.perception_total /= static_cast<double>(cfg.steps_per_epoch);
        rec.adv_loss /= static_cast<double>(cfg.steps_per_epoch);
        rec.d_pass_rate /= static_cast<double>(cfg.steps_per_epoch);
        result.history.push_back(rec);
    }
    return result;
}

}  // namespace piwf
