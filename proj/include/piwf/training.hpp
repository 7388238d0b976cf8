#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "piwf/dataset.hpp"
#include "piwf/loss.hpp"
#include "piwf/metrics.hpp"
#include "piwf/model.hpp"
#include "piwf/nn/layers.hpp"
#include "piwf/rng.hpp"

namespace piwf {

// Adaptive-moment optimizer with bias correction.
template <typename T>
class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const nn::ParamList<T>& params) {
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.emplace_back(p.value->shape());
                v_.emplace_back(p.value->shape());
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor<T>& m = m_[i];
            Tensor<T>& v = v_[i];
            Tensor<T>& w = *params[i].value;
            const Tensor<T>& g = *params[i].grad;
            for (std::size_t k = 0; k < w.size(); ++k) {
                m[k] = static_cast<T>(beta1_) * m[k] + static_cast<T>(1.0 - beta1_) * g[k];
                v[k] = static_cast<T>(beta2_) * v[k] + static_cast<T>(1.0 - beta2_) * g[k] * g[k];
                const double mh = static_cast<double>(m[k]) / bc1;
                const double vh = static_cast<double>(v[k]) / bc2;
                w[k] -= static_cast<T>(lr_ * mh / (std::sqrt(vh) + eps_));
            }
        }
    }

    void set_lr(double lr) { lr_ = lr; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

struct TrainConfig {
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::size_t epochs = 20;
    std::size_t max_steps = 0;  // 0: bounded by epochs only
    MatthewWeightParams mw_jhm{1.0, 1.0};
    MatthewWeightParams mw_paf{1.0, 0.3};
    LossWeights loss_weights{0.1, 1.0, 1.0};
    double split_fraction = 0.8;
    std::uint64_t seed = 0;
    std::size_t eval_every_steps = 0;  // 0: evaluate once per epoch
    bool eval_on_train = false;
    double early_stop_miou = -1.0;    // both thresholds > 0 enable early stop
    double early_stop_mpck20 = -1.0;
    DecodeConfig decode;
    std::size_t checkpoint_every_epochs = 1;
};

struct TrainLogRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double l_sm = 0.0, l_jhm = 0.0, l_paf = 0.0, total = 0.0;
    double miou = -1.0, mpck20 = -1.0;

    nlohmann::json to_json() const {
        nlohmann::json j{{"epoch", epoch},  {"step", step}, {"l_sm", l_sm},
                         {"l_jhm", l_jhm}, {"l_paf", l_paf}, {"total", total}};
        if (miou >= 0.0) j["miou"] = miou;
        if (mpck20 >= 0.0) j["mpck20"] = mpck20;
        return j;
    }
};

struct TrainResult {
    std::vector<TrainLogRecord> history;
    std::filesystem::path final_checkpoint;
    bool aborted = false;
    std::string diagnostic;
    double last_miou = -1.0;
    double last_mpck20 = -1.0;
    std::size_t steps = 0;
};

namespace detail {

template <typename T>
std::vector<Tensor<T>> snapshot_params(const nn::ParamList<T>& params) {
    std::vector<Tensor<T>> out;
    for (const auto& p : params) out.push_back(*p.value);
    return out;
}

template <typename T>
void restore_params(const nn::ParamList<T>& params, const std::vector<Tensor<T>>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = snap[i];
}

}  // namespace detail

// Batched map source backed by a network, for evaluate().
template <typename T>
MapSource net_map_source(PerceptionNet<T>& net, const FrameDataset& ds) {
    return [&net, &ds](const std::vector<std::size_t>& chunk) {
        Batch batch = make_batch(ds, chunk);
        const auto x = batch.x.template cast<T>();
        auto outs = net.forward(x);
        std::vector<TargetMaps> maps(chunk.size());
        const std::size_t sm_n = kGridHeight * kGridWidth;
        const std::size_t jhm_n = kJhmChannels * sm_n;
        const std::size_t paf_n = kPafChannels * sm_n;
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            maps[i].sm = Tensor<float>({1, kGridHeight, kGridWidth});
            maps[i].jhm = Tensor<float>({kJhmChannels, kGridHeight, kGridWidth});
            maps[i].paf = Tensor<float>({kPafChannels, kGridHeight, kGridWidth});
            for (std::size_t k = 0; k < sm_n; ++k)
                maps[i].sm[k] = static_cast<float>(outs.sm[i * sm_n + k]);
            for (std::size_t k = 0; k < jhm_n; ++k)
                maps[i].jhm[k] = static_cast<float>(outs.jhm[i * jhm_n + k]);
            for (std::size_t k = 0; k < paf_n; ++k)
                maps[i].paf[k] = static_cast<float>(outs.paf[i * paf_n + k]);
        }
        return maps;
    };
}

// Optimizer loop: shuffled mini-batches over the train split, per-epoch loss
// breakdown and eval metrics, per-epoch checkpoints, deterministic under the
// seed. A non-finite loss aborts, restoring the last finite parameters.
template <typename T = float>
TrainResult train(PerceptionNet<T>& net, const TrainConfig& cfg, const FrameDataset& ds,
                  const SplitIndices& split, const std::filesystem::path& out_dir,
                  const std::function<void(const TrainLogRecord&)>& on_log = nullptr) {
    if (split.train.empty()) throw DataError("train: empty train split");
    std::filesystem::create_directories(out_dir);
    std::ofstream log_stream(out_dir / "metrics.jsonl");

    auto params = net.params();
    Adam<T> opt(cfg.learning_rate, cfg.beta1, cfg.beta2);
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5F0F));

    const std::vector<EvalFrame> frames = ds.eval_frames();
    const std::vector<std::size_t>& eval_idx =
        cfg.eval_on_train ? split.train : (split.test.empty() ? split.train : split.test);
    EvalConfig eval_cfg;
    eval_cfg.decode = cfg.decode;

    TrainResult result;
    auto last_good = detail::snapshot_params(params);
    std::size_t step = 0;
    bool stop = false;

    auto run_eval = [&](TrainLogRecord& rec) {
        const EvalReport rep = evaluate(frames, eval_idx, net_map_source(net, ds), body25(), eval_cfg);
        rec.miou = rep.miou;
        rec.mpck20 = rep.mpck_at(0.2);
        result.last_miou = rec.miou;
        result.last_mpck20 = rec.mpck20;
        if (cfg.early_stop_miou > 0.0 && cfg.early_stop_mpck20 > 0.0 &&
            rec.miou >= cfg.early_stop_miou && rec.mpck20 >= cfg.early_stop_mpck20)
            stop = true;
    };

    auto emit = [&](TrainLogRecord rec) {
        if (log_stream) log_stream << rec.to_json().dump() << "\n" << std::flush;
        if (on_log) on_log(rec);
        result.history.push_back(std::move(rec));
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        std::vector<std::size_t> order = split.train;
        shuffle_rng.shuffle(order);

        double acc_sm = 0.0, acc_jhm = 0.0, acc_paf = 0.0, acc_total = 0.0;
        std::size_t batches = 0;
        for (std::size_t pos = 0; pos < order.size() && !stop; pos += cfg.batch_size) {
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                             pos + cfg.batch_size, order.size())));
            Batch batch = make_batch(ds, idx);
            const auto x = batch.x.template cast<T>();
            const auto t_sm = batch.sm.template cast<T>();
            const auto t_jhm = batch.jhm.template cast<T>();
            const auto t_paf = batch.paf.template cast<T>();

            auto outs = net.forward(x);
            Tensor<T> g_sm(outs.sm.shape()), g_jhm(outs.jhm.shape()), g_paf(outs.paf.shape());
            const LossBreakdown loss =
                composite_loss_grad(outs.sm, outs.jhm, outs.paf, t_sm, t_jhm, t_paf,
                                    cfg.loss_weights, cfg.mw_jhm, cfg.mw_paf, g_sm, g_jhm, g_paf);
            if (!std::isfinite(loss.total)) {
                detail::restore_params(params, last_good);
                save_checkpoint(out_dir / "last_good.piwk", net);
                result.aborted = true;
                result.diagnostic = "non-finite loss at step " + std::to_string(step);
                result.final_checkpoint = out_dir / "last_good.piwk";
                result.steps = step;
                return result;
            }
            nn::zero_grads(params);
            net.backward(g_sm, g_jhm, g_paf);
            opt.step(params);
            last_good = detail::snapshot_params(params);

            acc_sm += loss.sm;
            acc_jhm += loss.jhm;
            acc_paf += loss.paf;
            acc_total += loss.total;
            ++batches;
            ++step;

            if (cfg.eval_every_steps > 0 && step % cfg.eval_every_steps == 0) {
                TrainLogRecord rec;
                rec.epoch = epoch;
                rec.step = step;
                rec.l_sm = loss.sm;
                rec.l_jhm = loss.jhm;
                rec.l_paf = loss.paf;
                rec.total = loss.total;
                run_eval(rec);
                emit(std::move(rec));
            }
            if (cfg.max_steps > 0 && step >= cfg.max_steps) stop = true;
        }

        TrainLogRecord rec;
        rec.epoch = epoch;
        rec.step = step;
        if (batches > 0) {
            rec.l_sm = acc_sm / static_cast<double>(batches);
            rec.l_jhm = acc_jhm / static_cast<double>(batches);
            rec.l_paf = acc_paf / static_cast<double>(batches);
            rec.total = acc_total / static_cast<double>(batches);
        }
        if (cfg.eval_every_steps == 0) run_eval(rec);
        emit(std::move(rec));

        if (cfg.checkpoint_every_epochs > 0 && (epoch + 1) % cfg.checkpoint_every_epochs == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_epoch%03zu.piwk", epoch);
            save_checkpoint(out_dir / name, net);
        }
    }

    result.steps = step;
    result.final_checkpoint = out_dir / "checkpoint_final.piwk";
    save_checkpoint(result.final_checkpoint, net);
    return result;
}

}  // namespace piwf
