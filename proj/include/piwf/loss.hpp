#pragma once

#include <cmath>
#include <cstddef>

#include "piwf/errors.hpp"
#include "piwf/target_encode.hpp"
#include "piwf/tensor.hpp"

namespace piwf {

// Matthew Weight parameters. The weight is w(y) = k*|y| + b, which equals the
// literal k*y + b*I(y) form on y >= 0 and keeps weights positive on the
// signed PAF targets.
struct MatthewWeightParams {
    double k = 1.0;
    double b = 1.0;
};

struct LossWeights {
    double lambda_sm = 0.1;
    double lambda_jhm = 1.0;
    double lambda_paf = 1.0;
};

inline constexpr double kBceEps = 1e-7;

template <typename T>
T matthew_weight(T y, const MatthewWeightParams& p) {
    if (!std::isfinite(static_cast<double>(y))) throw DataError("matthew_weight: non-finite target");
    return static_cast<T>(p.k) * std::abs(y) + static_cast<T>(p.b);
}

// Mean over elements of w(y) * (pred - y)^2.
template <typename T>
T weighted_l2(const Tensor<T>& pred, const Tensor<T>& target, const MatthewWeightParams& p) {
    if (!pred.same_shape(target)) throw ShapeError("weighted_l2: shape mismatch");
    T acc{0};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T d = pred[i] - target[i];
        acc += matthew_weight(target[i], p) * d * d;
    }
    return acc / static_cast<T>(pred.size());
}

// Same value, plus d(loss)/d(pred) scaled by `scale` accumulated into grad.
template <typename T>
T weighted_l2_grad(const Tensor<T>& pred, const Tensor<T>& target, const MatthewWeightParams& p,
                   T scale, Tensor<T>& grad) {
    if (!pred.same_shape(target)) throw ShapeError("weighted_l2: shape mismatch");
    if (!grad.same_shape(pred)) throw ShapeError("weighted_l2: grad shape mismatch");
    T acc{0};
    const T inv_n = T{1} / static_cast<T>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T w = matthew_weight(target[i], p);
        const T d = pred[i] - target[i];
        acc += w * d * d;
        grad[i] += scale * T{2} * w * d * inv_n;
    }
    return acc * inv_n;
}

// Binary cross entropy on probabilities, clamped away from {0,1} before the
// logs. Inputs outside [0,1] indicate a missing sigmoid upstream.
template <typename T>
T bce(const Tensor<T>& prob, const Tensor<T>& target) {
    if (!prob.same_shape(target)) throw ShapeError("bce: shape mismatch");
    T acc{0};
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const double pr = static_cast<double>(prob[i]);
        if (pr < 0.0 || pr > 1.0) throw DomainError("bce: probability outside [0,1]");
        const double pc = std::min(1.0 - kBceEps, std::max(kBceEps, pr));
        const double y = static_cast<double>(target[i]);
        acc += static_cast<T>(-(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc)));
    }
    return acc / static_cast<T>(prob.size());
}

template <typename T>
T bce_grad(const Tensor<T>& prob, const Tensor<T>& target, T scale, Tensor<T>& grad) {
    if (!prob.same_shape(target)) throw ShapeError("bce: shape mismatch");
    if (!grad.same_shape(prob)) throw ShapeError("bce: grad shape mismatch");
    T acc{0};
    const T inv_n = T{1} / static_cast<T>(prob.size());
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const double pr = static_cast<double>(prob[i]);
        if (pr < 0.0 || pr > 1.0) throw DomainError("bce: probability outside [0,1]");
        const double pc = std::min(1.0 - kBceEps, std::max(kBceEps, pr));
        const double y = static_cast<double>(target[i]);
        acc += static_cast<T>(-(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc)));
        // the clamp makes the loss flat outside [eps, 1-eps]
        if (pr >= kBceEps && pr <= 1.0 - kBceEps)
            grad[i] += scale * static_cast<T>((pc - y) / (pc * (1.0 - pc))) * inv_n;
    }
    return acc * inv_n;
}

struct LossBreakdown {
    double sm = 0.0;   // BCE term, before lambda
    double jhm = 0.0;  // MW-L2 term, before lambda
    double paf = 0.0;  // MW-L2 term, before lambda
    double total = 0.0;
};

// total = lambda1*BCE(sm) + lambda2*MWL2(jhm) + lambda3*MWL2(paf).
template <typename T>
LossBreakdown composite_loss(const Tensor<T>& sm_pred, const Tensor<T>& jhm_pred,
                             const Tensor<T>& paf_pred, const Tensor<T>& sm_true,
                             const Tensor<T>& jhm_true, const Tensor<T>& paf_true,
                             const LossWeights& w, const MatthewWeightParams& mw_jhm,
                             const MatthewWeightParams& mw_paf) {
    LossBreakdown out;
    out.sm = static_cast<double>(bce(sm_pred, sm_true));
    out.jhm = static_cast<double>(weighted_l2(jhm_pred, jhm_true, mw_jhm));
    out.paf = static_cast<double>(weighted_l2(paf_pred, paf_true, mw_paf));
    out.total = w.lambda_sm * out.sm + w.lambda_jhm * out.jhm + w.lambda_paf * out.paf;
    return out;
}

inline LossBreakdown composite_loss(const TargetMaps& pred, const TargetMaps& truth,
                                    const LossWeights& w = {},
                                    const MatthewWeightParams& mw_jhm = {1.0, 1.0},
                                    const MatthewWeightParams& mw_paf = {1.0, 0.3}) {
    return composite_loss(pred.sm, pred.jhm, pred.paf, truth.sm, truth.jhm, truth.paf, w, mw_jhm,
                          mw_paf);
}

// Loss plus gradients w.r.t. the three predicted maps.
template <typename T>
LossBreakdown composite_loss_grad(const Tensor<T>& sm_pred, const Tensor<T>& jhm_pred,
                                  const Tensor<T>& paf_pred, const Tensor<T>& sm_true,
                                  const Tensor<T>& jhm_true, const Tensor<T>& paf_true,
                                  const LossWeights& w, const MatthewWeightParams& mw_jhm,
                                  const MatthewWeightParams& mw_paf, Tensor<T>& g_sm,
                                  Tensor<T>& g_jhm, Tensor<T>& g_paf) {
    LossBreakdown out;
    out.sm = static_cast<double>(bce_grad(sm_pred, sm_true, static_cast<T>(w.lambda_sm), g_sm));
    out.jhm = static_cast<double>(
        weighted_l2_grad(jhm_pred, jhm_true, mw_jhm, static_cast<T>(w.lambda_jhm), g_jhm));
    out.paf = static_cast<double>(
        weighted_l2_grad(paf_pred, paf_true, mw_paf, static_cast<T>(w.lambda_paf), g_paf));
    out.total = w.lambda_sm * out.sm + w.lambda_jhm * out.jhm + w.lambda_paf * out.paf;
    return out;
}

}  // namespace piwf
