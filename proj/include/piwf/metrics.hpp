#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "piwf/errors.hpp"
#include "piwf/pose_decode.hpp"
#include "piwf/skeleton.hpp"
#include "piwf/target_encode.hpp"
#include "piwf/tensor.hpp"

namespace piwf {

// Frame-level binary mask IoU; two empty masks count as a perfect match.
inline double iou(const Tensor<std::uint8_t>& pred, const Tensor<std::uint8_t>& truth) {
    if (!pred.same_shape(truth)) throw ShapeError("iou: shape mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool a = pred[i] != 0, b = truth[i] != 0;
        inter += a && b;
        uni += a || b;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// AP@a = (1/N) * sum 1(100*IoU_n >= a), a in {50..95}.
inline double ap_at(const std::vector<double>& ious, int a) {
    if (ious.empty()) throw EmptyEvalError("ap_at: no frames");
    std::size_t hits = 0;
    for (double v : ious)
        if (100.0 * v >= static_cast<double>(a)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ious.size());
}

// One ground-truth person with whatever prediction got assigned to it.
struct MatchedPerson {
    std::vector<Joint> gt_joints;
    Box gt_box;
    std::optional<PersonPose> pred;  // nullopt: unmatched, all joints fail
};

namespace detail {

inline double match_cost(const PersonPose& pred, const std::vector<Joint>& gt, double penalty) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!gt[i].visible) continue;
        ++n;
        if (i < pred.joints.size() && pred.joints[i].confidence > 0.f)
            acc += std::hypot(pred.joints[i].x - gt[i].x, pred.joints[i].y - gt[i].y);
        else
            acc += penalty;
    }
    return n ? acc / static_cast<double>(n) : penalty;
}

}  // namespace detail

// Assign predicted persons to ground-truth persons, minimizing total mean
// joint distance. Exact over all assignments for the person counts this
// project deals in; greedy fallback beyond that.
inline std::vector<MatchedPerson> match_persons(const std::vector<PersonPose>& preds,
                                                const std::vector<std::vector<Joint>>& gt_joints,
                                                const std::vector<Box>& gt_boxes) {
    const double penalty =
        std::hypot(static_cast<double>(kGridWidth), static_cast<double>(kGridHeight));
    const std::size_t np = preds.size(), ng = gt_joints.size();
    std::vector<std::vector<double>> cost(ng, std::vector<double>(np, 0.0));
    for (std::size_t g = 0; g < ng; ++g)
        for (std::size_t p = 0; p < np; ++p)
            cost[g][p] = detail::match_cost(preds[p], gt_joints[g], penalty);

    std::vector<int> assign(ng, -1);
    if (np > 0 && ng > 0) {
        if (std::min(np, ng) <= 7) {
            std::vector<int> cur(ng, -1), best_assign(ng, -1);
            std::vector<bool> used(np, false);
            double best = 1e300;
            auto rec = [&](auto&& self, std::size_t g, double acc) -> void {
                if (acc >= best) return;
                if (g == ng) {
                    best = acc;
                    best_assign = cur;
                    return;
                }
                for (std::size_t p = 0; p < np; ++p) {
                    if (used[p]) continue;
                    used[p] = true;
                    cur[g] = static_cast<int>(p);
                    self(self, g + 1, acc + cost[g][p]);
                    cur[g] = -1;
                    used[p] = false;
                }
                if (ng > np) self(self, g + 1, acc + penalty);  // some GT stay unmatched
            };
            rec(rec, 0, 0.0);
            assign = best_assign;
        } else {
            std::vector<bool> used(np, false);
            for (std::size_t g = 0; g < ng; ++g) {
                double bestc = 1e300;
                int bestp = -1;
                for (std::size_t p = 0; p < np; ++p)
                    if (!used[p] && cost[g][p] < bestc) {
                        bestc = cost[g][p];
                        bestp = static_cast<int>(p);
                    }
                if (bestp >= 0) {
                    used[static_cast<std::size_t>(bestp)] = true;
                    assign[g] = bestp;
                }
            }
        }
    }

    std::vector<MatchedPerson> out(ng);
    for (std::size_t g = 0; g < ng; ++g) {
        out[g].gt_joints = gt_joints[g];
        out[g].gt_box = gt_boxes[g];
        if (assign[g] >= 0) out[g].pred = preds[static_cast<std::size_t>(assign[g])];
    }
    return out;
}

// PCK_i@a over matched persons: distance normalized by the ground-truth bbox
// diagonal, boundary inclusive; missing predictions fail.
inline std::vector<double> pck_at(const std::vector<MatchedPerson>& persons, std::size_t joint_count,
                                  double a) {
    if (persons.empty()) throw EmptyEvalError("pck_at: no persons");
    std::vector<double> pck(joint_count, 0.0);
    for (std::size_t i = 0; i < joint_count; ++i) {
        std::size_t total = 0, hit = 0;
        for (const auto& m : persons) {
            if (i >= m.gt_joints.size() || !m.gt_joints[i].visible) continue;
            ++total;
            if (!m.pred || i >= m.pred->joints.size() || m.pred->joints[i].confidence <= 0.f)
                continue;
            const double d =
                std::hypot(m.pred->joints[i].x - m.gt_joints[i].x, m.pred->joints[i].y - m.gt_joints[i].y);
            const double diag = m.gt_box.diagonal();
            if (diag <= 0.0) continue;
            if (d / diag <= a) ++hit;
        }
        pck[i] = total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
    }
    return pck;
}

// ---------------------------------------------------------------------------
// Full evaluation
// ---------------------------------------------------------------------------

struct EvalConfig {
    double sm_binarize = 0.5;
    std::vector<int> ap_thresholds = {50, 55, 60, 65, 70, 75, 80, 85, 90, 95};
    std::vector<double> pck_grid = [] {
        std::vector<double> g;
        for (int i = 1; i <= 50; ++i) g.push_back(0.01 * i);
        return g;
    }();
    std::size_t batch = 16;
    DecodeConfig decode;
};

struct EvalReport {
    double miou = 0.0;
    std::vector<std::pair<int, double>> ap;  // (threshold, AP@threshold)
    double map_score = 0.0;
    std::vector<double> pck_grid;
    std::vector<std::vector<double>> pck;        // [joint][a]
    std::map<std::string, std::vector<double>> group_pck;  // four groups + "mean"
    std::size_t frames = 0;
    std::size_t gt_persons = 0;

    double ap_at_threshold(int a) const {
        for (const auto& [t, v] : ap)
            if (t == a) return v;
        throw EmptyEvalError("ap threshold not evaluated");
    }

    double mpck_at(double a) const {
        // nearest grid point
        std::size_t best = 0;
        for (std::size_t i = 1; i < pck_grid.size(); ++i)
            if (std::abs(pck_grid[i] - a) < std::abs(pck_grid[best] - a)) best = i;
        return group_pck.at("mean")[best];
    }
};

struct EvalFrame {
    Tensor<std::uint8_t> gt_mask;  // union of person masks, {46,82}
    std::vector<std::vector<Joint>> gt_joints;
    std::vector<Box> gt_boxes;
};

// Maps for a chunk of frame indices; implementations run the network or echo
// ground truth.
using MapSource = std::function<std::vector<TargetMaps>(const std::vector<std::size_t>&)>;

inline EvalReport evaluate(const std::vector<EvalFrame>& frames,
                           const std::vector<std::size_t>& indices, const MapSource& maps,
                           const SkeletonTopology& topo, const EvalConfig& cfg = {}) {
    if (indices.empty()) throw EmptyEvalError("evaluate: empty split");
    const auto joint_count = static_cast<std::size_t>(topo.joint_count());

    std::vector<double> ious;
    std::vector<MatchedPerson> all_persons;
    for (std::size_t pos = 0; pos < indices.size(); pos += cfg.batch) {
        std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(pos),
                                       indices.begin() +
                                           static_cast<std::ptrdiff_t>(
                                               std::min(pos + cfg.batch, indices.size())));
        const std::vector<TargetMaps> predicted = maps(chunk);
        if (predicted.size() != chunk.size()) throw ShapeError("evaluate: map source size mismatch");
        for (std::size_t k = 0; k < chunk.size(); ++k) {
            const EvalFrame& frame = frames[chunk[k]];
            const TargetMaps& pm = predicted[k];
            Tensor<std::uint8_t> pred_mask({kGridHeight, kGridWidth});
            for (std::size_t i = 0; i < pred_mask.size(); ++i)
                pred_mask[i] = pm.sm[i] >= cfg.sm_binarize ? 1 : 0;
            ious.push_back(iou(pred_mask, frame.gt_mask));

            const auto poses = decode(pm, topo, cfg.decode);
            auto matched = match_persons(poses, frame.gt_joints, frame.gt_boxes);
            for (auto& m : matched) all_persons.push_back(std::move(m));
        }
    }

    EvalReport rep;
    rep.frames = ious.size();
    rep.gt_persons = all_persons.size();
    rep.miou = std::accumulate(ious.begin(), ious.end(), 0.0) / static_cast<double>(ious.size());
    for (int a : cfg.ap_thresholds) rep.ap.emplace_back(a, ap_at(ious, a));
    rep.map_score = 0.0;
    for (const auto& [a, v] : rep.ap) rep.map_score += v;
    rep.map_score /= static_cast<double>(rep.ap.size());

    rep.pck_grid = cfg.pck_grid;
    rep.pck.assign(joint_count, std::vector<double>(cfg.pck_grid.size(), 0.0));
    if (all_persons.empty()) throw EmptyEvalError("evaluate: no ground-truth persons");
    for (std::size_t ai = 0; ai < cfg.pck_grid.size(); ++ai) {
        const auto per_joint = pck_at(all_persons, joint_count, cfg.pck_grid[ai]);
        for (std::size_t j = 0; j < joint_count; ++j) rep.pck[j][ai] = per_joint[j];
    }

    const JointGroups groups = body25_groups();
    auto group_curve = [&](const std::vector<int>& ids) {
        std::vector<double> curve(cfg.pck_grid.size(), 0.0);
        for (std::size_t ai = 0; ai < curve.size(); ++ai) {
            double acc = 0.0;
            for (int j : ids) acc += rep.pck[static_cast<std::size_t>(j)][ai];
            curve[ai] = acc / static_cast<double>(ids.size());
        }
        return curve;
    };
    if (joint_count == body25().joint_names.size()) {
        rep.group_pck["head"] = group_curve(groups.head);
        rep.group_pck["torso_arms"] = group_curve(groups.torso_arms);
        rep.group_pck["legs"] = group_curve(groups.legs);
        rep.group_pck["feet"] = group_curve(groups.feet);
    }
    std::vector<int> all_ids(joint_count);
    for (std::size_t j = 0; j < joint_count; ++j) all_ids[j] = static_cast<int>(j);
    rep.group_pck["mean"] = group_curve(all_ids);
    return rep;
}

}  // namespace piwf
