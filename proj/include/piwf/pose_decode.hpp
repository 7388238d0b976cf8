#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "piwf/errors.hpp"
#include "piwf/skeleton.hpp"
#include "piwf/target_encode.hpp"
#include "piwf/tensor.hpp"

namespace piwf {

struct DecodeConfig {
    double threshold = 0.1;        // JHM peak detection
    double score_threshold = 0.05; // PAF line-integral acceptance
    int n_samples = 10;            // integral sample count
    int min_parts = 4;             // joints required to keep a person
    bool optimal_matching = false; // exhaustive per-limb assignment (oracle mode)
};

struct JointCandidate {
    int joint_type = 0;
    float x = 0.f;
    float y = 0.f;
    float score = 0.f;
};

struct PoseJoint {
    float x = 0.f;
    float y = 0.f;
    float confidence = 0.f;  // 0 marks an undetected joint
};

struct PersonPose {
    std::vector<PoseJoint> joints;

    int detected_count() const {
        int n = 0;
        for (const auto& j : joints)
            if (j.confidence > 0.f) ++n;
        return n;
    }
};

namespace detail {

// Sub-pixel peak offset from a log-space parabola fit; a sampled Gaussian is
// an exact parabola in log space. Falls back to a value-space fit when a
// neighbor is non-positive.
inline double refine_axis(double vm, double v0, double vp) {
    double a = vm, b = v0, c = vp;
    if (vm > 0.0 && v0 > 0.0 && vp > 0.0) {
        a = std::log(vm);
        b = std::log(v0);
        c = std::log(vp);
    }
    const double denom = a - 2.0 * b + c;
    if (std::abs(denom) < 1e-12) return 0.0;
    return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

}  // namespace detail

// Per-type candidate lists from the joint heat maps. A peak must exceed the
// threshold and dominate its 8-neighborhood; the background channel (last) is
// skipped.
inline std::vector<std::vector<JointCandidate>> extract_peaks(const Tensor<float>& jhm,
                                                              double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0)
        throw DomainError("extract_peaks: threshold must lie in (0,1)");
    if (jhm.rank() != 3) throw ShapeError("extract_peaks: expected {C,H,W}");
    const std::size_t channels = jhm.dim(0), h = jhm.dim(1), w = jhm.dim(2);
    std::vector<std::vector<JointCandidate>> out(channels - 1);
    for (std::size_t j = 0; j + 1 < channels; ++j) {
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                const float v = jhm.at(j, r, c);
                if (v <= threshold) continue;
                bool is_peak = true;
                for (int dr = -1; dr <= 1 && is_peak; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        const auto rr = static_cast<std::ptrdiff_t>(r) + dr;
                        const auto cc = static_cast<std::ptrdiff_t>(c) + dc;
                        if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(h) ||
                            cc >= static_cast<std::ptrdiff_t>(w))
                            continue;
                        if (jhm.at(j, static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) > v) {
                            is_peak = false;
                            break;
                        }
                    }
                if (!is_peak) continue;
                JointCandidate cand;
                cand.joint_type = static_cast<int>(j);
                double ox = 0.0, oy = 0.0;
                if (c > 0 && c + 1 < w)
                    ox = detail::refine_axis(jhm.at(j, r, c - 1), v, jhm.at(j, r, c + 1));
                if (r > 0 && r + 1 < h)
                    oy = detail::refine_axis(jhm.at(j, r - 1, c), v, jhm.at(j, r + 1, c));
                cand.x = static_cast<float>(c + ox);
                cand.y = static_cast<float>(r + oy);
                cand.score = v;
                out[j].push_back(cand);
            }
    }
    return out;
}

namespace detail {

inline float sample_bilinear(const Tensor<float>& t, std::size_t channel, double x, double y) {
    const double maxx = static_cast<double>(t.dim(2) - 1);
    const double maxy = static_cast<double>(t.dim(1) - 1);
    x = std::clamp(x, 0.0, maxx);
    y = std::clamp(y, 0.0, maxy);
    const auto x0 = static_cast<std::size_t>(x);
    const auto y0 = static_cast<std::size_t>(y);
    const std::size_t x1 = std::min(x0 + 1, t.dim(2) - 1);
    const std::size_t y1 = std::min(y0 + 1, t.dim(1) - 1);
    const double fx = x - static_cast<double>(x0);
    const double fy = y - static_cast<double>(y0);
    const double v00 = t.at(channel, y0, x0), v01 = t.at(channel, y0, x1);
    const double v10 = t.at(channel, y1, x0), v11 = t.at(channel, y1, x1);
    const double top = v00 + fx * (v01 - v00);
    const double bot = v10 + fx * (v11 - v10);
    return static_cast<float>(top + fy * (bot - top));
}

}  // namespace detail

// Mean over sample points of dot(PAF, unit a->b) along the segment.
inline double score_limb(const JointCandidate& a, const JointCandidate& b,
                         const Tensor<float>& paf, int limb_index, int n_samples) {
    if (n_samples < 2) throw ConfigError("score_limb: n_samples must be >= 2");
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len = std::hypot(dx, dy);
    if (len < 1e-9) return 0.0;
    const double ux = dx / len, uy = dy / len;
    double acc = 0.0;
    for (int i = 0; i < n_samples; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n_samples - 1);
        const double px = a.x + t * dx, py = a.y + t * dy;
        const double vx = detail::sample_bilinear(paf, static_cast<std::size_t>(2 * limb_index), px, py);
        const double vy =
            detail::sample_bilinear(paf, static_cast<std::size_t>(2 * limb_index + 1), px, py);
        acc += vx * ux + vy * uy;
    }
    return acc / n_samples;
}

namespace detail {

struct LimbMatch {
    std::size_t ia, ib;
    double score;
};

// Exhaustive max-total-score one-to-one matching; only used in oracle mode
// and only for small candidate sets.
inline void optimal_limb_matching(const std::vector<std::vector<double>>& score, double thresh,
                                  std::vector<LimbMatch>& out) {
    const std::size_t na = score.size();
    const std::size_t nb = na ? score[0].size() : 0;
    std::vector<int> best_assign, assign(na, -1);
    std::vector<bool> used(nb, false);
    double best = -1.0;
    auto rec = [&](auto&& self, std::size_t i, double acc) -> void {
        if (i == na) {
            if (acc > best) {
                best = acc;
                best_assign.assign(assign.begin(), assign.end());
            }
            return;
        }
        self(self, i + 1, acc);  // leave candidate i unmatched
        for (std::size_t j = 0; j < nb; ++j) {
            if (used[j] || score[i][j] <= thresh) continue;
            used[j] = true;
            assign[i] = static_cast<int>(j);
            self(self, i + 1, acc + score[i][j]);
            assign[i] = -1;
            used[j] = false;
        }
    };
    rec(rec, 0, 0.0);
    for (std::size_t i = 0; i < best_assign.size(); ++i)
        if (best_assign[i] >= 0)
            out.push_back({i, static_cast<std::size_t>(best_assign[i]),
                           score[i][static_cast<std::size_t>(best_assign[i])]});
}

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t v) {
        while (parent[v] != v) {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        return v;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace detail

// Greedy per-limb association followed by connected components over accepted
// limbs. Candidate conflicts inside one component resolve to the higher heat
// score.
inline std::vector<PersonPose> associate(const std::vector<std::vector<JointCandidate>>& candidates,
                                         const Tensor<float>& paf, const SkeletonTopology& topo,
                                         const DecodeConfig& cfg = {}) {
    const auto joint_count = static_cast<std::size_t>(topo.joint_count());
    if (candidates.size() != joint_count)
        throw TopologyError("associate: candidate lists do not match topology");

    std::vector<std::size_t> offset(joint_count + 1, 0);
    for (std::size_t t = 0; t < joint_count; ++t) offset[t + 1] = offset[t] + candidates[t].size();
    const std::size_t total = offset[joint_count];
    if (total == 0) return {};

    detail::UnionFind uf(total);
    for (std::size_t k = 0; k < topo.limbs.size(); ++k) {
        const auto& la = candidates[static_cast<std::size_t>(topo.limbs[k].a)];
        const auto& lb = candidates[static_cast<std::size_t>(topo.limbs[k].b)];
        if (la.empty() || lb.empty()) continue;
        std::vector<detail::LimbMatch> accepted;
        if (cfg.optimal_matching && std::min(la.size(), lb.size()) <= 6) {
            std::vector<std::vector<double>> score(la.size(), std::vector<double>(lb.size()));
            for (std::size_t i = 0; i < la.size(); ++i)
                for (std::size_t j = 0; j < lb.size(); ++j)
                    score[i][j] = score_limb(la[i], lb[j], paf, static_cast<int>(k), cfg.n_samples);
            detail::optimal_limb_matching(score, cfg.score_threshold, accepted);
        } else {
            std::vector<detail::LimbMatch> pairs;
            for (std::size_t i = 0; i < la.size(); ++i)
                for (std::size_t j = 0; j < lb.size(); ++j) {
                    const double s = score_limb(la[i], lb[j], paf, static_cast<int>(k), cfg.n_samples);
                    if (s > cfg.score_threshold) pairs.push_back({i, j, s});
                }
            std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
                if (a.score != b.score) return a.score > b.score;
                if (a.ia != b.ia) return a.ia < b.ia;
                return a.ib < b.ib;
            });
            std::vector<bool> used_a(la.size(), false), used_b(lb.size(), false);
            for (const auto& p : pairs) {
                if (used_a[p.ia] || used_b[p.ib]) continue;
                used_a[p.ia] = true;
                used_b[p.ib] = true;
                accepted.push_back(p);
            }
        }
        for (const auto& m : accepted)
            uf.unite(offset[static_cast<std::size_t>(topo.limbs[k].a)] + m.ia,
                     offset[static_cast<std::size_t>(topo.limbs[k].b)] + m.ib);
    }

    std::vector<std::ptrdiff_t> comp_index(total, -1);
    std::vector<PersonPose> persons;
    for (std::size_t id = 0; id < total; ++id) {
        const std::size_t root = uf.find(id);
        if (comp_index[root] < 0) {
            comp_index[root] = static_cast<std::ptrdiff_t>(persons.size());
            persons.push_back(PersonPose{std::vector<PoseJoint>(joint_count)});
        }
        const auto t = static_cast<std::size_t>(
            std::upper_bound(offset.begin(), offset.end(), id) - offset.begin() - 1);
        const auto& cand = candidates[t][id - offset[t]];
        auto& joint = persons[static_cast<std::size_t>(comp_index[root])].joints[t];
        if (cand.score > joint.confidence) {
            joint.x = cand.x;
            joint.y = cand.y;
            joint.confidence = cand.score;
        }
    }

    std::vector<PersonPose> kept;
    for (auto& p : persons)
        if (p.detected_count() >= cfg.min_parts) kept.push_back(std::move(p));
    return kept;
}

inline std::vector<PersonPose> decode(const TargetMaps& maps, const SkeletonTopology& topo,
                                      const DecodeConfig& cfg = {}) {
    return associate(extract_peaks(maps.jhm, cfg.threshold), maps.paf, topo, cfg);
}

}  // namespace piwf
