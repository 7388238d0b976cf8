#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "piwf/errors.hpp"
#include "piwf/skeleton.hpp"
#include "piwf/tensor.hpp"

namespace piwf {

inline constexpr std::size_t kJhmChannels = 26;  // 25 joints + background
inline constexpr std::size_t kPafChannels = 52;  // x/y per limb
inline constexpr std::size_t kBackgroundChannel = 25;

struct EncodeParams {
    double sigma = 1.5;       // JHM Gaussian, px on the 46x82 grid
    double limb_width = 1.0;  // PAF band half-width, px
};

// Ground-truth triplet on the 46x82 grid: sm in [0,1], jhm in [0,1],
// paf vectors with magnitude <= 1.
struct TargetMaps {
    Tensor<float> sm;   // {1, 46, 82}
    Tensor<float> jhm;  // {26, 46, 82}
    Tensor<float> paf;  // {52, 46, 82}
};

// Channel j holds, per pixel, the max over persons of a unit-height Gaussian
// at that person's joint j; the last channel is the background complement.
inline Tensor<float> render_jhm(const std::vector<PersonAnnotation>& persons, double sigma) {
    if (sigma <= 0) throw DomainError("render_jhm: sigma must be positive");
    Tensor<float> jhm({kJhmChannels, kGridHeight, kGridWidth});
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    for (const auto& person : persons) {
        for (std::size_t j = 0; j < person.joints.size() && j < kJhmChannels - 1; ++j) {
            const auto& joint = person.joints[j];
            if (!joint.visible) continue;
            const int cx = static_cast<int>(std::lround(joint.x));
            const int cy = static_cast<int>(std::lround(joint.y));
            for (int r = std::max(0, cy - radius); r <= std::min<int>(kGridHeight - 1, cy + radius); ++r)
                for (int c = std::max(0, cx - radius); c <= std::min<int>(kGridWidth - 1, cx + radius); ++c) {
                    const double dx = c - joint.x;
                    const double dy = r - joint.y;
                    const float v = static_cast<float>(std::exp(-(dx * dx + dy * dy) * inv2s2));
                    auto& cell = jhm.at(j, r, c);
                    cell = std::max(cell, v);
                }
        }
    }
    for (std::size_t r = 0; r < kGridHeight; ++r)
        for (std::size_t c = 0; c < kGridWidth; ++c) {
            float peak = 0.f;
            for (std::size_t j = 0; j + 1 < kJhmChannels; ++j) peak = std::max(peak, jhm.at(j, r, c));
            jhm.at(kBackgroundChannel, r, c) = std::clamp(1.f - peak, 0.f, 1.f);
        }
    return jhm;
}

// Unit direction field inside a band of half-width limb_width around each
// rendered limb; overlapping instances of the same limb are averaged and the
// result clamped back to unit magnitude.
inline Tensor<float> render_paf(const std::vector<PersonAnnotation>& persons, double limb_width,
                                const SkeletonTopology& topo) {
    if (limb_width <= 0) throw DomainError("render_paf: limb_width must be positive");
    const auto limb_count = static_cast<std::size_t>(topo.limb_count());
    Tensor<float> paf({2 * limb_count, kGridHeight, kGridWidth});
    std::vector<std::uint16_t> counts(limb_count * kGridHeight * kGridWidth, 0);

    for (const auto& person : persons) {
        for (std::size_t k = 0; k < limb_count; ++k) {
            const auto& limb = topo.limbs[k];
            const auto& ja = person.joints[static_cast<std::size_t>(limb.a)];
            const auto& jb = person.joints[static_cast<std::size_t>(limb.b)];
            if (!ja.visible || !jb.visible) continue;
            const double vx = jb.x - ja.x;
            const double vy = jb.y - ja.y;
            const double len = std::hypot(vx, vy);
            if (len < 1e-9) continue;  // degenerate limb
            const double ux = vx / len, uy = vy / len;
            const int r0 = std::max(0, static_cast<int>(std::floor(std::min(ja.y, jb.y) - limb_width)));
            const int r1 = std::min<int>(kGridHeight - 1,
                                         static_cast<int>(std::ceil(std::max(ja.y, jb.y) + limb_width)));
            const int c0 = std::max(0, static_cast<int>(std::floor(std::min(ja.x, jb.x) - limb_width)));
            const int c1 = std::min<int>(kGridWidth - 1,
                                         static_cast<int>(std::ceil(std::max(ja.x, jb.x) + limb_width)));
            for (int r = r0; r <= r1; ++r)
                for (int c = c0; c <= c1; ++c) {
                    const double px = c - ja.x;
                    const double py = r - ja.y;
                    const double along = px * ux + py * uy;
                    const double across = std::abs(px * uy - py * ux);
                    if (along < 0.0 || along > len || across > limb_width) continue;
                    paf.at(2 * k, r, c) += static_cast<float>(ux);
                    paf.at(2 * k + 1, r, c) += static_cast<float>(uy);
                    ++counts[(k * kGridHeight + r) * kGridWidth + c];
                }
        }
    }
    for (std::size_t k = 0; k < limb_count; ++k)
        for (std::size_t r = 0; r < kGridHeight; ++r)
            for (std::size_t c = 0; c < kGridWidth; ++c) {
                const auto n = counts[(k * kGridHeight + r) * kGridWidth + c];
                if (n <= 1) continue;
                float& x = paf.at(2 * k, r, c);
                float& y = paf.at(2 * k + 1, r, c);
                x /= static_cast<float>(n);
                y /= static_cast<float>(n);
                const float mag = std::hypot(x, y);
                if (mag > 1.f) {
                    x /= mag;
                    y /= mag;
                }
            }
    return paf;
}

inline Tensor<float> render_sm(const std::vector<PersonAnnotation>& persons) {
    Tensor<float> sm({1, kGridHeight, kGridWidth});
    for (const auto& person : persons)
        for (std::size_t i = 0; i < person.mask.size(); ++i)
            if (person.mask[i]) sm[i] = 1.f;
    return sm;
}

inline TargetMaps render_targets(const std::vector<PersonAnnotation>& persons,
                                 const EncodeParams& params, const SkeletonTopology& topo) {
    TargetMaps maps;
    maps.sm = render_sm(persons);
    maps.jhm = render_jhm(persons, params.sigma);
    maps.paf = render_paf(persons, params.limb_width, topo);
    return maps;
}

}  // namespace piwf
