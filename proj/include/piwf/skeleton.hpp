#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "piwf/errors.hpp"
#include "piwf/tensor.hpp"

namespace piwf {

// Output grid shared by annotations, target maps and metrics.
inline constexpr std::size_t kGridHeight = 46;
inline constexpr std::size_t kGridWidth = 82;

struct Limb {
    int a = 0;
    int b = 0;
    bool operator==(const Limb&) const = default;
};

struct SkeletonTopology {
    std::string name;
    int format_version = 1;
    std::vector<std::string> joint_names;
    std::vector<Limb> limbs;        // drawn/PAF limbs
    std::vector<Limb> extra_links;  // additional rigidity edges (embedding only)

    int joint_count() const { return static_cast<int>(joint_names.size()); }
    int limb_count() const { return static_cast<int>(limbs.size()); }

    // Limbs plus extra links, the edge set used by the joints embedding.
    std::vector<Limb> embedding_edges() const {
        std::vector<Limb> edges = limbs;
        edges.insert(edges.end(), extra_links.begin(), extra_links.end());
        return edges;
    }

    void validate() const {
        const int n = joint_count();
        if (n <= 0) throw TopologyError("topology: no joints");
        auto check_edges = [&](const std::vector<Limb>& edges) {
            for (const auto& e : edges) {
                if (e.a < 0 || e.a >= n || e.b < 0 || e.b >= n)
                    throw TopologyError("topology: limb endpoint out of range");
                if (e.a == e.b) throw TopologyError("topology: self-loop");
            }
        };
        check_edges(limbs);
        check_edges(extra_links);
        // connectivity over the limb graph
        std::vector<int> comp(n, -1);
        std::vector<int> stack{0};
        comp[0] = 0;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (const auto& e : limbs) {
                int w = -1;
                if (e.a == v) w = e.b;
                if (e.b == v) w = e.a;
                if (w >= 0 && comp[w] < 0) {
                    comp[w] = 0;
                    stack.push_back(w);
                }
            }
        }
        if (std::any_of(comp.begin(), comp.end(), [](int c) { return c < 0; }))
            throw TopologyError("topology: limb graph not connected");
    }

    std::string canonical_string() const {
        std::string s = name + "|v" + std::to_string(format_version) + "|";
        for (const auto& j : joint_names) s += j + ",";
        s += "|";
        for (const auto& l : limbs) s += std::to_string(l.a) + "-" + std::to_string(l.b) + ",";
        s += "|";
        for (const auto& l : extra_links) s += std::to_string(l.a) + "-" + std::to_string(l.b) + ",";
        return s;
    }

    std::uint64_t checksum() const { return fnv1a(canonical_string()); }
};

// The production skeleton: OpenPose Body-25 joints with its 26 PAF limbs.
inline const SkeletonTopology& body25() {
    static const SkeletonTopology topo = [] {
        SkeletonTopology t;
        t.name = "body25";
        t.joint_names = {"Nose",      "Neck",      "RShoulder", "RElbow",    "RWrist",
                         "LShoulder", "LElbow",    "LWrist",    "MidHip",    "RHip",
                         "RKnee",     "RAnkle",    "LHip",      "LKnee",     "LAnkle",
                         "REye",      "LEye",      "REar",      "LEar",      "LBigToe",
                         "LSmallToe", "LHeel",     "RBigToe",   "RSmallToe", "RHeel"};
        t.limbs = {{1, 8},   {1, 2},   {1, 5},   {2, 3},   {3, 4},   {5, 6},   {6, 7},
                   {8, 9},   {9, 10},  {10, 11}, {8, 12},  {12, 13}, {13, 14}, {1, 0},
                   {0, 15},  {15, 17}, {0, 16},  {16, 18}, {2, 17},  {5, 18},  {14, 19},
                   {19, 20}, {14, 21}, {11, 22}, {22, 23}, {11, 24}};
        t.validate();
        return t;
    }();
    return topo;
}

// 16-joint embedding variant: OpenPose COCO-18 minus the two ear joints,
// plus three cross-torso rigidity links.
inline const SkeletonTopology& coco16() {
    static const SkeletonTopology topo = [] {
        SkeletonTopology t;
        t.name = "coco16";
        t.joint_names = {"Nose",   "Neck",   "RShoulder", "RElbow", "RWrist", "LShoulder",
                         "LElbow", "LWrist", "RHip",      "RKnee",  "RAnkle", "LHip",
                         "LKnee",  "LAnkle", "REye",      "LEye"};
        t.limbs = {{1, 2}, {1, 5},  {2, 3},   {3, 4},   {5, 6},  {6, 7},  {1, 8}, {8, 9},
                   {9, 10}, {1, 11}, {11, 12}, {12, 13}, {1, 0},  {0, 14}, {0, 15}};
        t.extra_links = {{5, 8}, {2, 11}, {11, 8}};
        t.validate();
        return t;
    }();
    return topo;
}

inline void save_topology(const std::filesystem::path& path, const SkeletonTopology& topo) {
    nlohmann::json j;
    j["format_version"] = topo.format_version;
    j["name"] = topo.name;
    j["joint_names"] = topo.joint_names;
    auto edges = [](const std::vector<Limb>& ls) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& l : ls) a.push_back({l.a, l.b});
        return a;
    };
    j["limbs"] = edges(topo.limbs);
    j["extra_links"] = edges(topo.extra_links);
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for write: " + path.string());
    os << j.dump(2) << "\n";
}

inline SkeletonTopology load_topology(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("topology file: " + std::string(e.what()));
    }
    SkeletonTopology t;
    t.format_version = j.at("format_version").get<int>();
    t.name = j.at("name").get<std::string>();
    t.joint_names = j.at("joint_names").get<std::vector<std::string>>();
    for (const auto& e : j.at("limbs")) t.limbs.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    for (const auto& e : j.at("extra_links"))
        t.extra_links.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    t.validate();
    return t;
}

// The four PCK reporting groups.
struct JointGroups {
    std::vector<int> head, torso_arms, legs, feet;
};

inline JointGroups body25_groups() {
    auto index_of = [](const std::string& name) {
        const auto& names = body25().joint_names;
        const auto it = std::find(names.begin(), names.end(), name);
        return static_cast<int>(it - names.begin());
    };
    JointGroups g;
    for (const auto* n : {"Nose", "REye", "LEye", "REar", "LEar"}) g.head.push_back(index_of(n));
    for (const auto* n : {"Neck", "RShoulder", "RElbow", "RWrist", "LShoulder", "LElbow", "LWrist"})
        g.torso_arms.push_back(index_of(n));
    for (const auto* n : {"MidHip", "RHip", "RKnee", "LHip", "LKnee"}) g.legs.push_back(index_of(n));
    for (const auto* n :
         {"RAnkle", "LAnkle", "LBigToe", "LSmallToe", "LHeel", "RBigToe", "RSmallToe", "RHeel"})
        g.feet.push_back(index_of(n));
    return g;
}

// ---------------------------------------------------------------------------
// Annotations and boxes
// ---------------------------------------------------------------------------

struct Joint {
    float x = 0.f;
    float y = 0.f;
    bool visible = false;
};

struct Box {
    float x = 0.f, y = 0.f, w = 0.f, h = 0.f;

    bool contains(float px, float py) const {
        return px >= x && px <= x + w && py >= y && py <= y + h;
    }
    float diagonal() const { return std::sqrt(w * w + h * h); }
};

struct PersonAnnotation {
    std::vector<Joint> joints;       // joint_count entries on the 46x82 grid
    Tensor<std::uint8_t> mask;       // {46, 82}, binary
    Box bbox;

    void validate() const {
        bool any_visible = false;
        for (const auto& j : joints) {
            if (!j.visible) continue;
            any_visible = true;
            if (j.x < 0 || j.x >= static_cast<float>(kGridWidth) || j.y < 0 ||
                j.y >= static_cast<float>(kGridHeight))
                throw DataError("annotation: visible joint outside the grid");
            if (!bbox.contains(j.x, j.y)) throw DataError("annotation: bbox misses a visible joint");
        }
        bool mask_nonempty = false;
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i]) {
                mask_nonempty = true;
                break;
            }
        if (mask_nonempty != any_visible)
            throw DataError("annotation: mask nonempty iff any joint visible violated");
    }
};

inline Box bbox_from_joints(const std::vector<Joint>& joints,
                            const std::optional<Box>& mask_bbox = std::nullopt) {
    std::vector<const Joint*> visible;
    for (const auto& j : joints)
        if (j.visible) visible.push_back(&j);
    if (visible.empty()) throw EmptyPersonError("bbox_from_joints: no visible joints");

    if (mask_bbox) {
        std::size_t inside = 0;
        for (const auto* j : visible)
            if (mask_bbox->contains(j->x, j->y)) ++inside;
        if (2 * inside > visible.size()) return *mask_bbox;
    }

    float minx = visible[0]->x, maxx = visible[0]->x;
    float miny = visible[0]->y, maxy = visible[0]->y;
    for (const auto* j : visible) {
        minx = std::min(minx, j->x);
        maxx = std::max(maxx, j->x);
        miny = std::min(miny, j->y);
        maxy = std::max(maxy, j->y);
    }
    // 2 px padding keeps near-collinear joints from producing zero-area boxes
    const float x0 = std::max(0.f, minx - 2.f);
    const float y0 = std::max(0.f, miny - 2.f);
    const float x1 = std::min(static_cast<float>(kGridWidth), maxx + 2.f);
    const float y1 = std::min(static_cast<float>(kGridHeight), maxy + 2.f);
    return Box{x0, y0, x1 - x0, y1 - y0};
}

// ---------------------------------------------------------------------------
// Joints embedding: square tensor whose diagonal carries coordinates and
// whose (i, j) entries carry coordinate differences along topology edges.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> embed_joints(const Tensor<T>& coords, const SkeletonTopology& topo) {
    const auto n = static_cast<std::size_t>(topo.joint_count());
    if (coords.rank() != 2 || coords.dim(0) != 2 || coords.dim(1) != n)
        throw TopologyError("embed_joints: expected a 2x" + std::to_string(n) +
                            " coordinate matrix");
    for (std::size_t i = 0; i < coords.size(); ++i)
        if (!std::isfinite(static_cast<double>(coords[i])))
            throw DataError("embed_joints: non-finite coordinate");

    Tensor<T> out({2, n, n});
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < n; ++i) out.at(c, i, i) = coords.at(c, i);
    for (const auto& e : topo.embedding_edges()) {
        const auto i = static_cast<std::size_t>(e.a);
        const auto j = static_cast<std::size_t>(e.b);
        for (std::size_t c = 0; c < 2; ++c) {
            const T d = coords.at(c, i) - coords.at(c, j);
            out.at(c, i, j) = d;
            out.at(c, j, i) = -d;
        }
    }
    return out;
}

}  // namespace piwf
