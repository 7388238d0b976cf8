#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "piwf/csi.hpp"
#include "piwf/errors.hpp"
#include "piwf/rng.hpp"
#include "piwf/skeleton.hpp"
#include "piwf/target_encode.hpp"

namespace piwf {

// Room coordinates: x lateral (meters), y depth away from the receiver bar,
// z height. The annotation camera is orthographic at the receiver bar, so
// image columns track x and image rows track z.

inline constexpr double kSpeedOfLight = 299792458.0;

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

struct Scatterer {
    Vec3 pos;
    double reflectivity = 1.0;
};

struct ViewConfig {
    double x0 = 1.5;      // left edge of the camera view, meters
    double width = 3.0;   // meters covered by the 82 columns
    double height = 2.6;  // meters covered by the 46 rows (z up)
};

inline std::vector<double> make_frequencies(double center = 2.4e9, double bandwidth = 20e6,
                                            std::size_t count = kFrequencies) {
    std::vector<double> f(count);
    for (std::size_t i = 0; i < count; ++i)
        f[i] = center - bandwidth / 2 + bandwidth * static_cast<double>(i) /
                                            static_cast<double>(count - 1);
    return f;
}

struct SceneConfig {
    double room_w = 6.0;
    double room_d = 5.0;
    std::array<Vec3, kTxAntennas> tx{};
    std::array<Vec3, kRxAntennas> rx{};
    std::vector<double> frequencies = make_frequencies();
    std::vector<Scatterer> static_scatterers;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    ViewConfig view;

    void validate() const {
        if (frequencies.size() != kFrequencies)
            throw ConfigError("scene: expected 30 frequencies");
        for (std::size_t i = 1; i < frequencies.size(); ++i)
            if (frequencies[i] <= frequencies[i - 1])
                throw ConfigError("scene: frequencies must strictly increase");
        auto inside = [&](const Vec3& p) {
            return p.x >= 0 && p.x <= room_w && p.y >= 0 && p.y <= room_d && p.z >= 0;
        };
        for (const auto& a : tx)
            if (!inside(a)) throw ConfigError("scene: tx antenna outside the room");
        for (const auto& a : rx)
            if (!inside(a)) throw ConfigError("scene: rx antenna outside the room");
    }
};

// Receiver antennas spaced 12.5 cm apart on a bar, transmitters on the far
// wall, camera looking along +y from the receiver bar.
inline SceneConfig default_scene() {
    SceneConfig s;
    for (int i = 0; i < 3; ++i) {
        s.rx[static_cast<std::size_t>(i)] = {3.0 + 0.125 * (i - 1), 0.3, 1.0};
        s.tx[static_cast<std::size_t>(i)] = {3.0 + 0.125 * (i - 1), 4.7, 1.0};
    }
    s.static_scatterers = {
        {{0.3, 2.5, 1.2}, 1.5},  // side wall
        {{5.7, 2.2, 1.0}, 1.5},  // other side wall
        {{2.2, 4.2, 0.6}, 1.0},  // furniture
    };
    s.view.x0 = 1.5;
    return s;
}

// ---------------------------------------------------------------------------
// Synthetic bodies: a spread-out 25-joint point-scatterer stand-in (not an
// anthropometric model; proportions chosen so every limb spans a few pixels
// on the 46x82 grid).
// ---------------------------------------------------------------------------

inline const std::array<Vec3, 25>& canonical_skeleton() {
    static const std::array<Vec3, 25> joints = {{
        {0.00, 0.0, 1.78},   // Nose
        {0.00, 0.0, 1.50},   // Neck
        {-0.33, 0.0, 1.48},  // RShoulder
        {-0.52, 0.0, 1.18},  // RElbow
        {-0.62, 0.0, 0.88},  // RWrist
        {0.33, 0.0, 1.48},   // LShoulder
        {0.52, 0.0, 1.18},   // LElbow
        {0.62, 0.0, 0.88},   // LWrist
        {0.00, 0.0, 1.00},   // MidHip
        {-0.18, 0.0, 1.00},  // RHip
        {-0.22, 0.0, 0.55},  // RKnee
        {-0.24, 0.0, 0.18},  // RAnkle
        {0.18, 0.0, 1.00},   // LHip
        {0.22, 0.0, 0.55},   // LKnee
        {0.24, 0.0, 0.18},   // LAnkle
        {-0.13, 0.0, 1.88},  // REye
        {0.13, 0.0, 1.88},   // LEye
        {-0.25, 0.0, 1.76},  // REar
        {0.25, 0.0, 1.76},   // LEar
        {0.38, 0.0, 0.05},   // LBigToe
        {0.52, 0.0, 0.09},   // LSmallToe
        {0.14, 0.0, 0.06},   // LHeel
        {-0.38, 0.0, 0.05},  // RBigToe
        {-0.52, 0.0, 0.09},  // RSmallToe
        {-0.14, 0.0, 0.06},  // RHeel
    }};
    return joints;
}

struct MotionScript {
    Vec3 start{3.0, 2.5, 0.0};
    std::vector<Vec3> waypoints;  // walked cyclically, z ignored
    double speed = 0.4;           // m/s
    double gait_hz = 1.1;
    double gait_amp = 0.08;  // meters of limb swing
    double phase = 0.0;
    double reflectivity = 0.6;
    double scale = 1.0;
    double limb_radius = 0.10;       // capsule radius for the mask, meters
    double limb_tolerance = 0.5;     // allowed relative limb-length deviation
};

struct SyntheticPerson {
    MotionScript script;

    Vec3 root_at(double t) const {
        std::vector<Vec3> path{script.start};
        for (const auto& w : script.waypoints) path.push_back(w);
        if (path.size() == 1) return path[0];
        double total = 0.0;
        std::vector<double> seg;
        for (std::size_t i = 1; i < path.size(); ++i) {
            Vec3 d = path[i] - path[i - 1];
            d.z = 0;
            seg.push_back(d.norm());
            total += seg.back();
        }
        // close the loop
        {
            Vec3 d = path.front() - path.back();
            d.z = 0;
            seg.push_back(d.norm());
            total += seg.back();
        }
        if (total < 1e-9) return path[0];
        double s = std::fmod(script.speed * t, total);
        for (std::size_t i = 0; i < seg.size(); ++i) {
            if (s <= seg[i]) {
                const Vec3& a = path[i];
                const Vec3& b = path[(i + 1) % path.size()];
                const double f = seg[i] < 1e-12 ? 0.0 : s / seg[i];
                return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), 0.0};
            }
            s -= seg[i];
        }
        return path[0];
    }

    std::array<Vec3, 25> pose_at(double t) const {
        const Vec3 root = root_at(t);
        const double w = 2.0 * 3.14159265358979323846 * script.gait_hz;
        const double swing = script.gait_amp * std::sin(w * t + script.phase);
        const double bob = 0.25 * script.gait_amp * std::sin(2.0 * w * t + script.phase);
        std::array<Vec3, 25> joints = canonical_skeleton();
        for (auto& j : joints) {
            j = j * script.scale;
            j.z += bob;
        }
        // opposite-phase swing of arms and legs
        joints[3].z += 0.5 * swing;   // RElbow
        joints[4].z += swing;         // RWrist
        joints[6].z -= 0.5 * swing;   // LElbow
        joints[7].z -= swing;         // LWrist
        joints[10].z += 0.4 * swing;  // RKnee
        joints[11].x += 0.5 * swing;  // RAnkle
        joints[13].z -= 0.4 * swing;  // LKnee
        joints[14].x -= 0.5 * swing;  // LAnkle
        for (auto& j : joints) {
            j.x += root.x;
            j.y += root.y;
            if (j.z < 0.0) j.z = 0.0;
        }
        return joints;
    }

    void validate_pose(const std::array<Vec3, 25>& joints) const {
        const auto& canon = canonical_skeleton();
        for (const auto& limb : body25().limbs) {
            const auto a = static_cast<std::size_t>(limb.a);
            const auto b = static_cast<std::size_t>(limb.b);
            const double ref = distance(canon[a], canon[b]) * script.scale;
            const double got = distance(joints[a], joints[b]);
            if (ref > 1e-9 && std::abs(got - ref) > script.limb_tolerance * ref)
                throw DataError("synthetic person: limb length outside anatomical bounds");
        }
    }
};

// ---------------------------------------------------------------------------
// First-order multipath CSI forward model. Not a propagation claim; it is the
// dataset oracle that makes a learnable CSI-to-pose mapping.
// ---------------------------------------------------------------------------

inline CsiSample simulate_csi(const SceneConfig& scene, const std::vector<SyntheticPerson>& persons,
                              double t, Rng* noise_rng = nullptr) {
    scene.validate();
    std::vector<Scatterer> scatterers = scene.static_scatterers;
    for (const auto& p : persons) {
        const auto joints = p.pose_at(t);
        p.validate_pose(joints);
        for (const auto& j : joints) scatterers.push_back({j, p.script.reflectivity});
    }

    CsiSample sample;
    sample.timestamp_us = static_cast<std::int64_t>(std::llround(t * 1e6));
    sample.values.resize(kCsiEntries);
    for (std::size_t f = 0; f < kFrequencies; ++f) {
        const double lambda = kSpeedOfLight / scene.frequencies[f];
        const double k = 2.0 * 3.14159265358979323846 / lambda;
        for (std::size_t ti = 0; ti < kTxAntennas; ++ti)
            for (std::size_t ri = 0; ri < kRxAntennas; ++ri) {
                const Vec3& txp = scene.tx[ti];
                const Vec3& rxp = scene.rx[ri];
                const double d0 = distance(txp, rxp);
                if (d0 < 1e-6) throw SingularityError("simulate_csi: coincident antennas");
                std::complex<double> h = std::polar(1.0 / d0, -k * d0);
                for (const auto& s : scatterers) {
                    const double d1 = distance(txp, s.pos);
                    const double d2 = distance(s.pos, rxp);
                    if (d1 < 1e-6 || d2 < 1e-6)
                        throw SingularityError("simulate_csi: scatterer on an antenna");
                    h += std::polar(s.reflectivity / (d1 * d2), -k * (d1 + d2));
                }
                if (noise_rng && scene.noise_sigma > 0.0)
                    h += std::complex<double>(noise_rng->gauss(0.0, scene.noise_sigma),
                                              noise_rng->gauss(0.0, scene.noise_sigma));
                sample.values[csi_index(f, ti, ri)] =
                    std::complex<float>(static_cast<float>(h.real()), static_cast<float>(h.imag()));
            }
    }
    return sample;
}

// ---------------------------------------------------------------------------
// Projection to the 46x82 annotation grid
// ---------------------------------------------------------------------------

inline PersonAnnotation project_person(const SyntheticPerson& person,
                                       const std::array<Vec3, 25>& joints3d,
                                       const ViewConfig& view) {
    const double sx = static_cast<double>(kGridWidth - 1) / view.width;
    const double sz = static_cast<double>(kGridHeight - 1) / view.height;
    PersonAnnotation ann;
    ann.joints.resize(25);
    for (std::size_t j = 0; j < 25; ++j) {
        const double u = (joints3d[j].x - view.x0) * sx;
        const double v = (1.0 - joints3d[j].z / view.height) * static_cast<double>(kGridHeight - 1);
        Joint out;
        out.x = static_cast<float>(u);
        out.y = static_cast<float>(v);
        out.visible = u >= 0.0 && u <= static_cast<double>(kGridWidth - 1) && v >= 0.0 &&
                      v <= static_cast<double>(kGridHeight - 1);
        ann.joints[j] = out;
    }

    // mask: capsules along every limb with both ends visible, plus a head disc
    ann.mask = Tensor<std::uint8_t>({kGridHeight, kGridWidth});
    const double radius = person.script.limb_radius * sx;
    auto paint_capsule = [&](float ax, float ay, float bx, float by, double r) {
        const int r0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - r)));
        const int r1 = std::min<int>(kGridHeight - 1, static_cast<int>(std::ceil(std::max(ay, by) + r)));
        const int c0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - r)));
        const int c1 = std::min<int>(kGridWidth - 1, static_cast<int>(std::ceil(std::max(ax, bx) + r)));
        const double vx = bx - ax, vy = by - ay;
        const double len2 = vx * vx + vy * vy;
        for (int rr = r0; rr <= r1; ++rr)
            for (int cc = c0; cc <= c1; ++cc) {
                const double px = cc - ax, py = rr - ay;
                double t = len2 < 1e-12 ? 0.0 : std::clamp((px * vx + py * vy) / len2, 0.0, 1.0);
                const double dx = px - t * vx, dy = py - t * vy;
                if (dx * dx + dy * dy <= r * r)
                    ann.mask.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) = 1;
            }
    };
    for (const auto& limb : body25().limbs) {
        const auto& ja = ann.joints[static_cast<std::size_t>(limb.a)];
        const auto& jb = ann.joints[static_cast<std::size_t>(limb.b)];
        if (!ja.visible || !jb.visible) continue;
        paint_capsule(ja.x, ja.y, jb.x, jb.y, radius);
    }
    if (ann.joints[15].visible && ann.joints[16].visible) {
        const float hx = 0.5f * (ann.joints[15].x + ann.joints[16].x);
        const float hy = 0.5f * (ann.joints[15].y + ann.joints[16].y);
        paint_capsule(hx, hy, hx, hy, 0.20 * sx * person.script.scale);
    }

    // tight mask box, widened so every visible joint is inside
    bool any = false;
    std::size_t mr0 = kGridHeight, mr1 = 0, mc0 = kGridWidth, mc1 = 0;
    for (std::size_t rr = 0; rr < kGridHeight; ++rr)
        for (std::size_t cc = 0; cc < kGridWidth; ++cc)
            if (ann.mask.at(rr, cc)) {
                any = true;
                mr0 = std::min(mr0, rr);
                mr1 = std::max(mr1, rr);
                mc0 = std::min(mc0, cc);
                mc1 = std::max(mc1, cc);
            }
    std::optional<Box> mask_box;
    if (any)
        mask_box = Box{static_cast<float>(mc0), static_cast<float>(mr0),
                       static_cast<float>(mc1 - mc0), static_cast<float>(mr1 - mr0)};
    Box box = bbox_from_joints(ann.joints, mask_box);
    for (const auto& j : ann.joints) {
        if (!j.visible) continue;
        const float x1 = std::max(box.x + box.w, j.x);
        const float y1 = std::max(box.y + box.h, j.y);
        box.x = std::min(box.x, j.x);
        box.y = std::min(box.y, j.y);
        box.w = x1 - box.x;
        box.h = y1 - box.y;
    }
    ann.bbox = box;
    ann.validate();
    return ann;
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

struct SegmentConfig {
    std::string group = "g0";
    std::string env = "A";
    std::size_t n_frames = 40;
    std::vector<MotionScript> persons;
};

struct GenConfig {
    std::filesystem::path out_dir;
    SceneConfig scene = default_scene();
    std::map<std::string, std::vector<Scatterer>> environments;  // env -> static scatterers
    std::vector<SegmentConfig> segments;
    double fps = 20.0;
    double csi_rate = 100.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (segments.empty()) throw ConfigError("gen: no segments");
        for (const auto& s : segments) {
            if (s.n_frames == 0) throw ConfigError("gen: segment with zero frames");
            if (!environments.empty() && !environments.count(s.env))
                throw ConfigError("gen: unknown environment " + s.env);
        }
        if (std::abs(csi_rate / fps - 5.0) > 1e-9)
            throw ConfigError("gen: csi_rate must be 5x fps");
    }
};

struct FrameAnnotation {
    std::size_t frame_id = 0;
    std::int64_t timestamp_us = 0;
    std::vector<PersonAnnotation> persons;
};

inline void write_annotations(const std::filesystem::path& path,
                              const std::vector<FrameAnnotation>& frames) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for write: " + path.string());
    for (const auto& f : frames) {
        nlohmann::json j;
        j["frame_id"] = f.frame_id;
        j["timestamp_us"] = f.timestamp_us;
        nlohmann::json persons = nlohmann::json::array();
        for (const auto& p : f.persons) {
            nlohmann::json pj;
            nlohmann::json joints = nlohmann::json::array();
            for (const auto& joint : p.joints)
                joints.push_back({joint.x, joint.y, joint.visible ? 1 : 0});
            pj["joints"] = std::move(joints);
            pj["bbox"] = {p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h};
            std::vector<std::string> rows(kGridHeight, std::string(kGridWidth, '0'));
            for (std::size_t r = 0; r < kGridHeight; ++r)
                for (std::size_t c = 0; c < kGridWidth; ++c)
                    if (p.mask.at(r, c)) rows[r][c] = '1';
            pj["mask"] = rows;
            persons.push_back(std::move(pj));
        }
        j["persons"] = std::move(persons);
        os << j.dump() << "\n";
    }
    if (!os) throw IoError("short write: " + path.string());
}

inline std::vector<FrameAnnotation> load_annotations(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path.string());
    std::vector<FrameAnnotation> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("annotations: " + std::string(e.what()));
        }
        FrameAnnotation f;
        f.frame_id = j.at("frame_id").get<std::size_t>();
        f.timestamp_us = j.at("timestamp_us").get<std::int64_t>();
        for (const auto& pj : j.at("persons")) {
            PersonAnnotation p;
            for (const auto& joint : pj.at("joints"))
                p.joints.push_back({joint.at(0).get<float>(), joint.at(1).get<float>(),
                                    joint.at(2).get<int>() != 0});
            const auto& b = pj.at("bbox");
            p.bbox = {b.at(0).get<float>(), b.at(1).get<float>(), b.at(2).get<float>(),
                      b.at(3).get<float>()};
            p.mask = Tensor<std::uint8_t>({kGridHeight, kGridWidth});
            const auto rows = pj.at("mask").get<std::vector<std::string>>();
            for (std::size_t r = 0; r < kGridHeight && r < rows.size(); ++r)
                for (std::size_t c = 0; c < kGridWidth && c < rows[r].size(); ++c)
                    p.mask.at(r, c) = rows[r][c] == '1' ? 1 : 0;
            p.validate();
            f.persons.push_back(std::move(p));
        }
        out.push_back(std::move(f));
    }
    return out;
}

struct ManifestEntry {
    std::string capture;      // path relative to the manifest
    std::string annotations;  // path relative to the manifest
    std::string group = "g0";
    std::string env = "A";
    std::vector<std::int64_t> frame_timestamps;
    NormStats norm;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::filesystem::path base_dir;

    void save(const std::filesystem::path& path) const {
        std::ofstream os(path);
        if (!os) throw IoError("cannot open for write: " + path.string());
        for (const auto& e : entries) {
            nlohmann::json j;
            j["capture"] = e.capture;
            j["annotations"] = e.annotations;
            j["group"] = e.group;
            j["env"] = e.env;
            j["frame_timestamps"] = e.frame_timestamps;
            j["norm_mean"] = e.norm.mean;
            j["norm_std"] = e.norm.stddev;
            os << j.dump() << "\n";
        }
        if (!os) throw IoError("short write: " + path.string());
    }

    static Manifest load(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open: " + path.string());
        Manifest m;
        m.base_dir = path.parent_path();
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw FormatError("manifest: " + std::string(e.what()));
            }
            ManifestEntry e;
            e.capture = j.at("capture").get<std::string>();
            e.annotations = j.at("annotations").get<std::string>();
            e.group = j.at("group").get<std::string>();
            e.env = j.at("env").get<std::string>();
            e.frame_timestamps = j.at("frame_timestamps").get<std::vector<std::int64_t>>();
            e.norm.mean = j.at("norm_mean").get<double>();
            e.norm.stddev = j.at("norm_std").get<double>();
            m.entries.push_back(std::move(e));
        }
        return m;
    }
};

// Emits one capture + annotation file per segment plus a manifest. CSI runs
// at csi_rate with frame timestamps centered on their 5 samples, so
// synchronize() recovers every frame with zero drops.
inline Manifest generate_dataset(const GenConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    Manifest manifest;
    manifest.base_dir = cfg.out_dir;

    const auto csi_interval_us = static_cast<std::int64_t>(std::llround(1e6 / cfg.csi_rate));
    const std::int64_t t0_us = 1'000'000;

    for (std::size_t si = 0; si < cfg.segments.size(); ++si) {
        const SegmentConfig& seg = cfg.segments[si];
        SceneConfig scene = cfg.scene;
        if (!cfg.environments.empty()) scene.static_scatterers = cfg.environments.at(seg.env);

        std::vector<SyntheticPerson> persons;
        for (const auto& script : seg.persons) persons.push_back(SyntheticPerson{script});

        Rng noise_rng(derive_seed(cfg.seed, 0xBEEF00 + si));
        std::vector<CsiSample> samples;
        const std::size_t n_samples = seg.n_frames * kSamplesPerFrame;
        for (std::size_t i = 0; i < n_samples; ++i) {
            const double t = static_cast<double>(i) / cfg.csi_rate;
            CsiSample s = simulate_csi(scene, persons, t, &noise_rng);
            s.timestamp_us = t0_us + static_cast<std::int64_t>(i) * csi_interval_us;
            samples.push_back(std::move(s));
        }

        std::vector<FrameAnnotation> annotations;
        std::vector<std::int64_t> frame_ts;
        for (std::size_t k = 0; k < seg.n_frames; ++k) {
            const std::size_t center = k * kSamplesPerFrame + kSamplesPerFrame / 2;
            const double t = static_cast<double>(center) / cfg.csi_rate;
            FrameAnnotation ann;
            ann.frame_id = k;
            ann.timestamp_us = t0_us + static_cast<std::int64_t>(center) * csi_interval_us;
            for (const auto& p : persons) ann.persons.push_back(project_person(p, p.pose_at(t), scene.view));
            frame_ts.push_back(ann.timestamp_us);
            annotations.push_back(std::move(ann));
        }

        const std::string stem = "seg" + std::to_string(si) + "_" + seg.group + "_" + seg.env;
        const std::string capture_name = stem + ".piwf";
        const std::string ann_name = stem + ".annotations.jsonl";
        write_capture(cfg.out_dir / capture_name, samples);
        write_annotations(cfg.out_dir / ann_name, annotations);

        ManifestEntry e;
        e.capture = capture_name;
        e.annotations = ann_name;
        e.group = seg.group;
        e.env = seg.env;
        e.frame_timestamps = frame_ts;
        e.norm = capture_norm(samples);
        manifest.entries.push_back(std::move(e));
    }
    manifest.save(cfg.out_dir / "manifest.jsonl");
    return manifest;
}

}  // namespace piwf
