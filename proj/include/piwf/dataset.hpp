#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "piwf/csi.hpp"
#include "piwf/errors.hpp"
#include "piwf/metrics.hpp"
#include "piwf/synth_world.hpp"
#include "piwf/target_encode.hpp"

namespace piwf {

struct FrameRecord {
    InputTensor input;  // {150, 3, 3}
    std::vector<PersonAnnotation> persons;
    TargetMaps targets;
    std::string group;
    std::string env;
    std::size_t frame_id = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

class FrameDataset {
public:
    std::vector<FrameRecord> records;

    static FrameDataset load(const std::filesystem::path& manifest_path,
                             const EncodeParams& encode = {},
                             const SkeletonTopology& topo = body25()) {
        return from_manifest(Manifest::load(manifest_path), encode, topo);
    }

    static FrameDataset from_manifest(const Manifest& manifest, const EncodeParams& encode = {},
                                      const SkeletonTopology& topo = body25()) {
        FrameDataset ds;
        for (const auto& entry : manifest.entries) {
            const auto samples = parse_capture(manifest.base_dir / entry.capture);
            const NormStats norm = capture_norm(samples);
            const SyncResult sync = synchronize(samples, entry.frame_timestamps);
            const auto annotations = load_annotations(manifest.base_dir / entry.annotations);
            std::map<std::size_t, const FrameAnnotation*> by_id;
            for (const auto& a : annotations) by_id[a.frame_id] = &a;
            for (const auto& frame : sync.frames) {
                const auto it = by_id.find(frame.frame_id);
                if (it == by_id.end())
                    throw DataError("dataset: frame " + std::to_string(frame.frame_id) +
                                    " has no annotation");
                FrameRecord rec;
                rec.input = assemble(frame, norm);
                rec.persons = it->second->persons;
                rec.targets = render_targets(rec.persons, encode, topo);
                rec.group = entry.group;
                rec.env = entry.env;
                rec.frame_id = frame.frame_id;
                ds.records.push_back(std::move(rec));
            }
        }
        return ds;
    }

    std::size_t size() const { return records.size(); }

    std::vector<std::string> environments() const {
        std::vector<std::string> envs;
        for (const auto& r : records)
            if (std::find(envs.begin(), envs.end(), r.env) == envs.end()) envs.push_back(r.env);
        return envs;
    }

    std::vector<std::size_t> indices_for_env(const std::string& env) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < records.size(); ++i)
            if (records[i].env == env) out.push_back(i);
        return out;
    }

    // Temporal split per subject group: first fraction trains, the rest tests.
    SplitIndices split(double train_fraction = 0.8) const {
        std::map<std::string, std::vector<std::size_t>> groups;
        std::vector<std::string> order;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (!groups.count(records[i].group)) order.push_back(records[i].group);
            groups[records[i].group].push_back(i);
        }
        SplitIndices split;
        for (const auto& g : order) {
            const auto& idx = groups[g];
            const auto cut = static_cast<std::size_t>(
                std::floor(train_fraction * static_cast<double>(idx.size())));
            for (std::size_t i = 0; i < idx.size(); ++i)
                (i < cut ? split.train : split.test).push_back(idx[i]);
        }
        return split;
    }

    std::vector<EvalFrame> eval_frames() const {
        std::vector<EvalFrame> out;
        out.reserve(records.size());
        for (const auto& r : records) {
            EvalFrame f;
            f.gt_mask = Tensor<std::uint8_t>({kGridHeight, kGridWidth});
            for (std::size_t i = 0; i < f.gt_mask.size(); ++i)
                f.gt_mask[i] = r.targets.sm[i] > 0.5f ? 1 : 0;
            for (const auto& p : r.persons) {
                f.gt_joints.push_back(p.joints);
                f.gt_boxes.push_back(p.bbox);
            }
            out.push_back(std::move(f));
        }
        return out;
    }
};

// Stack selected records into batched network inputs/targets.
struct Batch {
    Tensor<float> x;    // {B, 150, 3, 3}
    Tensor<float> sm;   // {B, 1, 46, 82}
    Tensor<float> jhm;  // {B, 26, 46, 82}
    Tensor<float> paf;  // {B, 52, 46, 82}
};

inline Batch make_batch(const FrameDataset& ds, const std::vector<std::size_t>& indices) {
    const std::size_t b = indices.size();
    Batch batch{Tensor<float>({b, kInputChannels, kTxAntennas, kRxAntennas}),
                Tensor<float>({b, 1, kGridHeight, kGridWidth}),
                Tensor<float>({b, kJhmChannels, kGridHeight, kGridWidth}),
                Tensor<float>({b, kPafChannels, kGridHeight, kGridWidth})};
    for (std::size_t i = 0; i < b; ++i) {
        const FrameRecord& r = ds.records[indices[i]];
        std::copy(r.input.data(), r.input.data() + r.input.size(),
                  batch.x.data() + i * r.input.size());
        std::copy(r.targets.sm.data(), r.targets.sm.data() + r.targets.sm.size(),
                  batch.sm.data() + i * r.targets.sm.size());
        std::copy(r.targets.jhm.data(), r.targets.jhm.data() + r.targets.jhm.size(),
                  batch.jhm.data() + i * r.targets.jhm.size());
        std::copy(r.targets.paf.data(), r.targets.paf.data() + r.targets.paf.size(),
                  batch.paf.data() + i * r.targets.paf.size());
    }
    return batch;
}

}  // namespace piwf
