#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "piwf/csi.hpp"
#include "piwf/errors.hpp"
#include "piwf/nn/layers.hpp"
#include "piwf/nn/modules.hpp"
#include "piwf/target_encode.hpp"

namespace piwf {

struct NetworkConfig {
    std::size_t upsample_h = 96;
    std::size_t upsample_w = 96;
    std::size_t unet_depth = 3;
    std::size_t base_channels = 16;
    std::size_t channel_cap = 64;
    bool shared_trunk = false;  // one U-Net feeding both heads
    std::uint64_t seed = 0;

    std::string canonical_string() const {
        return "piwf-net|up" + std::to_string(upsample_h) + "x" + std::to_string(upsample_w) +
               "|depth" + std::to_string(unet_depth) + "|base" + std::to_string(base_channels) +
               "|cap" + std::to_string(channel_cap) + "|shared" + std::to_string(shared_trunk);
    }
    std::uint64_t fingerprint() const { return fnv1a(canonical_string()); }
};

inline nn::UNetConfig unet_config(const NetworkConfig& cfg) {
    nn::UNetConfig u;
    u.in_channels = cfg.base_channels;
    u.base_channels = cfg.base_channels;
    u.depth = cfg.unet_depth;
    u.channel_cap = cfg.channel_cap;
    return u;
}

// Layers between the upsampled plane and the encoder bottleneck output, in
// canonical order. The 1x1 stem commutes with the channel-wise bilinear
// resize, so its position relative to the resize does not affect this list.
inline std::vector<nn::LayerDesc> encoder_descriptors(const NetworkConfig& cfg) {
    std::vector<nn::LayerDesc> out;
    out.push_back({"stem", 1, 1, 1, 1, 1, 1});
    out.push_back({"res.conv1", 3, 3, 1, 1, 1, 1});
    out.push_back({"res.conv2", 3, 3, 1, 1, 1, 1});
    const nn::UNetConfig u = unet_config(cfg);
    for (std::size_t i = 0; i < u.depth; ++i) {
        out.push_back({"enc" + std::to_string(i), 3, 3, 1, 1, 1, 1});
        out.push_back({"pool" + std::to_string(i), 2, 2, 2, 2, 1, 1});
    }
    for (std::size_t k = 0; k < u.bottleneck_dilation.size(); ++k) {
        const std::size_t d = u.bottleneck_dilation[k];
        out.push_back({"bott" + std::to_string(k), 3, 3, 1, 1, d, d});
    }
    return out;
}

// Receptive field of a layer stack via the standard (kernel, stride,
// dilation) composition; returns the max over the two axes.
inline std::size_t receptive_field(const std::vector<nn::LayerDesc>& layers) {
    std::size_t rh = 1, jh = 1, rw = 1, jw = 1;
    for (const auto& l : layers) {
        rh += (l.dh * (l.kh - 1)) * jh;
        jh *= l.sh;
        rw += (l.dw * (l.kw - 1)) * jw;
        jw *= l.sw;
    }
    return std::max(rh, rw);
}

inline std::size_t receptive_field(const NetworkConfig& cfg) {
    return receptive_field(encoder_descriptors(cfg));
}

template <typename T>
struct PerceptionOutputs {
    Tensor<T> sm;   // {B, 1, 46, 82}, sigmoid probabilities
    Tensor<T> jhm;  // {B, 26, 46, 82}, linear
    Tensor<T> paf;  // {B, 52, 46, 82}, linear
};

namespace detail {

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t c0, std::size_t c1) {
    const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    Tensor<T> y({n, c1 - c0, x.dim(2), x.dim(3)});
    for (std::size_t i = 0; i < n; ++i)
        std::copy(x.data() + (i * c + c0) * plane, x.data() + (i * c + c1) * plane,
                  y.data() + i * (c1 - c0) * plane);
    return y;
}

template <typename T>
Tensor<T> pack_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), plane = a.dim(2) * a.dim(3);
    Tensor<T> y({n, ca + cb, a.dim(2), a.dim(3)});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(a.data() + i * ca * plane, a.data() + (i + 1) * ca * plane,
                  y.data() + i * (ca + cb) * plane);
        std::copy(b.data() + i * cb * plane, b.data() + (i + 1) * cb * plane,
                  y.data() + (i * (ca + cb) + ca) * plane);
    }
    return y;
}

}  // namespace detail

// CSI-to-maps network: 1x1 stem projection, bilinear upsample of the 3x3
// antenna grid to 96x96, a residual block, one U-Net per head family (or a
// shared trunk), and stride-(2,1) downsampling heads onto the 46x82 grid.
template <typename T>
class PerceptionNet {
public:
    explicit PerceptionNet(const NetworkConfig& cfg)
        : cfg_(cfg),
          stem_("stem", kInputChannels, cfg.base_channels, 1, 1),
          upsample_("upsample", kTxAntennas, kRxAntennas, cfg.upsample_h, cfg.upsample_w),
          res_("res", cfg.base_channels),
          unet_smjhm_("unet_smjhm", unet_config(cfg)),
          sm_sigmoid_("sm.sigmoid") {
        if (cfg.base_channels == 0 || cfg.unet_depth == 0)
            throw ConfigError("network: base_channels and unet_depth must be positive");
        if ((cfg.upsample_h >> cfg.unet_depth) << cfg.unet_depth != cfg.upsample_h ||
            (cfg.upsample_w >> cfg.unet_depth) << cfg.unet_depth != cfg.upsample_w)
            throw ConfigError("network: upsample size not divisible by 2^depth");
        if (nn::conv_out_dim(cfg.upsample_h, 5, 2, 1, 0) != kGridHeight ||
            nn::conv_out_dim(cfg.upsample_w, 15, 1, 1, 0) != kGridWidth)
            throw ConfigError("network: head arithmetic does not reach the 46x82 grid");
        if (receptive_field(cfg) < 96)
            throw ConfigError("network: encoder receptive field below 96");
        if (!cfg.shared_trunk) unet_paf_ = nn::UNet<T>("unet_paf", unet_config(cfg));
        head_smjhm_ = nn::DownsampleHead<T>("head_smjhm", unet_smjhm_.out_channels(),
                                            1 + kJhmChannels);  // sm logit + 26 jhm channels
        const std::size_t paf_src =
            cfg.shared_trunk ? unet_smjhm_.out_channels() : unet_paf_.out_channels();
        head_paf_ = nn::DownsampleHead<T>("head_paf", paf_src, kPafChannels);
        init_params();
    }

    const NetworkConfig& config() const { return cfg_; }

    void init_params() {
        Rng rng(derive_seed(cfg_.seed, 0xC0DE));
        stem_.init(rng);
        res_.init(rng);
        unet_smjhm_.init(rng);
        if (!cfg_.shared_trunk) unet_paf_.init(rng);
        head_smjhm_.init(rng);
        head_paf_.init(rng);
    }

    PerceptionOutputs<T> forward(const Tensor<T>& x) {
        if (x.rank() != 4 || x.dim(1) != kInputChannels || x.dim(2) != kTxAntennas ||
            x.dim(3) != kRxAntennas)
            throw ShapeError("network: expected {B,150,3,3} input");
        nn::check_finite(x, "input");
        Tensor<T> u = res_.forward(upsample_.forward(stem_.forward(x)));
        Tensor<T> a1 = unet_smjhm_.forward(u);
        Tensor<T> h1 = head_smjhm_.forward(a1);
        Tensor<T> h2 = cfg_.shared_trunk ? head_paf_.forward(a1)
                                         : head_paf_.forward(unet_paf_.forward(u));
        PerceptionOutputs<T> out;
        out.sm = sm_sigmoid_.forward(detail::slice_channels(h1, 0, 1));
        out.jhm = detail::slice_channels(h1, 1, h1.dim(1));
        out.paf = std::move(h2);
        return out;
    }

    // Gradients arrive w.r.t. (sm probabilities, jhm, paf); returns the input
    // gradient (needed when an upstream generator is being trained).
    Tensor<T> backward(const Tensor<T>& g_sm, const Tensor<T>& g_jhm, const Tensor<T>& g_paf) {
        Tensor<T> g_h1 = detail::pack_channels(sm_sigmoid_.backward(g_sm), g_jhm);
        Tensor<T> g_a1 = head_smjhm_.backward(g_h1);
        Tensor<T> g_a2 = head_paf_.backward(g_paf);
        Tensor<T> g_u;
        if (cfg_.shared_trunk) {
            g_a1 += g_a2;
            g_u = unet_smjhm_.backward(g_a1);
        } else {
            g_u = unet_smjhm_.backward(g_a1);
            g_u += unet_paf_.backward(g_a2);
        }
        return stem_.backward(upsample_.backward(res_.backward(g_u)));
    }

    nn::ParamList<T> params() {
        nn::ParamList<T> out;
        stem_.collect_params("", out);
        res_.collect_params("", out);
        unet_smjhm_.collect_params("", out);
        if (!cfg_.shared_trunk) unet_paf_.collect_params("", out);
        head_smjhm_.collect_params("", out);
        head_paf_.collect_params("", out);
        return out;
    }

    std::size_t param_count() {
        return nn::param_count(params());
    }

    // Descriptor list derived from the live layers; must agree with
    // encoder_descriptors(config()).
    std::vector<nn::LayerDesc> live_encoder_descriptors() const {
        std::vector<nn::LayerDesc> out;
        out.push_back(stem_.desc());
        for (const auto& d : res_.descriptors()) out.push_back(d);
        for (const auto& d : unet_smjhm_.encoder_descriptors()) out.push_back(d);
        return out;
    }

    std::vector<nn::LayerDesc> head_descriptors() const { return head_smjhm_.descriptors(); }

private:
    NetworkConfig cfg_;
    nn::Conv2d<T> stem_;
    nn::BilinearResize<T> upsample_;
    nn::ResBlock<T> res_;
    nn::UNet<T> unet_smjhm_, unet_paf_;
    nn::DownsampleHead<T> head_smjhm_, head_paf_;
    nn::Sigmoid<T> sm_sigmoid_;
};

// ---------------------------------------------------------------------------
// Checkpoints: magic "PIWK", version, config fingerprint, seed, then a named
// f32 tensor index.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kCheckpointFormatVersion = 1;

struct Checkpoint {
    std::uint64_t fingerprint = 0;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;

    const Tensor<float>* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nn::ParamList<T>& params,
                     std::uint64_t fingerprint, std::uint64_t seed) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path.string());
    io::write_bytes(os, "PIWK", 4);
    io::write_pod(os, kCheckpointFormatVersion);
    io::write_pod(os, fingerprint);
    io::write_pod(os, seed);
    io::write_pod(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        const auto len = static_cast<std::uint16_t>(p.name.size());
        io::write_pod(os, len);
        io::write_bytes(os, p.name.data(), p.name.size());
        const auto rank = static_cast<std::uint8_t>(p.value->rank());
        io::write_pod(os, rank);
        for (std::size_t i = 0; i < p.value->rank(); ++i)
            io::write_pod(os, static_cast<std::uint64_t>(p.value->dim(i)));
        for (std::size_t i = 0; i < p.value->size(); ++i)
            io::write_pod(os, static_cast<float>((*p.value)[i]));
    }
    if (!os) throw IoError("short write: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, "PIWK", 4) != 0)
        throw FormatError("checkpoint: bad magic");
    std::uint16_t version = 0;
    if (!io::read_pod(is, version) || version != kCheckpointFormatVersion)
        throw FormatError("checkpoint: unsupported version");
    Checkpoint ck;
    std::uint32_t count = 0;
    if (!io::read_pod(is, ck.fingerprint) || !io::read_pod(is, ck.seed) || !io::read_pod(is, count))
        throw FormatError("checkpoint: truncated header");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t len = 0;
        if (!io::read_pod(is, len)) throw FormatError("checkpoint: truncated entry");
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (static_cast<std::uint16_t>(is.gcount()) != len)
            throw FormatError("checkpoint: truncated name");
        std::uint8_t rank = 0;
        if (!io::read_pod(is, rank)) throw FormatError("checkpoint: truncated entry");
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) {
            std::uint64_t v = 0;
            if (!io::read_pod(is, v)) throw FormatError("checkpoint: truncated dims");
            d = static_cast<std::size_t>(v);
        }
        Tensor<float> t(shape);
        for (std::size_t k = 0; k < t.size(); ++k)
            if (!io::read_pod(is, t[k])) throw FormatError("checkpoint: truncated payload");
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

template <typename T>
void load_state(PerceptionNet<T>& net, const Checkpoint& ck) {
    if (ck.fingerprint != net.config().fingerprint())
        throw ConfigError("checkpoint: config fingerprint mismatch");
    for (auto& p : net.params()) {
        const Tensor<float>* src = ck.find(p.name);
        if (!src) throw FormatError("checkpoint: missing tensor " + p.name);
        if (src->shape() != p.value->shape())
            throw ShapeError("checkpoint: shape mismatch for " + p.name);
        for (std::size_t i = 0; i < src->size(); ++i) (*p.value)[i] = static_cast<T>((*src)[i]);
        p.grad->zero();
    }
}

template <typename T>
PerceptionNet<T> net_from_checkpoint(const NetworkConfig& cfg, const std::filesystem::path& path) {
    PerceptionNet<T> net(cfg);
    load_state(net, load_checkpoint(path));
    return net;
}

}  // namespace piwf
