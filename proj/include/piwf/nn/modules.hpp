#pragma once

#include <string>
#include <utility>
#include <vector>

#include "piwf/nn/layers.hpp"

namespace piwf::nn {

// Two 3x3 convolutions with an identity skip.
template <typename T>
class ResBlock {
public:
    ResBlock() = default;
    ResBlock(std::string name, std::size_t channels)
        : name_(std::move(name)),
          conv1_(name_ + ".conv1", channels, channels, 3, 3, 1, 1, 1, 1),
          conv2_(name_ + ".conv2", channels, channels, 3, 3, 1, 1, 1, 1),
          relu1_(name_ + ".relu1"),
          relu2_(name_ + ".relu2") {}

    void init(Rng& rng) {
        conv1_.init(rng);
        conv2_.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x) {
        Tensor<T> h = relu1_.forward(conv1_.forward(x));
        Tensor<T> y = conv2_.forward(h);
        y += x;
        return relu2_.forward(y);
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> g = relu2_.backward(gy);
        Tensor<T> gx = conv1_.backward(relu1_.backward(conv2_.backward(g)));
        gx += g;  // identity skip
        return gx;
    }

    void collect_params(const std::string& prefix, ParamList<T>& out) {
        conv1_.collect_params(prefix, out);
        conv2_.collect_params(prefix, out);
    }

    std::vector<LayerDesc> descriptors() const { return {conv1_.desc(), conv2_.desc()}; }

private:
    std::string name_;
    Conv2d<T> conv1_, conv2_;
    ReLU<T> relu1_, relu2_;
};

struct UNetConfig {
    std::size_t in_channels = 16;
    std::size_t base_channels = 16;
    std::size_t depth = 3;             // number of pooling stages
    std::size_t channel_cap = 64;
    std::vector<std::size_t> bottleneck_dilation{2, 3};
};

// Encoder/decoder with skip connections; one 3x3 conv per level and dilated
// 3x3 convolutions at the bottleneck so the encoder receptive field covers
// the whole upsampled plane.
template <typename T>
class UNet {
public:
    UNet() = default;
    UNet(std::string name, const UNetConfig& cfg) : name_(std::move(name)), cfg_(cfg) {
        std::vector<std::size_t> ch(cfg.depth);
        for (std::size_t i = 0; i < cfg.depth; ++i)
            ch[i] = std::min(cfg.base_channels << i, cfg.channel_cap);
        std::vector<std::size_t> dec_ch(cfg.depth);
        for (std::size_t i = 0; i < cfg.depth; ++i)
            dec_ch[i] = std::max(cfg.base_channels, ch[i] / 2);

        for (std::size_t i = 0; i < cfg.depth; ++i) {
            const std::size_t in = i == 0 ? cfg.in_channels : ch[i - 1];
            enc_.emplace_back(name_ + ".enc" + std::to_string(i), in, ch[i], 3, 3, 1, 1, 1, 1);
            enc_relu_.emplace_back(name_ + ".enc" + std::to_string(i) + ".relu");
            pool_.emplace_back(name_ + ".pool" + std::to_string(i));
        }
        for (std::size_t k = 0; k < cfg.bottleneck_dilation.size(); ++k) {
            const std::size_t d = cfg.bottleneck_dilation[k];
            bott_.emplace_back(name_ + ".bott" + std::to_string(k), ch.back(), ch.back(), 3, 3, 1, 1,
                               d, d, d, d);
            bott_relu_.emplace_back(name_ + ".bott" + std::to_string(k) + ".relu");
        }
        for (std::size_t i = 0; i < cfg.depth; ++i) {
            // decoder fuses skip and upsampled features pointwise; spatial
            // mixing lives in the encoder and the downstream heads
            const std::size_t from = i + 1 == cfg.depth ? ch.back() : dec_ch[i + 1];
            up_.emplace_back(name_ + ".up" + std::to_string(i));
            cat_.emplace_back(name_ + ".cat" + std::to_string(i));
            dec_.emplace_back(name_ + ".dec" + std::to_string(i), from + ch[i], dec_ch[i], 1, 1);
            dec_relu_.emplace_back(name_ + ".dec" + std::to_string(i) + ".relu");
        }
        out_channels_ = dec_ch[0];
    }

    void init(Rng& rng) {
        for (auto& c : enc_) c.init(rng);
        for (auto& c : bott_) c.init(rng);
        for (auto& c : dec_) c.init(rng);
    }

    std::size_t out_channels() const { return out_channels_; }

    Tensor<T> forward(const Tensor<T>& x) {
        skips_.clear();
        Tensor<T> cur = x;
        for (std::size_t i = 0; i < cfg_.depth; ++i) {
            Tensor<T> e = enc_relu_[i].forward(enc_[i].forward(cur));
            cur = pool_[i].forward(e);
            skips_.push_back(std::move(e));
        }
        for (std::size_t k = 0; k < bott_.size(); ++k)
            cur = bott_relu_[k].forward(bott_[k].forward(cur));
        for (std::size_t i = cfg_.depth; i-- > 0;) {
            cur = up_[i].forward(cur);
            cur = cat_[i].forward(cur, skips_[i]);
            cur = dec_relu_[i].forward(dec_[i].forward(cur));
        }
        return cur;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        std::vector<Tensor<T>> gskip(cfg_.depth);
        Tensor<T> g = gy;
        for (std::size_t i = 0; i < cfg_.depth; ++i) {
            g = dec_[i].backward(dec_relu_[i].backward(g));
            auto [ga, gs] = cat_[i].backward(g);
            gskip[i] = std::move(gs);
            g = up_[i].backward(ga);
        }
        for (std::size_t k = bott_.size(); k-- > 0;)
            g = bott_[k].backward(bott_relu_[k].backward(g));
        for (std::size_t i = cfg_.depth; i-- > 0;) {
            g = pool_[i].backward(g);
            g += gskip[i];
            g = enc_[i].backward(enc_relu_[i].backward(g));
        }
        return g;
    }

    void collect_params(const std::string& prefix, ParamList<T>& out) {
        for (auto& c : enc_) c.collect_params(prefix, out);
        for (auto& c : bott_) c.collect_params(prefix, out);
        for (auto& c : dec_) c.collect_params(prefix, out);
    }

    // Layers on the path from input to the encoder bottleneck output.
    std::vector<LayerDesc> encoder_descriptors() const {
        std::vector<LayerDesc> out;
        for (std::size_t i = 0; i < cfg_.depth; ++i) {
            out.push_back(enc_[i].desc());
            out.push_back(MaxPool2<T>::desc(name_ + ".pool" + std::to_string(i)));
        }
        for (const auto& c : bott_) out.push_back(c.desc());
        return out;
    }

private:
    std::string name_;
    UNetConfig cfg_;
    std::size_t out_channels_ = 0;
    std::vector<Conv2d<T>> enc_, bott_, dec_;
    std::vector<ReLU<T>> enc_relu_, bott_relu_, dec_relu_;
    std::vector<MaxPool2<T>> pool_;
    std::vector<UpsampleNearest2<T>> up_;
    std::vector<Concat<T>> cat_;
    std::vector<Tensor<T>> skips_;
};

// Grid-matching head: (5x1) stride (2,1), then (1x15) stride 1, both valid,
// taking 96x96 features to the 46x82 annotation grid; a zero-initialized 1x1
// emits the output channels, so an untrained head produces exact zeros.
template <typename T>
class DownsampleHead {
public:
    DownsampleHead() = default;
    DownsampleHead(std::string name, std::size_t in_ch, std::size_t out_ch)
        : name_(std::move(name)),
          conv_a_(name_ + ".down", in_ch, in_ch, 5, 1, 2, 1),
          relu_a_(name_ + ".relu1"),
          conv_b_(name_ + ".wide", in_ch, in_ch, 1, 15),
          relu_b_(name_ + ".relu2"),
          conv_c_(name_ + ".out", in_ch, out_ch, 1, 1, 1, 1, 0, 0, 1, 1, /*zero_init=*/true) {}

    void init(Rng& rng) {
        conv_a_.init(rng);
        conv_b_.init(rng);
        conv_c_.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x) {
        return conv_c_.forward(relu_b_.forward(conv_b_.forward(relu_a_.forward(conv_a_.forward(x)))));
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        return conv_a_.backward(relu_a_.backward(conv_b_.backward(relu_b_.backward(conv_c_.backward(gy)))));
    }

    void collect_params(const std::string& prefix, ParamList<T>& out) {
        conv_a_.collect_params(prefix, out);
        conv_b_.collect_params(prefix, out);
        conv_c_.collect_params(prefix, out);
    }

    std::vector<LayerDesc> descriptors() const {
        return {conv_a_.desc(), conv_b_.desc(), conv_c_.desc()};
    }

private:
    std::string name_;
    Conv2d<T> conv_a_;
    ReLU<T> relu_a_;
    Conv2d<T> conv_b_;
    ReLU<T> relu_b_;
    Conv2d<T> conv_c_;
};

}  // namespace piwf::nn
