#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "piwf/errors.hpp"
#include "piwf/gemm.hpp"
#include "piwf/rng.hpp"
#include "piwf/tensor.hpp"
#include "piwf/threading.hpp"

namespace piwf::nn {

template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;
};

template <typename T>
using ParamList = std::vector<ParamRef<T>>;

template <typename T>
void zero_grads(const ParamList<T>& params) {
    for (const auto& p : params) p.grad->zero();
}

template <typename T>
std::size_t param_count(const ParamList<T>& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value->size();
    return n;
}

// Per-layer geometry used for receptive-field composition.
struct LayerDesc {
    std::string name;
    std::size_t kh = 1, kw = 1;
    std::size_t sh = 1, sw = 1;
    std::size_t dh = 1, dw = 1;
};

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t s, std::size_t d,
                                std::size_t p) {
    const std::size_t eff = d * (k - 1) + 1;
    if (in + 2 * p < eff) throw ShapeError("conv: kernel larger than padded input");
    return (in + 2 * p - eff) / s + 1;
}

template <typename T>
void check_finite(const Tensor<T>& t, const std::string& layer) {
    if (!t.all_finite()) throw NumericError("non-finite activation in layer " + layer);
}

// ---------------------------------------------------------------------------
// Conv2d: im2col + GEMM, batch-parallel. Weight gradients are accumulated in
// per-worker buffers and reduced in worker order, so training is reproducible
// for a fixed thread cap.
// ---------------------------------------------------------------------------

template <typename T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw,
           std::size_t sh = 1, std::size_t sw = 1, std::size_t ph = 0, std::size_t pw = 0,
           std::size_t dh = 1, std::size_t dw = 1, bool zero_init = false)
        : name_(std::move(name)),
          in_ch_(in_ch),
          out_ch_(out_ch),
          kh_(kh),
          kw_(kw),
          sh_(sh),
          sw_(sw),
          ph_(ph),
          pw_(pw),
          dh_(dh),
          dw_(dw),
          zero_init_(zero_init),
          w_({out_ch, in_ch, kh, kw}),
          gw_({out_ch, in_ch, kh, kw}),
          b_({out_ch}),
          gb_({out_ch}) {}

    void init(Rng& rng) {
        if (zero_init_) {
            w_.zero();
        } else {
            const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch_ * kh_ * kw_));
            for (std::size_t i = 0; i < w_.size(); ++i) w_[i] = static_cast<T>(rng.gauss(0.0, stddev));
        }
        b_.zero();
    }

    Tensor<T> forward(Tensor<T> x) {
        if (x.rank() != 4 || x.dim(1) != in_ch_)
            throw ShapeError(name_ + ": expected {N," + std::to_string(in_ch_) + ",H,W} input");
        x_ = std::move(x);
        const Tensor<T>& in = x_;
        const std::size_t n = in.dim(0), h = in.dim(2), w = in.dim(3);
        ho_ = conv_out_dim(h, kh_, sh_, dh_, ph_);
        wo_ = conv_out_dim(w, kw_, sw_, dw_, pw_);
        Tensor<T> y = Tensor<T>::uninitialized({n, out_ch_, ho_, wo_});
        const std::size_t ck = in_ch_ * kh_ * kw_;
        const std::size_t p = ho_ * wo_;
        const bool identity_cols = is_pointwise();
        parallel_for(n, [&](std::size_t b0, std::size_t b1, std::size_t) {
            std::vector<T> col(identity_cols ? 0 : ck * p);
            for (std::size_t i = b0; i < b1; ++i) {
                const T* xin = in.data() + i * in_ch_ * h * w;
                const T* cols = xin;
                if (!identity_cols) {
                    im2col(xin, h, w, col.data());
                    cols = col.data();
                }
                T* yout = y.data() + i * out_ch_ * p;
                gemm<T>(false, false, out_ch_, p, ck, T{1}, w_.data(), ck, cols, p, T{0}, yout, p);
                for (std::size_t o = 0; o < out_ch_; ++o) {
                    const T bias = b_[o];
                    T* row = yout + o * p;
                    for (std::size_t q = 0; q < p; ++q) row[q] += bias;
                }
            }
        });
        check_finite(y, name_);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const std::size_t n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
        if (gy.rank() != 4 || gy.dim(0) != n || gy.dim(1) != out_ch_ || gy.dim(2) != ho_ ||
            gy.dim(3) != wo_)
            throw ShapeError(name_ + ": bad output-gradient shape");
        Tensor<T> gx = Tensor<T>::uninitialized(x_.shape());
        const std::size_t ck = in_ch_ * kh_ * kw_;
        const std::size_t p = ho_ * wo_;
        const bool identity_cols = is_pointwise();
        const std::size_t workers = std::min(worker_count(), std::max<std::size_t>(n, 1));
        std::vector<Tensor<T>> gw_part(workers, Tensor<T>(w_.shape()));
        std::vector<Tensor<T>> gb_part(workers, Tensor<T>(b_.shape()));
        parallel_for(n, [&](std::size_t b0, std::size_t b1, std::size_t worker) {
            std::vector<T> col(identity_cols ? 0 : ck * p);
            std::vector<T> gcol(ck * p);
            Tensor<T>& gwp = gw_part[worker];
            Tensor<T>& gbp = gb_part[worker];
            for (std::size_t i = b0; i < b1; ++i) {
                const T* xin = x_.data() + i * in_ch_ * h * w;
                const T* cols = xin;
                if (!identity_cols) {
                    im2col(xin, h, w, col.data());
                    cols = col.data();
                }
                const T* gyp = gy.data() + i * out_ch_ * p;
                gemm<T>(false, true, out_ch_, ck, p, T{1}, gyp, p, cols, p, T{1}, gwp.data(), ck);
                for (std::size_t o = 0; o < out_ch_; ++o) {
                    T acc{0};
                    const T* row = gyp + o * p;
                    for (std::size_t q = 0; q < p; ++q) acc += row[q];
                    gbp[o] += acc;
                }
                gemm<T>(true, false, ck, p, out_ch_, T{1}, w_.data(), ck, gyp, p, T{0}, gcol.data(), p);
                T* gxp = gx.data() + i * in_ch_ * h * w;
                if (identity_cols)
                    std::copy(gcol.begin(), gcol.end(), gxp);
                else
                    col2im(gcol.data(), h, w, gxp);
            }
        });
        for (std::size_t wk = 0; wk < workers; ++wk) {
            gw_ += gw_part[wk];
            gb_ += gb_part[wk];
        }
        return gx;
    }

    void collect_params(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + name_ + ".w", &w_, &gw_});
        out.push_back({prefix + name_ + ".b", &b_, &gb_});
    }

    LayerDesc desc() const { return {name_, kh_, kw_, sh_, sw_, dh_, dw_}; }
    const std::string& name() const { return name_; }
    Tensor<T>& weights() { return w_; }
    Tensor<T>& bias() { return b_; }

private:
    bool is_pointwise() const {
        return kh_ == 1 && kw_ == 1 && sh_ == 1 && sw_ == 1 && ph_ == 0 && pw_ == 0 && dh_ == 1 &&
               dw_ == 1;
    }

    // Valid output ranges per kernel tap, so the inner loops are branch-free.
    struct TapRange {
        std::size_t oh0, oh1, ow0, ow1;
        std::ptrdiff_t hoff, woff;
    };

    TapRange tap_range(std::size_t ki, std::size_t kj, std::size_t h, std::size_t w) const {
        TapRange t{};
        t.hoff = static_cast<std::ptrdiff_t>(ki * dh_) - static_cast<std::ptrdiff_t>(ph_);
        t.woff = static_cast<std::ptrdiff_t>(kj * dw_) - static_cast<std::ptrdiff_t>(pw_);
        auto lo = [](std::ptrdiff_t off, std::size_t s) {
            return off >= 0 ? std::size_t{0}
                            : static_cast<std::size_t>((-off + static_cast<std::ptrdiff_t>(s) - 1) /
                                                       static_cast<std::ptrdiff_t>(s));
        };
        auto hi = [](std::ptrdiff_t off, std::size_t s, std::size_t in, std::size_t out) {
            const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(in) - 1 - off;
            if (last < 0) return std::size_t{0};
            return std::min(out, static_cast<std::size_t>(last / static_cast<std::ptrdiff_t>(s)) + 1);
        };
        t.oh0 = lo(t.hoff, sh_);
        t.oh1 = hi(t.hoff, sh_, h, ho_);
        t.ow0 = lo(t.woff, sw_);
        t.ow1 = hi(t.woff, sw_, w, wo_);
        if (t.oh1 < t.oh0) t.oh1 = t.oh0;
        if (t.ow1 < t.ow0) t.ow1 = t.ow0;
        return t;
    }

    void im2col(const T* x, std::size_t h, std::size_t w, T* col) const {
        const std::size_t p = ho_ * wo_;
        const bool has_border = ph_ > 0 || pw_ > 0;
        for (std::size_t c = 0; c < in_ch_; ++c) {
            const T* xc = x + c * h * w;
            for (std::size_t ki = 0; ki < kh_; ++ki)
                for (std::size_t kj = 0; kj < kw_; ++kj) {
                    T* row = col + ((c * kh_ + ki) * kw_ + kj) * p;
                    const TapRange t = tap_range(ki, kj, h, w);
                    if (has_border) {
                        std::fill(row, row + t.oh0 * wo_, T{0});
                        std::fill(row + t.oh1 * wo_, row + p, T{0});
                        if (t.ow0 > 0 || t.ow1 < wo_)
                            for (std::size_t oh = t.oh0; oh < t.oh1; ++oh) {
                                std::fill(row + oh * wo_, row + oh * wo_ + t.ow0, T{0});
                                std::fill(row + oh * wo_ + t.ow1, row + (oh + 1) * wo_, T{0});
                            }
                    }
                    for (std::size_t oh = t.oh0; oh < t.oh1; ++oh) {
                        const T* src = xc + static_cast<std::size_t>(
                                                static_cast<std::ptrdiff_t>(oh * sh_) + t.hoff) *
                                                w;
                        T* dst = row + oh * wo_;
                        if (sw_ == 1) {
                            const T* s = src + t.woff + static_cast<std::ptrdiff_t>(t.ow0);
                            std::copy(s, s + (t.ow1 - t.ow0), dst + t.ow0);
                        } else {
                            for (std::size_t ow = t.ow0; ow < t.ow1; ++ow)
                                dst[ow] = src[static_cast<std::size_t>(
                                    static_cast<std::ptrdiff_t>(ow * sw_) + t.woff)];
                        }
                    }
                }
        }
    }

    void col2im(const T* col, std::size_t h, std::size_t w, T* gx) const {
        const std::size_t p = ho_ * wo_;
        std::fill(gx, gx + in_ch_ * h * w, T{0});
        for (std::size_t c = 0; c < in_ch_; ++c) {
            T* xc = gx + c * h * w;
            for (std::size_t ki = 0; ki < kh_; ++ki)
                for (std::size_t kj = 0; kj < kw_; ++kj) {
                    const T* row = col + ((c * kh_ + ki) * kw_ + kj) * p;
                    const TapRange t = tap_range(ki, kj, h, w);
                    for (std::size_t oh = t.oh0; oh < t.oh1; ++oh) {
                        T* dstrow = xc + static_cast<std::size_t>(
                                             static_cast<std::ptrdiff_t>(oh * sh_) + t.hoff) *
                                             w;
                        const T* srcrow = row + oh * wo_;
                        if (sw_ == 1) {
                            T* d = dstrow + t.woff + static_cast<std::ptrdiff_t>(t.ow0);
                            const T* s = srcrow + t.ow0;
                            for (std::size_t k = 0; k < t.ow1 - t.ow0; ++k) d[k] += s[k];
                        } else {
                            for (std::size_t ow = t.ow0; ow < t.ow1; ++ow)
                                dstrow[static_cast<std::size_t>(
                                    static_cast<std::ptrdiff_t>(ow * sw_) + t.woff)] += srcrow[ow];
                        }
                    }
                }
        }
    }

    std::string name_;
    std::size_t in_ch_ = 0, out_ch_ = 0;
    std::size_t kh_ = 1, kw_ = 1, sh_ = 1, sw_ = 1, ph_ = 0, pw_ = 0, dh_ = 1, dw_ = 1;
    bool zero_init_ = false;
    Tensor<T> w_, gw_, b_, gb_;
    Tensor<T> x_;
    std::size_t ho_ = 0, wo_ = 0;
};

// ---------------------------------------------------------------------------

template <typename T>
class ReLU {
public:
    explicit ReLU(std::string name = "relu") : name_(std::move(name)) {}

    Tensor<T> forward(const Tensor<T>& x) {
        Tensor<T> y = Tensor<T>::uninitialized(x.shape());
        mask_.resize(x.size());
        auto body = [&](std::size_t i0, std::size_t i1, std::size_t) {
            for (std::size_t i = i0; i < i1; ++i) {
                const bool pos = x[i] > T{0};
                y[i] = pos ? x[i] : T{0};
                mask_[i] = pos;
            }
        };
        if (x.size() > 1u << 16)
            parallel_for(x.size(), body);
        else
            body(0, x.size(), 0);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        if (gy.size() != mask_.size()) throw ShapeError(name_ + ": bad gradient size");
        Tensor<T> gx = Tensor<T>::uninitialized(gy.shape());
        auto body = [&](std::size_t i0, std::size_t i1, std::size_t) {
            for (std::size_t i = i0; i < i1; ++i) gx[i] = mask_[i] ? gy[i] : T{0};
        };
        if (gy.size() > 1u << 16)
            parallel_for(gy.size(), body);
        else
            body(0, gy.size(), 0);
        return gx;
    }

private:
    std::string name_;
    std::vector<std::uint8_t> mask_;
};

template <typename T>
class Sigmoid {
public:
    explicit Sigmoid(std::string name = "sigmoid") : name_(std::move(name)) {}

    Tensor<T> forward(const Tensor<T>& x) {
        y_ = Tensor<T>::uninitialized(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double v = static_cast<double>(x[i]);
            y_[i] = static_cast<T>(1.0 / (1.0 + std::exp(-v)));
        }
        check_finite(y_, name_);
        return y_;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx = Tensor<T>::uninitialized(gy.shape());
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = gy[i] * y_[i] * (T{1} - y_[i]);
        return gx;
    }

private:
    std::string name_;
    Tensor<T> y_;
};

template <typename T>
class MaxPool2 {
public:
    explicit MaxPool2(std::string name = "pool") : name_(std::move(name)) {}

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
            throw ShapeError(name_ + ": needs even spatial dims");
        in_shape_ = x.shape();
        const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        Tensor<T> y = Tensor<T>::uninitialized({n, c, h / 2, w / 2});
        argmax_.resize(y.size());
        const std::size_t planes = n * c;
        parallel_for(planes, [&](std::size_t p0, std::size_t p1, std::size_t) {
        for (std::size_t pc = p0; pc < p1; ++pc) {
            const T* xp = x.data() + pc * h * w;
            T* yp = y.data() + pc * (h / 2) * (w / 2);
            std::uint8_t* ap = argmax_.data() + pc * (h / 2) * (w / 2);
            for (std::size_t r = 0; r < h / 2; ++r)
                for (std::size_t cc = 0; cc < w / 2; ++cc) {
                    const std::size_t base = 2 * r * w + 2 * cc;
                    T best = xp[base];
                    std::uint8_t arg = 0;
                    const T cand1 = xp[base + 1];
                    if (cand1 > best) best = cand1, arg = 1;
                    const T cand2 = xp[base + w];
                    if (cand2 > best) best = cand2, arg = 2;
                    const T cand3 = xp[base + w + 1];
                    if (cand3 > best) best = cand3, arg = 3;
                    yp[r * (w / 2) + cc] = best;
                    ap[r * (w / 2) + cc] = arg;
                }
        }
        });
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(in_shape_);
        const std::size_t h = in_shape_[2], w = in_shape_[3];
        const std::size_t planes = in_shape_[0] * in_shape_[1];
        parallel_for(planes, [&](std::size_t p0, std::size_t p1, std::size_t) {
        for (std::size_t pc = p0; pc < p1; ++pc) {
            const T* gyp = gy.data() + pc * (h / 2) * (w / 2);
            T* gxp = gx.data() + pc * h * w;
            const std::uint8_t* ap = argmax_.data() + pc * (h / 2) * (w / 2);
            for (std::size_t r = 0; r < h / 2; ++r)
                for (std::size_t cc = 0; cc < w / 2; ++cc) {
                    const std::uint8_t arg = ap[r * (w / 2) + cc];
                    const std::size_t base = 2 * r * w + 2 * cc;
                    gxp[base + (arg & 1) + (arg >> 1) * w] += gyp[r * (w / 2) + cc];
                }
        }
        });
        return gx;
    }

    static LayerDesc desc(std::string name = "pool") { return {std::move(name), 2, 2, 2, 2, 1, 1}; }

private:
    std::string name_;
    std::vector<std::size_t> in_shape_;
    std::vector<std::uint8_t> argmax_;
};

// Nearest-neighbor 2x upsampling (decoder path).
template <typename T>
class UpsampleNearest2 {
public:
    explicit UpsampleNearest2(std::string name = "up") : name_(std::move(name)) {}

    Tensor<T> forward(const Tensor<T>& x) {
        in_shape_ = x.shape();
        const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        Tensor<T> y = Tensor<T>::uninitialized({n, c, 2 * h, 2 * w});
        const std::size_t planes = n * c;
        parallel_for(planes, [&](std::size_t p0, std::size_t p1, std::size_t) {
        for (std::size_t pc = p0; pc < p1; ++pc) {
            const T* xp = x.data() + pc * h * w;
            T* yp = y.data() + pc * 4 * h * w;
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t cc = 0; cc < w; ++cc) {
                    const T v = xp[r * w + cc];
                    T* d = yp + 2 * r * (2 * w) + 2 * cc;
                    d[0] = v;
                    d[1] = v;
                    d[2 * w] = v;
                    d[2 * w + 1] = v;
                }
        }
        });
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx = Tensor<T>::uninitialized(in_shape_);
        const std::size_t h = in_shape_[2], w = in_shape_[3];
        const std::size_t planes = in_shape_[0] * in_shape_[1];
        parallel_for(planes, [&](std::size_t p0, std::size_t p1, std::size_t) {
        for (std::size_t pc = p0; pc < p1; ++pc) {
            const T* gyp = gy.data() + pc * 4 * h * w;
            T* gxp = gx.data() + pc * h * w;
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t cc = 0; cc < w; ++cc) {
                    const T* s = gyp + 2 * r * (2 * w) + 2 * cc;
                    gxp[r * w + cc] = s[0] + s[1] + s[2 * w] + s[2 * w + 1];
                }
        }
        });
        return gx;
    }

private:
    std::string name_;
    std::vector<std::size_t> in_shape_;
};

// Fixed-size bilinear resize (align_corners). Linear, so backward is the
// transposed interpolation.
template <typename T>
class BilinearResize {
public:
    BilinearResize() = default;
    BilinearResize(std::string name, std::size_t in_h, std::size_t in_w, std::size_t out_h,
                   std::size_t out_w)
        : name_(std::move(name)), in_h_(in_h), in_w_(in_w), out_h_(out_h), out_w_(out_w) {
        build(rows_, in_h_, out_h_);
        build(cols_, in_w_, out_w_);
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.rank() != 4 || x.dim(2) != in_h_ || x.dim(3) != in_w_)
            throw ShapeError(name_ + ": bad input size");
        n_ = x.dim(0);
        c_ = x.dim(1);
        Tensor<T> y = Tensor<T>::uninitialized({n_, c_, out_h_, out_w_});
        const std::size_t planes = n_ * c_;
        for (std::size_t pc = 0; pc < planes; ++pc) {
            const T* xp = x.data() + pc * in_h_ * in_w_;
            T* yp = y.data() + pc * out_h_ * out_w_;
            for (std::size_t r = 0; r < out_h_; ++r) {
                const auto& ry = rows_[r];
                for (std::size_t cc = 0; cc < out_w_; ++cc) {
                    const auto& cx = cols_[cc];
                    const T v00 = xp[ry.lo * in_w_ + cx.lo];
                    const T v01 = xp[ry.lo * in_w_ + cx.hi];
                    const T v10 = xp[ry.hi * in_w_ + cx.lo];
                    const T v11 = xp[ry.hi * in_w_ + cx.hi];
                    const T top = v00 + static_cast<T>(cx.frac) * (v01 - v00);
                    const T bot = v10 + static_cast<T>(cx.frac) * (v11 - v10);
                    yp[r * out_w_ + cc] = top + static_cast<T>(ry.frac) * (bot - top);
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx({n_, c_, in_h_, in_w_});
        const std::size_t planes = n_ * c_;
        for (std::size_t pc = 0; pc < planes; ++pc) {
            const T* gyp = gy.data() + pc * out_h_ * out_w_;
            T* gxp = gx.data() + pc * in_h_ * in_w_;
            for (std::size_t r = 0; r < out_h_; ++r) {
                const auto& ry = rows_[r];
                for (std::size_t cc = 0; cc < out_w_; ++cc) {
                    const auto& cx = cols_[cc];
                    const T g = gyp[r * out_w_ + cc];
                    const T fy = static_cast<T>(ry.frac), fx = static_cast<T>(cx.frac);
                    gxp[ry.lo * in_w_ + cx.lo] += g * (T{1} - fy) * (T{1} - fx);
                    gxp[ry.lo * in_w_ + cx.hi] += g * (T{1} - fy) * fx;
                    gxp[ry.hi * in_w_ + cx.lo] += g * fy * (T{1} - fx);
                    gxp[ry.hi * in_w_ + cx.hi] += g * fy * fx;
                }
            }
        }
        return gx;
    }

private:
    struct Tap {
        std::size_t lo = 0, hi = 0;
        double frac = 0.0;
    };

    static void build(std::vector<Tap>& taps, std::size_t in, std::size_t out) {
        taps.resize(out);
        for (std::size_t i = 0; i < out; ++i) {
            if (in == 1 || out == 1) {
                taps[i] = {0, 0, 0.0};
                if (in > 1 && out == 1) taps[i] = {0, 0, 0.0};
                continue;
            }
            const double src = static_cast<double>(i) * static_cast<double>(in - 1) /
                               static_cast<double>(out - 1);
            const auto lo = static_cast<std::size_t>(src);
            Tap t;
            t.lo = std::min(lo, in - 1);
            t.hi = std::min(t.lo + 1, in - 1);
            t.frac = src - static_cast<double>(t.lo);
            taps[i] = t;
        }
    }

    std::string name_;
    std::size_t in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
    std::size_t n_ = 0, c_ = 0;
    std::vector<Tap> rows_, cols_;
};

// Channel concatenation of two NCHW tensors.
template <typename T>
class Concat {
public:
    explicit Concat(std::string name = "concat") : name_(std::move(name)) {}

    Tensor<T> forward(const Tensor<T>& a, const Tensor<T>& b) {
        if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
            throw ShapeError(name_ + ": mismatched shapes");
        ca_ = a.dim(1);
        cb_ = b.dim(1);
        const std::size_t n = a.dim(0), h = a.dim(2), w = a.dim(3);
        Tensor<T> y = Tensor<T>::uninitialized({n, ca_ + cb_, h, w});
        const std::size_t plane = h * w;
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(a.data() + i * ca_ * plane, a.data() + (i + 1) * ca_ * plane,
                      y.data() + i * (ca_ + cb_) * plane);
            std::copy(b.data() + i * cb_ * plane, b.data() + (i + 1) * cb_ * plane,
                      y.data() + (i * (ca_ + cb_) + ca_) * plane);
        }
        return y;
    }

    std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& gy) {
        const std::size_t n = gy.dim(0), h = gy.dim(2), w = gy.dim(3);
        Tensor<T> ga = Tensor<T>::uninitialized({n, ca_, h, w});
        Tensor<T> gb = Tensor<T>::uninitialized({n, cb_, h, w});
        const std::size_t plane = h * w;
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(gy.data() + i * (ca_ + cb_) * plane,
                      gy.data() + (i * (ca_ + cb_) + ca_) * plane, ga.data() + i * ca_ * plane);
            std::copy(gy.data() + (i * (ca_ + cb_) + ca_) * plane,
                      gy.data() + (i + 1) * (ca_ + cb_) * plane, gb.data() + i * cb_ * plane);
        }
        return {std::move(ga), std::move(gb)};
    }

private:
    std::string name_;
    std::size_t ca_ = 0, cb_ = 0;
};

template <typename T>
class Dense {
public:
    Dense() = default;
    Dense(std::string name, std::size_t in_dim, std::size_t out_dim, bool zero_init = false)
        : name_(std::move(name)),
          in_(in_dim),
          out_(out_dim),
          zero_init_(zero_init),
          w_({out_dim, in_dim}),
          gw_({out_dim, in_dim}),
          b_({out_dim}),
          gb_({out_dim}) {}

    void init(Rng& rng) {
        if (zero_init_) {
            w_.zero();
        } else {
            const double stddev = std::sqrt(2.0 / static_cast<double>(in_));
            for (std::size_t i = 0; i < w_.size(); ++i) w_[i] = static_cast<T>(rng.gauss(0.0, stddev));
        }
        b_.zero();
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.rank() != 2 || x.dim(1) != in_) throw ShapeError(name_ + ": bad input shape");
        x_ = x;
        const std::size_t n = x.dim(0);
        Tensor<T> y = Tensor<T>::uninitialized({n, out_});
        gemm<T>(false, true, n, out_, in_, T{1}, x.data(), in_, w_.data(), in_, T{0}, y.data(), out_);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t o = 0; o < out_; ++o) y.at(i, o) += b_[o];
        check_finite(y, name_);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const std::size_t n = x_.dim(0);
        gemm<T>(true, false, out_, in_, n, T{1}, gy.data(), out_, x_.data(), in_, T{1}, gw_.data(),
                in_);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t o = 0; o < out_; ++o) gb_[o] += gy.at(i, o);
        Tensor<T> gx = Tensor<T>::uninitialized({n, in_});
        gemm<T>(false, false, n, in_, out_, T{1}, gy.data(), out_, w_.data(), in_, T{0}, gx.data(),
                in_);
        return gx;
    }

    void collect_params(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + name_ + ".w", &w_, &gw_});
        out.push_back({prefix + name_ + ".b", &b_, &gb_});
    }

private:
    std::string name_;
    std::size_t in_ = 0, out_ = 0;
    bool zero_init_ = false;
    Tensor<T> w_, gw_, b_, gb_;
    Tensor<T> x_;
};

}  // namespace piwf::nn
