#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "piwf/errors.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace piwf {

namespace detail {

// Large activations churn every step; keeping big blocks inside the malloc
// arena (instead of mmap/munmap per tensor) avoids re-faulting the pages.
#if defined(__GLIBC__)
struct MallocTuning {
    MallocTuning() {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
    }
};
inline MallocTuning malloc_tuning_instance;
#endif

// Allocator whose default construct is a no-op, so resize() skips the zero
// fill for buffers that are fully overwritten anyway.
template <typename T, typename A = std::allocator<T>>
class default_init_allocator : public A {
    using traits = std::allocator_traits<A>;

public:
    template <typename U>
    struct rebind {
        using other = default_init_allocator<U, typename traits::template rebind_alloc<U>>;
    };
    using A::A;

    template <typename U>
    void construct(U* ptr) noexcept(std::is_nothrow_default_constructible_v<U>) {
        ::new (static_cast<void*>(ptr)) U;
    }
    template <typename U, typename... Args>
    void construct(U* ptr, Args&&... args) {
        traits::construct(static_cast<A&>(*this), ptr, std::forward<Args>(args)...);
    }
};

}  // namespace detail

// Dense row-major tensor. Deliberately minimal: shape + flat storage +
// indexing. All layout conventions (NCHW etc.) live with the users.
template <typename T>
class Tensor {
public:
    using Storage = std::vector<T, detail::default_init_allocator<T>>;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
        data_.assign(count(shape_), T{0});
    }

    Tensor(std::initializer_list<std::size_t> shape) : Tensor(std::vector<std::size_t>(shape)) {}

    // Contents are unspecified; every element must be written before reading.
    static Tensor uninitialized(std::vector<std::size_t> shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_.resize(count(t.shape_));
        return t;
    }

    static Tensor full(std::vector<std::size_t> shape, T v) {
        Tensor t = uninitialized(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    Storage& storage() { return data_; }
    const Storage& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t i0) { return data_[i0]; }
    T& at(std::size_t i0, std::size_t i1) { return data_[i0 * shape_[1] + i1]; }
    T& at(std::size_t i0, std::size_t i1, std::size_t i2) {
        return data_[(i0 * shape_[1] + i1) * shape_[2] + i2];
    }
    T& at(std::size_t i0, std::size_t i1, std::size_t i2, std::size_t i3) {
        return data_[((i0 * shape_[1] + i1) * shape_[2] + i2) * shape_[3] + i3];
    }
    const T& at(std::size_t i0) const { return data_[i0]; }
    const T& at(std::size_t i0, std::size_t i1) const { return data_[i0 * shape_[1] + i1]; }
    const T& at(std::size_t i0, std::size_t i1, std::size_t i2) const {
        return data_[(i0 * shape_[1] + i1) * shape_[2] + i2];
    }
    const T& at(std::size_t i0, std::size_t i1, std::size_t i2, std::size_t i3) const {
        return data_[((i0 * shape_[1] + i1) * shape_[2] + i2) * shape_[3] + i3];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T{0}); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void reshape(std::vector<std::size_t> shape) {
        if (count(shape) != data_.size()) throw ShapeError("reshape: element count mismatch");
        shape_ = std::move(shape);
    }

    Tensor& operator+=(const Tensor& o) {
        require_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& operator-=(const Tensor& o) {
        require_same(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }

    Tensor& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    bool all_finite() const {
        // Summing |x| propagates NaN/Inf and vectorizes; exact location is
        // only recovered on demand.
        T acc{0};
        for (const auto& v : data_) acc += std::abs(v);
        return std::isfinite(static_cast<double>(acc));
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out = Tensor<U>::uninitialized(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

private:
    void require_same(const Tensor& o, const char* op) const {
        if (!same_shape(o)) throw ShapeError(std::string("tensor ") + op + ": shape mismatch");
    }

    std::vector<std::size_t> shape_;
    Storage data_;
};

namespace io {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    write_bytes(os, &v, sizeof(T));
}

template <typename T>
bool read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return static_cast<std::size_t>(is.gcount()) == sizeof(T);
}

}  // namespace io

inline constexpr std::uint16_t kTensorFormatVersion = 1;

// Single-tensor container: magic "PIWT", version u16, rank u8, dims u64[],
// f32 payload row-major.
template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    io::write_bytes(os, "PIWT", 4);
    io::write_pod(os, kTensorFormatVersion);
    const std::uint8_t rank = static_cast<std::uint8_t>(t.rank());
    io::write_pod(os, rank);
    for (std::size_t i = 0; i < t.rank(); ++i) {
        const std::uint64_t d = t.dim(i);
        io::write_pod(os, d);
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        const float v = static_cast<float>(t[i]);
        io::write_pod(os, v);
    }
}

template <typename T>
void write_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path.string());
    write_tensor(os, t);
    if (!os) throw IoError("short write: " + path.string());
}

inline Tensor<float> read_tensor(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, "PIWT", 4) != 0)
        throw FormatError("tensor container: bad magic");
    std::uint16_t version = 0;
    if (!io::read_pod(is, version) || version != kTensorFormatVersion)
        throw FormatError("tensor container: unsupported version");
    std::uint8_t rank = 0;
    if (!io::read_pod(is, rank)) throw FormatError("tensor container: truncated header");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) {
        std::uint64_t v = 0;
        if (!io::read_pod(is, v)) throw FormatError("tensor container: truncated dims");
        d = static_cast<std::size_t>(v);
    }
    Tensor<float> t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) {
        float v = 0.f;
        if (!io::read_pod(is, v)) throw FormatError("tensor container: truncated payload");
        t[i] = v;
    }
    return t;
}

inline Tensor<float> read_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    return read_tensor(is);
}

// FNV-1a, used for config fingerprints and the topology checksum test.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(s.data(), s.size(), h);
}

}  // namespace piwf
