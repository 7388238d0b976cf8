#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "piwf/errors.hpp"
#include "piwf/tensor.hpp"

namespace piwf {

// Fixed acquisition geometry: 30 subcarrier frequencies between 3 transmitter
// and 3 receiver antennas, 5 consecutive samples per video frame.
inline constexpr std::size_t kFrequencies = 30;
inline constexpr std::size_t kTxAntennas = 3;
inline constexpr std::size_t kRxAntennas = 3;
inline constexpr std::size_t kCsiEntries = kFrequencies * kTxAntennas * kRxAntennas;  // 270
inline constexpr std::size_t kSamplesPerFrame = 5;
inline constexpr std::size_t kInputChannels = kSamplesPerFrame * kFrequencies;  // 150
inline constexpr std::int64_t kSyncWindowUs = 50'000;  // one frame interval at 20 FPS
inline constexpr std::int64_t kNominalCsiIntervalUs = 10'000;
inline constexpr std::int64_t kNominalFrameIntervalUs = 50'000;

inline std::size_t csi_index(std::size_t freq, std::size_t tx, std::size_t rx) {
    return (freq * kTxAntennas + tx) * kRxAntennas + rx;
}

struct CsiSample {
    std::int64_t timestamp_us = 0;
    std::vector<std::complex<float>> values;  // (frequency, tx, rx) row-major

    const std::complex<float>& value(std::size_t f, std::size_t t, std::size_t r) const {
        return values[csi_index(f, t, r)];
    }
    float magnitude(std::size_t f, std::size_t t, std::size_t r) const {
        return std::abs(value(f, t, r));
    }

    void validate() const {
        if (values.size() != kCsiEntries)
            throw DataError("CsiSample: expected 270 entries, got " + std::to_string(values.size()));
        for (const auto& v : values)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw DataError("CsiSample: non-finite value");
    }
};

struct CsiFrame {
    std::vector<CsiSample> samples;  // exactly 5, timestamp-sorted
    std::int64_t frame_timestamp_us = 0;
    std::size_t frame_id = 0;

    void validate() const {
        if (samples.size() != kSamplesPerFrame)
            throw DataError("CsiFrame: expected 5 samples, got " + std::to_string(samples.size()));
        for (const auto& s : samples) {
            const std::int64_t dt = s.timestamp_us - frame_timestamp_us;
            if (dt < -kSyncWindowUs || dt > kSyncWindowUs)
                throw DataError("CsiFrame: sample outside the 50 ms window");
        }
        for (std::size_t i = 1; i < samples.size(); ++i)
            if (samples[i].timestamp_us < samples[i - 1].timestamp_us)
                throw OrderError("CsiFrame: samples not timestamp-sorted");
    }
};

using InputTensor = Tensor<float>;  // shape {150, 3, 3}

// ---------------------------------------------------------------------------
// Capture container: magic "PIWF", version u16, record count u64, then per
// record a u64 microsecond timestamp and 270 (f32 re, f32 im) pairs in
// (frequency, tx, rx) row-major order.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kCaptureFormatVersion = 1;
inline constexpr std::size_t kCaptureHeaderBytes = 4 + 2 + 8;
inline constexpr std::size_t kCaptureRecordBytes = 8 + kCsiEntries * 8;

inline void write_capture(std::ostream& os, const std::vector<CsiSample>& samples) {
    io::write_bytes(os, "PIWF", 4);
    io::write_pod(os, kCaptureFormatVersion);
    io::write_pod(os, static_cast<std::uint64_t>(samples.size()));
    for (const auto& s : samples) {
        io::write_pod(os, static_cast<std::uint64_t>(s.timestamp_us));
        for (const auto& v : s.values) {
            io::write_pod(os, v.real());
            io::write_pod(os, v.imag());
        }
    }
}

inline void write_capture(const std::filesystem::path& path, const std::vector<CsiSample>& samples) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path.string());
    write_capture(os, samples);
    if (!os) throw IoError("short write: " + path.string());
}

inline std::vector<CsiSample> parse_capture(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, "PIWF", 4) != 0)
        throw FormatError("capture: bad magic");
    std::uint16_t version = 0;
    if (!io::read_pod(is, version)) throw FormatError("capture: truncated header");
    if (version != kCaptureFormatVersion)
        throw FormatError("capture: unsupported version " + std::to_string(version));
    std::uint64_t count = 0;
    if (!io::read_pod(is, count)) throw FormatError("capture: truncated header");

    std::vector<CsiSample> out;
    out.reserve(count);
    std::size_t offset = kCaptureHeaderBytes;
    std::vector<char> record(kCaptureRecordBytes);
    for (std::uint64_t i = 0; i < count; ++i) {
        is.read(record.data(), static_cast<std::streamsize>(record.size()));
        const auto got = static_cast<std::size_t>(is.gcount());
        if (got != kCaptureRecordBytes)
            throw TruncationError("capture: record " + std::to_string(i) + " truncated", offset + got);
        CsiSample s;
        std::uint64_t ts = 0;
        std::memcpy(&ts, record.data(), 8);
        s.timestamp_us = static_cast<std::int64_t>(ts);
        s.values.resize(kCsiEntries);
        std::memcpy(s.values.data(), record.data() + 8, kCsiEntries * 8);
        s.validate();
        if (!out.empty() && s.timestamp_us <= out.back().timestamp_us)
            throw OrderError("capture: non-monotonic timestamp at record " + std::to_string(i));
        out.push_back(std::move(s));
        offset += kCaptureRecordBytes;
    }
    return out;
}

inline std::vector<CsiSample> parse_capture(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    return parse_capture(is);
}

// ---------------------------------------------------------------------------
// Synchronization: each frame claims the 5 unclaimed samples minimizing
// total |dt| inside a +-50 ms window, frames processed in timestamp order.
// ---------------------------------------------------------------------------

struct SyncResult {
    std::vector<CsiFrame> frames;
    std::size_t dropped_frames = 0;      // frames that could not collect 5 samples
    std::size_t unassigned_samples = 0;  // input samples not claimed by any frame
};

namespace detail {

inline std::int64_t median_interval(const std::vector<std::int64_t>& ts) {
    std::vector<std::int64_t> gaps;
    gaps.reserve(ts.size() - 1);
    for (std::size_t i = 1; i < ts.size(); ++i) gaps.push_back(ts[i] - ts[i - 1]);
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    return gaps[gaps.size() / 2];
}

}  // namespace detail

inline SyncResult synchronize(const std::vector<CsiSample>& samples,
                              const std::vector<std::int64_t>& frame_timestamps) {
    SyncResult result;
    result.unassigned_samples = samples.size();
    if (samples.empty() || frame_timestamps.empty()) {
        result.dropped_frames = frame_timestamps.size();
        return result;
    }

    for (std::size_t i = 1; i < samples.size(); ++i)
        if (samples[i].timestamp_us < samples[i - 1].timestamp_us)
            throw OrderError("synchronize: samples not sorted");
    for (std::size_t i = 1; i < frame_timestamps.size(); ++i)
        if (frame_timestamps[i] < frame_timestamps[i - 1])
            throw OrderError("synchronize: frame timestamps not sorted");

    if (samples.size() >= 2) {
        std::vector<std::int64_t> ts(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) ts[i] = samples[i].timestamp_us;
        const std::int64_t med = detail::median_interval(ts);
        if (med > 2 * kNominalCsiIntervalUs || 2 * med < kNominalCsiIntervalUs)
            throw RateError("synchronize: CSI rate off nominal 100 Hz by more than 2x");
    }
    if (frame_timestamps.size() >= 2) {
        const std::int64_t med = detail::median_interval(frame_timestamps);
        if (med > 2 * kNominalFrameIntervalUs || 2 * med < kNominalFrameIntervalUs)
            throw RateError("synchronize: frame rate off nominal 20 FPS by more than 2x");
    }

    std::vector<bool> used(samples.size(), false);
    std::size_t lo = 0;
    for (std::size_t k = 0; k < frame_timestamps.size(); ++k) {
        const std::int64_t ft = frame_timestamps[k];
        while (lo < samples.size() && samples[lo].timestamp_us < ft - kSyncWindowUs) ++lo;
        std::vector<std::size_t> window;
        for (std::size_t i = lo; i < samples.size() && samples[i].timestamp_us <= ft + kSyncWindowUs; ++i)
            if (!used[i]) window.push_back(i);
        if (window.size() < kSamplesPerFrame) {
            ++result.dropped_frames;
            continue;
        }
        std::sort(window.begin(), window.end(), [&](std::size_t a, std::size_t b) {
            const std::int64_t da = std::abs(samples[a].timestamp_us - ft);
            const std::int64_t db = std::abs(samples[b].timestamp_us - ft);
            if (da != db) return da < db;
            return a < b;  // tie: earlier sample
        });
        window.resize(kSamplesPerFrame);
        std::sort(window.begin(), window.end());
        CsiFrame frame;
        frame.frame_timestamp_us = ft;
        frame.frame_id = k;
        for (auto i : window) {
            used[i] = true;
            frame.samples.push_back(samples[i]);
        }
        frame.validate();
        result.frames.push_back(std::move(frame));
        result.unassigned_samples -= kSamplesPerFrame;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Input assembly: channel s*30+f holds the z-scored magnitude of sample s at
// frequency f over the 3x3 antenna grid.
// ---------------------------------------------------------------------------

struct NormStats {
    double mean = 0.0;
    double stddev = 1.0;
};

inline NormStats capture_norm(const std::vector<CsiSample>& samples) {
    NormStats n;
    if (samples.empty()) return n;
    double sum = 0.0, sum2 = 0.0;
    std::size_t count = 0;
    for (const auto& s : samples)
        for (const auto& v : s.values) {
            const double m = std::abs(std::complex<double>(v.real(), v.imag()));
            sum += m;
            sum2 += m * m;
            ++count;
        }
    n.mean = sum / static_cast<double>(count);
    const double var = std::max(0.0, sum2 / static_cast<double>(count) - n.mean * n.mean);
    n.stddev = std::sqrt(var);
    return n;
}

inline InputTensor assemble(const CsiFrame& frame, const NormStats& norm) {
    frame.validate();
    InputTensor out({kInputChannels, kTxAntennas, kRxAntennas});
    const double inv = 1.0 / std::max(norm.stddev, 1e-12);
    for (std::size_t s = 0; s < kSamplesPerFrame; ++s)
        for (std::size_t f = 0; f < kFrequencies; ++f)
            for (std::size_t t = 0; t < kTxAntennas; ++t)
                for (std::size_t r = 0; r < kRxAntennas; ++r) {
                    const float m = frame.samples[s].magnitude(f, t, r);
                    if (!std::isfinite(m)) throw DataError("assemble: non-finite magnitude");
                    out.at(s * kFrequencies + f, t, r) = static_cast<float>((m - norm.mean) * inv);
                }
    return out;
}

}  // namespace piwf
