#pragma once

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstring>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "errors.hpp"

namespace tunnelex {

// FFTW's planner is not thread-safe; execution of distinct plans is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

class AlignedBuffer {
public:
    AlignedBuffer() = default;
    explicit AlignedBuffer(std::size_t n)
        : data_(reinterpret_cast<std::complex<double>*>(fftw_alloc_complex(n))), size_(n) {
        require(data_ != nullptr, ErrorKind::size, "fftw allocation failed");
        std::fill(data_.get(), data_.get() + n, std::complex<double>{});
    }

    std::complex<double>* data() { return data_.get(); }
    const std::complex<double>* data() const { return data_.get(); }
    std::size_t size() const { return size_; }
    std::complex<double>& operator[](std::size_t i) { return data_.get()[i]; }
    const std::complex<double>& operator[](std::size_t i) const { return data_.get()[i]; }
    std::span<std::complex<double>> span() { return {data_.get(), size_}; }
    std::span<const std::complex<double>> span() const { return {data_.get(), size_}; }

private:
    struct Free {
        void operator()(std::complex<double>* p) const { fftw_free(p); }
    };
    std::unique_ptr<std::complex<double>, Free> data_;
    std::size_t size_ = 0;
};

// `howmany` contiguous in-place transforms of length n. Unnormalized, like FFTW.
// Plans use FFTW_ESTIMATE so the arithmetic is identical from run to run.
class BatchedFft {
public:
    BatchedFft(std::size_t n, std::size_t howmany, std::complex<double>* buffer) {
        std::lock_guard lock(fftw_planner_mutex());
        int len = static_cast<int>(n);
        auto* p = reinterpret_cast<fftw_complex*>(buffer);
        fwd_ = fftw_plan_many_dft(1, &len, static_cast<int>(howmany), p, nullptr, 1, len, p,
                                  nullptr, 1, len, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_many_dft(1, &len, static_cast<int>(howmany), p, nullptr, 1, len, p,
                                  nullptr, 1, len, FFTW_BACKWARD, FFTW_ESTIMATE);
        require(fwd_ && bwd_, ErrorKind::size, "fftw planning failed");
    }
    BatchedFft(const BatchedFft&) = delete;
    BatchedFft& operator=(const BatchedFft&) = delete;
    ~BatchedFft() {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }

    // `data` must be an fftw-aligned buffer of the planned size.
    void forward(std::complex<double>* data) const {
        auto* p = reinterpret_cast<fftw_complex*>(data);
        fftw_execute_dft(fwd_, p, p);
    }
    void backward(std::complex<double>* data) const {
        auto* p = reinterpret_cast<fftw_complex*>(data);
        fftw_execute_dft(bwd_, p, p);
    }

private:
    fftw_plan fwd_ = nullptr;
    fftw_plan bwd_ = nullptr;
};

// Cache-blocked out-of-place transpose of an n x n array.
inline void transpose(const std::complex<double>* src, std::complex<double>* dst, std::size_t n) {
    constexpr std::size_t block = 32;
    for (std::size_t ib = 0; ib < n; ib += block)
        for (std::size_t jb = 0; jb < n; jb += block) {
            std::size_t ie = std::min(ib + block, n), je = std::min(jb + block, n);
            for (std::size_t i = ib; i < ie; ++i)
                for (std::size_t j = jb; j < je; ++j) dst[j * n + i] = src[i * n + j];
        }
}

// One-shot unnormalized 1D transform of a plain vector.
inline std::vector<std::complex<double>> fft(std::span<const std::complex<double>> in,
                                             bool forward = true) {
    AlignedBuffer buf(in.size());
    std::copy(in.begin(), in.end(), buf.data());
    BatchedFft plan(in.size(), 1, buf.data());
    if (forward)
        plan.forward(buf.data());
    else
        plan.backward(buf.data());
    return {buf.data(), buf.data() + buf.size()};
}

}  // namespace tunnelex
