#include "aie/vec_kernels.hpp"

#include <atomic>

// ---------------------------------------------------------------------------
// platform detection
// ---------------------------------------------------------------------------

#if defined(__x86_64__) || defined(_M_X64)
#define AIE_SIMD_X86 1
#else
#define AIE_SIMD_X86 0
#endif

#if defined(__aarch64__) && defined(__ARM_NEON)
#define AIE_SIMD_NEON 1
#else
#define AIE_SIMD_NEON 0
#endif

#if AIE_SIMD_X86
#include <immintrin.h>
#endif
#if AIE_SIMD_NEON
#include <arm_neon.h>
#endif

namespace aie::simd {

// ---------------------------------------------------------------------------
// scalar reference kernels
// ---------------------------------------------------------------------------

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_squares_scalar(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
    return acc;
}

// ---------------------------------------------------------------------------
// AVX2 kernels (4 doubles per lane, scalar tail)
// ---------------------------------------------------------------------------

#if AIE_SIMD_X86

__attribute__((target("avx2,fma"))) static double dot_avx2(const double* a, const double* b,
                                                           std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d va = _mm256_loadu_pd(a + i);
        const __m256d vb = _mm256_loadu_pd(b + i);
        acc = _mm256_fmadd_pd(va, vb, acc);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double out = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (; i < n; ++i) out += a[i] * b[i];
    return out;
}

__attribute__((target("avx2,fma"))) static double sum_squares_avx2(const double* a,
                                                                   std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d va = _mm256_loadu_pd(a + i);
        acc = _mm256_fmadd_pd(va, va, acc);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double out = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (; i < n; ++i) out += a[i] * a[i];
    return out;
}

#endif  // AIE_SIMD_X86

// ---------------------------------------------------------------------------
// NEON kernels (2 doubles per lane, scalar tail)
// ---------------------------------------------------------------------------

#if AIE_SIMD_NEON

static double dot_neon(const double* a, const double* b, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
    }
    double out = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) out += a[i] * b[i];
    return out;
}

static double sum_squares_neon(const double* a, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t va = vld1q_f64(a + i);
        acc = vfmaq_f64(acc, va, va);
    }
    double out = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) out += a[i] * a[i];
    return out;
}

#endif  // AIE_SIMD_NEON

// ---------------------------------------------------------------------------
// runtime dispatch
// ---------------------------------------------------------------------------

namespace {

using DotFn = double (*)(const double*, const double*, std::size_t);
using SumSquaresFn = double (*)(const double*, std::size_t);

struct Dispatch {
    DotFn dot;
    SumSquaresFn sum_squares;
    const char* name;
};

Dispatch detect() {
#if AIE_SIMD_X86
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
        return {dot_avx2, sum_squares_avx2, "avx2"};
    }
#endif
#if AIE_SIMD_NEON
    return {dot_neon, sum_squares_neon, "neon"};
#endif
    return {dot_scalar, sum_squares_scalar, "scalar"};
}

const Dispatch& native() {
    static const Dispatch d = detect();
    return d;
}

std::atomic<bool> g_force_scalar{false};

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
    if (g_force_scalar.load(std::memory_order_relaxed)) return dot_scalar(a, b, n);
    return native().dot(a, b, n);
}

double sum_squares(const double* a, std::size_t n) {
    if (g_force_scalar.load(std::memory_order_relaxed)) return sum_squares_scalar(a, n);
    return native().sum_squares(a, n);
}

const char* active_impl() {
    if (g_force_scalar.load(std::memory_order_relaxed)) return "scalar";
    return native().name;
}

void force_scalar(bool on) { g_force_scalar.store(on, std::memory_order_relaxed); }

}  // namespace aie::simd
