#pragma once

#include <cstddef>

// Vector arithmetic kernels behind cosine distance and embedding
// normalization. Scalar reference implementations are always available;
// on x86-64 an AVX2/FMA variant is selected at runtime, on aarch64 a NEON
// variant at compile time. Tests compare every active variant against the
// scalar reference.

namespace aie::simd {

double dot(const double* a, const double* b, std::size_t n);
double sum_squares(const double* a, std::size_t n);

// scalar reference kernels (used directly by equivalence tests)
double dot_scalar(const double* a, const double* b, std::size_t n);
double sum_squares_scalar(const double* a, std::size_t n);

// name of the implementation dot()/sum_squares() currently dispatch to:
// "scalar", "avx2" or "neon"
const char* active_impl();

// force the scalar path (tests exercise both paths on any host)
void force_scalar(bool on);

}  // namespace aie::simd
