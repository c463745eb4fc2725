#pragma once

#if defined(__SSE2__) || defined(_M_X64) || defined(__x86_64__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

namespace colorshift {

// Flushes subnormal floats to zero for this thread. Long optimization runs
// drive activations and gradients toward zero; letting them enter the
// subnormal range makes the FPU fall back to microcode and can slow training
// several-fold. Zeroing them instead is harmless at our tolerances and leaves
// inf/NaN propagation (which the abort paths rely on) untouched.
inline void flush_denormals() {
#if defined(__SSE2__) || defined(_M_X64) || defined(__x86_64__)
    _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
    _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#elif defined(__aarch64__)
    uint64_t fpcr;
    asm volatile("mrs %0, fpcr" : "=r"(fpcr));
    fpcr |= (1ull << 24);  // FZ
    asm volatile("msr fpcr, %0" : : "r"(fpcr));
#endif
}

}  // namespace colorshift
