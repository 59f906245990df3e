#pragma once

namespace nsf::runtime {

// Worker count for batched kernels. Defaults to hardware concurrency,
// capped by the NSF_THREADS environment variable when set.
int threads();
void set_threads(int n);

// Serial-deterministic mode: single worker, fixed-order reductions and
// scatter accumulation. Required for bitwise-reproducible fits.
bool deterministic();
void set_deterministic(bool on);

}  // namespace nsf::runtime
