#pragma once

namespace ncf {

// Sets the worker count for all parallel kernels (OpenMP and BLAS).
// n <= 0 selects the hardware default. Results are bit-reproducible
// between runs that use the same thread count; n = 1 is additionally
// reproducible across machines.
void set_num_threads(int n);

int num_threads();

}  // namespace ncf
