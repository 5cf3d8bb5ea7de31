#pragma once

namespace boltpipe {

// Worker cap for every OpenMP kernel in the library. 0 restores the runtime default.
void set_thread_count(int threads);
int thread_count();

// Kernels with an `Execution` parameter keep a plain serial loop alongside the
// OpenMP one; both must produce identical results.
enum class Execution { serial, parallel };

} // namespace boltpipe
