#pragma once

namespace t4c {

/// Which kernel family the tensor ops dispatch to.
enum class Backend { Serial, Parallel };

Backend kernel_backend() noexcept;
void set_kernel_backend(Backend b) noexcept;

/// Switches the kernel backend for the lifetime of the guard.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) noexcept : previous_(kernel_backend()) { set_kernel_backend(b); }
  ~ScopedBackend() { set_kernel_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads() noexcept;
void set_threads(int n) noexcept;

}  // namespace t4c
