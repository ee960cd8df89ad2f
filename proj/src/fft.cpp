#include "driftlab/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace driftlab::fft {
namespace {

// FFTW planning is not thread-safe; execution of an existing plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

fftw_plan plan_for(int d, int n, int sign) {
  static std::map<std::tuple<int, int, int>, fftw_plan> cache;
  std::lock_guard lock(planner_mutex());
  auto key = std::make_tuple(d, n, sign);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  std::vector<int> dims(static_cast<std::size_t>(d), n);
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(n);
  std::vector<cplx> scratch(total);
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  // ESTIMATE keeps the chosen algorithm, and hence the rounding, run-independent.
  fftw_plan p = fftw_plan_dft(d, dims.data(), buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (p == nullptr) throw std::runtime_error("fftw planning failed");
  cache.emplace(key, p);
  return p;
}

std::size_t expected_size(int d, int n) {
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(n);
  return total;
}

}  // namespace

void forward(std::span<cplx> data, int d, int n) {
  if (data.size() != expected_size(d, n)) throw std::invalid_argument("fft: size mismatch");
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan_for(d, n, FFTW_FORWARD), buf, buf);
}

void inverse(std::span<cplx> data, int d, int n) {
  if (data.size() != expected_size(d, n)) throw std::invalid_argument("fft: size mismatch");
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan_for(d, n, FFTW_BACKWARD), buf, buf);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (auto& v : data) v *= scale;
}

}  // namespace driftlab::fft
