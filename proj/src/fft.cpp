#include "twinbeam/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

#include "twinbeam/aligned.hpp"

namespace twinbeam::fft {
namespace {

using PlanKey = std::tuple<std::size_t, std::size_t, std::size_t, int>;

// FFTW planning is not thread-safe; execution with the new-array interface is.
// FFTW_ESTIMATE keeps the chosen algorithm, and therefore the rounding,
// identical from run to run.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t n0, std::size_t n1, std::size_t n2, int sign) {
    std::lock_guard lock(mutex_);
    const PlanKey key{n0, n1, n2, sign};
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    AlignedVector<std::complex<double>> scratch(n0 * n1 * n2);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan plan = fftw_plan_dft_3d(static_cast<int>(n0), static_cast<int>(n1),
                                      static_cast<int>(n2), buf, buf, sign, FFTW_ESTIMATE);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<PlanKey, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

}  // namespace

void transform_inplace(std::complex<double>* data, std::size_t n0, std::size_t n1,
                       std::size_t n2, Direction direction) {
  const int sign = direction == Direction::forward ? FFTW_FORWARD : FFTW_BACKWARD;
  fftw_plan plan = cache().get(n0, n1, n2, sign);
  auto* buf = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(plan, buf, buf);
}

}  // namespace twinbeam::fft
