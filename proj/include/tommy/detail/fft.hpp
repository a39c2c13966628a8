#pragma once

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cstddef>
#include <memory>
#include <span>
#include <type_traits>
#include <vector>

namespace tommy::detail {

// Smallest power of two >= a + b - 1 (the linear convolution length).
inline std::size_t fft_size(std::size_t a, std::size_t b) {
  const std::size_t linear = a + b - 1;
  return std::bit_ceil(linear);
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
struct PlanDestroy {
  void operator()(fftw_plan p) const { fftw_destroy_plan(p); }
};
using Plan = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDestroy>;

// Linear convolution of two real sequences through the frequency domain.
// Result has a.size() + b.size() - 1 entries. FFTW_ESTIMATE keeps plans (and
// therefore rounding) independent of timing measurements.
inline std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t n = fft_size(a.size(), b.size());
  const std::size_t bins = n / 2 + 1;
  const int len = static_cast<int>(n);

  std::unique_ptr<double, FftwFree> ra(fftw_alloc_real(n)), rb(fftw_alloc_real(n));
  std::unique_ptr<fftw_complex, FftwFree> fa(fftw_alloc_complex(bins)), fb(fftw_alloc_complex(bins));
  // Plan before filling: planning may scribble on the arrays.
  Plan pa(fftw_plan_dft_r2c_1d(len, ra.get(), fa.get(), FFTW_ESTIMATE));
  Plan pb(fftw_plan_dft_r2c_1d(len, rb.get(), fb.get(), FFTW_ESTIMATE));
  Plan inv(fftw_plan_dft_c2r_1d(len, fa.get(), ra.get(), FFTW_ESTIMATE));

  std::fill_n(ra.get(), n, 0.0);
  std::fill_n(rb.get(), n, 0.0);
  std::copy(a.begin(), a.end(), ra.get());
  std::copy(b.begin(), b.end(), rb.get());
  fftw_execute(pa.get());
  fftw_execute(pb.get());
  for (std::size_t k = 0; k < bins; ++k) {
    const double re = fa.get()[k][0] * fb.get()[k][0] - fa.get()[k][1] * fb.get()[k][1];
    const double im = fa.get()[k][0] * fb.get()[k][1] + fa.get()[k][1] * fb.get()[k][0];
    fa.get()[k][0] = re;
    fa.get()[k][1] = im;
  }
  fftw_execute(inv.get());  // unnormalized

  std::vector<double> out(a.size() + b.size() - 1);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ra.get()[i] * scale;
  return out;
}

}  // namespace tommy::detail
