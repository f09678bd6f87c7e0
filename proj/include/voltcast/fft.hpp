#pragma once

#include <complex>
#include <vector>

namespace voltcast::fft {

/// In-place iterative radix-2 FFT. The length must be a power of two.
void transform(std::vector<std::complex<double>>& values);

/// Power spectrum |FFT(x)|^2 of a real signal whose length is a power of two.
std::vector<double> power_spectrum(const std::vector<double>& values);

bool is_power_of_two(std::size_t n);

}  // namespace voltcast::fft
