#include "voltcast/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace voltcast::fft {

bool is_power_of_two(std::size_t n) {
    return n != 0 && (n & (n - 1)) == 0;
}

void transform(std::vector<std::complex<double>>& values) {
    const std::size_t n = values.size();
    if (!is_power_of_two(n)) {
        throw std::invalid_argument("fft: length must be a power of two");
    }
    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) {
            j ^= bit;
        }
        j ^= bit;
        if (i < j) {
            std::swap(values[i], values[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> root(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> even = values[i + k];
                const std::complex<double> odd = values[i + k + len / 2] * w;
                values[i + k] = even + odd;
                values[i + k + len / 2] = even - odd;
                w *= root;
            }
        }
    }
}

std::vector<double> power_spectrum(const std::vector<double>& values) {
    std::vector<std::complex<double>> buf(values.begin(), values.end());
    transform(buf);
    std::vector<double> power(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        power[i] = std::norm(buf[i]);
    }
    return power;
}

}  // namespace voltcast::fft
