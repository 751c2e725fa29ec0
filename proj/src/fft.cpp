#include "octa/fft.hpp"

#include <cmath>

#include "octa/errors.hpp"

namespace octa {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void fft_pow2(std::vector<cdouble>& a, bool inverse) {
    const std::size_t n = a.size();
    // bit reversal
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1)
            j ^= bit;
        j ^= bit;
        if (i < j)
            std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? kTwoPi : -kTwoPi) / static_cast<double>(len);
        const cdouble wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cdouble w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const cdouble u = a[i + j];
                const cdouble v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& x : a)
            x *= inv;
    }
}

void fft_bluestein(std::vector<cdouble>& a, bool inverse) {
    const std::size_t n = a.size();
    const std::size_t m = next_pow2(2 * n - 1);

    // chirp w_k = exp(-i*pi*k^2/n); k^2 taken mod 2n keeps the argument small
    std::vector<cdouble> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t k2 = (k * k) % (2 * n);
        const double ang = (inverse ? 1.0 : -1.0) * kTwoPi * 0.5 * static_cast<double>(k2) /
                           static_cast<double>(n);
        chirp[k] = cdouble(std::cos(ang), std::sin(ang));
    }

    std::vector<cdouble> p(m, cdouble(0.0, 0.0));
    std::vector<cdouble> q(m, cdouble(0.0, 0.0));
    for (std::size_t k = 0; k < n; ++k)
        p[k] = a[k] * chirp[k];
    q[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k)
        q[k] = q[m - k] = std::conj(chirp[k]);

    fft_pow2(p, false);
    fft_pow2(q, false);
    for (std::size_t k = 0; k < m; ++k)
        p[k] *= q[k];
    fft_pow2(p, true);

    for (std::size_t k = 0; k < n; ++k)
        a[k] = p[k] * chirp[k];
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& x : a)
            x *= inv;
    }
}

} // namespace

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n)
        p <<= 1;
    return p;
}

void fft(std::vector<cdouble>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n == 0)
        throw ArgumentError("fft: empty input");
    if (n == 1)
        return;
    if ((n & (n - 1)) == 0)
        fft_pow2(a, inverse);
    else
        fft_bluestein(a, inverse);
}

void fft2d(std::vector<cdouble>& a, int width, int height, bool inverse) {
    if (width < 1 || height < 1 || a.size() != static_cast<std::size_t>(width) * height)
        throw ArgumentError("fft2d: size mismatch");
    std::vector<cdouble> row(static_cast<std::size_t>(width));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x)
            row[x] = a[static_cast<std::size_t>(y) * width + x];
        fft(row, inverse);
        for (int x = 0; x < width; ++x)
            a[static_cast<std::size_t>(y) * width + x] = row[x];
    }
    std::vector<cdouble> col(static_cast<std::size_t>(height));
    for (int x = 0; x < width; ++x) {
        for (int y = 0; y < height; ++y)
            col[y] = a[static_cast<std::size_t>(y) * width + x];
        fft(col, inverse);
        for (int y = 0; y < height; ++y)
            a[static_cast<std::size_t>(y) * width + x] = col[y];
    }
}

} // namespace octa
