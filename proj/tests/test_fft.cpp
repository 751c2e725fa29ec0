#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "octa/fft.hpp"
#include "octa/rng.hpp"

using namespace octa;

namespace {

// direct O(n^2) DFT oracle
std::vector<cdouble> dft_oracle(const std::vector<cdouble>& a, bool inverse) {
    const std::size_t n = a.size();
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<cdouble> out(n, cdouble(0.0, 0.0));
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = sign * 2.0 * M_PI * static_cast<double>(k * j) / n;
            out[k] += a[j] * cdouble(std::cos(ang), std::sin(ang));
        }
        if (inverse)
            out[k] /= static_cast<double>(n);
    }
    return out;
}

} // namespace

TEST_CASE("fft matches the direct DFT oracle for every small size") {
    Rng rng(17);
    for (std::size_t n = 1; n <= 24; ++n) {
        std::vector<cdouble> a(n);
        for (auto& v : a)
            v = cdouble(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        std::vector<cdouble> got = a;
        fft(got, false);
        const auto want = dft_oracle(a, false);
        for (std::size_t k = 0; k < n; ++k)
            CHECK(std::abs(got[k] - want[k]) < 1e-9);
    }
}

TEST_CASE("inverse fft undoes the forward transform") {
    Rng rng(99);
    for (const std::size_t n : {5u, 8u, 12u, 37u, 128u, 300u}) {
        std::vector<cdouble> a(n);
        for (auto& v : a)
            v = cdouble(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        std::vector<cdouble> b = a;
        fft(b, false);
        fft(b, true);
        for (std::size_t k = 0; k < n; ++k)
            CHECK(std::abs(b[k] - a[k]) < 1e-10);
    }
}

TEST_CASE("impulse transforms to a flat spectrum") {
    std::vector<cdouble> a(45, cdouble(0.0, 0.0));
    a[0] = cdouble(1.0, 0.0);
    fft(a, false);
    for (const auto& v : a)
        CHECK(std::abs(v - cdouble(1.0, 0.0)) < 1e-12);
}

TEST_CASE("2-D transform matches row-column oracle on a non-pow2 grid") {
    Rng rng(5);
    const int w = 6, h = 5;
    std::vector<cdouble> a(static_cast<std::size_t>(w) * h);
    for (auto& v : a)
        v = cdouble(rng.uniform(0.0, 1.0), 0.0);

    std::vector<cdouble> got = a;
    fft2d(got, w, h, false);

    // oracle: direct DFT on rows, then columns
    std::vector<cdouble> want = a;
    for (int y = 0; y < h; ++y) {
        std::vector<cdouble> row(want.begin() + static_cast<std::size_t>(y) * w,
                                 want.begin() + static_cast<std::size_t>(y + 1) * w);
        row = dft_oracle(row, false);
        for (int x = 0; x < w; ++x)
            want[static_cast<std::size_t>(y) * w + x] = row[x];
    }
    for (int x = 0; x < w; ++x) {
        std::vector<cdouble> col(h);
        for (int y = 0; y < h; ++y)
            col[y] = want[static_cast<std::size_t>(y) * w + x];
        col = dft_oracle(col, false);
        for (int y = 0; y < h; ++y)
            want[static_cast<std::size_t>(y) * w + x] = col[y];
    }
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(std::abs(got[i] - want[i]) < 1e-9);
}

TEST_CASE("Parseval energy identity") {
    Rng rng(71);
    std::vector<cdouble> a(97);
    for (auto& v : a)
        v = cdouble(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    double time_energy = 0.0;
    for (const auto& v : a)
        time_energy += std::norm(v);
    fft(a, false);
    double freq_energy = 0.0;
    for (const auto& v : a)
        freq_energy += std::norm(v);
    CHECK(freq_energy / static_cast<double>(a.size()) ==
          doctest::Approx(time_energy).epsilon(1e-10));
}
