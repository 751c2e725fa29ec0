#ifndef OCTA_FFT_HPP
#define OCTA_FFT_HPP

#include <complex>
#include <vector>

namespace octa {

using cdouble = std::complex<double>;

// In-place FFT of arbitrary length. Power-of-two lengths run the radix-2
// kernel directly; other lengths go through Bluestein's chirp-z identity,
// which zero-pads to the next power of two internally and still returns the
// exact n-point transform. inverse=true applies the 1/n-scaled inverse.
void fft(std::vector<cdouble>& a, bool inverse);

// Row-column 2-D transform of a row-major height x width grid.
void fft2d(std::vector<cdouble>& a, int width, int height, bool inverse);

std::size_t next_pow2(std::size_t n);

} // namespace octa

#endif
