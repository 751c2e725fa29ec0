#ifndef OCTA_BINARIZE_HPP
#define OCTA_BINARIZE_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "octa/segnet.hpp"

namespace octa {

struct OtsuResult {
    double threshold = 0.0;            // bin boundary, scalar in [0,1]
    double inter_class_variance = 0.0; // maximal omega0*omega1*(mu0-mu1)^2
    std::array<std::int64_t, 256> histogram{};
};

// 256-bin Otsu over ROI pixels; ties break toward the lower threshold.
// Bin statistics use exact integer arithmetic; the variance itself is a
// 64-bit real.
OtsuResult otsu(const ConfidenceMap& map);

// Quantization used by the Otsu histogram: bin 0..255 for a value in [0,1].
int confidence_bin(double v);

// vessel <=> value > t, ROI only.
BinaryMask threshold_map(const ConfidenceMap& map, double t);

// v -> v^gamma on ROI values.
ConfidenceMap gamma_correct(const ConfidenceMap& map, double gamma);

// Forces every pixel of the given region to non-vessel; region must lie
// inside the ROI. Pixels are flat indices y*width + x.
BinaryMask faz_cleanup(const BinaryMask& mask, const std::vector<std::size_t>& faz_pixels);

} // namespace octa

#endif
