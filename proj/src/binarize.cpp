#include "octa/binarize.hpp"

#include <cmath>

namespace octa {

int confidence_bin(double v) {
    const int b = static_cast<int>(v * 256.0);
    return b > 255 ? 255 : (b < 0 ? 0 : b);
}

OtsuResult otsu(const ConfidenceMap& map) {
    OtsuResult res;
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            if (map.roi.at(x, y))
                ++res.histogram[confidence_bin(map.at(x, y))];

    int occupied = 0;
    for (const auto c : res.histogram)
        if (c > 0)
            ++occupied;
    if (occupied < 2)
        throw DegenerateInputError("otsu: degenerate histogram (single occupied bin)");

    std::int64_t total = 0, total_sum = 0;
    for (int b = 0; b < 256; ++b) {
        total += res.histogram[b];
        total_sum += res.histogram[b] * b;
    }

    // split k: bins <= k left, bins > k right; maximize
    // w0*w1*(mu0-mu1)^2 = (s0*w1 - s1*w0)^2 / (w0*w1), normalized by N^2
    int best_k = -1;
    double best_var = -1.0;
    std::int64_t w0 = 0, s0 = 0;
    for (int k = 0; k < 255; ++k) {
        w0 += res.histogram[k];
        s0 += res.histogram[k] * k;
        const std::int64_t w1 = total - w0;
        if (w0 == 0 || w1 == 0)
            continue;
        const std::int64_t s1 = total_sum - s0;
        const double num = static_cast<double>(s0) * static_cast<double>(w1) -
                           static_cast<double>(s1) * static_cast<double>(w0);
        const double var = num * num / (static_cast<double>(w0) * static_cast<double>(w1));
        if (var > best_var) {
            best_var = var;
            best_k = k;
        }
    }
    res.threshold = (best_k + 1) / 256.0;
    res.inter_class_variance =
        best_var / (static_cast<double>(total) * static_cast<double>(total));
    return res;
}

BinaryMask threshold_map(const ConfidenceMap& map, double t) {
    if (!(t >= 0.0 && t <= 1.0))
        throw ArgumentError("threshold_map: threshold must be in [0,1]");
    BinaryMask mask = BinaryMask::empty(map.roi);
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            if (map.roi.at(x, y) && map.at(x, y) > t)
                mask.set_vessel(x, y, true);
    return mask;
}

ConfidenceMap gamma_correct(const ConfidenceMap& map, double gamma) {
    if (!(gamma > 0.0))
        throw ArgumentError("gamma_correct: gamma must be positive");
    ConfidenceMap out = map;
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            if (map.roi.at(x, y))
                out.values[static_cast<std::size_t>(y) * map.width + x] =
                    std::pow(map.at(x, y), gamma);
    return out;
}

BinaryMask faz_cleanup(const BinaryMask& mask, const std::vector<std::size_t>& faz_pixels) {
    const std::size_t n = mask.vessel().size();
    for (std::size_t idx : faz_pixels) {
        if (idx >= n || !mask.roi().included()[idx])
            throw ArgumentError("faz_cleanup: region extends outside the ROI");
    }
    BinaryMask out = mask;
    std::vector<std::uint8_t> vessel = out.vessel();
    for (std::size_t idx : faz_pixels)
        vessel[idx] = 0;
    return BinaryMask(mask.width(), mask.height(), std::move(vessel), mask.roi());
}

} // namespace octa
