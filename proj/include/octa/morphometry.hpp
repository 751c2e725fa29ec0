#ifndef OCTA_MORPHOMETRY_HPP
#define OCTA_MORPHOMETRY_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "octa/raster.hpp"

namespace octa {

// 4-connected pixel region inside a mask frame.
struct Region {
    int width = 0, height = 0; // frame dimensions
    std::vector<std::size_t> pixels; // flat indices, scan order
    std::vector<std::uint8_t> member; // width*height membership raster
    int min_x = 0, min_y = 0, max_x = 0, max_y = 0;

    std::size_t size() const { return pixels.size(); }
    bool contains(int x, int y) const {
        return x >= 0 && x < width && y >= 0 && y < height &&
               member[static_cast<std::size_t>(y) * width + x] != 0;
    }
};

struct DiameterSweep {
    double d_min_px = 0.0, d_max_px = 0.0;
    double theta_min_deg = 0.0, theta_max_deg = 0.0;
};

struct FazMetrics {
    double area_mm2 = 0.0;
    double d_min_mm = 0.0, d_max_mm = 0.0;
    double eccentricity = 0.0;
    double centroid_x = 0.0, centroid_y = 0.0;
    double theta_min_deg = 0.0, theta_max_deg = 0.0;
    std::vector<std::pair<int, int>> perimeter; // ordered 8-connected trace
    double vessel_density = 0.0;
};

// Largest 4-connected non-vessel component within the ROI; size ties break
// toward the component whose centroid is nearest the image center.
Region largest_nonvessel_component(const BinaryMask& mask);

// Region plus every pixel it encloses (8-connected background flood from the
// frame border; unreached non-members are holes).
Region fill_holes(const Region& region);

std::pair<double, double> centroid(const Region& region);

// Chord sweep through the centroid: for each angle in [0,180) at step_deg
// increments, march outward in 0.25-px steps until leaving the region; the
// chord is the sum of both half-lengths. Ties take the smaller angle.
DiameterSweep diameters(const Region& region, double cx, double cy, double step_deg);

double eccentricity(double d_min, double d_max);

double area_mm2(const Region& region, double scale_mm_per_px);

// Vessel ROI pixels / total ROI pixels.
double vessel_density(const BinaryMask& mask);

// Ordered 8-connected boundary trace (Moore tracing, clockwise).
std::vector<std::pair<int, int>> trace_boundary(const Region& region);

// Full chain: largest component -> hole fill -> cleanup -> centroid ->
// diameters (1 degree step) -> eccentricity -> area -> density -> perimeter.
FazMetrics quantify(const BinaryMask& mask, double scale_mm_per_px, double step_deg = 1.0);

} // namespace octa

#endif
