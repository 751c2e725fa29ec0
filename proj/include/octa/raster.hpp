#ifndef OCTA_RASTER_HPP
#define OCTA_RASTER_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "octa/errors.hpp"

namespace octa {

// 2-D grayscale raster, row-major, values in [0,1]. Immutable after
// construction apart from whole-value assignment.
class GrayImage {
public:
    GrayImage(int width, int height, std::vector<double> data,
              std::optional<double> scale_mm_per_px = std::nullopt);

    // Constant-filled image.
    GrayImage(int width, int height, double fill = 0.0,
              std::optional<double> scale_mm_per_px = std::nullopt);

    int width() const { return width_; }
    int height() const { return height_; }
    std::optional<double> scale_mm_per_px() const { return scale_; }

    double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    const std::vector<double>& data() const { return data_; }

    GrayImage with_scale(double scale_mm_per_px) const;

private:
    int width_, height_;
    std::vector<double> data_;
    std::optional<double> scale_;
};

// Measured-area mask; true = pixel participates in every count.
class RoiMask {
public:
    RoiMask(int width, int height, std::vector<std::uint8_t> included);

    // Full-image ROI.
    static RoiMask full(int width, int height);

    int width() const { return width_; }
    int height() const { return height_; }
    bool at(int x, int y) const { return included_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    const std::vector<std::uint8_t>& included() const { return included_; }
    std::size_t count() const;

    bool operator==(const RoiMask& other) const = default;

private:
    int width_, height_;
    std::vector<std::uint8_t> included_;
};

// Per-pixel vessel labels over an ROI. Pixels outside the ROI carry no
// meaning and are excluded from every count.
class BinaryMask {
public:
    BinaryMask(int width, int height, std::vector<std::uint8_t> vessel, RoiMask roi);

    static BinaryMask empty(const RoiMask& roi);

    int width() const { return width_; }
    int height() const { return height_; }
    bool vessel_at(int x, int y) const { return vessel_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    const std::vector<std::uint8_t>& vessel() const { return vessel_; }
    const RoiMask& roi() const { return roi_; }

    void set_vessel(int x, int y, bool v) { vessel_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }

    std::size_t vessel_count() const; // within ROI

private:
    int width_, height_;
    std::vector<std::uint8_t> vessel_;
    RoiMask roi_;
};

// --- portable graymap I/O (binary P5, maxval 255 or 65535) ---

GrayImage load_gray(const std::string& path);
void save_gray(const GrayImage& img, const std::string& path, int bit_depth = 8);

// Masks travel as P5 files holding {0,255}; >127 reads back as true.
BinaryMask load_mask(const std::string& path);
void save_mask(const BinaryMask& mask, const std::string& path);
RoiMask load_roi(const std::string& path);
void save_roi(const RoiMask& roi, const std::string& path);

// --- sidecar metadata (`key=value` lines: fov_mm, device, eye_id, cohort) ---

using Metadata = std::map<std::string, std::string>;

Metadata load_metadata(const std::string& path);
void save_metadata(const Metadata& meta, const std::string& path);
std::string sidecar_path(const std::string& image_path);

// --- physical-scale arithmetic ---

double pixel_scale(double fov_mm, int samples);

// --- patch extraction ---

// k x k window centered at (cx, cy); out-of-bounds samples are mirrored
// about the border (index -1 maps back to 0).
std::vector<double> extract_patch(const GrayImage& img, int cx, int cy, int k);

// Mirror-fold an index into [0, n).
int mirror_index(int i, int n);

} // namespace octa

#endif
