#ifndef OCTA_PREPROCESS_HPP
#define OCTA_PREPROCESS_HPP

#include <vector>

#include "octa/raster.hpp"

namespace octa {

struct Shift2D {
    double dy = 0.0;
    double dx = 0.0;
};

struct NotchParams {
    int band_halfwidth = 1;  // |u| <= this (horizontal-frequency bins)
    int min_stripe_freq = 4; // |v| >= this (vertical-frequency bins); DC safe
    double attenuation = 0.0;
};

struct ClaheParams {
    int tiles_x = 8;
    int tiles_y = 8;
    double clip_limit = 2.0;
};

// Displacement that maximizes the cross-correlation of reference and moving,
// found by phase correlation with local Fourier upsampling; resolution is
// 1/upsample pixel. Returns the shift applied to reference to obtain moving.
Shift2D register_translation(const GrayImage& reference, const GrayImage& moving,
                             int upsample);

// Bilinear resample of img at coordinates displaced by shift; out-of-bounds
// samples take the nearest border value.
GrayImage apply_shift(const GrayImage& img, const Shift2D& shift);

// Attenuates DFT coefficients with |u| <= band_halfwidth and
// |v| >= min_stripe_freq (horizontal stripe artefacts). Output clamped to
// [0,1]; notch_filter_raw exposes the pre-clamp values.
GrayImage notch_filter(const GrayImage& img, const NotchParams& p);
std::vector<double> notch_filter_raw(const GrayImage& img, const NotchParams& p);

// Contrast-limited adaptive histogram equalization: 256-bin per-tile
// histograms clipped at clip_limit * tile_pixels/256 with the excess spread
// uniformly, per-pixel mapping bilinearly interpolated between the four
// surrounding tiles. A single-bin tile maps through the identity.
GrayImage clahe(const GrayImage& img, const ClaheParams& p);

// Registers frames[1..] onto frames[0] and averages the aligned stack.
GrayImage align_average(const std::vector<GrayImage>& frames, int upsample = 10);

} // namespace octa

#endif
