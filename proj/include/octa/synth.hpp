#ifndef OCTA_SYNTH_HPP
#define OCTA_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "octa/raster.hpp"
#include "octa/stats.hpp"

namespace octa {

struct EllipseSpec {
    double cx = 0.0, cy = 0.0; // center, px
    double a = 0.0, b = 0.0;   // semi-axes, px (a >= b)
    double rot_deg = 0.0;
};

// Normalized elliptical radius: < 1 inside, 1 on the boundary.
double ellipse_norm_radius(const EllipseSpec& e, double x, double y);

struct VesselModel {
    int n_seeds = 24;
    double branch_prob = 0.045;  // per step
    double thickness_min = 1.4;  // px
    double thickness_max = 2.8;
    double tortuosity_deg = 15.0; // max heading jitter per step
};

struct NoiseModel {
    double speckle_var = 0.08; // multiplicative, unit mean
    double background = 0.12;
};

struct SynthParams {
    int width = 128, height = 128;
    EllipseSpec faz{64.0, 64.0, 20.0, 14.0, 0.0};
    VesselModel vessels;
    double target_fraction = 0.45; // of ROI pixels
    NoiseModel noise;
    double scale_mm_per_px = 1.0;
    std::uint64_t seed = 1;
};

struct GroundTruth {
    BinaryMask mask;
    EllipseSpec faz;
    double vessel_fraction = 0.0; // exact, measured on the mask
    // analytic metrics at scale_mm_per_px
    double area_mm2 = 0.0;
    double d_max_mm = 0.0, d_min_mm = 0.0;
    double eccentricity = 0.0;
};

struct SynthResult {
    GrayImage image;
    GroundTruth truth;
};

// Branching random-walk vasculature around a sealed FAZ ellipse, anti-aliased
// rasterization, multiplicative speckle. The truth mask is the pre-noise
// rasterization thresholded at half intensity; the FAZ interior is vessel-free
// by construction. Deterministic per (params, seed).
SynthResult generate(const SynthParams& p);

struct CohortDistribution {
    double area_mm2_mean = 0.0, area_mm2_sd = 0.0;
    double ecc_mean = 0.0, ecc_sd = 0.0;
    double density_mean = 0.0, density_sd = 0.0;
};

// Automated-segmentation cohort anchors (healthy / diabetic).
CohortDistribution healthy_distribution();
CohortDistribution diabetic_distribution();

struct CohortEye {
    std::string id;
    std::string cohort; // "healthy" | "diabetic"
    SynthResult data;
};

struct CohortOptions {
    int width = 160, height = 160;
    double scale_mm_per_px = 0.012245; // 3 mm / 245 px
    VesselModel vessels;
    NoiseModel noise;
};

// n_each eyes per cohort, per-eye FAZ axes and vessel fraction drawn from
// the given normal distributions truncated to valid ranges.
std::vector<CohortEye> generate_cohort(const CohortDistribution& healthy,
                                       const CohortDistribution& diabetic, int n_each,
                                       std::uint64_t seed, const CohortOptions& opt);

// Truth rows in the morphometry CSV schema (rater = "manual": the synthetic
// truth stands in for the manual rater).
std::vector<MetricRow> cohort_truth_rows(const std::vector<CohortEye>& eyes);

} // namespace octa

#endif
