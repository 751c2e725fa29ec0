#ifndef OCTA_CLI_HPP
#define OCTA_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "octa/binarize.hpp"
#include "octa/morphometry.hpp"
#include "octa/preprocess.hpp"
#include "octa/segnet.hpp"

namespace octa::cli {

struct RunConfig {
    std::string preset = "prototype2mm300";
    double fov_mm = 2.0;
    int samples = 300;
    NotchParams notch;
    ClaheParams clahe_params;
    double gamma = 0.5;
    double diameter_step_deg = 1.0;
    TrainConfig train;
    int patches_per_class = 10000;
    int patch_side = 33;
    int threads = 1;
    std::string out_dir = ".";

    double scale_mm_per_px() const;
};

// `key=value` config file; unknown keys are rejected. The preset fixes
// fov_mm/samples; preset=custom requires explicit fov_mm and samples keys.
RunConfig parse_config_file(const std::string& path);
void apply_preset(RunConfig& cfg, const std::string& preset);

struct ManifestEntry {
    std::string eye_id;
    std::string cohort;
    std::string image_path;
    std::string mask_path; // "-" when absent
};

// Text lines `eye_id,cohort,image_path,manual_mask_path`; paths are taken
// relative to the manifest location.
std::vector<ManifestEntry> load_manifest(const std::string& path);

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

void save_ppm(const std::string& path, int width, int height, const std::vector<Rgb>& pixels);

// Grayscale base with non-ROI white, FAZ perimeter yellow, max-diameter
// chord green, min-diameter chord red.
std::vector<Rgb> render_overlay(const GrayImage& base, const RoiMask& roi,
                                const FazMetrics& metrics);

// Metrics-path mask via plain Otsu; density via gamma -> Otsu -> cleanup with
// the metrics-path FAZ region.
FazMetrics quantify_two_path(const ConfidenceMap& map, double gamma, double scale_mm_per_px,
                             double step_deg);

// Entry point behind the octanet binary. Exit codes: 0 success, 1 per-eye
// partial failures, 2 configuration/IO failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace octa::cli

#endif
