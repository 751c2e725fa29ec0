#ifndef OCTA_SEGNET_HPP
#define OCTA_SEGNET_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "octa/raster.hpp"

namespace octa {

// Patch-based convolutional pixel classifier: ordered layer list chaining
// from a patch_side x patch_side x 1 input to a 2-way softmax.

enum class LayerKind { Conv, Relu, Pool, Fc, Softmax };

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int kh = 0, kw = 0, in_ch = 0, out_ch = 0; // conv (stride 1, valid)
    int in = 0, out = 0;                       // fully connected

    static LayerSpec conv(int kh, int kw, int in_ch, int out_ch) {
        return {LayerKind::Conv, kh, kw, in_ch, out_ch, 0, 0};
    }
    static LayerSpec relu() { return {LayerKind::Relu, 0, 0, 0, 0, 0, 0}; }
    static LayerSpec pool() { return {LayerKind::Pool, 0, 0, 0, 0, 0, 0}; }
    static LayerSpec fc(int in, int out) { return {LayerKind::Fc, 0, 0, 0, 0, in, out}; }
    static LayerSpec softmax() { return {LayerKind::Softmax, 0, 0, 0, 0, 0, 0}; }
};

struct TensorShape {
    int c = 0, h = 0, w = 0;
    std::size_t size() const {
        return static_cast<std::size_t>(c) * h * w;
    }
};

struct CnnModel {
    int patch_side = 0;
    std::vector<LayerSpec> layers;
    // parallel to layers; empty vectors for non-parametric layers
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
    std::uint64_t seed = 0;
    std::string version = "1";
    Metadata meta; // preprocessing parameters, FOV, device

    std::size_t parameter_count() const;
};

// conv 5x5x16 / pool / conv 5x5x32 / pool / fc 64 / fc 2 / softmax.
std::vector<LayerSpec> default_architecture(int patch_side = 33);

// Validates the layer chain and returns per-layer output shapes
// (shapes[0] is the input, shapes[i+1] the output of layer i).
std::vector<TensorShape> plan_shapes(int patch_side, const std::vector<LayerSpec>& layers);

// Fresh model: weights uniform in +-sqrt(6/(fan_in+fan_out)) from the seeded
// generator, biases zero.
CnnModel init_model(int patch_side, const std::vector<LayerSpec>& layers, std::uint64_t seed);

std::string arch_to_string(const std::vector<LayerSpec>& layers);
std::vector<LayerSpec> arch_from_string(const std::string& s);

struct TrainConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
    int batch_size = 32;
    int epochs = 10;
    std::uint64_t seed = 1;
};

struct LabeledPatch {
    std::vector<double> values; // patch_side^2, row-major
    int label = 0;              // 1 = vessel, 0 = non-vessel
    int image_id = 0;
    int x = 0, y = 0;
};

struct LabeledPatchSet {
    int patch_side = 0;
    std::vector<LabeledPatch> patches;
};

struct ConfidenceMap {
    int width = 0, height = 0;
    std::vector<double> values; // [0,1]; exactly 0 outside roi
    RoiMask roi;

    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Exactly n_per_class patches centered on vessel and non-vessel ROI pixels,
// drawn uniformly without replacement; deterministic per seed.
LabeledPatchSet sample_balanced(const GrayImage& img, const BinaryMask& gt, int n_per_class,
                                std::uint64_t seed, int patch_side, int image_id = 0);

// Softmax probability of the vessel class for one patch.
double forward(const CnnModel& model, const std::vector<double>& patch);
std::array<double, 2> forward_probs(const CnnModel& model, const std::vector<double>& patch);

// Mean cross-entropy over a patch set under the current weights.
double mean_loss(const CnnModel& model, const LabeledPatchSet& data);

struct TrainResult {
    CnnModel model;
    std::vector<double> epoch_loss;
};

// Mini-batch SGD with momentum on mean cross-entropy; data reshuffled each
// epoch from the seeded generator; single-threaded and bit-reproducible.
TrainResult train(CnnModel model, const LabeledPatchSet& data, const TrainConfig& cfg);

// Max over parameters of |analytic - central difference| relative error.
double grad_check(const CnnModel& model, const LabeledPatchSet& batch, double epsilon);

// Per-pixel vessel confidence; non-ROI pixels are exactly 0. Threads > 1
// fan out over rows and produce values bit-identical to the sequential path.
ConfidenceMap infer_map(const CnnModel& model, const GrayImage& img, const RoiMask& roi,
                        int threads = 1);

struct CvEntry {
    std::string id;
    GrayImage image;
    BinaryMask gt;
};

struct SplitHalfOptions {
    int patch_side = 33;
    std::vector<LayerSpec> arch; // default_architecture(patch_side) when empty
    int patches_per_class = 10000; // per fold, capped by availability
    int threads = 1;
    Metadata model_meta;
};

struct SplitHalfResult {
    std::vector<ConfidenceMap> maps; // parallel to the input dataset
    CnnModel model_a;                // trained on the first ceil(n/2) entries
    CnnModel model_b;                // trained on the rest
    std::vector<double> loss_a, loss_b;
    std::vector<std::string> fold_a_ids, fold_b_ids;
};

// Train on the first half, segment the second, then reverse; every image is
// segmented by the model that never saw it.
SplitHalfResult split_half_cv(const std::vector<CvEntry>& dataset, const TrainConfig& cfg,
                              const SplitHalfOptions& opt);

// Versioned container: magic "OCTANET1", text header, little-endian 64-bit
// weights in layer order, CRC-32 of the weight payload.
void save_model(const CnnModel& model, const std::string& path);
CnnModel load_model(const std::string& path);

} // namespace octa

#endif
