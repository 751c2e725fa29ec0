#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "octa/rng.hpp"
#include "octa/segnet.hpp"

using namespace octa;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "octa_test_segnet";
    fs::create_directories(dir);
    return dir;
}

// compact architecture for gradient work (well under 5000 parameters)
std::vector<LayerSpec> tiny_arch() {
    return {LayerSpec::conv(3, 3, 1, 2), LayerSpec::relu(),    LayerSpec::pool(),
            LayerSpec::conv(2, 2, 2, 3), LayerSpec::relu(),    LayerSpec::fc(12, 8),
            LayerSpec::relu(),           LayerSpec::fc(8, 2),  LayerSpec::softmax()};
}

LabeledPatchSet random_patches(int k, int n, std::uint64_t seed) {
    Rng rng(seed);
    LabeledPatchSet set;
    set.patch_side = k;
    for (int i = 0; i < n; ++i) {
        LabeledPatch p;
        p.values.resize(static_cast<std::size_t>(k) * k);
        for (double& v : p.values)
            v = rng.next_double();
        p.label = static_cast<int>(rng.next_below(2));
        set.patches.push_back(std::move(p));
    }
    return set;
}

// bright-center vs dark-center patches, linearly separable
LabeledPatchSet separable_patches(int k, int n_per_class, std::uint64_t seed) {
    Rng rng(seed);
    LabeledPatchSet set;
    set.patch_side = k;
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < n_per_class; ++i) {
            LabeledPatch p;
            p.label = c;
            p.values.resize(static_cast<std::size_t>(k) * k);
            for (int y = 0; y < k; ++y)
                for (int x = 0; x < k; ++x) {
                    const bool center = std::abs(x - k / 2) <= 1 && std::abs(y - k / 2) <= 1;
                    double v = c == 1 ? (center ? 0.9 : 0.2) : (center ? 0.1 : 0.8);
                    v += rng.uniform(-0.05, 0.05);
                    p.values[static_cast<std::size_t>(y) * k + x] = std::clamp(v, 0.0, 1.0);
                }
            set.patches.push_back(std::move(p));
        }
    }
    return set;
}

} // namespace

TEST_CASE("the default architecture chains from the patch to 2 outputs") {
    const auto layers = default_architecture(33);
    const auto shapes = plan_shapes(33, layers);
    CHECK(shapes.front().size() == 33 * 33);
    CHECK(shapes.back().size() == 2);
    const CnnModel m = init_model(33, layers, 1);
    CHECK(m.parameter_count() == 64642); // 416 + 12832 + 51264 + 130
}

TEST_CASE("plan_shapes rejects inconsistent chains") {
    CHECK_THROWS_AS(plan_shapes(33, {LayerSpec::fc(100, 2), LayerSpec::softmax()}),
                    ArgumentError);
    CHECK_THROWS_AS(plan_shapes(9, {LayerSpec::conv(3, 3, 2, 4), LayerSpec::softmax()}),
                    ArgumentError);
    CHECK_THROWS_AS(plan_shapes(9, {LayerSpec::fc(81, 2)}), ArgumentError); // no softmax
    CHECK_THROWS_AS(plan_shapes(9, {LayerSpec::softmax(), LayerSpec::fc(81, 2)}),
                    ArgumentError);
}

TEST_CASE("zero weights give probability one half") {
    CnnModel m = init_model(9, tiny_arch(), 3);
    for (auto& layer : m.weights)
        std::fill(layer.begin(), layer.end(), 0.0);
    for (auto& layer : m.biases)
        std::fill(layer.begin(), layer.end(), 0.0);
    const std::vector<double> patch(81, 0.7);
    CHECK(forward(m, patch) == 0.5);
}

TEST_CASE("hand-built conv + dense model matches the closed form") {
    // 1x1 conv with weight w, dense layer summing into logit 0 with weight a
    const std::vector<LayerSpec> arch{LayerSpec::conv(1, 1, 1, 1), LayerSpec::fc(9, 2),
                                      LayerSpec::softmax()};
    CnnModel m = init_model(3, arch, 0);
    const double w = 0.5, a = 0.25, c = 0.8;
    m.weights[0] = {w};
    m.biases[0] = {0.0};
    std::fill(m.weights[1].begin(), m.weights[1].end(), 0.0);
    for (int i = 0; i < 9; ++i)
        m.weights[1][i] = a; // logit0 row
    const std::vector<double> patch(9, c);
    // logit0 = 9*a*w*c, logit1 = 0 -> p(vessel) = 1/(1+exp(9awc))
    const double want = 1.0 / (1.0 + std::exp(9.0 * a * w * c));
    CHECK(forward(m, patch) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("class probabilities sum to one") {
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
        const CnnModel m = init_model(9, tiny_arch(), rng.next_u64());
        std::vector<double> patch(81);
        for (double& v : patch)
            v = rng.next_double();
        const auto pr = forward_probs(m, patch);
        CHECK(std::fabs(pr[0] + pr[1] - 1.0) < 1e-12);
    }
}

TEST_CASE("forward rejects a wrong patch size") {
    const CnnModel m = init_model(9, tiny_arch(), 1);
    CHECK_THROWS_AS(forward(m, std::vector<double>(64, 0.5)), ArgumentError);
}

TEST_CASE("sample_balanced draws exact balanced sets deterministically") {
    Rng rng(9);
    std::vector<double> data(40 * 40);
    for (double& v : data)
        v = rng.next_double();
    const GrayImage img(40, 40, data);
    std::vector<std::uint8_t> vessel(40 * 40, 0);
    for (int i = 0; i < 400; ++i)
        vessel[i * 4] = 1; // 400 vessel pixels
    const BinaryMask gt(40, 40, vessel, RoiMask::full(40, 40));

    const LabeledPatchSet a = sample_balanced(img, gt, 100, 42, 9);
    CHECK(a.patches.size() == 200);
    int n_vessel = 0;
    for (const auto& p : a.patches) {
        if (p.label == 1)
            ++n_vessel;
        CHECK(gt.vessel_at(p.x, p.y) == (p.label == 1));
    }
    CHECK(n_vessel == 100);

    const LabeledPatchSet b = sample_balanced(img, gt, 100, 42, 9);
    for (std::size_t i = 0; i < a.patches.size(); ++i) {
        CHECK(a.patches[i].x == b.patches[i].x);
        CHECK(a.patches[i].y == b.patches[i].y);
    }

    // without replacement: coordinates unique per class
    std::set<std::pair<int, int>> seen;
    for (const auto& p : a.patches)
        CHECK(seen.insert({p.x, p.y}).second);

    CHECK_THROWS_AS(sample_balanced(img, gt, 401, 1, 9), InsufficientClassPixelsError);
}

TEST_CASE("sample_balanced respects the ROI") {
    const GrayImage img(20, 20, 0.5);
    std::vector<std::uint8_t> included(400, 0);
    std::vector<std::uint8_t> vessel(400, 0);
    for (int y = 5; y < 15; ++y)
        for (int x = 5; x < 15; ++x) {
            included[static_cast<std::size_t>(y) * 20 + x] = 1;
            vessel[static_cast<std::size_t>(y) * 20 + x] = (x + y) % 2;
        }
    const BinaryMask gt(20, 20, vessel, RoiMask(20, 20, included));
    const LabeledPatchSet set = sample_balanced(img, gt, 30, 5, 5);
    for (const auto& p : set.patches)
        CHECK(gt.roi().at(p.x, p.y));
}

TEST_CASE("training memorizes a single patch") {
    LabeledPatchSet one = random_patches(9, 1, 11);
    one.patches[0].label = 1;
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.0;
    cfg.batch_size = 1;
    cfg.epochs = 500;
    cfg.seed = 2;
    const TrainResult r = train(init_model(9, tiny_arch(), 1), one, cfg);
    CHECK(r.epoch_loss.size() == 500);
    CHECK(r.epoch_loss.back() < 1e-3);
}

TEST_CASE("training separates the bright-center toy set within 20 epochs") {
    const LabeledPatchSet data = separable_patches(9, 60, 13);
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.momentum = 0.9;
    cfg.batch_size = 16;
    cfg.epochs = 20;
    cfg.seed = 3;
    const TrainResult r = train(init_model(9, tiny_arch(), 4), data, cfg);
    int correct = 0;
    for (const auto& p : data.patches) {
        const double prob = forward(r.model, p.values);
        if ((prob > 0.5) == (p.label == 1))
            ++correct;
    }
    CHECK(correct == static_cast<int>(data.patches.size()));
}

TEST_CASE("training is bit-deterministic per seed") {
    const LabeledPatchSet data = separable_patches(9, 20, 17);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 5;
    const TrainResult a = train(init_model(9, tiny_arch(), 6), data, cfg);
    const TrainResult b = train(init_model(9, tiny_arch(), 6), data, cfg);
    CHECK(a.epoch_loss == b.epoch_loss);
    for (std::size_t li = 0; li < a.model.layers.size(); ++li) {
        CHECK(a.model.weights[li] == b.model.weights[li]);
        CHECK(a.model.biases[li] == b.model.biases[li]);
    }
}

TEST_CASE("training reports divergence with the epoch") {
    const LabeledPatchSet data = separable_patches(9, 10, 19);
    TrainConfig cfg;
    cfg.learning_rate = 1e150; // deliberately overflows the activation chain
    cfg.momentum = 0.0;
    cfg.epochs = 5;
    try {
        train(init_model(9, tiny_arch(), 7), data, cfg);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.epoch >= 0);
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("grad_check is under 1e-4 for every layer type") {
    const LabeledPatchSet batch = random_patches(9, 8, 23);

    // composed network covering conv, relu, pool and fc
    CHECK(grad_check(init_model(9, tiny_arch(), 31), batch, 1e-6) < 1e-4);

    // each parametric layer type in isolation
    const std::vector<LayerSpec> conv_only{LayerSpec::conv(3, 3, 1, 2), LayerSpec::relu(),
                                           LayerSpec::fc(98, 2), LayerSpec::softmax()};
    CHECK(grad_check(init_model(9, conv_only, 32), batch, 1e-6) < 1e-4);

    const std::vector<LayerSpec> fc_only{LayerSpec::fc(81, 10), LayerSpec::relu(),
                                         LayerSpec::fc(10, 2), LayerSpec::softmax()};
    CHECK(grad_check(init_model(9, fc_only, 33), batch, 1e-6) < 1e-4);

    const std::vector<LayerSpec> pool_net{LayerSpec::pool(), LayerSpec::conv(2, 2, 1, 2),
                                          LayerSpec::relu(), LayerSpec::fc(18, 2),
                                          LayerSpec::softmax()};
    CHECK(grad_check(init_model(9, pool_net, 34), batch, 1e-6) < 1e-4);
}

TEST_CASE("grad_check is near zero in a flat loss region") {
    CnnModel m = init_model(9, tiny_arch(), 35);
    for (auto& layer : m.weights)
        std::fill(layer.begin(), layer.end(), 0.0);
    for (auto& layer : m.biases)
        std::fill(layer.begin(), layer.end(), 0.0);
    LabeledPatchSet batch;
    batch.patch_side = 9;
    for (int i = 0; i < 2; ++i) {
        LabeledPatch p;
        p.values.assign(81, 0.0);
        p.label = i;
        batch.patches.push_back(std::move(p));
    }
    CHECK(grad_check(m, batch, 1e-5) < 1e-6);
}

TEST_CASE("grad_check is stable under doubling epsilon") {
    const LabeledPatchSet batch = random_patches(9, 8, 29);
    const CnnModel m = init_model(9, tiny_arch(), 36);
    const double e1 = grad_check(m, batch, 2e-5);
    const double e2 = grad_check(m, batch, 4e-5);
    if (e1 > 1e-12 && e2 > 1e-12) {
        CHECK(e2 / e1 < 10.0);
        CHECK(e1 / e2 < 10.0);
    }
}

TEST_CASE("grad_check validates its preconditions") {
    const LabeledPatchSet batch = random_patches(33, 2, 37);
    const CnnModel big = init_model(33, default_architecture(33), 38);
    CHECK_THROWS_AS(grad_check(big, batch, 1e-5), ArgumentError);
    const CnnModel small = init_model(9, tiny_arch(), 39);
    const LabeledPatchSet b9 = random_patches(9, 2, 40);
    CHECK_THROWS_AS(grad_check(small, b9, 1e-3), ArgumentError);
    CHECK_THROWS_AS(grad_check(small, b9, 1e-8), ArgumentError);
}

TEST_CASE("infer_map fills the ROI and zeroes the rest") {
    CnnModel m = init_model(9, tiny_arch(), 41);
    for (auto& layer : m.weights)
        std::fill(layer.begin(), layer.end(), 0.0);
    for (auto& layer : m.biases)
        std::fill(layer.begin(), layer.end(), 0.0);
    const GrayImage img(24, 24, 0.4);
    // icon mask: exclude the lower-left corner
    std::vector<std::uint8_t> included(24 * 24, 1);
    for (int y = 16; y < 24; ++y)
        for (int x = 0; x < 8; ++x)
            included[static_cast<std::size_t>(y) * 24 + x] = 0;
    const RoiMask roi(24, 24, included);
    const ConfidenceMap map = infer_map(m, img, roi, 1);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
            if (roi.at(x, y))
                CHECK(map.at(x, y) == 0.5);
            else
                CHECK(map.at(x, y) == 0.0);
        }
}

TEST_CASE("infer_map equals forward on extracted patches") {
    const CnnModel m = init_model(9, tiny_arch(), 43);
    Rng rng(44);
    std::vector<double> data(30 * 30);
    for (double& v : data)
        v = rng.next_double();
    const GrayImage img(30, 30, data);
    const RoiMask roi = RoiMask::full(30, 30);
    const ConfidenceMap map = infer_map(m, img, roi, 1);
    for (int i = 0; i < 100; ++i) {
        const int x = static_cast<int>(rng.next_below(30));
        const int y = static_cast<int>(rng.next_below(30));
        CHECK(map.at(x, y) == forward(m, extract_patch(img, x, y, 9)));
    }
}

TEST_CASE("threaded inference is bit-identical to sequential") {
    const CnnModel m = init_model(9, tiny_arch(), 45);
    Rng rng(46);
    std::vector<double> data(40 * 25);
    for (double& v : data)
        v = rng.next_double();
    const GrayImage img(40, 25, data);
    const ConfidenceMap seq = infer_map(m, img, RoiMask::full(40, 25), 1);
    const ConfidenceMap par = infer_map(m, img, RoiMask::full(40, 25), 3);
    CHECK(seq.values == par.values);
}

TEST_CASE("split_half_cv never lets a model see its own fold") {
    Rng rng(47);
    std::vector<CvEntry> dataset;
    for (int i = 0; i < 4; ++i) {
        std::vector<double> data(30 * 30);
        for (double& v : data)
            v = rng.next_double();
        std::vector<std::uint8_t> vessel(30 * 30);
        for (auto& b : vessel)
            b = rng.next_below(2) ? 1 : 0;
        dataset.push_back(CvEntry{"img" + std::to_string(i), GrayImage(30, 30, data),
                                  BinaryMask(30, 30, vessel, RoiMask::full(30, 30))});
    }
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 10;
    SplitHalfOptions opt;
    opt.patch_side = 9;
    opt.arch = tiny_arch();
    opt.patches_per_class = 40;
    const SplitHalfResult res = split_half_cv(dataset, cfg, opt);

    CHECK(res.maps.size() == 4);
    CHECK(res.fold_a_ids == std::vector<std::string>{"img0", "img1"});
    CHECK(res.fold_b_ids == std::vector<std::string>{"img2", "img3"});
    for (const std::string& id : res.fold_a_ids)
        CHECK(std::find(res.fold_b_ids.begin(), res.fold_b_ids.end(), id) ==
              res.fold_b_ids.end());
    CHECK(res.model_a.meta.at("fold") == "A");
    CHECK(res.model_b.meta.at("fold") == "B");

    // fold A images were segmented by model B and vice versa
    const ConfidenceMap want0 = infer_map(res.model_b, dataset[0].image, dataset[0].gt.roi(), 1);
    CHECK(res.maps[0].values == want0.values);
    const ConfidenceMap want3 = infer_map(res.model_a, dataset[3].image, dataset[3].gt.roi(), 1);
    CHECK(res.maps[3].values == want3.values);

    CHECK_THROWS_AS(split_half_cv({dataset[0]}, cfg, opt), ArgumentError);
}

TEST_CASE("model files round trip bit-exactly") {
    const CnnModel m = init_model(9, tiny_arch(), 51);
    const fs::path path = temp_dir() / "model.onet";
    CnnModel tagged = m;
    tagged.meta["preset"] = "zeiss3mm245";
    tagged.meta["fov_mm"] = "3";
    save_model(tagged, path.string());
    const CnnModel back = load_model(path.string());
    CHECK(back.patch_side == 9);
    CHECK(back.meta.at("preset") == "zeiss3mm245");
    CHECK(back.seed == 51);
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
        CHECK(back.weights[li] == m.weights[li]);
        CHECK(back.biases[li] == m.biases[li]);
    }
    Rng rng(52);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> patch(81);
        for (double& v : patch)
            v = rng.next_double();
        CHECK(forward(back, patch) == forward(m, patch));
    }
}

TEST_CASE("model loader rejects damaged files") {
    const CnnModel m = init_model(9, tiny_arch(), 53);
    const fs::path good = temp_dir() / "good.onet";
    save_model(m, good.string());

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    auto spit = [](const fs::path& p, const std::string& bytes) {
        std::ofstream out(p, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    };
    const std::string blob = slurp(good);

    // corrupted magic
    std::string bad_magic = blob;
    bad_magic[0] = 'X';
    spit(temp_dir() / "bad_magic.onet", bad_magic);
    CHECK_THROWS_AS(load_model((temp_dir() / "bad_magic.onet").string()), FormatError);

    // truncated payload
    spit(temp_dir() / "short.onet", blob.substr(0, blob.size() - 64));
    CHECK_THROWS_AS(load_model((temp_dir() / "short.onet").string()), FormatError);

    // flipped weight byte fails the checksum
    std::string corrupt = blob;
    corrupt[blob.size() - 100] ^= 0x40;
    spit(temp_dir() / "corrupt.onet", corrupt);
    CHECK_THROWS_AS(load_model((temp_dir() / "corrupt.onet").string()), FormatError);

    // header claiming a different patch side no longer chains
    const std::string marker = "patch_side=9";
    std::string resized = blob;
    resized.replace(resized.find(marker), marker.size(), "patch_side=7");
    spit(temp_dir() / "resized.onet", resized);
    try {
        load_model((temp_dir() / "resized.onet").string());
        FAIL("expected a shape error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("shape") != std::string::npos);
    }
}

TEST_CASE("architecture descriptors round trip") {
    const auto layers = default_architecture(33);
    const std::string s = arch_to_string(layers);
    CHECK(s == "conv:5x5x1x16|relu|pool|conv:5x5x16x32|relu|pool|fc:800x64|relu|fc:64x2|softmax");
    const auto back = arch_from_string(s);
    REQUIRE(back.size() == layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i)
        CHECK(back[i].kind == layers[i].kind);
    CHECK_THROWS_AS(arch_from_string("conv:5x5"), FormatError);
    CHECK_THROWS_AS(arch_from_string("unknown"), FormatError);
}
