#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "octa/cli.hpp"
#include "octa/stats.hpp"
#include "octa/synth.hpp"

using namespace octa;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "octa_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

int run_cli(const std::vector<std::string>& args, std::string* out_text = nullptr) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (out_text)
        *out_text = out.str() + err.str();
    return code;
}

// small, fast end-to-end configuration
std::string small_config(const fs::path& dir) {
    const fs::path cfg = dir / "run.cfg";
    spit(cfg, "preset=custom\n"
              "fov_mm=2.1\n"
              "samples=96\n"
              "patch_side=17\n"
              "patches_per_class=200\n"
              "epochs=2\n"
              "learning_rate=0.05\n"
              "momentum=0.9\n"
              "batch_size=16\n"
              "threads=2\n"
              "seed=77\n");
    return cfg.string();
}

// synthesizes a manifest of n eyes directly through the library
void make_corpus(const fs::path& dir, int n_each, std::uint64_t seed) {
    CohortOptions opt;
    opt.width = 96;
    opt.height = 96;
    opt.scale_mm_per_px = pixel_scale(2.1, 96);
    const auto eyes = generate_cohort(healthy_distribution(), diabetic_distribution(),
                                      n_each, seed, opt);
    std::ostringstream manifest;
    for (const CohortEye& e : eyes) {
        save_gray(e.data.image, (dir / (e.id + ".pgm")).string(), 8);
        save_mask(e.data.truth.mask, (dir / (e.id + "_truth.pgm")).string());
        Metadata meta{{"device", "custom"}, {"fov_mm", "2.1"}, {"eye_id", e.id},
                      {"cohort", e.cohort}};
        save_metadata(meta, sidecar_path((dir / (e.id + ".pgm")).string()));
        manifest << e.id << "," << e.cohort << "," << e.id << ".pgm," << e.id
                 << "_truth.pgm\n";
    }
    spit(dir / "manifest.txt", manifest.str());
}

} // namespace

TEST_CASE("config parsing applies presets and rejects unknown keys") {
    const fs::path dir = fresh_dir("config");
    spit(dir / "ok.cfg", "preset=optovue3mm304\ngamma=0.6\nseed=5\n");
    const cli::RunConfig cfg = cli::parse_config_file((dir / "ok.cfg").string());
    CHECK(cfg.fov_mm == 3.0);
    CHECK(cfg.samples == 304);
    CHECK(cfg.gamma == 0.6);
    CHECK(cfg.train.seed == 5);
    CHECK(cfg.scale_mm_per_px() == doctest::Approx(3.0 / 304));

    spit(dir / "bad.cfg", "presett=zeiss3mm245\n");
    CHECK_THROWS_AS(cli::parse_config_file((dir / "bad.cfg").string()), FormatError);

    spit(dir / "custom.cfg", "preset=custom\n");
    CHECK_THROWS_AS(cli::parse_config_file((dir / "custom.cfg").string()), FormatError);

    spit(dir / "custom2.cfg", "preset=custom\nfov_mm=6.0\nsamples=400\n");
    const cli::RunConfig c2 = cli::parse_config_file((dir / "custom2.cfg").string());
    CHECK(c2.fov_mm == 6.0);
    CHECK(c2.samples == 400);
}

TEST_CASE("manifest parsing resolves paths and validates shape") {
    const fs::path dir = fresh_dir("manifest");
    spit(dir / "m.txt", "# comment\neyeA,healthy,img/a.pgm,mask/a.pgm\n");
    const auto entries = cli::load_manifest((dir / "m.txt").string());
    REQUIRE(entries.size() == 1);
    CHECK(entries[0].eye_id == "eyeA");
    CHECK(entries[0].image_path == (dir / "img/a.pgm").string());

    spit(dir / "bad.txt", "only,three,fields\n");
    CHECK_THROWS_AS(cli::load_manifest((dir / "bad.txt").string()), FormatError);
    spit(dir / "empty.txt", "# nothing\n");
    CHECK_THROWS_AS(cli::load_manifest((dir / "empty.txt").string()), FormatError);
}

TEST_CASE("synth command writes a reusable corpus") {
    const fs::path dir = fresh_dir("synth");
    const std::string cfg = small_config(dir);
    const int code = run_cli({"--config", cfg, "--out", (dir / "corpus").string(), "synth",
                              "--n-each", "2", "--size", "96"});
    CHECK(code == 0);
    CHECK(fs::exists(dir / "corpus" / "manifest.txt"));
    CHECK(fs::exists(dir / "corpus" / "truth.csv"));
    const auto entries = cli::load_manifest((dir / "corpus" / "manifest.txt").string());
    CHECK(entries.size() == 4);
    const auto rows = rows_from_csv(slurp(dir / "corpus" / "truth.csv"));
    CHECK(rows.size() == 4);
    for (const auto& e : entries) {
        CHECK(fs::exists(e.image_path));
        CHECK(fs::exists(e.mask_path));
        CHECK(fs::exists(sidecar_path(e.image_path)));
    }
}

TEST_CASE("train, segment, quantify, evaluate and stats run end to end") {
    const fs::path dir = fresh_dir("pipeline");
    const std::string cfg = small_config(dir);
    make_corpus(dir, 2, 123);
    const std::string manifest = (dir / "manifest.txt").string();

    // train: two fold models, a loss curve, one confidence map per eye
    const fs::path train_out = dir / "train";
    CHECK(run_cli({"--config", cfg, "--out", train_out.string(), "train", "--manifest",
                   manifest}) == 0);
    CHECK(fs::exists(train_out / "model_a.onet"));
    CHECK(fs::exists(train_out / "model_b.onet"));
    CHECK(fs::exists(train_out / "train_loss.csv"));
    for (const char* id : {"H01", "H02", "D01", "D02"})
        CHECK(fs::exists(train_out / (std::string("conf_") + id + ".pgm")));

    // segment with a saved model reproduces confidence maps
    const fs::path seg_out = dir / "seg";
    CHECK(run_cli({"--config", cfg, "--out", seg_out.string(), "segment", "--manifest",
                   manifest, "--model", (train_out / "model_a.onet").string()}) == 0);
    CHECK(fs::exists(seg_out / "conf_H01.pgm"));

    // quantify the automated maps
    const fs::path q_auto = dir / "qa";
    CHECK(run_cli({"--config", cfg, "--out", q_auto.string(), "quantify", "--manifest",
                   manifest, "--maps", train_out.string(), "--rater", "automated"}) == 0);
    CHECK(fs::exists(q_auto / "metrics.csv"));
    CHECK(fs::exists(q_auto / "overlay_H01.ppm"));
    CHECK(fs::exists(q_auto / "mask_H01.pgm"));
    const auto auto_rows = rows_from_csv(slurp(q_auto / "metrics.csv"));
    CHECK(auto_rows.size() == 4);

    // overlay dimensions match the input image
    const std::string ppm = slurp(q_auto / "overlay_H01.ppm");
    CHECK(ppm.rfind("P6\n96 96\n255\n", 0) == 0);

    // quantify the manual masks as the second rater
    const fs::path q_man = dir / "qm";
    CHECK(run_cli({"--config", cfg, "--out", q_man.string(), "quantify", "--manifest",
                   manifest, "--use-manual-masks", "--rater", "manual"}) == 0);
    const auto man_rows = rows_from_csv(slurp(q_man / "metrics.csv"));
    CHECK(man_rows.size() == 4);

    // evaluate the automated masks against the manual truth
    const fs::path ev = dir / "eval";
    CHECK(run_cli({"--config", cfg, "--out", ev.string(), "evaluate", "--manifest", manifest,
                   "--pred", q_auto.string(), "--pooled"}) == 0);
    const std::string agreement = slurp(ev / "agreement.csv");
    CHECK(agreement.find("H01,healthy,") != std::string::npos);
    const std::string groups = slurp(ev / "agreement_groups.csv");
    CHECK(groups.find("healthy,mean,") != std::string::npos);
    CHECK(groups.find("healthy,pooled,") != std::string::npos);

    // stats over the merged manual + automated rows
    const fs::path st = dir / "stats";
    CHECK(run_cli({"--config", cfg, "--out", st.string(), "stats",
                   (q_auto / "metrics.csv").string(), (q_man / "metrics.csv").string()}) == 0);
    const std::string report = slurp(st / "report.txt");
    CHECK(report.rfind("octanet-report v1\n", 0) == 0);
    CHECK(report.find("[welch automated diabetic vs healthy]") != std::string::npos);
    CHECK(fs::exists(st / "table.txt"));

    // report command renders overlays from saved masks
    const fs::path rp = dir / "report";
    CHECK(run_cli({"--config", cfg, "--out", rp.string(), "report", "--manifest", manifest,
                   "--masks", q_auto.string()}) == 0);
    CHECK(fs::exists(rp / "overlay_D01.ppm"));
}

TEST_CASE("identical seeds give byte-identical pipeline outputs") {
    const fs::path dir = fresh_dir("determinism");
    const std::string cfg = small_config(dir);
    make_corpus(dir, 2, 321);
    const std::string manifest = (dir / "manifest.txt").string();

    for (const char* name : {"a", "b"})
        CHECK(run_cli({"--config", cfg, "--out", (dir / name).string(), "train", "--manifest",
                       manifest}) == 0);
    for (const char* f :
         {"model_a.onet", "model_b.onet", "train_loss.csv", "conf_H01.pgm", "conf_D02.pgm"})
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));

    // per-eye exclusions (exit 1) are allowed; the trees must still match
    for (const char* name : {"qa1", "qa2"})
        CHECK(run_cli({"--config", cfg, "--out", (dir / name).string(), "quantify",
                       "--manifest", manifest, "--maps", (dir / "a").string()}) <= 1);
    std::vector<fs::path> rel;
    for (const auto& entry : fs::recursive_directory_iterator(dir / "qa1"))
        if (entry.is_regular_file())
            rel.push_back(fs::relative(entry.path(), dir / "qa1"));
    CHECK(!rel.empty());
    for (const fs::path& r : rel)
        CHECK(slurp(dir / "qa1" / r) == slurp(dir / "qa2" / r));
}

TEST_CASE("diabetic overlays carry a longer maximum-diameter chord") {
    const fs::path dir = fresh_dir("overlay_chord");
    const std::string cfg = small_config(dir);
    make_corpus(dir, 2, 77);
    const fs::path q = dir / "q";
    CHECK(run_cli({"--config", cfg, "--out", q.string(), "quantify", "--manifest",
                   (dir / "manifest.txt").string(), "--use-manual-masks", "--rater",
                   "manual"}) == 0);

    auto green_pixels = [&](const std::string& id) {
        const std::string ppm = slurp(q / ("overlay_" + id + ".ppm"));
        const std::size_t header = ppm.find("255\n") + 4;
        int green = 0;
        for (std::size_t i = header; i + 2 < ppm.size(); i += 3)
            if (static_cast<unsigned char>(ppm[i]) == 0 &&
                static_cast<unsigned char>(ppm[i + 1]) == 255 &&
                static_cast<unsigned char>(ppm[i + 2]) == 0)
                ++green;
        return green;
    };
    // the diabetic FAZ preset is larger: its green chord covers more pixels
    const int healthy = std::min(green_pixels("H01"), green_pixels("H02"));
    const int diabetic = std::max(green_pixels("D01"), green_pixels("D02"));
    CHECK(diabetic > healthy);
}

TEST_CASE("mixed fields of view are refused") {
    const fs::path dir = fresh_dir("mixed_fov");
    const std::string cfg = small_config(dir);
    make_corpus(dir, 2, 55);
    // one eye claims a different device
    save_metadata(Metadata{{"device", "prototype2mm300"}, {"fov_mm", "2"}},
                  sidecar_path((dir / "H01.pgm").string()));
    std::string text;
    const int code = run_cli({"--config", cfg, "--out", (dir / "out").string(), "train",
                              "--manifest", (dir / "manifest.txt").string()},
                             &text);
    CHECK(code == 2);
    CHECK(text.find("field of view") != std::string::npos);
}

TEST_CASE("a model refuses inference at the wrong field of view") {
    const fs::path dir = fresh_dir("model_fov");
    const std::string cfg = small_config(dir);
    make_corpus(dir, 2, 66);
    const std::string manifest = (dir / "manifest.txt").string();
    CHECK(run_cli({"--config", cfg, "--out", (dir / "train").string(), "train", "--manifest",
                   manifest}) == 0);
    std::string text;
    const int code = run_cli({"--config", cfg, "--preset", "prototype2mm300", "--out",
                              (dir / "seg").string(), "segment", "--manifest", manifest,
                              "--model", (dir / "train" / "model_a.onet").string()},
                             &text);
    CHECK(code == 2);
    CHECK(text.find("field of view") != std::string::npos);
}

TEST_CASE("per-eye failures degrade to the exceptions log with exit code 1") {
    const fs::path dir = fresh_dir("partial");
    const std::string cfg = small_config(dir);
    make_corpus(dir, 2, 88);
    // replace one confidence map with a constant map: Otsu degenerates
    const fs::path maps = dir / "maps";
    fs::create_directories(maps);
    for (const char* id : {"H01", "H02", "D01", "D02"})
        save_gray(GrayImage(96, 96, 0.5), (maps / (std::string("conf_") + id + ".pgm")).string(),
                  16);
    // give three eyes real maps so the run partially succeeds
    CHECK(run_cli({"--config", cfg, "--out", (dir / "train").string(), "train", "--manifest",
                   (dir / "manifest.txt").string()}) == 0);
    for (const char* id : {"H02", "D01", "D02"})
        fs::copy_file(dir / "train" / (std::string("conf_") + id + ".pgm"),
                      maps / (std::string("conf_") + id + ".pgm"),
                      fs::copy_options::overwrite_existing);

    std::string text;
    const int code = run_cli({"--config", cfg, "--out", (dir / "q").string(), "quantify",
                              "--manifest", (dir / "manifest.txt").string(), "--maps",
                              maps.string()},
                             &text);
    CHECK(code == 1);
    const std::string log = slurp(dir / "q" / "exceptions.log");
    CHECK(log.find("H01") != std::string::npos);
    const auto rows = rows_from_csv(slurp(dir / "q" / "metrics.csv"));
    CHECK(rows.size() == 3);
}

TEST_CASE("evaluate lists unpaired eye ids") {
    const fs::path dir = fresh_dir("unpaired");
    const std::string cfg = small_config(dir);
    make_corpus(dir, 2, 99);
    std::string text;
    const int code = run_cli({"--config", cfg, "--out", (dir / "ev").string(), "evaluate",
                              "--manifest", (dir / "manifest.txt").string(), "--pred",
                              (dir / "nowhere").string()},
                             &text);
    CHECK(code == 2);
    CHECK(text.find("H01") != std::string::npos);
    CHECK(text.find("D02") != std::string::npos);
}

TEST_CASE("unknown flags and missing subcommands exit with code 2") {
    std::string text;
    CHECK(run_cli({"frobnicate"}, &text) == 2);
    CHECK(run_cli({"--config"}, &text) == 2);
}
