#include "octa/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "octa/metrics.hpp"
#include "octa/stats.hpp"
#include "octa/synth.hpp"

namespace fs = std::filesystem;

namespace octa::cli {

double RunConfig::scale_mm_per_px() const {
    return pixel_scale(fov_mm, samples);
}

void apply_preset(RunConfig& cfg, const std::string& preset) {
    if (preset == "prototype2mm300") {
        cfg.fov_mm = 2.0;
        cfg.samples = 300;
    } else if (preset == "optovue3mm304") {
        cfg.fov_mm = 3.0;
        cfg.samples = 304;
    } else if (preset == "zeiss3mm245") {
        cfg.fov_mm = 3.0;
        cfg.samples = 245;
    } else if (preset != "custom") {
        throw ArgumentError("unknown preset '" + preset + "'");
    }
    cfg.preset = preset;
}

namespace {

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw FormatError("config: bad value for " + key + ": '" + v + "'");
    }
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int d = std::stoi(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw FormatError("config: bad value for " + key + ": '" + v + "'");
    }
}

std::string fmtg(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

} // namespace

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line[0] == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config: line " + std::to_string(lineno) + " is not key=value");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }

    RunConfig cfg;
    if (auto it = kv.find("preset"); it != kv.end()) {
        apply_preset(cfg, it->second);
        kv.erase(it);
    }
    const bool custom = cfg.preset == "custom";
    bool saw_fov = false, saw_samples = false;
    for (const auto& [key, val] : kv) {
        if (key == "fov_mm") {
            cfg.fov_mm = parse_double(key, val);
            saw_fov = true;
        } else if (key == "samples") {
            cfg.samples = parse_int(key, val);
            saw_samples = true;
        } else if (key == "notch_band_halfwidth") {
            cfg.notch.band_halfwidth = parse_int(key, val);
        } else if (key == "notch_min_stripe_freq") {
            cfg.notch.min_stripe_freq = parse_int(key, val);
        } else if (key == "notch_attenuation") {
            cfg.notch.attenuation = parse_double(key, val);
        } else if (key == "clahe_tiles_x") {
            cfg.clahe_params.tiles_x = parse_int(key, val);
        } else if (key == "clahe_tiles_y") {
            cfg.clahe_params.tiles_y = parse_int(key, val);
        } else if (key == "clahe_clip") {
            cfg.clahe_params.clip_limit = parse_double(key, val);
        } else if (key == "gamma") {
            cfg.gamma = parse_double(key, val);
        } else if (key == "diameter_step_deg") {
            cfg.diameter_step_deg = parse_double(key, val);
        } else if (key == "learning_rate") {
            cfg.train.learning_rate = parse_double(key, val);
        } else if (key == "momentum") {
            cfg.train.momentum = parse_double(key, val);
        } else if (key == "batch_size") {
            cfg.train.batch_size = parse_int(key, val);
        } else if (key == "epochs") {
            cfg.train.epochs = parse_int(key, val);
        } else if (key == "seed") {
            cfg.train.seed = std::stoull(val);
        } else if (key == "patches_per_class") {
            cfg.patches_per_class = parse_int(key, val);
        } else if (key == "patch_side") {
            cfg.patch_side = parse_int(key, val);
        } else if (key == "threads") {
            cfg.threads = parse_int(key, val);
        } else if (key == "out_dir") {
            cfg.out_dir = val;
        } else {
            throw FormatError("config: unknown key '" + key + "'");
        }
    }
    if (custom && (!saw_fov || !saw_samples))
        throw FormatError("config: preset=custom requires fov_mm and samples");
    return cfg;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open manifest '" + path + "'");
    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        if (p == "-" || p.empty() || fs::path(p).is_absolute())
            return p;
        return (base / p).string();
    };
    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line[0] == '#')
            continue;
        std::vector<std::string> fields;
        std::stringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ','))
            fields.push_back(f);
        if (fields.size() != 4)
            throw FormatError("manifest: line " + std::to_string(lineno) +
                              ": expected eye_id,cohort,image_path,manual_mask_path");
        entries.push_back({fields[0], fields[1], resolve(fields[2]), resolve(fields[3])});
    }
    if (entries.empty())
        throw FormatError("manifest '" + path + "' lists no entries");
    return entries;
}

void save_ppm(const std::string& path, int width, int height, const std::vector<Rgb>& pixels) {
    if (pixels.size() != static_cast<std::size_t>(width) * height)
        throw ArgumentError("save_ppm: size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write '" + path + "'");
    out << "P6\n" << width << " " << height << "\n255\n";
    for (const Rgb& p : pixels) {
        out.put(static_cast<char>(p.r));
        out.put(static_cast<char>(p.g));
        out.put(static_cast<char>(p.b));
    }
    if (!out)
        throw IoError("failed while writing '" + path + "'");
}

std::vector<Rgb> render_overlay(const GrayImage& base, const RoiMask& roi,
                                const FazMetrics& metrics) {
    const int w = base.width();
    const int h = base.height();
    std::vector<Rgb> px(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            Rgb& p = px[static_cast<std::size_t>(y) * w + x];
            if (!roi.at(x, y)) {
                p = {255, 255, 255};
            } else {
                const auto g = static_cast<std::uint8_t>(std::lround(base.at(x, y) * 255.0));
                p = {g, g, g};
            }
        }
    }
    auto put = [&](int x, int y, Rgb c) {
        if (x >= 0 && x < w && y >= 0 && y < h)
            px[static_cast<std::size_t>(y) * w + x] = c;
    };
    auto chord = [&](double theta_deg, double length_px, Rgb c) {
        const double rad = theta_deg * 0.017453292519943295;
        const double dx = std::cos(rad);
        const double dy = std::sin(rad);
        for (double t = -length_px / 2.0; t <= length_px / 2.0; t += 0.5)
            put(static_cast<int>(std::lround(metrics.centroid_x + t * dx)),
                static_cast<int>(std::lround(metrics.centroid_y + t * dy)), c);
    };
    const double scale = base.scale_mm_per_px() ? *base.scale_mm_per_px() : 1.0;
    chord(metrics.theta_max_deg, metrics.d_max_mm / scale, {0, 255, 0});
    chord(metrics.theta_min_deg, metrics.d_min_mm / scale, {255, 0, 0});
    for (const auto& [bx, by] : metrics.perimeter)
        put(bx, by, {255, 255, 0});
    return px;
}

FazMetrics quantify_two_path(const ConfidenceMap& map, double gamma, double scale_mm_per_px,
                             double step_deg) {
    const BinaryMask metrics_mask = threshold_map(map, otsu(map).threshold);
    FazMetrics m = quantify(metrics_mask, scale_mm_per_px, step_deg);

    const ConfidenceMap density_map = gamma_correct(map, gamma);
    BinaryMask density_mask = threshold_map(density_map, otsu(density_map).threshold);
    const Region faz = fill_holes(largest_nonvessel_component(metrics_mask));
    density_mask = faz_cleanup(density_mask, faz.pixels);
    m.vessel_density = vessel_density(density_mask);
    return m;
}

namespace {

RoiMask roi_for_image(const std::string& image_path, int width, int height) {
    const std::string roi_path = image_path + ".roi.pgm";
    if (fs::exists(roi_path)) {
        RoiMask roi = load_roi(roi_path);
        if (roi.width() != width || roi.height() != height)
            throw FormatError("roi sidecar '" + roi_path + "' dimensions mismatch");
        return roi;
    }
    return RoiMask::full(width, height);
}

// Refuses mixed fields of view: every sidecar that declares fov/device must
// agree with the config preset.
void check_fov(const RunConfig& cfg, const ManifestEntry& e) {
    const std::string meta_path = sidecar_path(e.image_path);
    if (!fs::exists(meta_path))
        return;
    const Metadata meta = load_metadata(meta_path);
    if (auto it = meta.find("fov_mm"); it != meta.end()) {
        if (std::fabs(parse_double("fov_mm", it->second) - cfg.fov_mm) > 1e-9)
            throw ArgumentError("eye '" + e.eye_id + "': image fov_mm " + it->second +
                                " does not match preset " + cfg.preset +
                                " (a training set is needed for each field of view)");
    }
    if (auto it = meta.find("device"); it != meta.end() && it->second != cfg.preset)
        throw ArgumentError("eye '" + e.eye_id + "': image device '" + it->second +
                            "' does not match preset " + cfg.preset);
}

GrayImage preprocess_image(const GrayImage& img, const NotchParams& notch,
                           const ClaheParams& cl) {
    return clahe(notch_filter(img, notch), cl);
}

Metadata preprocess_meta(const RunConfig& cfg) {
    Metadata m;
    m["preset"] = cfg.preset;
    m["fov_mm"] = fmtg(cfg.fov_mm);
    m["samples"] = std::to_string(cfg.samples);
    m["notch_band_halfwidth"] = std::to_string(cfg.notch.band_halfwidth);
    m["notch_min_stripe_freq"] = std::to_string(cfg.notch.min_stripe_freq);
    m["notch_attenuation"] = fmtg(cfg.notch.attenuation);
    m["clahe_tiles_x"] = std::to_string(cfg.clahe_params.tiles_x);
    m["clahe_tiles_y"] = std::to_string(cfg.clahe_params.tiles_y);
    m["clahe_clip"] = fmtg(cfg.clahe_params.clip_limit);
    return m;
}

NotchParams notch_from_meta(const Metadata& m, const NotchParams& fallback) {
    NotchParams p = fallback;
    if (auto it = m.find("notch_band_halfwidth"); it != m.end())
        p.band_halfwidth = parse_int(it->first, it->second);
    if (auto it = m.find("notch_min_stripe_freq"); it != m.end())
        p.min_stripe_freq = parse_int(it->first, it->second);
    if (auto it = m.find("notch_attenuation"); it != m.end())
        p.attenuation = parse_double(it->first, it->second);
    return p;
}

ClaheParams clahe_from_meta(const Metadata& m, const ClaheParams& fallback) {
    ClaheParams p = fallback;
    if (auto it = m.find("clahe_tiles_x"); it != m.end())
        p.tiles_x = parse_int(it->first, it->second);
    if (auto it = m.find("clahe_tiles_y"); it != m.end())
        p.tiles_y = parse_int(it->first, it->second);
    if (auto it = m.find("clahe_clip"); it != m.end())
        p.clip_limit = parse_double(it->first, it->second);
    return p;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write '" + path + "'");
    out << text;
}

std::vector<ManifestEntry> sorted_by_id(std::vector<ManifestEntry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.eye_id < b.eye_id; });
    return entries;
}

int cmd_train(const RunConfig& cfg, const std::string& manifest_path, std::ostream& out) {
    const std::vector<ManifestEntry> entries = load_manifest(manifest_path);
    if (entries.size() < 2)
        throw ArgumentError("train: manifest must list at least 2 eyes");

    std::vector<CvEntry> dataset;
    for (const ManifestEntry& e : entries) {
        check_fov(cfg, e);
        GrayImage img = load_gray(e.image_path);
        const BinaryMask raw_mask = load_mask(e.mask_path);
        if (raw_mask.width() != img.width() || raw_mask.height() != img.height())
            throw ArgumentError("eye '" + e.eye_id + "': mask dimensions do not match image");
        const RoiMask roi = roi_for_image(e.image_path, img.width(), img.height());
        dataset.push_back(CvEntry{
            e.eye_id, preprocess_image(img, cfg.notch, cfg.clahe_params),
            BinaryMask(raw_mask.width(), raw_mask.height(), raw_mask.vessel(), roi)});
    }

    SplitHalfOptions opt;
    opt.patch_side = cfg.patch_side;
    opt.patches_per_class = cfg.patches_per_class;
    opt.threads = cfg.threads;
    opt.model_meta = preprocess_meta(cfg);
    const SplitHalfResult res = split_half_cv(dataset, cfg.train, opt);

    fs::create_directories(cfg.out_dir);
    save_model(res.model_a, (fs::path(cfg.out_dir) / "model_a.onet").string());
    save_model(res.model_b, (fs::path(cfg.out_dir) / "model_b.onet").string());
    std::ostringstream loss;
    loss << "epoch,fold_a,fold_b\n";
    for (std::size_t i = 0; i < res.loss_a.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%zu,%.9f,%.9f\n", i, res.loss_a[i], res.loss_b[i]);
        loss << buf;
    }
    write_text((fs::path(cfg.out_dir) / "train_loss.csv").string(), loss.str());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const ConfidenceMap& map = res.maps[i];
        save_gray(GrayImage(map.width, map.height, map.values),
                  (fs::path(cfg.out_dir) / ("conf_" + dataset[i].id + ".pgm")).string(), 16);
    }
    out << "trained 2 fold models on " << dataset.size() << " eyes\n";
    return 0;
}

int cmd_segment(const RunConfig& cfg, const std::string& manifest_path,
                const std::string& model_path, std::ostream& out) {
    const CnnModel model = load_model(model_path);
    if (auto it = model.meta.find("fov_mm"); it != model.meta.end()) {
        if (std::fabs(parse_double("fov_mm", it->second) - cfg.fov_mm) > 1e-9)
            throw ArgumentError("model was trained at fov_mm " + it->second +
                                ", refusing preset " + cfg.preset +
                                " (a training set is needed for each field of view)");
    }
    const NotchParams notch = notch_from_meta(model.meta, cfg.notch);
    const ClaheParams cl = clahe_from_meta(model.meta, cfg.clahe_params);

    fs::create_directories(cfg.out_dir);
    int n = 0;
    for (const ManifestEntry& e : load_manifest(manifest_path)) {
        check_fov(cfg, e);
        GrayImage img = load_gray(e.image_path);
        const RoiMask roi = roi_for_image(e.image_path, img.width(), img.height());
        const ConfidenceMap map =
            infer_map(model, preprocess_image(img, notch, cl), roi, cfg.threads);
        save_gray(GrayImage(map.width, map.height, map.values),
                  (fs::path(cfg.out_dir) / ("conf_" + e.eye_id + ".pgm")).string(), 16);
        ++n;
    }
    out << "segmented " << n << " eyes\n";
    return 0;
}

int cmd_quantify(const RunConfig& cfg, const std::string& manifest_path,
                 const std::string& maps_dir, bool use_manual_masks, const std::string& rater,
                 std::ostream& out) {
    const std::vector<ManifestEntry> entries = sorted_by_id(load_manifest(manifest_path));
    fs::create_directories(cfg.out_dir);
    const double scale = cfg.scale_mm_per_px();

    std::vector<MetricRow> rows;
    std::ostringstream exceptions;
    int failures = 0;
    for (const ManifestEntry& e : entries) {
        try {
            GrayImage base = load_gray(e.image_path);
            const RoiMask roi = roi_for_image(e.image_path, base.width(), base.height());
            base = base.with_scale(scale);
            FazMetrics m;
            if (use_manual_masks) {
                const BinaryMask raw = load_mask(e.mask_path);
                if (raw.width() != base.width() || raw.height() != base.height())
                    throw ArgumentError("mask dimensions do not match image");
                const BinaryMask mask(raw.width(), raw.height(), raw.vessel(), roi);
                m = quantify(mask, scale, cfg.diameter_step_deg);
                save_mask(mask, (fs::path(cfg.out_dir) / ("mask_" + e.eye_id + ".pgm")).string());
            } else {
                const GrayImage conf =
                    load_gray((fs::path(maps_dir) / ("conf_" + e.eye_id + ".pgm")).string());
                if (conf.width() != base.width() || conf.height() != base.height())
                    throw ArgumentError("confidence map dimensions do not match image");
                const ConfidenceMap map{conf.width(), conf.height(), conf.data(), roi};
                m = quantify_two_path(map, cfg.gamma, scale, cfg.diameter_step_deg);
                const BinaryMask metrics_mask = threshold_map(map, otsu(map).threshold);
                save_mask(metrics_mask,
                          (fs::path(cfg.out_dir) / ("mask_" + e.eye_id + ".pgm")).string());
            }
            save_ppm((fs::path(cfg.out_dir) / ("overlay_" + e.eye_id + ".ppm")).string(),
                     base.width(), base.height(), render_overlay(base, roi, m));
            MetricRow row;
            row.id = e.eye_id;
            row.cohort = e.cohort;
            row.rater = rater;
            row.values = {m.area_mm2, m.d_min_mm, m.d_max_mm, m.eccentricity, m.vessel_density};
            rows.push_back(std::move(row));
        } catch (const Error& ex) {
            exceptions << e.eye_id << ": " << ex.what() << "\n";
            ++failures;
        }
    }
    write_text((fs::path(cfg.out_dir) / "metrics.csv").string(), rows_to_csv(rows));
    write_text((fs::path(cfg.out_dir) / "exceptions.log").string(), exceptions.str());
    out << "quantified " << rows.size() << " eyes, " << failures << " excluded\n";
    return failures > 0 ? 1 : 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& manifest_path,
                 const std::string& pred_dir, bool pooled, std::ostream& out) {
    const std::vector<ManifestEntry> entries = sorted_by_id(load_manifest(manifest_path));

    std::vector<std::string> unpaired;
    for (const ManifestEntry& e : entries)
        if (!fs::exists(fs::path(pred_dir) / ("mask_" + e.eye_id + ".pgm")))
            unpaired.push_back(e.eye_id);
    if (!unpaired.empty()) {
        std::string msg = "evaluate: no predicted mask for:";
        for (const std::string& id : unpaired)
            msg += " " + id;
        throw ArgumentError(msg);
    }

    std::vector<std::pair<BinaryMask, BinaryMask>> pairs;
    std::vector<std::string> labels;
    std::ostringstream csv;
    csv << "id,cohort,tp,fp,tn,fn,accuracy,sensitivity,specificity\n";
    for (const ManifestEntry& e : entries) {
        const GrayImage img = load_gray(e.image_path);
        const RoiMask roi = roi_for_image(e.image_path, img.width(), img.height());
        const BinaryMask pred_raw =
            load_mask((fs::path(pred_dir) / ("mask_" + e.eye_id + ".pgm")).string());
        const BinaryMask gt_raw = load_mask(e.mask_path);
        const BinaryMask pred(pred_raw.width(), pred_raw.height(), pred_raw.vessel(), roi);
        const BinaryMask gt(gt_raw.width(), gt_raw.height(), gt_raw.vessel(), roi);
        const ConfusionCounts c = confusion(pred, gt);
        const Rates r = rates(c);
        char buf[192];
        std::snprintf(buf, sizeof(buf), "%s,%s,%lld,%lld,%lld,%lld,%.6f,%.6f,%.6f\n",
                      e.eye_id.c_str(), e.cohort.c_str(), static_cast<long long>(c.tp),
                      static_cast<long long>(c.fp), static_cast<long long>(c.tn),
                      static_cast<long long>(c.fn), r.accuracy, r.sensitivity, r.specificity);
        csv << buf;
        pairs.emplace_back(pred, gt);
        labels.push_back(e.cohort);
    }
    const GroupRates groups = dataset_rates(pairs, labels);
    std::ostringstream gcsv;
    gcsv << "cohort,aggregation,accuracy,sensitivity,specificity\n";
    for (const auto& [cohort, r] : groups.mean_per_group) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,mean,%.6f,%.6f,%.6f\n", cohort.c_str(), r.accuracy,
                      r.sensitivity, r.specificity);
        gcsv << buf;
    }
    if (pooled) {
        for (const auto& [cohort, r] : groups.pooled_per_group) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s,pooled,%.6f,%.6f,%.6f\n", cohort.c_str(),
                          r.accuracy, r.sensitivity, r.specificity);
            gcsv << buf;
        }
    }
    fs::create_directories(cfg.out_dir);
    write_text((fs::path(cfg.out_dir) / "agreement.csv").string(), csv.str());
    write_text((fs::path(cfg.out_dir) / "agreement_groups.csv").string(), gcsv.str());
    out << "evaluated " << entries.size() << " eyes\n";
    return 0;
}

int cmd_stats(const RunConfig& cfg, const std::vector<std::string>& csv_paths,
              std::ostream& out) {
    std::vector<MetricRow> rows;
    for (const std::string& path : csv_paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw IoError("cannot open metrics csv '" + path + "'");
        std::stringstream buf;
        buf << in.rdbuf();
        for (MetricRow& r : rows_from_csv(buf.str()))
            rows.push_back(std::move(r));
    }
    const CohortReport report = cohort_summary(rows);
    fs::create_directories(cfg.out_dir);
    write_text((fs::path(cfg.out_dir) / "report.txt").string(), render_report(report));
    write_text((fs::path(cfg.out_dir) / "table.txt").string(), render_table(report));
    out << render_table(report);
    return 0;
}

int cmd_synth(const RunConfig& cfg, int n_each, int size, std::ostream& out) {
    CohortOptions opt;
    opt.width = size;
    opt.height = size;
    opt.scale_mm_per_px = cfg.scale_mm_per_px();
    const std::vector<CohortEye> eyes =
        generate_cohort(healthy_distribution(), diabetic_distribution(), n_each,
                        cfg.train.seed, opt);

    fs::create_directories(cfg.out_dir);
    std::ostringstream manifest;
    for (const CohortEye& eye : eyes) {
        const std::string img_name = eye.id + ".pgm";
        const std::string mask_name = eye.id + "_truth.pgm";
        save_gray(eye.data.image, (fs::path(cfg.out_dir) / img_name).string(), 8);
        save_mask(eye.data.truth.mask, (fs::path(cfg.out_dir) / mask_name).string());
        Metadata meta;
        meta["eye_id"] = eye.id;
        meta["cohort"] = eye.cohort;
        meta["device"] = cfg.preset;
        meta["fov_mm"] = fmtg(cfg.fov_mm);
        save_metadata(meta, sidecar_path((fs::path(cfg.out_dir) / img_name).string()));
        manifest << eye.id << "," << eye.cohort << "," << img_name << "," << mask_name << "\n";
    }
    write_text((fs::path(cfg.out_dir) / "manifest.txt").string(), manifest.str());
    write_text((fs::path(cfg.out_dir) / "truth.csv").string(),
               rows_to_csv(cohort_truth_rows(eyes)));
    out << "generated " << eyes.size() << " synthetic eyes\n";
    return 0;
}

int cmd_report(const RunConfig& cfg, const std::string& manifest_path,
               const std::string& masks_dir, bool use_manual_masks, std::ostream& out) {
    const std::vector<ManifestEntry> entries = sorted_by_id(load_manifest(manifest_path));
    fs::create_directories(cfg.out_dir);
    const double scale = cfg.scale_mm_per_px();
    int failures = 0;
    for (const ManifestEntry& e : entries) {
        try {
            GrayImage base = load_gray(e.image_path).with_scale(scale);
            const RoiMask roi = roi_for_image(e.image_path, base.width(), base.height());
            const std::string mask_path =
                use_manual_masks ? e.mask_path
                                 : (fs::path(masks_dir) / ("mask_" + e.eye_id + ".pgm")).string();
            const BinaryMask raw = load_mask(mask_path);
            const BinaryMask mask(raw.width(), raw.height(), raw.vessel(), roi);
            const FazMetrics m = quantify(mask, scale, cfg.diameter_step_deg);
            save_ppm((fs::path(cfg.out_dir) / ("overlay_" + e.eye_id + ".ppm")).string(),
                     base.width(), base.height(), render_overlay(base, roi, m));
        } catch (const Error& ex) {
            out << e.eye_id << ": " << ex.what() << "\n";
            ++failures;
        }
    }
    out << "rendered " << (entries.size() - failures) << " overlays\n";
    return failures > 0 ? 1 : 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"batch OCT-A vessel segmentation and FAZ morphometry"};
    app.require_subcommand(1);

    std::string config_path, out_dir, preset, manifest, model_path, maps_dir = ".",
                            pred_dir = ".", masks_dir = ".", rater = "automated";
    std::vector<std::string> csv_paths;
    std::uint64_t seed = 0;
    bool have_seed = false, use_manual = false, pooled = false;
    int n_each = 10, synth_size = 160;

    app.add_option("--config", config_path, "key=value run configuration");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--preset", preset, "device preset");
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed");

    CLI::App* train = app.add_subcommand("train", "split-half training on a manifest");
    train->add_option("--manifest", manifest, "eye manifest")->required();

    CLI::App* segment = app.add_subcommand("segment", "apply a saved model");
    segment->add_option("--manifest", manifest, "eye manifest")->required();
    segment->add_option("--model", model_path, "model file")->required();

    CLI::App* quantify_cmd = app.add_subcommand("quantify", "FAZ morphometrics and density");
    quantify_cmd->add_option("--manifest", manifest, "eye manifest")->required();
    quantify_cmd->add_option("--maps", maps_dir, "directory holding conf_<eye>.pgm");
    quantify_cmd->add_flag("--use-manual-masks", use_manual, "quantify the manual masks");
    quantify_cmd->add_option("--rater", rater, "rater label for the CSV rows");

    CLI::App* evaluate = app.add_subcommand("evaluate", "agreement against manual masks");
    evaluate->add_option("--manifest", manifest, "eye manifest")->required();
    evaluate->add_option("--pred", pred_dir, "directory holding mask_<eye>.pgm");
    evaluate->add_flag("--pooled", pooled, "also report pooled-pixel rates");

    CLI::App* stats_cmd = app.add_subcommand("stats", "cohort report from metrics CSVs");
    stats_cmd->add_option("csv", csv_paths, "metrics CSV files")->required();

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic cohort");
    synth_cmd->add_option("--n-each", n_each, "eyes per cohort");
    synth_cmd->add_option("--size", synth_size, "image side in pixels");

    CLI::App* report_cmd = app.add_subcommand("report", "render annotated overlays");
    report_cmd->add_option("--manifest", manifest, "eye manifest")->required();
    report_cmd->add_option("--masks", masks_dir, "directory holding mask_<eye>.pgm");
    report_cmd->add_flag("--use-manual-masks", use_manual, "overlay the manual masks");

    std::vector<char*> argv;
    std::vector<std::string> argv_store;
    argv_store.push_back("octanet");
    for (const std::string& a : args)
        argv_store.push_back(a);
    for (std::string& a : argv_store)
        argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }
    have_seed = seed_opt->count() > 0;

    try {
        RunConfig cfg;
        if (!config_path.empty())
            cfg = parse_config_file(config_path);
        if (!preset.empty())
            apply_preset(cfg, preset);
        if (!out_dir.empty())
            cfg.out_dir = out_dir;
        if (have_seed)
            cfg.train.seed = seed;

        if (train->parsed())
            return cmd_train(cfg, manifest, out);
        if (segment->parsed())
            return cmd_segment(cfg, manifest, model_path, out);
        if (quantify_cmd->parsed())
            return cmd_quantify(cfg, manifest, maps_dir, use_manual, rater, out);
        if (evaluate->parsed())
            return cmd_evaluate(cfg, manifest, pred_dir, pooled, out);
        if (stats_cmd->parsed())
            return cmd_stats(cfg, csv_paths, out);
        if (synth_cmd->parsed())
            return cmd_synth(cfg, n_each, synth_size, out);
        if (report_cmd->parsed())
            return cmd_report(cfg, manifest, masks_dir, use_manual, out);
        err << "no subcommand\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace octa::cli
