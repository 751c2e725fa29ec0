#include "octa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "octa/morphometry.hpp"
#include "octa/rng.hpp"

namespace octa {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
constexpr double kRingPx = 2.5; // terminal capillary ring drawn around the FAZ

} // namespace

double ellipse_norm_radius(const EllipseSpec& e, double x, double y) {
    const double c = std::cos(e.rot_deg * kDegToRad);
    const double s = std::sin(e.rot_deg * kDegToRad);
    const double dx = x - e.cx;
    const double dy = y - e.cy;
    const double xr = dx * c + dy * s;
    const double yr = -dx * s + dy * c;
    return std::sqrt((xr / e.a) * (xr / e.a) + (yr / e.b) * (yr / e.b));
}

namespace {

// Mutable canvas tracking the >= 0.5 vessel pixel count incrementally.
struct Canvas {
    int w, h;
    std::vector<double> raster;
    std::vector<double> norm_radius; // precomputed rq per pixel
    std::size_t vessel_pixels = 0;

    Canvas(int w, int h, const EllipseSpec& faz)
        : w(w), h(h), raster(static_cast<std::size_t>(w) * h, 0.0),
          norm_radius(static_cast<std::size_t>(w) * h, 0.0) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                norm_radius[static_cast<std::size_t>(y) * w + x] =
                    ellipse_norm_radius(faz, x, y);
    }

    double fraction() const {
        return static_cast<double>(vessel_pixels) / (static_cast<double>(w) * h);
    }

    void paint(std::size_t idx, double value) {
        if (norm_radius[idx] < 1.0)
            return; // FAZ interior stays clean
        double& r = raster[idx];
        const bool was = r >= 0.5;
        if (value > r)
            r = value;
        if (!was && r >= 0.5)
            ++vessel_pixels;
    }

    // anti-aliased disk, radius in px
    void stamp(double cx, double cy, double radius) {
        const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1.0)));
        const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + radius + 1.0)));
        const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1.0)));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + radius + 1.0)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double d = std::hypot(x - cx, y - cy);
                const double v = std::clamp(radius + 0.5 - d, 0.0, 1.0);
                if (v > 0.0)
                    paint(static_cast<std::size_t>(y) * w + x, v);
            }
        }
    }
};

struct Walker {
    double x, y;
    double heading; // radians
    double radius;  // stamp radius
    int life;
    int depth; // branch generation
};

class Grower {
public:
    Grower(Canvas& canvas, const SynthParams& p, Rng& rng)
        : canvas_(canvas), p_(p), rng_(rng) {
        // keep walker paint clear of the FAZ interior
        kill_norm_ = 1.0 + (kRingPx + p.vessels.thickness_max / 2.0 + 1.0) / p_.faz.b;
    }

    void spawn_random() {
        for (int tries = 0; tries < 64; ++tries) {
            const double x = rng_.uniform(0.0, canvas_.w - 1.0);
            const double y = rng_.uniform(0.0, canvas_.h - 1.0);
            if (ellipse_norm_radius(p_.faz, x, y) <= kill_norm_)
                continue;
            spawn_at(x, y, rng_.uniform(0.0, 2.0 * kPi));
            return;
        }
    }

    // jittered grid of tree seeds keeps the coverage spatially even
    void spawn_grid(double spacing) {
        for (double gy = spacing / 2.0; gy < canvas_.h; gy += spacing) {
            for (double gx = spacing / 2.0; gx < canvas_.w; gx += spacing) {
                const double x = gx + rng_.uniform(-spacing / 3.0, spacing / 3.0);
                const double y = gy + rng_.uniform(-spacing / 3.0, spacing / 3.0);
                if (x < 0.0 || x > canvas_.w - 1.0 || y < 0.0 || y > canvas_.h - 1.0 ||
                    ellipse_norm_radius(p_.faz, x, y) <= kill_norm_)
                    continue;
                spawn_at(x, y, rng_.uniform(0.0, 2.0 * kPi));
            }
        }
    }

    // straight double-ended stroke splitting a background blob; runs until
    // shortly past the blob so both ends fuse with surrounding vessel.
    // Oriented roughly radially: blobs hug the FAZ ring, so radial cuts
    // split them fastest.
    void draw_wall(const Region& blob, double x, double y) {
        const double radial = std::atan2(y - p_.faz.cy, x - p_.faz.cx);
        const double heading = radial + rng_.uniform(-0.5, 0.5);
        const double radius = p_.vessels.thickness_min / 2.0;
        for (const double sign : {1.0, -1.0}) {
            double px = x, py = y;
            const double dx = sign * std::cos(heading);
            const double dy = sign * std::sin(heading);
            int past_exit = 0;
            for (int step = 0; step < canvas_.w + canvas_.h; ++step) {
                if (px < -1.0 || px > canvas_.w || py < -1.0 || py > canvas_.h)
                    break;
                // walls may fuse with the ring; paint() still shields the interior
                if (ellipse_norm_radius(p_.faz, px, py) < 1.0)
                    break;
                canvas_.stamp(px, py, radius);
                if (!blob.contains(static_cast<int>(std::lround(px)),
                                   static_cast<int>(std::lround(py))) &&
                    ++past_exit > 3)
                    break;
                px += dx;
                py += dy;
            }
        }
    }

    void spawn_at(double x, double y, double heading) {
        Walker wk;
        wk.x = x;
        wk.y = y;
        wk.heading = heading;
        wk.radius = rng_.uniform(p_.vessels.thickness_min, p_.vessels.thickness_max) / 2.0;
        wk.life = 2 * std::max(canvas_.w, canvas_.h);
        wk.depth = 0;
        active_.push_back(wk);
    }

    // Runs every active walker until the stack drains or frac is reached.
    // Returns the number of steps spent.
    long run(double stop_fraction, long step_budget, bool allow_branch) {
        long steps = 0;
        while (!active_.empty() && steps < step_budget) {
            if (canvas_.fraction() >= stop_fraction) {
                active_.clear();
                break;
            }
            Walker wk = active_.back();
            active_.pop_back();
            while (wk.life-- > 0) {
                canvas_.stamp(wk.x, wk.y, wk.radius);
                ++steps;
                wk.x += std::cos(wk.heading);
                wk.y += std::sin(wk.heading);
                wk.heading += rng_.uniform(-1.0, 1.0) * p_.vessels.tortuosity_deg * kDegToRad;
                if (wk.x < -2.0 || wk.x > canvas_.w + 1.0 || wk.y < -2.0 ||
                    wk.y > canvas_.h + 1.0)
                    break;
                if (ellipse_norm_radius(p_.faz, wk.x, wk.y) <= kill_norm_)
                    break;
                if (allow_branch && wk.depth < 6 &&
                    rng_.next_double() < p_.vessels.branch_prob) {
                    Walker child = wk;
                    child.depth = wk.depth + 1;
                    child.heading +=
                        (rng_.next_double() < 0.5 ? 1.0 : -1.0) * rng_.uniform(0.4, 1.2);
                    child.radius = std::max(p_.vessels.thickness_min / 2.0,
                                            wk.radius * rng_.uniform(0.75, 1.0));
                    child.life = wk.life;
                    active_.push_back(child);
                }
                if (canvas_.fraction() >= stop_fraction) {
                    active_.clear();
                    return steps;
                }
            }
        }
        return steps;
    }

    std::size_t active_count() const { return active_.size(); }

private:
    Canvas& canvas_;
    const SynthParams& p_;
    Rng& rng_;
    double kill_norm_;
    std::vector<Walker> active_;
};

BinaryMask truth_from_canvas(const Canvas& canvas) {
    std::vector<std::uint8_t> vessel(canvas.raster.size());
    for (std::size_t i = 0; i < vessel.size(); ++i)
        vessel[i] = canvas.raster[i] >= 0.5 ? 1 : 0;
    return BinaryMask(canvas.w, canvas.h, std::move(vessel),
                      RoiMask::full(canvas.w, canvas.h));
}

void validate_params(const SynthParams& p) {
    if (p.width < 16 || p.height < 16)
        throw ArgumentError("generate: image too small");
    if (!(p.faz.a >= p.faz.b && p.faz.b >= 2.0))
        throw ArgumentError("generate: ellipse semi-axes must satisfy a >= b >= 2");
    if (!(p.target_fraction > 0.0 && p.target_fraction < 1.0))
        throw ArgumentError("generate: target fraction must be in (0,1)");
    if (!(p.vessels.thickness_min >= 1.0 && p.vessels.thickness_max >= p.vessels.thickness_min))
        throw ArgumentError("generate: vessel thickness range invalid");
    if (!(p.scale_mm_per_px > 0.0))
        throw ArgumentError("generate: scale must be positive");
    const double reach = std::max(p.faz.a, p.faz.b) + kRingPx + p.vessels.thickness_max + 2.0;
    if (p.faz.cx - reach < 0.0 || p.faz.cx + reach > p.width - 1.0 || p.faz.cy - reach < 0.0 ||
        p.faz.cy + reach > p.height - 1.0)
        throw ArgumentError("generate: FAZ ellipse does not fit inside the image");
}

} // namespace

SynthResult generate(const SynthParams& p) {
    validate_params(p);
    Rng rng(p.seed);
    Canvas canvas(p.width, p.height, p.faz);

    // sealed capillary ring just outside the FAZ boundary
    const double ring_norm = kRingPx / p.faz.b;
    for (std::size_t i = 0; i < canvas.raster.size(); ++i) {
        const double rq = canvas.norm_radius[i];
        if (rq >= 1.0 && rq < 1.0 + ring_norm) {
            canvas.raster[i] = 1.0;
            ++canvas.vessel_pixels;
        }
    }

    Grower grower(canvas, p, rng);
    const double target = p.target_fraction;
    const long step_budget = 60L * p.width * p.height;
    long spent = 0;

    // phase 1: grow branching trees, leaving headroom for sealing walls
    const double grow_to = std::max(0.78 * target, target - 0.05);
    grower.spawn_grid(18.0);
    for (int i = 0; i < p.vessels.n_seeds; ++i)
        grower.spawn_random();
    spent += grower.run(grow_to, step_budget, true);
    int spawns = 0;
    while (canvas.fraction() < grow_to) {
        if (++spawns > 3000 || spent > step_budget)
            throw GenerationFailureError("generate: could not reach target vessel fraction");
        grower.spawn_random();
        spent += grower.run(grow_to, step_budget - spent, true);
    }

    // phase 2: wall off any background blob that rivals the FAZ
    for (int round = 0;; ++round) {
        if (round > 800 || canvas.fraction() > target + 0.018)
            throw GenerationFailureError("generate: could not isolate the FAZ component");
        const BinaryMask truth = truth_from_canvas(canvas);
        const Region largest = largest_nonvessel_component(truth);
        const int fx = static_cast<int>(std::lround(p.faz.cx));
        const int fy = static_cast<int>(std::lround(p.faz.cy));
        if (largest.contains(fx, fy))
            break;
        const std::size_t pick = largest.pixels[rng.next_below(largest.pixels.size())];
        grower.draw_wall(largest,
                         static_cast<double>(pick % static_cast<std::size_t>(canvas.w)),
                         static_cast<double>(pick / static_cast<std::size_t>(canvas.w)));
    }

    // phase 3: top up with short unbranched strokes
    spawns = 0;
    while (canvas.fraction() < target - 0.004) {
        if (++spawns > 4000 || spent > step_budget)
            throw GenerationFailureError("generate: could not reach target vessel fraction");
        grower.spawn_random();
        spent += grower.run(target - 0.002, step_budget - spent, false);
    }
    if (std::fabs(canvas.fraction() - target) > 0.02)
        throw GenerationFailureError("generate: final fraction missed the target");

    BinaryMask truth = truth_from_canvas(canvas);

    SynthResult out{GrayImage(p.width, p.height, 0.0), GroundTruth{std::move(truth), p.faz}};
    GroundTruth& gt = out.truth;
    gt.vessel_fraction = canvas.fraction();
    const double s = p.scale_mm_per_px;
    gt.area_mm2 = kPi * p.faz.a * p.faz.b * s * s;
    gt.d_max_mm = 2.0 * p.faz.a * s;
    gt.d_min_mm = 2.0 * p.faz.b * s;
    const double ratio = p.faz.b / p.faz.a;
    gt.eccentricity = std::sqrt(1.0 - ratio * ratio);

    // speckled image: background + vessel signal, multiplicative unit-mean noise
    const double sigma = std::sqrt(p.noise.speckle_var);
    std::vector<double> img(canvas.raster.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double clean = p.noise.background + (1.0 - p.noise.background) * canvas.raster[i];
        const double mult = std::max(0.0, 1.0 + sigma * rng.normal());
        img[i] = std::clamp(clean * mult, 0.0, 1.0);
    }
    out.image = GrayImage(p.width, p.height, std::move(img), p.scale_mm_per_px);
    return out;
}

CohortDistribution healthy_distribution() {
    return CohortDistribution{0.332, 0.154, 0.730, 0.064, 0.513, 0.034};
}

CohortDistribution diabetic_distribution() {
    return CohortDistribution{0.736, 0.480, 0.886, 0.047, 0.418, 0.058};
}

namespace {

double draw_truncated(Rng& rng, double mean, double sd, double lo, double hi) {
    for (int i = 0; i < 256; ++i) {
        const double v = rng.normal(mean, sd);
        if (v >= lo && v <= hi)
            return v;
    }
    return std::clamp(mean, lo, hi);
}

} // namespace

std::vector<CohortEye> generate_cohort(const CohortDistribution& healthy,
                                       const CohortDistribution& diabetic, int n_each,
                                       std::uint64_t seed, const CohortOptions& opt) {
    if (n_each < 2)
        throw ArgumentError("generate_cohort: n_each must be >= 2");
    std::vector<CohortEye> eyes;
    eyes.reserve(static_cast<std::size_t>(2) * n_each);
    Rng rng(seed);
    const double s = opt.scale_mm_per_px;
    // the ellipse must fit with ring, margin and the +-3 px center jitter
    const double a_cap = std::min(opt.width, opt.height) / 2.0 - 3.0 - kRingPx -
                         opt.vessels.thickness_max - 3.5;

    for (int which = 0; which < 2; ++which) {
        const CohortDistribution& dist = which == 0 ? healthy : diabetic;
        const std::string cohort = which == 0 ? "healthy" : "diabetic";
        for (int i = 0; i < n_each; ++i) {
            SynthParams p;
            p.width = opt.width;
            p.height = opt.height;
            p.vessels = opt.vessels;
            p.noise = opt.noise;
            p.scale_mm_per_px = s;
            p.seed = seed + 7919u * (static_cast<std::uint64_t>(which) * n_each + i + 1);

            double a = 0.0, b = 0.0;
            for (int tries = 0;; ++tries) {
                if (tries >= 64)
                    throw GenerationFailureError(
                        "generate_cohort: could not fit a FAZ ellipse in the image");
                const double area = draw_truncated(rng, dist.area_mm2_mean, dist.area_mm2_sd,
                                                   0.05, 2.5);
                const double ecc = draw_truncated(rng, dist.ecc_mean, dist.ecc_sd, 0.30, 0.96);
                const double ratio = std::sqrt(1.0 - ecc * ecc);
                const double ab = area / (kPi * s * s);
                a = std::sqrt(ab / ratio);
                b = ratio * a;
                if (a <= a_cap && b >= 4.0)
                    break;
            }
            p.faz.a = a;
            p.faz.b = b;
            p.faz.rot_deg = rng.uniform(0.0, 180.0);
            p.faz.cx = opt.width / 2.0 + rng.uniform(-3.0, 3.0);
            p.faz.cy = opt.height / 2.0 + rng.uniform(-3.0, 3.0);
            p.target_fraction =
                draw_truncated(rng, dist.density_mean, dist.density_sd, 0.20, 0.70);

            char buf[32];
            std::snprintf(buf, sizeof(buf), "%s%02d", which == 0 ? "H" : "D", i + 1);
            eyes.push_back(CohortEye{buf, cohort, generate(p)});
        }
    }
    return eyes;
}

std::vector<MetricRow> cohort_truth_rows(const std::vector<CohortEye>& eyes) {
    std::vector<MetricRow> rows;
    rows.reserve(eyes.size());
    for (const CohortEye& eye : eyes) {
        MetricRow r;
        r.id = eye.id;
        r.cohort = eye.cohort;
        r.rater = "manual";
        const GroundTruth& gt = eye.data.truth;
        r.values = {gt.area_mm2, gt.d_min_mm, gt.d_max_mm, gt.eccentricity,
                    gt.vessel_fraction};
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace octa
