#include "octa/morphometry.hpp"

#include <cmath>
#include <deque>

#include "octa/binarize.hpp"

namespace octa {

namespace {

constexpr double kDegToRad = 0.017453292519943295;

Region region_from_pixels(int width, int height, std::vector<std::size_t> pixels) {
    Region r;
    r.width = width;
    r.height = height;
    r.member.assign(static_cast<std::size_t>(width) * height, 0);
    r.min_x = width;
    r.min_y = height;
    r.max_x = -1;
    r.max_y = -1;
    for (std::size_t idx : pixels) {
        r.member[idx] = 1;
        const int x = static_cast<int>(idx % static_cast<std::size_t>(width));
        const int y = static_cast<int>(idx / static_cast<std::size_t>(width));
        r.min_x = std::min(r.min_x, x);
        r.max_x = std::max(r.max_x, x);
        r.min_y = std::min(r.min_y, y);
        r.max_y = std::max(r.max_y, y);
    }
    r.pixels = std::move(pixels);
    return r;
}

} // namespace

Region largest_nonvessel_component(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<std::int32_t> label(n, -1);

    std::vector<std::vector<std::size_t>> components;
    std::deque<std::size_t> queue;
    for (std::size_t start = 0; start < n; ++start) {
        const int sx = static_cast<int>(start % static_cast<std::size_t>(w));
        const int sy = static_cast<int>(start / static_cast<std::size_t>(w));
        if (label[start] >= 0 || !mask.roi().at(sx, sy) || mask.vessel_at(sx, sy))
            continue;
        const std::int32_t id = static_cast<std::int32_t>(components.size());
        components.emplace_back();
        label[start] = id;
        queue.push_back(start);
        while (!queue.empty()) {
            const std::size_t cur = queue.front();
            queue.pop_front();
            components[id].push_back(cur);
            const int x = static_cast<int>(cur % static_cast<std::size_t>(w));
            const int y = static_cast<int>(cur / static_cast<std::size_t>(w));
            const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
            for (const auto& [nx, ny] : nb) {
                if (nx < 0 || nx >= w || ny < 0 || ny >= h)
                    continue;
                const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                if (label[ni] >= 0 || !mask.roi().at(nx, ny) || mask.vessel_at(nx, ny))
                    continue;
                label[ni] = id;
                queue.push_back(ni);
            }
        }
    }
    if (components.empty())
        throw EmptyFazError("largest_nonvessel_component: no non-vessel pixels in ROI");

    const double center_x = (w - 1) / 2.0;
    const double center_y = (h - 1) / 2.0;
    std::size_t best = 0;
    double best_dist = -1.0;
    auto center_dist = [&](const std::vector<std::size_t>& px) {
        double sx = 0.0, sy = 0.0;
        for (std::size_t idx : px) {
            sx += static_cast<double>(idx % static_cast<std::size_t>(w));
            sy += static_cast<double>(idx / static_cast<std::size_t>(w));
        }
        const double cx = sx / static_cast<double>(px.size());
        const double cy = sy / static_cast<double>(px.size());
        return std::hypot(cx - center_x, cy - center_y);
    };
    for (std::size_t i = 0; i < components.size(); ++i) {
        if (components[i].size() < components[best].size())
            continue;
        if (components[i].size() > components[best].size()) {
            best = i;
            best_dist = -1.0;
            continue;
        }
        if (i == best)
            continue;
        if (best_dist < 0.0)
            best_dist = center_dist(components[best]);
        const double di = center_dist(components[i]);
        if (di < best_dist) {
            best = i;
            best_dist = di;
        }
    }
    return region_from_pixels(w, h, std::move(components[best]));
}

Region fill_holes(const Region& region) {
    const int w = region.width;
    const int h = region.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<std::uint8_t> reached(n, 0);
    std::deque<std::size_t> queue;
    auto try_seed = [&](int x, int y) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!reached[i] && !region.member[i]) {
            reached[i] = 1;
            queue.push_back(i);
        }
    };
    for (int x = 0; x < w; ++x) {
        try_seed(x, 0);
        try_seed(x, h - 1);
    }
    for (int y = 0; y < h; ++y) {
        try_seed(0, y);
        try_seed(w - 1, y);
    }
    // 8-connected background flood, the dual of the 4-connected region
    while (!queue.empty()) {
        const std::size_t cur = queue.front();
        queue.pop_front();
        const int x = static_cast<int>(cur % static_cast<std::size_t>(w));
        const int y = static_cast<int>(cur / static_cast<std::size_t>(w));
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if ((dx == 0 && dy == 0) || nx < 0 || nx >= w || ny < 0 || ny >= h)
                    continue;
                const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                if (!reached[ni] && !region.member[ni]) {
                    reached[ni] = 1;
                    queue.push_back(ni);
                }
            }
        }
    }
    std::vector<std::size_t> pixels;
    pixels.reserve(region.pixels.size());
    for (std::size_t i = 0; i < n; ++i)
        if (region.member[i] || !reached[i])
            pixels.push_back(i);
    return region_from_pixels(w, h, std::move(pixels));
}

std::pair<double, double> centroid(const Region& region) {
    if (region.pixels.empty())
        throw ArgumentError("centroid: empty region");
    double sx = 0.0, sy = 0.0;
    for (std::size_t idx : region.pixels) {
        sx += static_cast<double>(idx % static_cast<std::size_t>(region.width));
        sy += static_cast<double>(idx / static_cast<std::size_t>(region.width));
    }
    const double n = static_cast<double>(region.pixels.size());
    return {sx / n, sy / n};
}

DiameterSweep diameters(const Region& region, double cx, double cy, double step_deg) {
    if (!(step_deg > 0.0 && step_deg <= 5.0))
        throw ArgumentError("diameters: step_deg must be in (0, 5]");
    const int rcx = static_cast<int>(std::lround(cx));
    const int rcy = static_cast<int>(std::lround(cy));
    if (!region.contains(rcx, rcy))
        throw CentroidOutsideError("diameters: centroid falls outside the region", cx, cy);

    // sub-pixel membership: bilinear reading of the 0/1 raster
    auto bilin = [&](double x, double y) {
        const int x0 = static_cast<int>(std::floor(x));
        const int y0 = static_cast<int>(std::floor(y));
        const double fx = x - x0;
        const double fy = y - y0;
        auto m = [&](int px, int py) { return region.contains(px, py) ? 1.0 : 0.0; };
        const double top = m(x0, y0) * (1.0 - fx) + m(x0 + 1, y0) * fx;
        const double bot = m(x0, y0 + 1) * (1.0 - fx) + m(x0 + 1, y0 + 1) * fx;
        return top * (1.0 - fy) + bot * fy;
    };
    // tent-weighted average across the ray keeps the crossing sharp along it
    // while evening out staircase phases; inside at occupancy 0.5
    constexpr double kTangentSpan = 3.0;
    auto inside = [&](double t, double dx, double dy) {
        const double x = cx + t * dx;
        const double y = cy + t * dy;
        double wsum = 0.0, msum = 0.0;
        for (double s = -kTangentSpan; s <= kTangentSpan + 1e-9; s += 0.5) {
            const double w = 1.0 - std::fabs(s) / (kTangentSpan + 0.5);
            wsum += w;
            msum += w * bilin(x - s * dy, y + s * dx);
        }
        return msum >= 0.5 * wsum;
    };

    const double max_reach =
        std::hypot(static_cast<double>(region.width), static_cast<double>(region.height));
    // march in 0.25-px increments to bracket the exit, then bisect
    auto half_length = [&](double dx, double dy) {
        double t = 0.0;
        while (t <= max_reach && inside(t + 0.25, dx, dy))
            t += 0.25;
        double lo = t, hi = t + 0.25;
        for (int i = 0; i < 10; ++i) {
            const double mid = 0.5 * (lo + hi);
            (inside(mid, dx, dy) ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };

    DiameterSweep sweep;
    sweep.d_max_px = -1.0;
    sweep.d_min_px = 1e300;
    for (double theta = 0.0; theta < 180.0; theta += step_deg) {
        const double rad = theta * kDegToRad;
        const double dx = std::cos(rad);
        const double dy = std::sin(rad);
        const double chord = half_length(dx, dy) + half_length(-dx, -dy);
        if (chord > sweep.d_max_px) {
            sweep.d_max_px = chord;
            sweep.theta_max_deg = theta;
        }
        if (chord < sweep.d_min_px) {
            sweep.d_min_px = chord;
            sweep.theta_min_deg = theta;
        }
    }
    return sweep;
}

double eccentricity(double d_min, double d_max) {
    if (!(d_min > 0.0) || !(d_max > 0.0) || d_min > d_max)
        throw ArgumentError("eccentricity: requires 0 < d_min <= d_max");
    const double r = d_min / d_max;
    return std::sqrt(1.0 - r * r);
}

double area_mm2(const Region& region, double scale_mm_per_px) {
    if (!(scale_mm_per_px > 0.0))
        throw ArgumentError("area_mm2: scale must be positive");
    return static_cast<double>(region.size()) * scale_mm_per_px * scale_mm_per_px;
}

double vessel_density(const BinaryMask& mask) {
    std::size_t roi = 0, vessel = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.roi().at(x, y))
                continue;
            ++roi;
            if (mask.vessel_at(x, y))
                ++vessel;
        }
    }
    return static_cast<double>(vessel) / static_cast<double>(roi);
}

std::vector<std::pair<int, int>> trace_boundary(const Region& region) {
    if (region.pixels.empty())
        throw ArgumentError("trace_boundary: empty region");
    const int w = region.width;
    const std::size_t start_idx = region.pixels.front(); // topmost, then leftmost
    const int sx = static_cast<int>(start_idx % static_cast<std::size_t>(w));
    const int sy = static_cast<int>(start_idx / static_cast<std::size_t>(w));

    // Moore neighborhood, clockwise with y pointing down; the W neighbor of
    // the topmost-leftmost pixel is guaranteed outside the region
    static const int dirs[8][2] = {{-1, 0}, {-1, -1}, {0, -1}, {1, -1},
                                   {1, 0},  {1, 1},   {0, 1},  {-1, 1}};
    std::vector<std::pair<int, int>> boundary;
    int cx = sx, cy = sy;
    int entry = 0;
    int first_dir = -1;
    std::size_t guard = 4 * region.pixels.size() + 8;
    while (guard-- > 0) {
        int d = -1;
        for (int step = 0; step < 8; ++step) {
            const int q = (entry + step) % 8;
            if (region.contains(cx + dirs[q][0], cy + dirs[q][1])) {
                d = q;
                break;
            }
        }
        if (d < 0) {
            boundary.emplace_back(cx, cy); // single isolated pixel
            return boundary;
        }
        // Jacob's criterion: back at the start about to repeat the first move
        if (cx == sx && cy == sy) {
            if (first_dir < 0)
                first_dir = d;
            else if (d == first_dir)
                break;
        }
        boundary.emplace_back(cx, cy);
        cx += dirs[d][0];
        cy += dirs[d][1];
        entry = (d + 5) % 8; // resume just past the backtrack point
    }
    return boundary;
}

FazMetrics quantify(const BinaryMask& mask, double scale_mm_per_px, double step_deg) {
    const Region raw = largest_nonvessel_component(mask);
    const Region faz = fill_holes(raw);
    const BinaryMask cleaned = faz_cleanup(mask, faz.pixels);

    FazMetrics out;
    const auto [cx, cy] = centroid(faz);
    out.centroid_x = cx;
    out.centroid_y = cy;
    const DiameterSweep sweep = diameters(faz, cx, cy, step_deg);
    if (!(scale_mm_per_px > 0.0))
        throw ArgumentError("quantify: scale must be positive");
    out.d_min_mm = sweep.d_min_px * scale_mm_per_px;
    out.d_max_mm = sweep.d_max_px * scale_mm_per_px;
    out.theta_min_deg = sweep.theta_min_deg;
    out.theta_max_deg = sweep.theta_max_deg;
    out.eccentricity = eccentricity(sweep.d_min_px, sweep.d_max_px);
    out.area_mm2 = area_mm2(faz, scale_mm_per_px);
    out.vessel_density = vessel_density(cleaned);
    out.perimeter = trace_boundary(faz);
    return out;
}

} // namespace octa
