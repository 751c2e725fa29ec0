#include "octa/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "octa/fft.hpp"

namespace octa {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

int signed_freq(int k, int n) {
    return k <= n / 2 ? k : k - n;
}

double clamp01(double v) {
    return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

std::vector<cdouble> forward_spectrum(const GrayImage& img) {
    std::vector<cdouble> f(img.data().size());
    for (std::size_t i = 0; i < f.size(); ++i)
        f[i] = cdouble(img.data()[i], 0.0);
    fft2d(f, img.width(), img.height(), false);
    return f;
}

double max_nondc_magnitude(const std::vector<cdouble>& f) {
    double m = 0.0;
    for (std::size_t i = 1; i < f.size(); ++i)
        m = std::max(m, std::abs(f[i]));
    return m;
}

} // namespace

Shift2D register_translation(const GrayImage& reference, const GrayImage& moving,
                             int upsample) {
    if (reference.width() != moving.width() || reference.height() != moving.height())
        throw ArgumentError("register_translation: dimension mismatch");
    if (upsample < 1 || upsample > 100)
        throw ArgumentError("register_translation: upsample must be in [1,100]");

    const int w = reference.width();
    const int h = reference.height();
    std::vector<cdouble> fr = forward_spectrum(reference);
    std::vector<cdouble> fm = forward_spectrum(moving);

    const double mr = max_nondc_magnitude(fr);
    const double mm = max_nondc_magnitude(fm);
    const double dc = std::max(std::abs(fr[0]), std::abs(fm[0]));
    if (mr <= 1e-12 * std::max(dc, 1.0) || mm <= 1e-12 * std::max(dc, 1.0))
        throw DegenerateInputError("register_translation: constant input, correlation undefined");

    // cross-power spectrum with the means removed: the correlation peak then
    // maximizes the normalized cross-correlation, and spectral weighting by
    // |F_ref||F_mov| keeps noise-only bins from drowning the phase ramp
    std::vector<cdouble> cps(fr.size());
    for (std::size_t i = 1; i < cps.size(); ++i)
        cps[i] = std::conj(fr[i]) * fm[i];
    cps[0] = cdouble(0.0, 0.0);

    // integer stage: peak of the circular cross-correlation surface
    std::vector<cdouble> surf = cps;
    fft2d(surf, w, h, true);
    std::size_t best = 0;
    double best_val = surf[0].real();
    for (std::size_t i = 1; i < surf.size(); ++i) {
        if (surf[i].real() > best_val) {
            best_val = surf[i].real();
            best = i;
        }
    }
    int dy0 = static_cast<int>(best) / w;
    int dx0 = static_cast<int>(best) % w;
    if (dy0 > h / 2)
        dy0 -= h;
    if (dx0 > w / 2)
        dx0 -= w;
    if (upsample == 1)
        return {static_cast<double>(dy0), static_cast<double>(dx0)};

    // subpixel stage: separable local DFT of the windowed spectrum on a
    // 1/upsample grid spanning +-1 px around the integer peak
    std::vector<double> wu(static_cast<std::size_t>(w)), wv(static_cast<std::size_t>(h));
    for (int kx = 0; kx < w; ++kx) {
        const double c = std::cos(3.14159265358979323846 * signed_freq(kx, w) / w);
        wu[kx] = c * c;
    }
    for (int ky = 0; ky < h; ++ky) {
        const double c = std::cos(3.14159265358979323846 * signed_freq(ky, h) / h);
        wv[ky] = c * c;
    }

    // separable local DFT of the windowed spectrum over a centered grid;
    // returns the grid argmax of the correlation surface
    auto refine = [&](double cy, double cx, double halfspan, double step) {
        const int half = static_cast<int>(std::lround(halfspan / step));
        const int grid = 2 * half + 1;
        std::vector<double> ys(grid), xs(grid);
        for (int j = 0; j < grid; ++j) {
            ys[j] = cy + (j - half) * step;
            xs[j] = cx + (j - half) * step;
        }
        std::vector<cdouble> rowsum(static_cast<std::size_t>(grid) * w, cdouble(0.0, 0.0));
        for (int ky = 0; ky < h; ++ky) {
            const int v = signed_freq(ky, h);
            for (int j = 0; j < grid; ++j) {
                const double ang = kTwoPi * v * ys[j] / h;
                const cdouble e(std::cos(ang), std::sin(ang));
                const std::size_t base = static_cast<std::size_t>(ky) * w;
                for (int kx = 0; kx < w; ++kx)
                    rowsum[static_cast<std::size_t>(j) * w + kx] += wv[ky] * cps[base + kx] * e;
            }
        }
        double best_s = -1e300;
        std::pair<double, double> best{cy, cx};
        for (int j = 0; j < grid; ++j) {
            for (int k = 0; k < grid; ++k) {
                cdouble s(0.0, 0.0);
                for (int kx = 0; kx < w; ++kx) {
                    const int u = signed_freq(kx, w);
                    const double ang = kTwoPi * u * xs[k] / w;
                    s += wu[kx] * rowsum[static_cast<std::size_t>(j) * w + kx] *
                         cdouble(std::cos(ang), std::sin(ang));
                }
                if (s.real() > best_s) {
                    best_s = s.real();
                    best = {ys[j], xs[k]};
                }
            }
        }
        return best;
    };

    // coarse pass at the requested resolution, then a finer pass around the
    // peak so grid quantization does not dominate the estimate
    const double step = 1.0 / upsample;
    auto [y1, x1] = refine(dy0, dx0, 1.0, step);
    auto [y2, x2] = refine(y1, x1, step, step / 8.0);
    return {y2, x2};
}

GrayImage apply_shift(const GrayImage& img, const Shift2D& shift) {
    if (!std::isfinite(shift.dy) || !std::isfinite(shift.dx))
        throw ArgumentError("apply_shift: shift must be finite");
    const int w = img.width();
    const int h = img.height();
    std::vector<double> out(img.data().size());
    for (int y = 0; y < h; ++y) {
        double sy = y - shift.dy;
        sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, h - 1);
        const double fy = sy - y0;
        for (int x = 0; x < w; ++x) {
            double sx = x - shift.dx;
            sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, w - 1);
            const double fx = sx - x0;
            const double top = img.at(x0, y0) * (1.0 - fx) + img.at(x1, y0) * fx;
            const double bot = img.at(x0, y1) * (1.0 - fx) + img.at(x1, y1) * fx;
            out[static_cast<std::size_t>(y) * w + x] = top * (1.0 - fy) + bot * fy;
        }
    }
    return GrayImage(w, h, std::move(out), img.scale_mm_per_px());
}

std::vector<double> notch_filter_raw(const GrayImage& img, const NotchParams& p) {
    if (p.band_halfwidth < 0)
        throw ArgumentError("notch_filter: band_halfwidth must be >= 0");
    if (p.min_stripe_freq < 1)
        throw ArgumentError("notch_filter: min_stripe_freq must be >= 1");
    if (!(p.attenuation >= 0.0 && p.attenuation <= 1.0))
        throw ArgumentError("notch_filter: attenuation must be in [0,1]");

    const int w = img.width();
    const int h = img.height();
    std::vector<cdouble> f = forward_spectrum(img);
    for (int ky = 0; ky < h; ++ky) {
        const int v = signed_freq(ky, h);
        if (std::abs(v) < p.min_stripe_freq)
            continue;
        for (int kx = 0; kx < w; ++kx) {
            const int u = signed_freq(kx, w);
            if (std::abs(u) <= p.band_halfwidth)
                f[static_cast<std::size_t>(ky) * w + kx] *= p.attenuation;
        }
    }
    fft2d(f, w, h, true);
    std::vector<double> out(f.size());
    for (std::size_t i = 0; i < f.size(); ++i)
        out[i] = f[i].real();
    return out;
}

GrayImage notch_filter(const GrayImage& img, const NotchParams& p) {
    std::vector<double> raw = notch_filter_raw(img, p);
    for (double& v : raw)
        v = clamp01(v);
    return GrayImage(img.width(), img.height(), std::move(raw), img.scale_mm_per_px());
}

GrayImage clahe(const GrayImage& img, const ClaheParams& p) {
    if (p.tiles_x < 1 || p.tiles_y < 1)
        throw ArgumentError("clahe: tile counts must be >= 1");
    if (!(p.clip_limit > 1.0))
        throw ArgumentError("clahe: clip_limit must be > 1");
    if (img.width() < p.tiles_x || img.height() < p.tiles_y)
        throw ArgumentError("clahe: image smaller than tile grid");

    const int w = img.width();
    const int h = img.height();
    const int tx = p.tiles_x;
    const int ty = p.tiles_y;

    auto bin_of = [](double v) {
        const int b = static_cast<int>(v * 256.0);
        return b > 255 ? 255 : b;
    };

    // tile boundaries partition the image exactly
    std::vector<int> bx(tx + 1), by(ty + 1);
    for (int i = 0; i <= tx; ++i)
        bx[i] = static_cast<int>(static_cast<long long>(i) * w / tx);
    for (int i = 0; i <= ty; ++i)
        by[i] = static_cast<int>(static_cast<long long>(i) * h / ty);

    // per-tile clipped-CDF mappings, 256 entries each
    std::vector<std::vector<double>> maps(static_cast<std::size_t>(tx) * ty);
    for (int j = 0; j < ty; ++j) {
        for (int i = 0; i < tx; ++i) {
            std::vector<double> hist(256, 0.0);
            long long n = 0;
            for (int y = by[j]; y < by[j + 1]; ++y)
                for (int x = bx[i]; x < bx[i + 1]; ++x) {
                    hist[bin_of(img.at(x, y))] += 1.0;
                    ++n;
                }
            std::vector<double>& map = maps[static_cast<std::size_t>(j) * tx + i];
            map.resize(256);
            int occupied = 0;
            for (int b = 0; b < 256; ++b)
                if (hist[b] > 0.0)
                    ++occupied;
            if (occupied <= 1) {
                // degenerate histogram: identity keeps constants fixed
                for (int b = 0; b < 256; ++b)
                    map[b] = (b + 0.5) / 256.0;
                continue;
            }
            const double clip = p.clip_limit * static_cast<double>(n) / 256.0;
            double excess = 0.0;
            for (int b = 0; b < 256; ++b) {
                if (hist[b] > clip) {
                    excess += hist[b] - clip;
                    hist[b] = clip;
                }
            }
            const double add = excess / 256.0;
            double cdf = 0.0;
            for (int b = 0; b < 256; ++b) {
                cdf += hist[b] + add;
                map[b] = cdf / static_cast<double>(n);
            }
        }
    }

    // tile centers for the bilinear blend
    std::vector<double> cx(tx), cy(ty);
    for (int i = 0; i < tx; ++i)
        cx[i] = 0.5 * (bx[i] + bx[i + 1] - 1);
    for (int j = 0; j < ty; ++j)
        cy[j] = 0.5 * (by[j] + by[j + 1] - 1);

    std::vector<double> out(img.data().size());
    for (int y = 0; y < h; ++y) {
        int j0 = 0;
        while (j0 + 1 < ty && cy[j0 + 1] <= y)
            ++j0;
        int j1 = std::min(j0 + 1, ty - 1);
        double fy = 0.0;
        if (y <= cy[0]) {
            j0 = j1 = 0;
        } else if (y >= cy[ty - 1]) {
            j0 = j1 = ty - 1;
        } else {
            fy = (y - cy[j0]) / (cy[j1] - cy[j0]);
        }
        for (int x = 0; x < w; ++x) {
            int i0 = 0;
            while (i0 + 1 < tx && cx[i0 + 1] <= x)
                ++i0;
            int i1 = std::min(i0 + 1, tx - 1);
            double fx = 0.0;
            if (x <= cx[0]) {
                i0 = i1 = 0;
            } else if (x >= cx[tx - 1]) {
                i0 = i1 = tx - 1;
            } else {
                fx = (x - cx[i0]) / (cx[i1] - cx[i0]);
            }
            const int b = bin_of(img.at(x, y));
            const double m00 = maps[static_cast<std::size_t>(j0) * tx + i0][b];
            const double m01 = maps[static_cast<std::size_t>(j0) * tx + i1][b];
            const double m10 = maps[static_cast<std::size_t>(j1) * tx + i0][b];
            const double m11 = maps[static_cast<std::size_t>(j1) * tx + i1][b];
            const double top = m00 * (1.0 - fx) + m01 * fx;
            const double bot = m10 * (1.0 - fx) + m11 * fx;
            out[static_cast<std::size_t>(y) * w + x] = clamp01(top * (1.0 - fy) + bot * fy);
        }
    }
    return GrayImage(w, h, std::move(out), img.scale_mm_per_px());
}

GrayImage align_average(const std::vector<GrayImage>& frames, int upsample) {
    if (frames.empty())
        throw ArgumentError("align_average: no frames");
    const GrayImage& ref = frames[0];
    std::vector<double> acc(ref.data());
    for (std::size_t i = 1; i < frames.size(); ++i) {
        const Shift2D s = register_translation(ref, frames[i], upsample);
        const GrayImage aligned = apply_shift(frames[i], Shift2D{-s.dy, -s.dx});
        for (std::size_t k = 0; k < acc.size(); ++k)
            acc[k] += aligned.data()[k];
    }
    const double inv = 1.0 / static_cast<double>(frames.size());
    for (double& v : acc)
        v *= inv;
    return GrayImage(ref.width(), ref.height(), std::move(acc), ref.scale_mm_per_px());
}

} // namespace octa
