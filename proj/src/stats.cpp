#include "octa/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace octa {

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

TestResult paired_t(const PairedSample& s) {
    const std::size_t n = s.values_a.size();
    if (n < 2 || s.values_b.size() != n)
        throw ArgumentError("paired_t: needs equal-length vectors with n >= 2");
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.values_a[i]) || !std::isfinite(s.values_b[i]))
            throw ArgumentError("paired_t: non-finite value");
        d[i] = s.values_a[i] - s.values_b[i];
    }
    const double sd = sample_sd(d);
    if (sd == 0.0)
        throw DegenerateInputError("paired_t: zero-variance differences");
    TestResult r;
    r.t = mean(d) / (sd / std::sqrt(static_cast<double>(n)));
    r.df = static_cast<double>(n - 1);
    r.p = two_tailed_p(r.t, r.df);
    return r;
}

TestResult welch_t(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 2 || y.size() < 2)
        throw ArgumentError("welch_t: both groups need n >= 2");
    const double nx = static_cast<double>(x.size());
    const double ny = static_cast<double>(y.size());
    const double sx = sample_sd(x);
    const double sy = sample_sd(y);
    if (sx == 0.0 && sy == 0.0)
        throw DegenerateInputError("welch_t: both variances are zero");
    const double vx = sx * sx / nx;
    const double vy = sy * sy / ny;
    TestResult r;
    r.t = (mean(x) - mean(y)) / std::sqrt(vx + vy);
    r.df = (vx + vy) * (vx + vy) / (vx * vx / (nx - 1.0) + vy * vy / (ny - 1.0));
    r.p = two_tailed_p(r.t, r.df);
    return r;
}

double icc(const PairedSample& s) {
    const std::size_t n = s.values_a.size();
    if (n < 2 || s.values_b.size() != n)
        throw ArgumentError("icc: needs equal-length vectors with n >= 2");
    const double k = 2.0;
    const double nd = static_cast<double>(n);

    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        grand += s.values_a[i] + s.values_b[i];
    grand /= k * nd;

    double sst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sst += (s.values_a[i] - grand) * (s.values_a[i] - grand);
        sst += (s.values_b[i] - grand) * (s.values_b[i] - grand);
    }
    if (sst == 0.0)
        throw DegenerateInputError("icc: zero total variance");

    const double col_a = mean(s.values_a);
    const double col_b = mean(s.values_b);
    double ssr = 0.0, ssc = 0.0, sse = 0.0;
    ssc = nd * ((col_a - grand) * (col_a - grand) + (col_b - grand) * (col_b - grand));
    for (std::size_t i = 0; i < n; ++i) {
        const double row = 0.5 * (s.values_a[i] + s.values_b[i]);
        ssr += k * (row - grand) * (row - grand);
        const double ea = s.values_a[i] - row - col_a + grand;
        const double eb = s.values_b[i] - row - col_b + grand;
        sse += ea * ea + eb * eb;
    }
    const double msr = ssr / (nd - 1.0);
    const double msc = ssc / (k - 1.0);
    const double mse = sse / ((nd - 1.0) * (k - 1.0));
    const double denom = msr + (k - 1.0) * mse + (k / nd) * (msc - mse);
    if (denom == 0.0)
        throw DegenerateInputError("icc: undefined (zero denominator)");
    return (msr - mse) / denom;
}

namespace {

// Lentz's continued fraction for the incomplete beta (Numerical Recipes form).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 400;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny)
        d = kTiny;
    d = 1.0 / d;
    double hval = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny)
            d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny)
            c = kTiny;
        d = 1.0 / d;
        hval *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny)
            d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny)
            c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        hval *= del;
        if (std::fabs(del - 1.0) < kEps)
            break;
    }
    return hval;
}

} // namespace

double inc_beta_reg(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0))
        throw ArgumentError("inc_beta_reg: a and b must be positive");
    if (x <= 0.0)
        return 0.0;
    if (x >= 1.0)
        return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double t_cdf(double t, double df) {
    if (!(df > 0.0))
        throw ArgumentError("t_cdf: df must be positive");
    if (t == 0.0)
        return 0.5;
    const double x = df / (df + t * t);
    const double tail = 0.5 * inc_beta_reg(0.5 * df, 0.5, x);
    return t > 0.0 ? 1.0 - tail : tail;
}

double two_tailed_p(double t, double df) {
    const double p = 2.0 * (1.0 - t_cdf(std::fabs(t), df));
    return std::clamp(p, 0.0, 1.0);
}

namespace {

struct Eye {
    std::string id;
    std::array<double, 5> manual_values{};
    std::array<double, 5> automated_values{};
    bool has_manual = false, has_automated = false;
};

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string fmt3(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

} // namespace

CohortReport cohort_summary(const std::vector<MetricRow>& rows) {
    if (rows.empty())
        throw ArgumentError("cohort_summary: no rows");

    std::map<std::string, std::map<std::string, Eye>> cohorts; // cohort -> id -> eye
    for (const MetricRow& r : rows) {
        if (r.rater != "manual" && r.rater != "automated")
            throw ArgumentError("cohort_summary: unknown rater '" + r.rater + "'");
        Eye& e = cohorts[r.cohort][r.id];
        e.id = r.id;
        if (r.rater == "manual") {
            if (e.has_manual)
                throw ArgumentError("cohort_summary: duplicate manual row for eye '" + r.id + "'");
            e.manual_values = r.values;
            e.has_manual = true;
        } else {
            if (e.has_automated)
                throw ArgumentError("cohort_summary: duplicate automated row for eye '" + r.id +
                                    "'");
            e.automated_values = r.values;
            e.has_automated = true;
        }
    }

    CohortReport report;
    for (const auto& [cohort, eyes] : cohorts) {
        report.cohorts.push_back(cohort);
        for (const auto& [id, eye] : eyes)
            if (!eye.has_manual || !eye.has_automated)
                throw PairingError("cohort_summary: eye '" + id + "' in cohort '" + cohort +
                                   "' is missing its " +
                                   (eye.has_manual ? "automated" : "manual") + " row");
        if (eyes.size() < 2)
            throw ArgumentError("cohort_summary: cohort '" + cohort + "' needs >= 2 eyes");

        std::array<MetricSummary, 5>& sums = report.per_cohort[cohort];
        for (std::size_t m = 0; m < 5; ++m) {
            PairedSample s;
            for (const auto& [id, eye] : eyes) { // std::map: sorted by id
                s.values_a.push_back(eye.manual_values[m]);
                s.values_b.push_back(eye.automated_values[m]);
            }
            MetricSummary& out = sums[m];
            out.n = static_cast<int>(eyes.size());
            out.manual_mean = mean(s.values_a);
            out.manual_sd = sample_sd(s.values_a);
            out.automated_mean = mean(s.values_b);
            out.automated_sd = sample_sd(s.values_b);
            try {
                out.paired = paired_t(s);
            } catch (const DegenerateInputError&) {
                out.paired_degenerate = true;
            }
            try {
                out.icc_value = icc(s);
            } catch (const DegenerateInputError&) {
                out.icc_degenerate = true;
            }
        }
    }

    // Welch on automated rows for every cohort pair (sorted order)
    for (std::size_t i = 0; i < report.cohorts.size(); ++i) {
        for (std::size_t j = i + 1; j < report.cohorts.size(); ++j) {
            std::array<WelchEntry, 5> block;
            for (std::size_t m = 0; m < 5; ++m) {
                WelchEntry& e = block[m];
                e.cohort_x = report.cohorts[i];
                e.cohort_y = report.cohorts[j];
                std::vector<double> x, y;
                for (const auto& [id, eye] : cohorts[e.cohort_x])
                    x.push_back(eye.automated_values[m]);
                for (const auto& [id, eye] : cohorts[e.cohort_y])
                    y.push_back(eye.automated_values[m]);
                try {
                    e.test = welch_t(x, y);
                } catch (const DegenerateInputError&) {
                    e.degenerate = true;
                }
            }
            report.welch.push_back(block);
        }
    }
    return report;
}

std::string render_report(const CohortReport& report) {
    std::ostringstream os;
    os << "octanet-report v1\n";
    os << "icc_form=two-way single-measure absolute agreement ICC(A,1)\n";
    os << "tails=two\n";
    os << "metrics=";
    for (std::size_t m = 0; m < 5; ++m)
        os << (m ? "," : "") << kMetricNames[m];
    os << "\n";
    os << "cohorts=";
    for (std::size_t i = 0; i < report.cohorts.size(); ++i)
        os << (i ? "," : "") << report.cohorts[i];
    os << "\n";
    for (const std::string& cohort : report.cohorts) {
        const auto& sums = report.per_cohort.at(cohort);
        os << "[cohort " << cohort << "]\n";
        os << "n=" << sums[0].n << "\n";
        for (std::size_t m = 0; m < 5; ++m) {
            const MetricSummary& s = sums[m];
            const std::string k = kMetricNames[m];
            os << k << ".manual_mean=" << fmt(s.manual_mean) << "\n";
            os << k << ".manual_sd=" << fmt(s.manual_sd) << "\n";
            os << k << ".automated_mean=" << fmt(s.automated_mean) << "\n";
            os << k << ".automated_sd=" << fmt(s.automated_sd) << "\n";
            if (s.paired_degenerate) {
                os << k << ".paired_t=degenerate\n";
            } else {
                os << k << ".paired_t=" << fmt(s.paired.t) << "\n";
                os << k << ".paired_p=" << fmt(s.paired.p) << "\n";
            }
            if (s.icc_degenerate)
                os << k << ".icc=degenerate\n";
            else
                os << k << ".icc=" << fmt(s.icc_value) << "\n";
        }
    }
    for (const auto& block : report.welch) {
        os << "[welch automated " << block[0].cohort_x << " vs " << block[0].cohort_y << "]\n";
        for (std::size_t m = 0; m < 5; ++m) {
            const WelchEntry& e = block[m];
            const std::string k = kMetricNames[m];
            if (e.degenerate) {
                os << k << ".welch=degenerate\n";
            } else {
                os << k << ".t=" << fmt(e.test.t) << "\n";
                os << k << ".df=" << fmt(e.test.df) << "\n";
                os << k << ".p=" << fmt(e.test.p) << "\n";
            }
        }
    }
    return os.str();
}

std::string render_table(const CohortReport& report) {
    static const std::array<const char*, 5> headers = {
        "FAZ Area (mm2)", "Min Diam (mm)", "Max Diam (mm)", "Eccentricity", "Density"};
    std::ostringstream os;
    auto pad = [](const std::string& s, std::size_t width) {
        return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
    };
    constexpr std::size_t label_w = 22;
    constexpr std::size_t col_w = 17;

    os << pad("", label_w);
    for (const char* hdr : headers)
        os << pad(hdr, col_w);
    os << "\n";
    for (const std::string& cohort : report.cohorts) {
        const auto& sums = report.per_cohort.at(cohort);
        os << cohort << " (n = " << sums[0].n << ")\n";
        os << pad("  Manual", label_w);
        for (std::size_t m = 0; m < 5; ++m)
            os << pad(fmt3(sums[m].manual_mean) + " +- " + fmt3(sums[m].manual_sd), col_w);
        os << "\n" << pad("  Automated", label_w);
        for (std::size_t m = 0; m < 5; ++m)
            os << pad(fmt3(sums[m].automated_mean) + " +- " + fmt3(sums[m].automated_sd), col_w);
        os << "\n" << pad("  T-test", label_w);
        for (std::size_t m = 0; m < 5; ++m)
            os << pad(sums[m].paired_degenerate ? std::string("degenerate")
                                                : "p = " + fmt3(sums[m].paired.p),
                      col_w);
        os << "\n" << pad("  ICC", label_w);
        for (std::size_t m = 0; m < 5; ++m)
            os << pad(sums[m].icc_degenerate ? std::string("degenerate")
                                             : fmt3(sums[m].icc_value),
                      col_w);
        os << "\n";
    }
    for (const auto& block : report.welch) {
        os << "Welch " << block[0].cohort_x << " vs " << block[0].cohort_y << " (automated)\n";
        os << pad("  p", label_w);
        for (std::size_t m = 0; m < 5; ++m)
            os << pad(block[m].degenerate ? std::string("degenerate") : "p = " + fmt3(block[m].test.p),
                      col_w);
        os << "\n";
    }
    return os.str();
}

std::vector<MetricRow> rows_from_csv(const std::string& text) {
    std::vector<MetricRow> rows;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
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
        if (lineno == 1 && !fields.empty() && fields[0] == "id")
            continue; // header
        if (fields.size() != 8)
            throw FormatError("metrics csv: line " + std::to_string(lineno) +
                              ": expected 8 fields, got " + std::to_string(fields.size()));
        MetricRow r;
        r.id = fields[0];
        r.cohort = fields[1];
        r.rater = fields[2];
        for (std::size_t m = 0; m < 5; ++m) {
            try {
                r.values[m] = std::stod(fields[3 + m]);
            } catch (const std::exception&) {
                throw FormatError("metrics csv: line " + std::to_string(lineno) +
                                  ": bad number '" + fields[3 + m] + "'");
            }
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string rows_to_csv(const std::vector<MetricRow>& rows) {
    std::ostringstream os;
    os << "id,cohort,rater,area_mm2,d_min_mm,d_max_mm,eccentricity,density\n";
    for (const MetricRow& r : rows) {
        os << r.id << "," << r.cohort << "," << r.rater;
        for (std::size_t m = 0; m < 5; ++m)
            os << "," << fmt(r.values[m]);
        os << "\n";
    }
    return os.str();
}

} // namespace octa
