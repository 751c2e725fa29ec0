#ifndef OCTA_STATS_HPP
#define OCTA_STATS_HPP

#include <array>
#include <map>
#include <string>
#include <vector>

#include "octa/errors.hpp"

namespace octa {

struct PairedSample {
    std::vector<double> values_a;
    std::vector<double> values_b;
};

struct TestResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0; // two-tailed
};

// t = mean(d) / (sd(d)/sqrt(n)), df = n-1; zero-variance differences are a
// degenerate sample.
TestResult paired_t(const PairedSample& s);

// Welch statistic with Satterthwaite degrees of freedom.
TestResult welch_t(const std::vector<double>& x, const std::vector<double>& y);

// Two-way single-measure absolute-agreement ICC(A,1) with k = 2 raters:
// (MSR - MSE) / (MSR + (k-1) MSE + (k/n)(MSC - MSE)).
double icc(const PairedSample& s);

// Student-t CDF via the regularized incomplete beta function, |err| <= 1e-10.
double t_cdf(double t, double df);

double two_tailed_p(double t, double df);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double inc_beta_reg(double a, double b, double x);

// --- cohort summaries (Table-2-shaped) ---

inline constexpr std::array<const char*, 5> kMetricNames = {
    "area_mm2", "d_min_mm", "d_max_mm", "eccentricity", "density"};

struct MetricRow {
    std::string id;
    std::string cohort;
    std::string rater; // "manual" or "automated"
    std::array<double, 5> values{}; // kMetricNames order
};

struct MetricSummary {
    int n = 0;
    double manual_mean = 0.0, manual_sd = 0.0;
    double automated_mean = 0.0, automated_sd = 0.0;
    bool paired_degenerate = false;
    TestResult paired;
    bool icc_degenerate = false;
    double icc_value = 0.0;
};

struct WelchEntry {
    std::string cohort_x, cohort_y; // automated rows
    bool degenerate = false;
    TestResult test;
};

struct CohortReport {
    std::vector<std::string> cohorts; // sorted
    std::map<std::string, std::array<MetricSummary, 5>> per_cohort;
    std::vector<std::array<WelchEntry, 5>> welch; // one block per cohort pair
};

// Rows must pair each (cohort, id) across both raters; a missing partner is
// a pairing error naming the eye.
CohortReport cohort_summary(const std::vector<MetricRow>& rows);

std::string render_report(const CohortReport& report);      // structured, versioned
std::string render_table(const CohortReport& report);       // aligned text table

// CSV schema: id,cohort,rater,area_mm2,d_min_mm,d_max_mm,eccentricity,density
std::vector<MetricRow> rows_from_csv(const std::string& text);
std::string rows_to_csv(const std::vector<MetricRow>& rows);

double mean(const std::vector<double>& v);
double sample_sd(const std::vector<double>& v);

} // namespace octa

#endif
