#pragma once

#include <vector>

namespace ihan {

// Area under the ROC curve as Mann-Whitney pairwise concordance: the fraction
// of (positive, negative) pairs where the positive scores higher, ties worth
// 0.5. Throws MetricError if only one class is present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct WelchResult {
    double t = 0.0;
    double dof = 0.0;
    double p = 1.0; // two-sided
};

// Welch unequal-variance two-sample t-test with Welch-Satterthwaite degrees of
// freedom. Conventions when both sample variances are zero: equal means give
// p = 1, different means give p = 0.
WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

// I_x(a, b), evaluated by continued fraction (modified Lentz).
double regularized_incomplete_beta(double x, double a, double b);

// P(T <= x) for Student's t with `dof` degrees of freedom.
double student_t_cdf(double x, double dof);

double mean(const std::vector<double>& xs);
double sample_variance(const std::vector<double>& xs); // n-1 denominator
double sample_stddev(const std::vector<double>& xs);

} // namespace ihan
