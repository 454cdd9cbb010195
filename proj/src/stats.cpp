#include "ihan/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ihan/errors.hpp"

namespace ihan {

double mean(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs) {
    const double m = mean(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - m) * (x - m);
    return acc / static_cast<double>(xs.size() - 1);
}

double sample_stddev(const std::vector<double>& xs) {
    return std::sqrt(sample_variance(xs));
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw DimensionError("auc: " + std::to_string(scores.size()) + " scores vs " +
                             std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += (y != 0);
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw MetricError("auc: needs both classes, got " + std::to_string(n_pos) + " positives out of " +
                          std::to_string(n));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&scores](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });
    // average rank over tied scores, 1-based
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] != 0) pos_rank_sum += avg_rank;
        }
        i = j + 1;
    }
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

// Modified Lentz evaluation of the incomplete beta continued fraction.
double ibeta_continued_fraction(double x, double a, double b) {
    const double tiny = 1e-300;
    const double tol = 1e-16;
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double result = d;
    for (int m = 1; m <= 500; ++m) {
        const double dm = static_cast<double>(m);
        // even term
        double num = dm * (b - dm) * x / ((a + 2.0 * dm - 1.0) * (a + 2.0 * dm));
        d = 1.0 + num * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        result *= d * c;
        // odd term
        num = -(a + dm) * (a + b + dm) * x / ((a + 2.0 * dm) * (a + 2.0 * dm + 1.0));
        d = 1.0 + num * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        result *= delta;
        if (std::fabs(delta - 1.0) < tol) break;
    }
    return result;
}

} // namespace

double regularized_incomplete_beta(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0) || std::isnan(x)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double front = std::exp(a * std::log(x) + b * std::log(1.0 - x) - log_beta);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * ibeta_continued_fraction(x, a, b) / a;
    }
    return 1.0 - std::exp(b * std::log(1.0 - x) + a * std::log(x) - log_beta) *
                     ibeta_continued_fraction(1.0 - x, b, a) / b;
}

double student_t_cdf(double x, double dof) {
    if (!(dof > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    if (x == 0.0) return 0.5;
    const double tail = 0.5 * regularized_incomplete_beta(dof / (dof + x * x), 0.5 * dof, 0.5);
    return x > 0.0 ? 1.0 - tail : tail;
}

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw MetricError("welch_t_test: each sample needs at least 2 values, got " +
                          std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = mean(a);
    const double mb = mean(b);
    const double va = sample_variance(a);
    const double vb = sample_variance(b);

    WelchResult r;
    if (va == 0.0 && vb == 0.0) {
        r.dof = na + nb - 2.0;
        if (ma == mb) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = ma > mb ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
        return r;
    }
    const double sa = va / na;
    const double sb = vb / nb;
    const double se2 = sa + sb;
    r.t = (ma - mb) / std::sqrt(se2);
    r.dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    // P(|T| > |t|) = I_{dof/(dof+t^2)}(dof/2, 1/2)
    r.p = regularized_incomplete_beta(r.dof / (r.dof + r.t * r.t), 0.5 * r.dof, 0.5);
    return r;
}

} // namespace ihan
