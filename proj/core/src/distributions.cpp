#include "overflow/distributions.hpp"

#include <cmath>

namespace overflow {

std::vector<double> poisson_pmf(double mean, int kmax) {
    std::vector<double> pmf(kmax + 1, 0.0);
    if (mean <= 0.0) {
        pmf[0] = 1.0;
        return pmf;
    }
    const double lm = std::log(mean);
    for (int k = 0; k <= kmax; ++k) pmf[k] = std::exp(-mean + k * lm - std::lgamma(k + 1.0));
    return pmf;
}

int poisson_support(double mean, double tail) {
    if (mean <= 0.0) return 0;
    const double lm = std::log(mean);
    double cdf = 0.0;
    int k = 0;
    while (true) {
        cdf += std::exp(-mean + k * lm - std::lgamma(k + 1.0));
        if (1.0 - cdf < tail && k >= mean) return k;
        if (k > mean + 50.0 * std::sqrt(mean) + 50.0) return k;
        ++k;
    }
}

std::vector<double> binomial_pmf(int n, double p) {
    std::vector<double> pmf(n + 1, 0.0);
    if (p <= 0.0) {
        pmf[0] = 1.0;
        return pmf;
    }
    if (p >= 1.0) {
        pmf[n] = 1.0;
        return pmf;
    }
    const double lp = std::log(p);
    const double lq = std::log1p(-p);
    const double ln = std::lgamma(n + 1.0);
    for (int k = 0; k <= n; ++k)
        pmf[k] = std::exp(ln - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * lp + (n - k) * lq);
    return pmf;
}

}  // namespace overflow
