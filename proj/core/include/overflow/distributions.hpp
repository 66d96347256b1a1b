#pragma once

#include <vector>

namespace overflow {

// pmf[k] = P(Poisson(mean) = k) for k = 0..kmax.
std::vector<double> poisson_pmf(double mean, int kmax);

// Smallest k with P(Poisson(mean) > k) < tail.
int poisson_support(double mean, double tail = 1e-16);

// pmf[k] = P(Binomial(n, p) = k) for k = 0..n.
std::vector<double> binomial_pmf(int n, double p);

}  // namespace overflow
