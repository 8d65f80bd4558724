#pragma once

// Test-only oracles. Nothing here calls into the analytic gradient code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

namespace rssl::testing {

/// Central differences of f at x with step h, one coordinate at a time.
inline std::vector<double> central_differences(const std::function<double(const std::vector<double>&)>& f,
                                               std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f(x);
        x[i] = saved - h;
        const double down = f(x);
        x[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// Passes when |a - n| <= max(abs_floor, rel * max(|a|, |n|)).
inline bool close_enough(double analytic, double numeric, double rel, double abs_floor) {
    const double diff = std::abs(analytic - numeric);
    return diff <= abs_floor || diff <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

/// Uniform draw from the K-simplex (Dirichlet(1, ..., 1)).
inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t k) {
    std::exponential_distribution<double> e(1.0);
    std::vector<double> p(k);
    double s = 0.0;
    for (auto& v : p) {
        v = e(rng);
        s += v;
    }
    for (auto& v : p) v /= s;
    return p;
}

/// Textbook softmax without max-shift, for cross-checking on small scores.
inline std::vector<double> naive_softmax(const std::vector<double>& s) {
    std::vector<double> p(s.size());
    double z = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) z += (p[i] = std::exp(s[i]));
    for (auto& v : p) v /= z;
    return p;
}

}  // namespace rssl::testing
