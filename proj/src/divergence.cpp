#include "rgm/divergence.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace rgm {

std::string divergence_name(FDivergence kind) {
    switch (kind) {
        case FDivergence::KL: return "kl";
        case FDivergence::ChiSquared: return "chi2";
    }
    throw std::invalid_argument("divergence_name: unknown kind");
}

FDivergence divergence_from_name(const std::string& name) {
    if (name == "kl") return FDivergence::KL;
    if (name == "chi2") return FDivergence::ChiSquared;
    throw std::invalid_argument("divergence_from_name: unknown divergence '" + name + "'");
}

double f_eval(FDivergence kind, double x) {
    if (x < 0.0) throw std::invalid_argument("f_eval: generator domain is x >= 0");
    switch (kind) {
        case FDivergence::KL:
            return x == 0.0 ? 0.0 : x * std::log(x);
        case FDivergence::ChiSquared:
            return 0.5 * (x - 1.0) * (x - 1.0);
    }
    throw std::invalid_argument("f_eval: unknown kind");
}

double f_star_eval(FDivergence kind, double y) {
    switch (kind) {
        case FDivergence::KL:
            return std::exp(y - 1.0);
        case FDivergence::ChiSquared:
            // sup over x >= 0 lands at x = y+1 when that is nonnegative and
            // at the boundary x = 0 (value -f(0) = -1/2) otherwise.
            if (y >= -1.0) return 0.5 * (y + 1.0) * (y + 1.0) - 0.5;
            return -0.5;
    }
    throw std::invalid_argument("f_star_eval: unknown kind");
}

double f_star_prime(FDivergence kind, double y) {
    switch (kind) {
        case FDivergence::KL:
            return std::exp(y - 1.0);
        case FDivergence::ChiSquared:
            return y + 1.0 > 0.0 ? y + 1.0 : 0.0;
    }
    throw std::invalid_argument("f_star_prime: unknown kind");
}

double f_divergence(const Table& p, const Table& q, FDivergence kind) {
    if (!p.same_shape(q)) throw std::invalid_argument("f_divergence: shape mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        double pi = p.data[i];
        double qi = q.data[i];
        if (pi < 0.0 || qi < 0.0)
            throw std::invalid_argument("f_divergence: inputs must be nonnegative");
        if (qi == 0.0) {
            if (pi == 0.0) continue;
            return std::numeric_limits<double>::infinity();
        }
        total += qi * f_eval(kind, pi / qi);
    }
    return total;
}

double logsumexp(const double* y, std::size_t n) {
    if (n == 0) return -std::numeric_limits<double>::infinity();
    double m = y[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, y[i]);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::exp(y[i] - m);
    return m + std::log(acc);
}

double log_expectation_exp(const double* q, const double* y, std::size_t n) {
    // Max shift over the support of q only; a huge y on a zero-mass entry
    // must not poison the result.
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if (q[i] > 0.0 && y[i] > m) m = y[i];
    }
    if (m == -std::numeric_limits<double>::infinity())
        throw std::invalid_argument("log_expectation_exp: weight vector has no support");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (q[i] > 0.0) acc += q[i] * std::exp(y[i] - m);
    }
    return m + std::log(acc);
}

double log_expectation_exp(const Table& q, const Table& y) {
    if (!q.same_shape(y)) throw std::invalid_argument("log_expectation_exp: shape mismatch");
    return log_expectation_exp(q.data.data(), y.data.data(), q.data.size());
}

}  // namespace rgm
