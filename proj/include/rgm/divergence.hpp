#pragma once

#include <cstddef>
#include <string>

#include "rgm/table.hpp"

namespace rgm {

/// Generator choice for all f-divergence machinery.
enum class FDivergence { KL, ChiSquared };

std::string divergence_name(FDivergence kind);
FDivergence divergence_from_name(const std::string& name);

/**
 * Generator f evaluated at x >= 0.
 *   KL:          f(x) = x log x, with f(0) = 0.
 *   ChiSquared:  f(x) = (x - 1)^2 / 2.
 * Throws std::invalid_argument for x < 0.
 */
double f_eval(FDivergence kind, double x);

/**
 * Convex conjugate f*(y) = sup_{x >= 0} (x y - f(x)).
 *   KL:          f*(y) = exp(y - 1).
 *   ChiSquared:  f*(y) = (y + 1)^2 / 2 - 1/2 for y >= -1, and -1/2 below,
 *                the exact conjugate of the generator restricted to x >= 0.
 * With these forms Fenchel-Young holds with equality at x = f*'(y).
 */
double f_star_eval(FDivergence kind, double y);

/**
 * Derivative of the conjugate; also the maximizing x in its definition.
 *   KL:          f*'(y) = exp(y - 1).
 *   ChiSquared:  f*'(y) = max(0, y + 1).
 */
double f_star_prime(FDivergence kind, double y);

/**
 * D_f(p || q) = sum_i q_i f(p_i / q_i) over two equal-shape nonnegative
 * tables. Entries with q_i = 0 contribute 0 when p_i = 0 and make the
 * divergence +infinity otherwise (returned as an actual infinity).
 */
double f_divergence(const Table& p, const Table& q, FDivergence kind);

/// Stable log(sum_i exp(y_i)); -infinity for an empty range.
double logsumexp(const double* y, std::size_t n);

/**
 * Restricted conjugate of the KL generator over the probability simplex:
 *   log E_q[exp(y)] = log sum_i q_i exp(y_i),
 * computed with a max shift over the support of q so large y do not
 * overflow. Entries with q_i = 0 are skipped entirely.
 */
double log_expectation_exp(const double* q, const double* y, std::size_t n);

/// Table overload of log_expectation_exp; shapes must match.
double log_expectation_exp(const Table& q, const Table& y);

}  // namespace rgm
