#pragma once

#include <cstddef>
#include <vector>

namespace topicrec {

double mean(const std::vector<double>& v);

// Sample standard deviation (n-1 denominator).
double sample_sd(const std::vector<double>& v);

// Regularized incomplete beta function I_x(a, b), continued-fraction
// evaluation (modified Lentz), absolute accuracy around 1e-14.
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided p-value of a Student-t statistic with df degrees of freedom:
// p = I_{df/(df+t^2)}(df/2, 1/2).
double student_t_two_sided_p(double t, double df);

}  // namespace topicrec
