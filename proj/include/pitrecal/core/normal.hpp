#pragma once

namespace pitrecal {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

// Standard normal CDF.
double normal_cdf(double z);

// Standard normal quantile (Wichura's AS 241, about 1e-16 relative accuracy).
// Returns -inf / +inf at p = 0 / 1; throws DomainError outside [0, 1].
double normal_quantile(double p);

inline double normal_log_pdf(double z) { return -0.5 * (z * z + kLogTwoPi); }

}  // namespace pitrecal
