#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace gcscore::dist {

inline double norm_cdf(double x) {
  return boost::math::cdf(boost::math::normal_distribution<double>(), x);
}

// Upper tail, accurate far out where 1 - cdf would cancel.
inline double norm_sf(double x) {
  return boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), x));
}

inline double norm_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double chisq1_sf(double x) {
  if (x <= 0.0) return 1.0;
  return boost::math::cdf(
      boost::math::complement(boost::math::chi_squared_distribution<double>(1.0), x));
}

inline double chisq1_quantile(double p) {
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(1.0), p);
}

}  // namespace gcscore::dist
