#include "mfff/stats.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include "mfff/error.hpp"

namespace mfff::stats {

double chi_square_sf(double x, double dof) {
  if (dof <= 0.0) return 1.0;
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

ChiSquare chi_square_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("chi_square_two_sample: size mismatch");
  double na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i];
    nb += b[i];
  }
  ChiSquare out;
  if (na == 0.0 || nb == 0.0) return out;
  int cats = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double row = a[i] + b[i];
    if (row == 0.0) continue;
    ++cats;
    const double ea = row * na / (na + nb), eb = row * nb / (na + nb);
    out.statistic += (a[i] - ea) * (a[i] - ea) / ea + (b[i] - eb) * (b[i] - eb) / eb;
  }
  out.dof = cats - 1;
  out.p_value = chi_square_sf(out.statistic, out.dof);
  return out;
}

ChiSquare chi_square_goodness(std::span<const double> observed, std::span<const double> expected,
                              int fitted_params) {
  if (observed.size() != expected.size()) throw InvalidArgument("chi_square_goodness: size mismatch");
  ChiSquare out;
  int cats = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] <= 0.0) {
      if (observed[i] > 0.0) throw InvalidArgument("chi_square_goodness: observation in a null category");
      continue;
    }
    ++cats;
    out.statistic += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
  }
  out.dof = cats - 1 - fitted_params;
  out.p_value = chi_square_sf(out.statistic, out.dof);
  return out;
}

}  // namespace mfff::stats
