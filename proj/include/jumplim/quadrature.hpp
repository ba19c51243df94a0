#pragma once

#include <cmath>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "errors.hpp"

namespace jumplim {

inline constexpr double kQuadratureRelTol = 1e-10;

//! Adaptive Gauss-Kronrod integral of f over [a, b] (finite bounds).
template <class F>
double integrate_interval(F&& f, double a, double b, const std::string& what,
                          double rel_tol = kQuadratureRelTol) {
    if (!(b > a))
        return 0;
    double err = 0;
    double value = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(
        f, a, b, 20, rel_tol, &err);
    if (!std::isfinite(value))
        throw IntegrationError("non-finite integral over " + what);
    return value;
}

} // namespace jumplim
