#pragma once

#include "mvrds/time_grid.hpp"
#include "mvrds/types.hpp"

#include <functional>

namespace mvrds {

/// Right-hand side f(t, y, dy/dt).
using OdeRhs = std::function<void(double, const Vec&, Vec&)>;

struct OdeConfig {
    double atol = 1e-12;
    double rtol = 1e-12;
    double initial_step = 1e-3;
};

/// Adaptive Dormand-Prince 5(4) integration from t0 to t1.
Vec integrate_ode(const OdeRhs& f, double t0, double t1, const Vec& y0, const OdeConfig& cfg = {});
/// Values at every point of `grid`, starting from y0 at grid.front().
Mat integrate_ode_on_grid(const OdeRhs& f, const TimeGrid& grid, const Vec& y0, const OdeConfig& cfg = {});

}  // namespace mvrds
