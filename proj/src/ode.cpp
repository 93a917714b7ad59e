#include "mvrds/ode.hpp"

#include <boost/numeric/odeint.hpp>

#include <vector>

namespace mvrds {

namespace odeint = boost::numeric::odeint;

namespace {
using State = std::vector<double>;
}

Vec integrate_ode(const OdeRhs& f, double t0, double t1, const Vec& y0, const OdeConfig& cfg) {
    if (t1 == t0) return y0;
    const long d = y0.size();
    State y(y0.data(), y0.data() + d);
    Vec yin(d), dy(d);
    auto rhs = [&](const State& s, State& ds, double t) {
        for (long i = 0; i < d; ++i) yin(i) = s[static_cast<std::size_t>(i)];
        f(t, yin, dy);
        for (long i = 0; i < d; ++i) ds[static_cast<std::size_t>(i)] = dy(i);
    };
    auto stepper = odeint::make_controlled(cfg.atol, cfg.rtol, odeint::runge_kutta_dopri5<State>());
    const double h0 = (t1 > t0 ? 1.0 : -1.0) * std::min(cfg.initial_step, std::abs(t1 - t0));
    odeint::integrate_adaptive(stepper, rhs, y, t0, t1, h0);
    return Eigen::Map<const Vec>(y.data(), d);
}

Mat integrate_ode_on_grid(const OdeRhs& f, const TimeGrid& grid, const Vec& y0, const OdeConfig& cfg) {
    Mat out(y0.size(), static_cast<long>(grid.size()));
    out.col(0) = y0;
    Vec y = y0;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        y = integrate_ode(f, grid[k], grid[k + 1], y, cfg);
        out.col(static_cast<long>(k) + 1) = y;
    }
    return out;
}

}  // namespace mvrds
