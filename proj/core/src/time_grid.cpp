#include "sva/time_grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sva/error.hpp"

namespace sva {

TimeGrid::TimeGrid(double horizon, double dt) : horizon_(horizon), dt_(dt), n_steps_(0) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw ConfigError("time grid: horizon must be positive");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("time grid: dt must be positive");
    const double ratio = horizon / dt;
    const double steps = std::round(ratio);
    if (std::abs(steps * dt - horizon) > 1e-12 * horizon) {
        std::ostringstream msg;
        msg << "time grid: dt = " << dt << " does not divide T = " << horizon;
        throw ConfigError(msg.str());
    }
    if (steps < 2) throw ConfigError("time grid: need at least two steps");
    n_steps_ = static_cast<std::size_t>(steps);
    dt_ = horizon_ / static_cast<double>(n_steps_);
}

TimeGrid::Location TimeGrid::locate(double t) const {
    const double slack = 1e-12 * horizon_;
    if (!(t >= -slack && t <= horizon_ + slack)) {
        std::ostringstream msg;
        msg << "time " << t << " outside [0, " << horizon_ << "]";
        throw ConfigError(msg.str());
    }
    const double s = std::clamp(t / dt_, 0.0, static_cast<double>(n_steps_));
    const double node = std::round(s);
    // Snap times that sit on a node up to rounding.
    if (std::abs(s - node) < 1e-9) return {static_cast<std::size_t>(node), 0.0};
    auto i = static_cast<std::size_t>(std::floor(s));
    if (i >= n_steps_) return {n_steps_, 0.0};
    return {i, s - static_cast<double>(i)};
}

}  // namespace sva
