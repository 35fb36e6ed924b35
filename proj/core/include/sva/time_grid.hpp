#pragma once

#include <cstddef>

namespace sva {

/// Uniform discretization of [0, T].
class TimeGrid {
  public:
    /// Throws ConfigError unless T > 0, dt > 0, T/dt is an integer to 1e-12
    /// relative, and the grid has at least two steps.
    TimeGrid(double horizon, double dt);

    [[nodiscard]] double horizon() const noexcept { return horizon_; }
    [[nodiscard]] double dt() const noexcept { return dt_; }
    [[nodiscard]] std::size_t n_steps() const noexcept { return n_steps_; }
    [[nodiscard]] std::size_t n_nodes() const noexcept { return n_steps_ + 1; }

    /// Time of node i, exact at both ends.
    [[nodiscard]] double time(std::size_t i) const noexcept {
        return i == n_steps_ ? horizon_ : static_cast<double>(i) * dt_;
    }

    /// Locates t in the grid: node index i and fraction w in [0,1) with
    /// t = (1-w) t_i + w t_{i+1}. Throws ConfigError if t is outside [0,T].
    struct Location {
        std::size_t index;
        double weight;
    };
    [[nodiscard]] Location locate(double t) const;

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

  private:
    double horizon_;
    double dt_;
    std::size_t n_steps_;
};

}  // namespace sva
