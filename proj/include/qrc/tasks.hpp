#pragma once

// Benchmark inputs and targets, and the weather dataset.

#include "qrc/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qrc {

/// Row i of `values` belongs to input step `offset + i`.
struct TargetSeries {
    RMatrix values;
    Eigen::Index offset = 0;

    Eigen::Index size() const { return values.rows(); }
};

struct SplitSpec {
    Eigen::Index washout = 0;
    Eigen::Index train = 0;
    Eigen::Index test = 0;

    Eigen::Index total() const { return washout + train + test; }
    /// Throws InvariantError for negative parts or a sum beyond `length`.
    void validate(Eigen::Index length) const;
};

struct SineParams {
    double alpha = 2.11;
    double beta = 3.73;
    double gamma = 4.11;
    double period = 100.0;
};

/// s_k = 0.1 [sin(2 pi a k/T) sin(2 pi b k/T) sin(2 pi c k/T) + 1], k = 0 .. length-1.
RVector sine_input(Eigen::Index length, const SineParams& params = {});

inline constexpr double kNarmaDivergence = 1e3;

/// Target k is y_{k+1}, the output of the order-n recurrence driven by s_0 .. s_k
/// from an all-zero pre-history. n = 2 is the cubic NARMA2 variant.
/// Throws NumericalError when |y| exceeds 1e3.
RVector narma_targets(std::span<const double> inputs, int order);
RVector narma_targets(const RVector& inputs, int order);

/// Uniform i.i.d. values in [0, 1).
RVector random_sequence(Eigen::Index length, std::uint64_t seed);

/// y_k = s_{k - t_d} for k >= t_d (offset t_d).
TargetSeries stm_targets(const RVector& inputs, int delay);

struct WeatherSeries {
    std::vector<std::string> dates;
    RMatrix values;   ///< columns meantemp, humidity

    Eigen::Index rows() const { return values.rows(); }
};

/// Accepts YYYY-MM-DD and DD-MM-YYYY dates; extra columns are ignored.
WeatherSeries load_weather_csv(const std::string& path);
WeatherSeries parse_weather_csv(const std::string& text, const std::string& source = "<memory>");

/// Days since 1970-01-01 for an ISO or d-m-Y date; throws ConfigError otherwise.
long parse_day_number(const std::string& date);

/// Per-column min-max map with bounds taken from a fit region; values outside
/// are clipped to [0, 1].
class MinMaxScaler {
public:
    MinMaxScaler() = default;
    /// Throws InvariantError on a constant column.
    static MinMaxScaler fit(const RMatrix& data);

    RMatrix transform(const RMatrix& data) const;
    RVector transform(const RVector& column) const;
    RMatrix inverse(const RMatrix& normalized) const;

    const RVector& lower() const { return lo_; }
    const RVector& upper() const { return hi_; }

private:
    RVector lo_;
    RVector hi_;
};

inline constexpr int kDefaultMaxHorizon = 45;

/// Row k is the raw value at step k + h, so the last h steps have no target.
TargetSeries horizon_targets(const RMatrix& series, int horizon, int max_horizon = kDefaultMaxHorizon);

/// 374 washout, 600 train and the remainder as test, less the horizon.
SplitSpec weather_split(Eigen::Index length, int horizon);

} // namespace qrc
