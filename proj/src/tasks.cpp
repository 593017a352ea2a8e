#include "qrc/tasks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace qrc {

void SplitSpec::validate(Eigen::Index length) const {
    if (washout < 0 || train < 0 || test < 0)
        throw InvariantError("split lengths must be non-negative");
    if (total() > length)
        throw InvariantError("split needs " + std::to_string(total()) + " steps but the series has " +
                             std::to_string(length));
}

RVector sine_input(Eigen::Index length, const SineParams& p) {
    if (length <= 0)
        throw InvariantError("sine_input: length must be positive");
    if (p.period == 0.0)
        throw InvariantError("sine_input: period must be non-zero");
    RVector s(length);
    const double w = 2.0 * M_PI / p.period;
    for (Eigen::Index k = 0; k < length; ++k) {
        const auto kk = static_cast<double>(k);
        s[k] = 0.1 * (std::sin(w * p.alpha * kk) * std::sin(w * p.beta * kk) * std::sin(w * p.gamma * kk) + 1.0);
    }
    return s;
}

RVector narma_targets(std::span<const double> s, int order) {
    if (order < 2)
        throw InvariantError("narma_targets: order must be at least 2");
    const auto len = static_cast<Eigen::Index>(s.size());
    // y[k] = y_k, with y_0 = 0 and zero pre-history
    std::vector<double> y(s.size() + 1, 0.0);
    RVector out(len);
    auto past = [&](Eigen::Index k) { return k >= 0 ? y[static_cast<std::size_t>(k)] : 0.0; };
    auto input = [&](Eigen::Index k) { return k >= 0 ? s[static_cast<std::size_t>(k)] : 0.0; };
    for (Eigen::Index k = 0; k < len; ++k) {
        const double yk = past(k);
        double next;
        if (order == 2) {
            next = 0.4 * yk + 0.4 * yk * past(k - 1) + 0.6 * std::pow(input(k), 3) + 0.1;
        } else {
            double sum = 0.0;
            for (int i = 0; i < order; ++i)
                sum += past(k - i);
            next = 0.3 * yk + 0.05 * yk * sum + 1.5 * input(k - order + 1) * input(k) + 0.1;
        }
        if (!std::isfinite(next) || std::abs(next) > kNarmaDivergence)
            throw NumericalError("NARMA" + std::to_string(order) + " diverged at step " + std::to_string(k + 1) +
                                 " (|y| > 1e3); check the input range");
        y[static_cast<std::size_t>(k + 1)] = next;
        out[k] = next;
    }
    return out;
}

RVector narma_targets(const RVector& inputs, int order) {
    return narma_targets(std::span<const double>(inputs.data(), static_cast<std::size_t>(inputs.size())), order);
}

RVector random_sequence(Eigen::Index length, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RVector s(length);
    for (Eigen::Index k = 0; k < length; ++k)
        s[k] = u(rng);
    return s;
}

TargetSeries stm_targets(const RVector& inputs, int delay) {
    if (delay < 0)
        throw InvariantError("stm_targets: delay must be non-negative");
    if (delay >= inputs.size())
        throw InvariantError("stm_targets: delay " + std::to_string(delay) + " is not shorter than the series");
    TargetSeries t;
    t.offset = delay;
    t.values = inputs.head(inputs.size() - delay);
    return t;
}

long parse_day_number(const std::string& date) {
    int a = 0, b = 0, c = 0;
    char s1 = 0, s2 = 0;
    std::istringstream in(date);
    if (!(in >> a >> s1 >> b >> s2 >> c) || s1 != s2 || (s1 != '-' && s1 != '/'))
        throw ConfigError("unrecognized date '" + date + "'");
    std::string rest;
    if (in >> rest)
        throw ConfigError("unrecognized date '" + date + "'");
    int y, m, d;
    const auto first_len = date.find(s1);
    if (first_len == 4) {
        y = a, m = b, d = c;
    } else {
        d = a, m = b, y = c;
    }
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok())
        throw ConfigError("invalid calendar date '" + date + "'");
    return sys_days(ymd).time_since_epoch().count();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ','))
        out.push_back(cell);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    for (auto& c : out) {
        c.erase(0, c.find_first_not_of(" \t\r\""));
        const auto end = c.find_last_not_of(" \t\r\"");
        c.erase(end == std::string::npos ? 0 : end + 1);
    }
    return out;
}

} // namespace

WeatherSeries parse_weather_csv(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw ConfigError(source + ": empty file");
    const auto header = split_csv_line(line);
    auto find = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw ConfigError(source + ": missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_date = find("date"), c_temp = find("meantemp"), c_hum = find("humidity");
    const std::size_t needed = std::max({c_date, c_temp, c_hum}) + 1;

    WeatherSeries ws;
    std::vector<double> temp, hum;
    long last_day = 0;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const auto cells = split_csv_line(line);
        const std::string where = source + ":" + std::to_string(line_no);
        if (cells.size() < needed)
            throw ConfigError(where + ": expected at least " + std::to_string(needed) + " fields");
        long day;
        double t, h;
        try {
            day = parse_day_number(cells[c_date]);
            std::size_t pt = 0, ph = 0;
            t = std::stod(cells[c_temp], &pt);
            h = std::stod(cells[c_hum], &ph);
            if (pt != cells[c_temp].size() || ph != cells[c_hum].size())
                throw std::invalid_argument("trailing characters");
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        } catch (const std::exception&) {
            throw ConfigError(where + ": cannot parse numeric field");
        }
        if (!std::isfinite(t) || !std::isfinite(h))
            throw ConfigError(where + ": non-finite value");
        if (!ws.dates.empty() && day <= last_day)
            throw ConfigError(where + ": date '" + cells[c_date] + "' is not after the previous row");
        last_day = day;
        ws.dates.push_back(cells[c_date]);
        temp.push_back(t);
        hum.push_back(h);
    }
    ws.values.resize(static_cast<Eigen::Index>(temp.size()), 2);
    for (std::size_t i = 0; i < temp.size(); ++i) {
        ws.values(static_cast<Eigen::Index>(i), 0) = temp[i];
        ws.values(static_cast<Eigen::Index>(i), 1) = hum[i];
    }
    return ws;
}

WeatherSeries load_weather_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw ConfigError("cannot open weather file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_weather_csv(ss.str(), path);
}

MinMaxScaler MinMaxScaler::fit(const RMatrix& data) {
    if (data.rows() < 1)
        throw InvariantError("MinMaxScaler: empty fit region");
    MinMaxScaler s;
    s.lo_ = data.colwise().minCoeff().transpose();
    s.hi_ = data.colwise().maxCoeff().transpose();
    for (Eigen::Index c = 0; c < data.cols(); ++c)
        if (!(s.hi_[c] > s.lo_[c]))
            throw InvariantError("MinMaxScaler: column " + std::to_string(c) + " is constant on the fit region");
    return s;
}

RMatrix MinMaxScaler::transform(const RMatrix& data) const {
    if (data.cols() != lo_.size())
        throw DimensionError("MinMaxScaler: column count mismatch");
    RMatrix out(data.rows(), data.cols());
    for (Eigen::Index c = 0; c < data.cols(); ++c)
        out.col(c) = ((data.col(c).array() - lo_[c]) / (hi_[c] - lo_[c])).cwiseMax(0.0).cwiseMin(1.0);
    return out;
}

RVector MinMaxScaler::transform(const RVector& column) const { return transform(RMatrix(column)).col(0); }

RMatrix MinMaxScaler::inverse(const RMatrix& normalized) const {
    if (normalized.cols() != lo_.size())
        throw DimensionError("MinMaxScaler: column count mismatch");
    RMatrix out(normalized.rows(), normalized.cols());
    for (Eigen::Index c = 0; c < normalized.cols(); ++c)
        out.col(c) = normalized.col(c).array() * (hi_[c] - lo_[c]) + lo_[c];
    return out;
}

TargetSeries horizon_targets(const RMatrix& series, int horizon, int max_horizon) {
    if (horizon < 1 || horizon > max_horizon)
        throw InvariantError("horizon " + std::to_string(horizon) + " outside [1, " + std::to_string(max_horizon) +
                             "]");
    if (horizon >= series.rows())
        throw InvariantError("horizon " + std::to_string(horizon) + " exceeds the series length");
    TargetSeries t;
    t.offset = 0;
    t.values = series.bottomRows(series.rows() - horizon);
    return t;
}

SplitSpec weather_split(Eigen::Index length, int horizon) {
    SplitSpec s;
    s.washout = 374;
    s.train = 600;
    s.test = length - s.washout - s.train - horizon;
    if (s.test <= 0)
        throw InvariantError("weather series of " + std::to_string(length) + " rows is too short for horizon " +
                             std::to_string(horizon));
    return s;
}

} // namespace qrc
