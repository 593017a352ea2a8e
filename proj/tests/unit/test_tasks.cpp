#include "doctest.h"
#include "test_support.hpp"

#include "qrc/tasks.hpp"

#include <sstream>

using namespace qrc;

TEST_CASE("sine input") {
    const RVector s = sine_input(2000);
    CHECK(s[0] == doctest::Approx(0.1));
    CHECK(s.minCoeff() >= 0.0);
    CHECK(s.maxCoeff() <= 0.2);
    // second evaluation in long double
    const long double w = 2.0L * 3.14159265358979323846264338327950288L / 100.0L;
    const long double k = 25.0L;
    const long double v = 0.1L * (std::sin(w * 2.11L * k) * std::sin(w * 3.73L * k) * std::sin(w * 4.11L * k) + 1.0L);
    CHECK(std::abs(static_cast<long double>(s[25]) - v) < 1e-15L);
    CHECK_THROWS_AS(sine_input(0), InvariantError);
}

TEST_CASE("NARMA2 with zero input converges to its fixed point") {
    const RVector y = narma_targets(RVector::Zero(200), 2);
    const double fixed = (0.6 - std::sqrt(0.20)) / 0.8;
    CHECK(std::abs(y[99] - fixed) < 1e-10);
    CHECK(std::abs(y[199] - fixed) < 1e-12);
}

TEST_CASE("NARMA10 first two values") {
    const RVector y = narma_targets(RVector::Zero(5), 10);
    CHECK(y[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(y[1] == doctest::Approx(0.1305).epsilon(1e-14));
}

TEST_CASE("NARMA target k uses inputs up to k") {
    RVector s = RVector::Zero(6);
    s[3] = 0.5;
    const RVector y = narma_targets(s, 2);
    const RVector y0 = narma_targets(RVector::Zero(6), 2);
    for (int k = 0; k < 3; ++k)
        CHECK(y[k] == y0[k]);
    CHECK(y[3] != y0[3]);
    CHECK(y[3] == doctest::Approx(0.4 * y0[2] + 0.4 * y0[2] * y0[1] + 0.6 * 0.125 + 0.1));
}

TEST_CASE("NARMA on the sine input stays bounded and is deterministic") {
    const RVector s = sine_input(1000);
    for (int n : {2, 5, 10, 15, 20}) {
        const RVector y = narma_targets(s, n);
        CHECK(y.cwiseAbs().maxCoeff() < 1.0);
        CHECK(y == narma_targets(s, n));
    }
    CHECK_THROWS_AS(narma_targets(s, 1), InvariantError);
    CHECK_THROWS_AS(narma_targets(RVector::Constant(200, 3.0), 10), NumericalError);
}

TEST_CASE("random input sequences") {
    const RVector a = random_sequence(100000, 12);
    CHECK(std::abs(a.mean() - 0.5) < 0.005);
    CHECK(a.minCoeff() >= 0.0);
    CHECK(a.maxCoeff() < 1.0);
    CHECK(a == random_sequence(100000, 12));
    CHECK(a != random_sequence(100000, 13));
}

TEST_CASE("memory task targets") {
    const RVector s = (RVector(5) << 1, 2, 3, 4, 5).finished();
    const auto t0 = stm_targets(s, 0);
    CHECK(t0.offset == 0);
    CHECK(t0.values.col(0) == s);
    const auto t3 = stm_targets(s, 3);
    CHECK(t3.offset == 3);
    REQUIRE(t3.size() == 2);
    CHECK(t3.values(0, 0) == 1);
    CHECK(t3.values(1, 0) == 2);
    CHECK_THROWS_AS(stm_targets(s, 5), InvariantError);
    CHECK_THROWS_AS(stm_targets(s, -1), InvariantError);
}

TEST_CASE("index tags pass through target alignment") {
    // input value = step index, so an aligned target at step k must read k - delay
    const RVector tags = RVector::LinSpaced(300, 0, 299);
    for (int d : {0, 1, 17, 100}) {
        const auto t = stm_targets(tags, d);
        for (Eigen::Index i = 0; i < t.size(); i += 13)
            CHECK(t.values(i, 0) == static_cast<double>(t.offset + i - d));
    }
    RMatrix series(50, 2);
    series.col(0) = RVector::LinSpaced(50, 0, 49);
    series.col(1) = RVector::LinSpaced(50, 100, 149);
    for (int h : {1, 5, 45}) {
        const auto t = horizon_targets(series, h);
        CHECK(t.size() == 50 - h);
        for (Eigen::Index k = 0; k < t.size(); ++k) {
            CHECK(t.values(k, 0) == static_cast<double>(k + h));
            CHECK(t.values(k, 1) == static_cast<double>(100 + k + h));
        }
    }
}

TEST_CASE("weather fixture parses exactly") {
    const auto ws = load_weather_csv(std::string(QRC_TEST_DATA) + "/weather_fixture.csv");
    REQUIRE(ws.rows() == 5);
    CHECK(ws.dates.front() == "2013-01-01");
    CHECK(ws.values(0, 0) == 10.0);
    CHECK(ws.values(1, 1) == 92.0);
    CHECK(ws.values(2, 0) == 7.1666666666666670);
    CHECK(ws.values(3, 1) == 71.3333333333333300);
    CHECK(ws.values(4, 1) == 86.8333333333333300);
}

TEST_CASE("weather parsing errors") {
    try {
        parse_weather_csv("date,meantemp\n2013-01-01,3\n", "f.csv");
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("humidity") != std::string::npos);
    }
    try {
        parse_weather_csv("date,meantemp,humidity\n2013-01-01,3,4\n2013-01-02,x,5\n", "f.csv");
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("f.csv:3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_weather_csv("date,meantemp,humidity\n2013-01-02,1,2\n2013-01-01,1,2\n"), ConfigError);
    CHECK_THROWS_AS(parse_weather_csv(""), ConfigError);
    CHECK_THROWS_AS(load_weather_csv("/nonexistent/weather.csv"), ConfigError);
}

TEST_CASE("date formats") {
    CHECK(parse_day_number("1970-01-02") == 1);
    CHECK(parse_day_number("02-01-1970") == 1);
    CHECK(parse_day_number("2013/01/01") == parse_day_number("01/01/2013"));
    CHECK_THROWS_AS(parse_day_number("2013-02-30"), ConfigError);
    CHECK_THROWS_AS(parse_day_number("yesterday"), ConfigError);
}

TEST_CASE("min-max scaling") {
    const RMatrix fit_region = (RMatrix(3, 1) << 10, 20, 30).finished();
    const auto sc = MinMaxScaler::fit(fit_region);
    const RMatrix t = sc.transform(fit_region);
    CHECK(t(0, 0) == 0.0);
    CHECK(t(1, 0) == 0.5);
    CHECK(t(2, 0) == 1.0);
    CHECK(sc.transform((RMatrix(2, 1) << 45, -3).finished())(0, 0) == 1.0);
    CHECK(sc.transform((RMatrix(2, 1) << 45, -3).finished())(1, 0) == 0.0);
    const RMatrix inside = (RMatrix(4, 1) << 10.5, 13.25, 29.99, 17).finished();
    CHECK((sc.inverse(sc.transform(inside)) - inside).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(MinMaxScaler::fit(RMatrix::Ones(4, 1)), InvariantError);
}

TEST_CASE("weather split sizes") {
    CHECK(weather_split(1575, 1).test == 600);
    CHECK(weather_split(1575, 45).test == 556);
    CHECK(weather_split(1575, 1).washout == 374);
    CHECK_THROWS_AS(horizon_targets(RMatrix::Ones(100, 2), 0), InvariantError);
    CHECK_THROWS_AS(horizon_targets(RMatrix::Ones(100, 2), 46), InvariantError);
    CHECK_THROWS_AS(weather_split(900, 1), InvariantError);
}

TEST_CASE("split bookkeeping") {
    SplitSpec s{10, 400, 100};
    CHECK(s.total() == 510);
    CHECK_NOTHROW(s.validate(510));
    CHECK_THROWS_AS(s.validate(509), InvariantError);
}
