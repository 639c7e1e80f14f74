#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ofdmid/sigmodel.hpp"
#include "ofdmid/starlink.hpp"

using namespace ofdmid;

TEST_CASE("parse_rational forms") {
    CHECK(parse_rational("1/750") == Rational(1, 750));
    CHECK(parse_rational("240000000") == Rational(240000000));
    CHECK(parse_rational("117187.5") == Rational(234375, 2));
    CHECK(parse_rational("-3e6") == Rational(-3000000));
    CHECK(parse_rational(" 68/15000000 ") == Rational(68, 15000000));
    CHECK(parse_rational("2.5/0.5") == Rational(5));
    CHECK_THROWS(parse_rational("abc"));
    CHECK_THROWS(parse_rational("1/0"));
    CHECK_THROWS(parse_rational(""));
}

TEST_CASE("format_rational round trip") {
    for (const Rational r : {Rational(1, 750), Rational(240000000), Rational(-17, 3750000), Rational(0)})
        CHECK(parse_rational(format_rational(r)) == r);
    CHECK(format_rational(Rational(68, 15000000)) == "17/3750000");
}

TEST_CASE("table values derive exactly") {
    const auto p = starlink::table2();
    CHECK(p.Fs == Rational(240000000));
    CHECK(p.N == 1024);
    CHECK(p.Ng == 32);
    CHECK(p.Tf == Rational(1, 750));
    CHECK(p.Tfg == Rational(68, 15000000));
    CHECK(p.Nsf == 302);
    CHECK(p.Nsfd == 298);
    const auto d = derive_params(p);
    CHECK(d.T == Rational(64, 15000000));
    CHECK(d.Tg == Rational(2, 15000000));
    CHECK(d.Tsym == Rational(44, 10000000));
    CHECK(d.F == Rational(234375));
    CHECK(d.Fdelta == Rational(250000000));
    CHECK(d.Fg == Rational(10000000));
}

TEST_CASE("frame timing is consistent") {
    const auto p = starlink::table2();
    const auto d = derive_params(p);
    // Nsf symbols plus the frame guard fill the frame exactly.
    CHECK(d.Tsym * Rational(p.Nsf) + p.Tfg == p.Tf);
}

TEST_CASE("channel centers") {
    CHECK(channel_center(1) == Rational(21650234375, 2));
    CHECK(channel_center(8) - channel_center(1) == Rational(1750000000));
    for (int i = 1; i < 8; ++i) CHECK(channel_center(i + 1) - channel_center(i) == Rational(250000000));
    CHECK_THROWS(channel_center(0));
    CHECK_THROWS(channel_center(9));
    const auto p = starlink::table2();
    REQUIRE(p.Fc.size() == 8);
    CHECK(p.Fc[3] == channel_center(4));
}

TEST_CASE("throughput and cfo bound") {
    CHECK(ofdm_throughput(2, 240e6, 1024, 32) == doctest::Approx(2 * 240e6 * 1024 / 1056.0));
    CHECK_THROWS(ofdm_throughput(0, 240e6, 1024, 32));
    // At the design point the bound stays under 0.02 for N = 1024.
    const double e = cfo_epsilon(1024, 10.0, 1024);
    CHECK(e == doctest::Approx(1024 / (2 * std::numbers::pi) * std::sqrt(6.0 / (10.0 * std::pow(1024.0, 3)))));
    CHECK(e < 0.02);
    CHECK(cfo_epsilon(2048, 10.0, 1024) == doctest::Approx(2 * e));
}

TEST_CASE("is_pow2") {
    CHECK(is_pow2(1));
    CHECK(is_pow2(1024));
    CHECK_FALSE(is_pow2(0));
    CHECK_FALSE(is_pow2(1000));
    CHECK_FALSE(is_pow2(-4));
}

TEST_CASE("validate rejects bad parameters") {
    auto p = starlink::table2();
    p.N = 1000;
    CHECK_THROWS(p.validate());
    p = starlink::table2();
    p.Ng = 33;
    CHECK_THROWS(p.validate());
    p = starlink::table2();
    p.Nsfd = 303;
    CHECK_THROWS(p.validate());
    p = starlink::table2();
    p.Fs = Rational(0);
    CHECK_THROWS(p.validate());
    p = starlink::table2();
    p.Tfg = Rational(-1, 1000);
    CHECK_THROWS(p.validate());
}

TEST_CASE("kv parsing") {
    const auto kv = parse_kv("a = 1\n# comment\n\nb=2/3 # trailing\n");
    CHECK(kv.at("a") == "1");
    CHECK(kv.at("b") == "2/3");
    CHECK_THROWS(parse_kv("no equals sign here"));
}

TEST_CASE("params kv round trip") {
    const auto p = starlink::table2();
    const auto q = params_from_kv(parse_kv(params_to_kv(p)));
    CHECK(q.Fs == p.Fs);
    CHECK(q.N == p.N);
    CHECK(q.Ng == p.Ng);
    CHECK(q.Tf == p.Tf);
    CHECK(q.Tfg == p.Tfg);
    CHECK(q.Nsf == p.Nsf);
    CHECK(q.Nsfd == p.Nsfd);
    CHECK(q.Fdelta == p.Fdelta);
    CHECK(q.Fc == p.Fc);
    auto kv = parse_kv(params_to_kv(p));
    kv.erase("Tf");
    CHECK_THROWS(params_from_kv(kv));
}
