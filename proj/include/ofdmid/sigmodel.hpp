#pragma once

#include <boost/rational.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ofdmid {

using Rational = boost::rational<std::int64_t>;

inline double to_double(const Rational& r) {
    return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

// "1/750", "240000000", "117187.5", "-3e6" (exponent only with integer mantissa)
Rational parse_rational(const std::string& text);
std::string format_rational(const Rational& r);

struct IndependentParams {
    Rational Fs;          // Hz
    int N = 0;
    int Ng = 0;
    Rational Tf;          // s
    Rational Tfg;         // s
    int Nsf = 0;
    int Nsfd = 0;
    Rational Fdelta;      // channel spacing, Hz (0 if unknown)
    std::vector<Rational> Fc;  // per-channel centers, Hz

    void validate() const;
};

struct DerivedParams {
    Rational T;
    Rational Tg;
    Rational Tsym;
    Rational F;
    Rational Fdelta;
    Rational Fg;
};

struct DesignBounds {
    double Td = 108e-9;
    double epsilon = 0.02;
    int Nsync = 1024;
    double snr = 10.0;
};

DerivedParams derive_params(const IndependentParams& ind);

// Table II channel plan, i in 1..8.
Rational channel_center(int i);

double ofdm_throughput(int bs, double Fs, int N, int Ng);

double cfo_epsilon(double N, double snr_linear, double Nsync);

bool is_pow2(long long n);

std::map<std::string, std::string> parse_kv(const std::string& text);
std::string params_to_kv(const IndependentParams& p);
IndependentParams params_from_kv(const std::map<std::string, std::string>& kv);

}  // namespace ofdmid
