#include "ofdmid/sigmodel.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ofdmid {

namespace {

std::int64_t pow10(int e) {
    std::int64_t r = 1;
    for (int i = 0; i < e; ++i) r *= 10;
    return r;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

Rational parse_decimal(const std::string& s) {
    std::string mant = s;
    int exp = 0;
    const auto epos = s.find_first_of("eE");
    if (epos != std::string::npos) {
        mant = s.substr(0, epos);
        exp = std::stoi(s.substr(epos + 1));
    }
    bool neg = false;
    if (!mant.empty() && (mant[0] == '-' || mant[0] == '+')) {
        neg = mant[0] == '-';
        mant = mant.substr(1);
    }
    const auto dot = mant.find('.');
    std::string digits = mant;
    int frac = 0;
    if (dot != std::string::npos) {
        digits = mant.substr(0, dot) + mant.substr(dot + 1);
        frac = static_cast<int>(mant.size() - dot - 1);
    }
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
        throw std::invalid_argument("not a number: " + s);
    const std::int64_t v = std::stoll(digits);
    const int e = exp - frac;
    Rational r = e >= 0 ? Rational(v * pow10(e)) : Rational(v, pow10(-e));
    return neg ? -r : r;
}

}  // namespace

Rational parse_rational(const std::string& text) {
    const std::string s = trim(text);
    const auto slash = s.find('/');
    if (slash == std::string::npos) return parse_decimal(s);
    const Rational num = parse_decimal(s.substr(0, slash));
    const Rational den = parse_decimal(s.substr(slash + 1));
    if (den == Rational(0)) throw std::invalid_argument("zero denominator: " + s);
    return num / den;
}

std::string format_rational(const Rational& r) {
    if (r.denominator() == 1) return std::to_string(r.numerator());
    return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

bool is_pow2(long long n) { return n > 0 && (n & (n - 1)) == 0; }

void IndependentParams::validate() const {
    if (Fs <= Rational(0)) throw std::invalid_argument("Fs must be positive");
    if (!is_pow2(N)) throw std::invalid_argument("N must be a power of two");
    if (Ng < 0 || Ng >= N || Ng % 2 != 0) throw std::invalid_argument("Ng must be even, 0 <= Ng < N");
    if (Nsfd > Nsf) throw std::invalid_argument("Nsfd exceeds Nsf");
    if (Tfg < Rational(0)) throw std::invalid_argument("Tfg must be non-negative");
}

DerivedParams derive_params(const IndependentParams& ind) {
    ind.validate();
    DerivedParams d;
    d.T = Rational(ind.N) / ind.Fs;
    d.Tg = Rational(ind.Ng) / ind.Fs;
    d.Tsym = d.T + d.Tg;
    d.F = ind.Fs / Rational(ind.N);
    d.Fdelta = ind.Fdelta;
    d.Fg = ind.Fdelta > Rational(0) ? ind.Fdelta - ind.Fs : Rational(0);
    return d;
}

Rational channel_center(int i) {
    if (i < 1 || i > 8) throw std::out_of_range("channel index must be 1..8");
    const Rational F(234375);
    return Rational(10'700'000'000) + F / 2 + Rational(250'000'000) * (Rational(i) - Rational(1, 2));
}

double ofdm_throughput(int bs, double Fs, int N, int Ng) {
    if (bs < 1) throw std::invalid_argument("bs must be >= 1");
    return bs * Fs * N / static_cast<double>(N + Ng);
}

double cfo_epsilon(double N, double snr_linear, double Nsync) {
    return N / (2.0 * std::numbers::pi) * std::sqrt(6.0 / (snr_linear * Nsync * Nsync * Nsync));
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (!trim(line).empty()) throw std::invalid_argument("malformed config line: " + line);
            continue;
        }
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::string params_to_kv(const IndependentParams& p) {
    std::ostringstream o;
    o << "Fs=" << format_rational(p.Fs) << "\n"
      << "N=" << p.N << "\n"
      << "Ng=" << p.Ng << "\n"
      << "Tf=" << format_rational(p.Tf) << "\n"
      << "Tfg=" << format_rational(p.Tfg) << "\n"
      << "Nsf=" << p.Nsf << "\n"
      << "Nsfd=" << p.Nsfd << "\n"
      << "Fdelta=" << format_rational(p.Fdelta) << "\n";
    for (std::size_t i = 0; i < p.Fc.size(); ++i)
        o << "Fc" << (i + 1) << "=" << format_rational(p.Fc[i]) << "\n";
    return o.str();
}

IndependentParams params_from_kv(const std::map<std::string, std::string>& kv) {
    auto need = [&](const std::string& k) -> const std::string& {
        auto it = kv.find(k);
        if (it == kv.end()) throw std::invalid_argument("missing key: " + k);
        return it->second;
    };
    IndependentParams p;
    p.Fs = parse_rational(need("Fs"));
    p.N = std::stoi(need("N"));
    p.Ng = std::stoi(need("Ng"));
    p.Tf = parse_rational(need("Tf"));
    p.Tfg = parse_rational(need("Tfg"));
    p.Nsf = std::stoi(need("Nsf"));
    p.Nsfd = std::stoi(need("Nsfd"));
    if (auto it = kv.find("Fdelta"); it != kv.end()) p.Fdelta = parse_rational(it->second);
    for (int i = 1;; ++i) {
        auto it = kv.find("Fc" + std::to_string(i));
        if (it == kv.end()) break;
        p.Fc.push_back(parse_rational(it->second));
    }
    p.validate();
    return p;
}

}  // namespace ofdmid
