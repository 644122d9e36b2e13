#pragma once

#include <compare>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace vbodmr {

/// Spin projection quantum number stored as twice its value, so that
/// -3/2, -1, 0, 1/2 ... are all exact.
class HalfInt {
public:
    constexpr HalfInt() = default;
    static constexpr HalfInt from_twice(int twice) { HalfInt h; h.twice_ = twice; return h; }
    static constexpr HalfInt from_int(int v) { return from_twice(2 * v); }

    constexpr int twice() const { return twice_; }
    constexpr double value() const { return 0.5 * twice_; }
    constexpr bool is_integer() const { return twice_ % 2 == 0; }

    constexpr HalfInt operator-() const { return from_twice(-twice_); }
    constexpr HalfInt operator+(HalfInt o) const { return from_twice(twice_ + o.twice_); }
    constexpr HalfInt operator-(HalfInt o) const { return from_twice(twice_ - o.twice_); }
    constexpr auto operator<=>(const HalfInt&) const = default;

    /// "-3/2", "1", "0", "1/2"
    std::string str() const {
        if (is_integer()) return std::to_string(twice_ / 2);
        return std::to_string(twice_) + "/2";
    }

    /// Accepts "3/2", "-1/2", "1", "-1.5", "+0.5".
    static HalfInt parse(const std::string& s) {
        auto slash = s.find('/');
        if (slash != std::string::npos) {
            if (s.substr(slash + 1) != "2") throw std::invalid_argument("bad half-integer: " + s);
            return from_twice(std::stoi(s.substr(0, slash)));
        }
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("bad half-integer: " + s);
        double t = 2.0 * v;
        int ti = static_cast<int>(t >= 0 ? t + 0.5 : t - 0.5);
        if (std::abs(t - ti) > 1e-9) throw std::invalid_argument("not a half-integer: " + s);
        return from_twice(ti);
    }

private:
    int twice_ = 0;
};

/// Iterative numerical procedure failed to reach its tolerance.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Physical model applied outside its validity domain.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace detail

}  // namespace vbodmr
