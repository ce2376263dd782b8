#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pnpk {

using Index = std::int32_t;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Vec2& operator+=(Vec2 o) noexcept { x += o.x; y += o.y; return *this; }
    constexpr Vec2& operator-=(Vec2 o) noexcept { x -= o.x; y -= o.y; return *this; }
    constexpr Vec2& operator*=(double s) noexcept { x *= s; y *= s; return *this; }
};

constexpr Vec2 operator+(Vec2 a, Vec2 b) noexcept { return {a.x + b.x, a.y + b.y}; }
constexpr Vec2 operator-(Vec2 a, Vec2 b) noexcept { return {a.x - b.x, a.y - b.y}; }
constexpr Vec2 operator-(Vec2 a) noexcept { return {-a.x, -a.y}; }
constexpr Vec2 operator*(double s, Vec2 a) noexcept { return {s * a.x, s * a.y}; }
constexpr Vec2 operator*(Vec2 a, double s) noexcept { return {s * a.x, s * a.y}; }
constexpr double dot(Vec2 a, Vec2 b) noexcept { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) noexcept { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) noexcept { return std::hypot(a.x, a.y); }

/// Row-major 2x2 matrix; used for velocity gradients and strain tensors.
struct Mat2 {
    double a[2][2] = {{0.0, 0.0}, {0.0, 0.0}};

    constexpr Vec2 apply(Vec2 v) const noexcept {
        return {a[0][0] * v.x + a[0][1] * v.y, a[1][0] * v.x + a[1][1] * v.y};
    }
    constexpr Mat2 sym() const noexcept {
        Mat2 s;
        s.a[0][0] = a[0][0];
        s.a[1][1] = a[1][1];
        s.a[0][1] = s.a[1][0] = 0.5 * (a[0][1] + a[1][0]);
        return s;
    }
    constexpr double trace() const noexcept { return a[0][0] + a[1][1]; }
};

constexpr Mat2 operator+(const Mat2& p, const Mat2& q) noexcept {
    Mat2 r;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) r.a[i][j] = p.a[i][j] + q.a[i][j];
    return r;
}
constexpr Mat2 operator*(double s, const Mat2& p) noexcept {
    Mat2 r;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) r.a[i][j] = s * p.a[i][j];
    return r;
}
/// Frobenius product A:B.
constexpr double ddot(const Mat2& p, const Mat2& q) noexcept {
    double s = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) s += p.a[i][j] * q.a[i][j];
    return s;
}
/// Outer product v ⊗ n.
constexpr Mat2 outer(Vec2 v, Vec2 n) noexcept {
    Mat2 r;
    r.a[0][0] = v.x * n.x;
    r.a[0][1] = v.x * n.y;
    r.a[1][0] = v.y * n.x;
    r.a[1][1] = v.y * n.y;
    return r;
}

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericDomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised when e^eta would overflow; Newton damping reacts by shrinking the step.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConvergenceFailure : public std::runtime_error {
public:
    ConvergenceFailure(const std::string& what, std::vector<double> history)
        : std::runtime_error(what), residual_history(std::move(history)) {}

    std::vector<double> residual_history;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

} // namespace pnpk
