#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hk {

// Spatial point, dimension d <= 3. Unused trailing components are zero.
struct Pt {
    std::array<double, 3> v{0.0, 0.0, 0.0};

    Pt() = default;
    Pt(double x0) { v[0] = x0; }
    Pt(double x0, double x1) { v[0] = x0; v[1] = x1; }
    Pt(double x0, double x1, double x2) { v[0] = x0; v[1] = x1; v[2] = x2; }

    double& operator[](int i) { return v[size_t(i)]; }
    double operator[](int i) const { return v[size_t(i)]; }

    Pt operator+(const Pt& o) const { return {v[0] + o.v[0], v[1] + o.v[1], v[2] + o.v[2]}; }
    Pt operator-(const Pt& o) const { return {v[0] - o.v[0], v[1] - o.v[1], v[2] - o.v[2]}; }
    Pt operator*(double c) const { return {v[0] * c, v[1] * c, v[2] * c}; }

    double dot(const Pt& o) const { return v[0] * o.v[0] + v[1] * o.v[1] + v[2] * o.v[2]; }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }
};

// Symmetric d x d matrix, d <= 3, stored dense row-major in a fixed buffer.
struct SymMat {
    int d = 2;
    std::array<double, 9> m{};

    static SymMat identity(int d, double scale = 1.0) {
        SymMat a;
        a.d = d;
        for (int i = 0; i < d; ++i) a(i, i) = scale;
        return a;
    }

    double& operator()(int i, int j) { return m[size_t(i * d + j)]; }
    double operator()(int i, int j) const { return m[size_t(i * d + j)]; }

    SymMat operator+(const SymMat& o) const {
        SymMat r = *this;
        for (int i = 0; i < d * d; ++i) r.m[size_t(i)] += o.m[size_t(i)];
        return r;
    }
    SymMat operator-(const SymMat& o) const {
        SymMat r = *this;
        for (int i = 0; i < d * d; ++i) r.m[size_t(i)] -= o.m[size_t(i)];
        return r;
    }
    SymMat operator*(double c) const {
        SymMat r = *this;
        for (int i = 0; i < d * d; ++i) r.m[size_t(i)] *= c;
        return r;
    }
};

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr double kPi = 3.14159265358979323846;

// splitmix64, used to derive independent per-worker RNG seeds from one master.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
    uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    splitmix64(s);
    return splitmix64(s);
}

}  // namespace hk
