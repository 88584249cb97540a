#pragma once

#include <string>
#include <vector>

#include "hk/common.hpp"

namespace hk {

// Uniform lattice covering [center - R, center + R]^d with step h, plus the
// time nodes shared by the kernel builders.  R/h must be integral.
struct SpaceTimeGrid {
    int d = 2;
    double h = 0.1;
    double R = 1.0;
    Pt center{};
    std::vector<double> time_nodes;  // strictly increasing, within [0, T]

    int per_axis = 0;   // 2*(R/h) + 1
    long n_points = 0;  // per_axis^d

    SpaceTimeGrid() = default;
    SpaceTimeGrid(int d_, double h_, double R_, Pt center_ = Pt{});

    void validate() const;

    Pt point(long idx) const;
    long index(const std::array<int, 3>& multi) const;
    std::array<int, 3> multi_index(long idx) const;

    // nearest lattice index to x (no bounds check)
    long nearest_index(const Pt& x) const;

    bool contains(const Pt& x) const;
};

enum class TableKind { Z0, Q, Z, P_N, P, ORACLE_FOURIER, ORACLE_MC };

std::string table_kind_name(TableKind k);

// Sampled two-point kernel K(t, x0; s, y) over the lattice in y for a fixed
// source (t, x0).  `values[i]` corresponds to grid.point(i).
struct KernelTable {
    SpaceTimeGrid grid;
    double t = 0.0;
    double s = 1.0;
    TableKind kind = TableKind::P;
    Pt source{};
    std::vector<double> values;

    double truncated_mass = 0.0;  // reported envelope tail outside the lattice
    bool warning = false;
    std::string warning_text;

    double min_value() const;
    double lattice_mass() const;  // trapezoid integral over the lattice

    // multilinear interpolation in y; throws DomainError outside the hull
    double interpolate(const Pt& y) const;

    void write_csv(const std::string& path) const;
    void write_meta_json(const std::string& path) const;
};

KernelTable read_table_csv(const std::string& csv_path);

// multilinear interpolation of an arbitrary nodal field on the lattice
double interpolate_field(const SpaceTimeGrid& g, const std::vector<double>& values, const Pt& y);

}  // namespace hk
