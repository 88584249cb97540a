#include "hk/grid.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace hk {

using nlohmann::json;

SpaceTimeGrid::SpaceTimeGrid(int d_, double h_, double R_, Pt center_)
    : d(d_), h(h_), R(R_), center(center_) {
    const double ratio = R / h;
    const long half = std::lround(ratio);
    if (std::abs(ratio - double(half)) > 1e-9 * std::max(1.0, ratio))
        throw ConfigError("SpaceTimeGrid: R/h must be integral");
    per_axis = int(2 * half + 1);
    n_points = 1;
    for (int k = 0; k < d; ++k) n_points *= per_axis;
    validate();
}

void SpaceTimeGrid::validate() const {
    if (d < 1 || d > 3) throw ConfigError("SpaceTimeGrid: d must be in {1,2,3}");
    if (!(h > 0.0) || !(R > 0.0)) throw ConfigError("SpaceTimeGrid: h, R must be positive");
    for (size_t i = 1; i < time_nodes.size(); ++i)
        if (!(time_nodes[i] > time_nodes[i - 1]))
            throw ConfigError("SpaceTimeGrid: time nodes must be strictly increasing");
}

Pt SpaceTimeGrid::point(long idx) const {
    Pt p = center;
    long rem = idx;
    for (int k = d - 1; k >= 0; --k) {
        const long q = rem % per_axis;
        rem /= per_axis;
        p[k] += h * double(q) - R;
    }
    return p;
}

long SpaceTimeGrid::index(const std::array<int, 3>& multi) const {
    long idx = 0;
    for (int k = 0; k < d; ++k) idx = idx * per_axis + multi[size_t(k)];
    return idx;
}

std::array<int, 3> SpaceTimeGrid::multi_index(long idx) const {
    std::array<int, 3> m{0, 0, 0};
    long rem = idx;
    for (int k = d - 1; k >= 0; --k) {
        m[size_t(k)] = int(rem % per_axis);
        rem /= per_axis;
    }
    return m;
}

long SpaceTimeGrid::nearest_index(const Pt& x) const {
    std::array<int, 3> m{0, 0, 0};
    for (int k = 0; k < d; ++k) {
        long q = std::lround((x[k] - center[k] + R) / h);
        q = std::clamp(q, 0L, long(per_axis - 1));
        m[size_t(k)] = int(q);
    }
    return index(m);
}

bool SpaceTimeGrid::contains(const Pt& x) const {
    for (int k = 0; k < d; ++k)
        if (x[k] < center[k] - R - 1e-12 || x[k] > center[k] + R + 1e-12) return false;
    return true;
}

std::string table_kind_name(TableKind k) {
    switch (k) {
        case TableKind::Z0: return "Z0";
        case TableKind::Q: return "Q";
        case TableKind::Z: return "Z";
        case TableKind::P_N: return "P_N";
        case TableKind::P: return "P";
        case TableKind::ORACLE_FOURIER: return "ORACLE_FOURIER";
        case TableKind::ORACLE_MC: return "ORACLE_MC";
    }
    return "?";
}

namespace {
TableKind kind_from_name(const std::string& s) {
    for (TableKind k : {TableKind::Z0, TableKind::Q, TableKind::Z, TableKind::P_N, TableKind::P,
                        TableKind::ORACLE_FOURIER, TableKind::ORACLE_MC})
        if (table_kind_name(k) == s) return k;
    throw ConfigError("unknown table kind: " + s);
}
}  // namespace

double KernelTable::min_value() const {
    double m = values.empty() ? 0.0 : values[0];
    for (double v : values) m = std::min(m, v);
    return m;
}

double KernelTable::lattice_mass() const {
    double cell = 1.0;
    for (int k = 0; k < grid.d; ++k) cell *= grid.h;
    double s0 = 0.0;
    for (double v : values) s0 += v;
    return s0 * cell;
}

double interpolate_field(const SpaceTimeGrid& g, const std::vector<double>& values, const Pt& y) {
    std::array<int, 3> base{0, 0, 0};
    std::array<double, 3> frac{0.0, 0.0, 0.0};
    for (int k = 0; k < g.d; ++k) {
        const double u = (y[k] - g.center[k] + g.R) / g.h;
        if (u < -1e-9 || u > double(g.per_axis - 1) + 1e-9)
            throw DomainError("interpolate: point outside lattice hull");
        double fl = std::floor(u);
        if (fl > double(g.per_axis - 2)) fl = double(g.per_axis - 2);
        if (fl < 0.0) fl = 0.0;
        base[size_t(k)] = int(fl);
        frac[size_t(k)] = u - fl;
    }
    double acc = 0.0;
    const int corners = 1 << g.d;
    for (int c = 0; c < corners; ++c) {
        std::array<int, 3> m = base;
        double wgt = 1.0;
        for (int k = 0; k < g.d; ++k) {
            if (c & (1 << k)) {
                m[size_t(k)] += 1;
                wgt *= frac[size_t(k)];
            } else {
                wgt *= 1.0 - frac[size_t(k)];
            }
        }
        acc += wgt * values[size_t(g.index(m))];
    }
    return acc;
}

double KernelTable::interpolate(const Pt& y) const { return interpolate_field(grid, values, y); }

void KernelTable::write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open " + path);
    os.precision(17);
    for (int k = 0; k < grid.d; ++k) os << "x" << k + 1 << ",";
    for (int k = 0; k < grid.d; ++k) os << "y" << k + 1 << ",";
    os << "value\n";
    for (long i = 0; i < grid.n_points; ++i) {
        const Pt y = grid.point(i);
        for (int k = 0; k < grid.d; ++k) os << source[k] << ",";
        for (int k = 0; k < grid.d; ++k) os << y[k] << ",";
        os << values[size_t(i)] << "\n";
    }
}

void KernelTable::write_meta_json(const std::string& path) const {
    json j;
    j["kind"] = table_kind_name(kind);
    j["t"] = t;
    j["s"] = s;
    j["grid"] = {{"d", grid.d},
                 {"h", grid.h},
                 {"R", grid.R},
                 {"center", {grid.center[0], grid.center[1], grid.center[2]}}};
    j["source"] = {source[0], source[1], source[2]};
    j["truncated_mass"] = truncated_mass;
    j["warning"] = warning;
    j["warning_text"] = warning_text;
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open " + path);
    os << j.dump(2) << "\n";
}

KernelTable read_table_csv(const std::string& csv_path) {
    // expects the sidecar json next to the csv: foo.csv -> foo.json
    std::string meta_path = csv_path;
    const auto dot = meta_path.rfind('.');
    if (dot != std::string::npos) meta_path = meta_path.substr(0, dot);
    meta_path += ".json";

    std::ifstream ms(meta_path);
    if (!ms) throw ConfigError("missing table metadata: " + meta_path);
    json j;
    ms >> j;

    KernelTable tab;
    tab.kind = kind_from_name(j.at("kind").get<std::string>());
    tab.t = j.at("t").get<double>();
    tab.s = j.at("s").get<double>();
    const auto& gj = j.at("grid");
    Pt center;
    for (int k = 0; k < 3; ++k) center[k] = gj.at("center")[size_t(k)].get<double>();
    tab.grid = SpaceTimeGrid(gj.at("d").get<int>(), gj.at("h").get<double>(),
                             gj.at("R").get<double>(), center);
    for (int k = 0; k < 3; ++k) tab.source[k] = j.at("source")[size_t(k)].get<double>();
    tab.truncated_mass = j.value("truncated_mass", 0.0);

    std::ifstream cs(csv_path);
    if (!cs) throw ConfigError("cannot open " + csv_path);
    std::string line;
    std::getline(cs, line);  // header
    tab.values.assign(size_t(tab.grid.n_points), 0.0);
    long row = 0;
    while (std::getline(cs, line) && row < tab.grid.n_points) {
        const auto last = line.rfind(',');
        tab.values[size_t(row)] = std::stod(line.substr(last + 1));
        ++row;
    }
    if (row != tab.grid.n_points) throw ConfigError("table csv truncated: " + csv_path);
    return tab;
}

}  // namespace hk
