#include "hk/convolve.hpp"

#include <fftw3.h>

#include <cstring>
#include <mutex>

namespace hk {

namespace {
std::mutex g_fftw_mutex;  // FFTW planning is not thread-safe
}

struct LatticeFft::Impl {
    int d, n, L;
    long padded = 1;
    fftw_plan fwd = nullptr, bwd = nullptr;
    fftw_complex* buf = nullptr;

    Impl(int d_, int n_) : d(d_), n(n_), L(2 * n_) {
        for (int k = 0; k < d; ++k) padded *= L;
        std::lock_guard<std::mutex> lk(g_fftw_mutex);
        buf = fftw_alloc_complex(size_t(padded));
        int dims[3] = {L, L, L};
        fwd = fftw_plan_dft(d, dims, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd = fftw_plan_dft(d, dims, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~Impl() {
        std::lock_guard<std::mutex> lk(g_fftw_mutex);
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(bwd);
        fftw_free(buf);
    }

    long pad_index(const std::array<int, 3>& m) const {
        long idx = 0;
        for (int k = 0; k < d; ++k) idx = idx * L + m[size_t(k)];
        return idx;
    }
};

LatticeFft::LatticeFft(int d, int n) : impl_(std::make_unique<Impl>(d, n)), d_(d), n_(n) {}
LatticeFft::~LatticeFft() = default;

std::vector<std::complex<double>> LatticeFft::forward(const std::vector<double>& field) const {
    auto& im = *impl_;
    std::memset(im.buf, 0, sizeof(fftw_complex) * size_t(im.padded));
    std::array<int, 3> m{0, 0, 0};
    for (long i = 0; i < long(field.size()); ++i) {
        long rem = i;
        for (int k = d_ - 1; k >= 0; --k) {
            m[size_t(k)] = int(rem % n_);
            rem /= n_;
        }
        im.buf[im.pad_index(m)][0] = field[size_t(i)];
    }
    fftw_execute(im.fwd);
    std::vector<std::complex<double>> out(size_t(im.padded));
    for (long i = 0; i < im.padded; ++i) out[size_t(i)] = {im.buf[i][0], im.buf[i][1]};
    return out;
}

std::vector<double> LatticeFft::convolve_spectra(const std::vector<std::complex<double>>& fa,
                                                 const std::vector<std::complex<double>>& fb) const {
    auto& im = *impl_;
    for (long i = 0; i < im.padded; ++i) {
        const std::complex<double> p = fa[size_t(i)] * fb[size_t(i)];
        im.buf[i][0] = p.real();
        im.buf[i][1] = p.imag();
    }
    fftw_execute(im.bwd);
    const double scale = 1.0 / double(im.padded);
    // linear index shift: g's center (offset 0) sits at index half = (n-1)/2
    // per axis, so output y = index m corresponds to padded index m + half.
    const int half = (n_ - 1) / 2;
    long n_out = 1;
    for (int k = 0; k < d_; ++k) n_out *= n_;
    std::vector<double> out(size_t(n_out));
    std::array<int, 3> m{0, 0, 0};
    for (long i = 0; i < n_out; ++i) {
        long rem = i;
        for (int k = d_ - 1; k >= 0; --k) {
            m[size_t(k)] = int(rem % n_) + half;
            rem /= n_;
        }
        out[size_t(i)] = im.buf[im.pad_index(m)][0] * scale;
    }
    return out;
}

std::vector<double> LatticeFft::convolve(const std::vector<double>& f,
                                         const std::vector<double>& g) const {
    return convolve_spectra(forward(f), forward(g));
}

std::vector<double> spatial_convolve(const SpaceTimeGrid& grid, const std::vector<double>& f,
                                     const std::vector<double>& g, ConvMethod method) {
    if (long(f.size()) != grid.n_points || long(g.size()) != grid.n_points)
        throw ConfigError("spatial_convolve: tables must share the grid");
    double cell = 1.0;
    for (int k = 0; k < grid.d; ++k) cell *= grid.h;

    if (method == ConvMethod::FOURIER) {
        LatticeFft fft(grid.d, grid.per_axis);
        std::vector<double> out = fft.convolve(f, g);
        for (double& v : out) v *= cell;
        return out;
    }

    const int n = grid.per_axis;
    const int half = (n - 1) / 2;
    std::vector<double> out(size_t(grid.n_points), 0.0);
#pragma omp parallel for schedule(static)
    for (long iy = 0; iy < grid.n_points; ++iy) {
        const auto my = grid.multi_index(iy);
        double acc = 0.0;
        for (long iz = 0; iz < grid.n_points; ++iz) {
            const auto mz = grid.multi_index(iz);
            bool ok = true;
            std::array<int, 3> mg{0, 0, 0};
            for (int k = 0; k < grid.d; ++k) {
                const int off = my[size_t(k)] - mz[size_t(k)] + half;
                if (off < 0 || off >= n) {
                    ok = false;
                    break;
                }
                mg[size_t(k)] = off;
            }
            if (ok) acc += f[size_t(iz)] * g[size_t(grid.index(mg))];
        }
        out[size_t(iy)] = acc * cell;
    }
    return out;
}

}  // namespace hk
