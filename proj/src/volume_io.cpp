#include "moco/volume_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "moco/text_kv.hpp"

static_assert(std::endian::native == std::endian::little,
              "volume format assumes a little-endian host");

namespace moco {

namespace {

void write_raw(const std::string& path, const Grid& g, const double* data, int ncomp,
               bool is_complex) {
    TextKv hdr;
    hdr.set_ints("dims", {g.dims[0], g.dims[1], g.dims[2]});
    hdr.set_int("dim", g.dim);
    hdr.set_doubles("spacing", {g.spacing[0], g.spacing[1], g.spacing[2]});
    hdr.set_doubles("origin", {g.origin[0], g.origin[1], g.origin[2]});
    hdr.set_int("components", ncomp);
    hdr.set_int("complex", is_complex ? 1 : 0);
    hdr.set("order", "axis0_fastest");
    hdr.set("dtype", "float32_le");
    hdr.save(path + ".hdr");

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_volume: cannot write '" + path + "'");
    std::size_t n = g.n_points() * std::size_t(ncomp) * (is_complex ? 2 : 1);
    std::vector<float> buf(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = float(data[i]);
    f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
    if (!f) throw std::runtime_error("write_volume: short write to '" + path + "'");
}

struct VolHeader {
    Grid grid;
    int ncomp;
    bool is_complex;
};

VolHeader read_header(const std::string& path) {
    TextKv hdr = TextKv::load(path + ".hdr");
    auto dims = hdr.get_ints("dims");
    auto spacing = hdr.get_doubles("spacing");
    auto origin = hdr.get_doubles("origin");
    if (dims.size() != 3 || spacing.size() != 3 || origin.size() != 3)
        throw std::invalid_argument("volume header: dims/spacing/origin must have 3 entries");
    int dim = int(hdr.get_int("dim"));
    VolHeader h{Grid(dim, {int(dims[0]), int(dims[1]), int(dims[2])},
                     {spacing[0], spacing[1], spacing[2]}, {origin[0], origin[1], origin[2]}),
                int(hdr.get_int("components")), hdr.get_int("complex") != 0};
    return h;
}

std::vector<double> read_raw(const std::string& path, std::size_t count) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::invalid_argument("read_volume: cannot open '" + path + "'");
    std::vector<float> buf(count);
    f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(count * 4));
    if (std::size_t(f.gcount()) != count * 4)
        throw std::invalid_argument("read_volume: '" + path + "' truncated");
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = double(buf[i]);
    return out;
}

}  // namespace

void write_volume(const std::string& path, const RealField& f) {
    write_raw(path, f.grid, f.values.data(), 1, false);
}

void write_volume(const std::string& path, const ComplexField& f) {
    write_raw(path, f.grid, reinterpret_cast<const double*>(f.values.data()), 1, true);
}

void write_volume(const std::string& path, const VectorField& f) {
    write_raw(path, f.grid, f.values.data(), f.grid.dim, false);
}

VolumeKind peek_volume_kind(const std::string& path) {
    VolHeader h = read_header(path);
    if (h.is_complex) return VolumeKind::complex_scalar;
    return h.ncomp == 1 ? VolumeKind::real_scalar : VolumeKind::vector;
}

RealField read_real_volume(const std::string& path) {
    VolHeader h = read_header(path);
    if (h.is_complex || h.ncomp != 1)
        throw std::invalid_argument("read_real_volume: '" + path + "' is not a real scalar volume");
    return RealField(h.grid, read_raw(path, h.grid.n_points()));
}

ComplexField read_complex_volume(const std::string& path) {
    VolHeader h = read_header(path);
    if (!h.is_complex || h.ncomp != 1)
        throw std::invalid_argument("read_complex_volume: '" + path + "' is not a complex volume");
    auto raw = read_raw(path, h.grid.n_points() * 2);
    std::vector<cplx> v(h.grid.n_points());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = cplx(raw[2 * i], raw[2 * i + 1]);
    return ComplexField(h.grid, std::move(v));
}

VectorField read_vector_volume(const std::string& path) {
    VolHeader h = read_header(path);
    if (h.is_complex || h.ncomp != h.grid.dim)
        throw std::invalid_argument("read_vector_volume: '" + path + "' is not a vector volume");
    return VectorField(h.grid, read_raw(path, h.grid.n_points() * std::size_t(h.grid.dim)));
}

}  // namespace moco
