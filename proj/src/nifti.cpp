#include "aneuseg/nifti.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

#include <zlib.h>

namespace aneuseg::nifti {

static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");

namespace {

// Byte offsets of the header fields used here.
constexpr int kOffSizeofHdr = 0;
constexpr int kOffDim = 40;
constexpr int kOffDatatype = 70;
constexpr int kOffBitpix = 72;
constexpr int kOffPixdim = 76;
constexpr int kOffVoxOffset = 108;
constexpr int kOffSclSlope = 112;
constexpr int kOffSclInter = 116;
constexpr int kOffXyztUnits = 123;
constexpr int kOffQformCode = 252;
constexpr int kOffSformCode = 254;
constexpr int kOffQuatern = 256;
constexpr int kOffQoffset = 268;
constexpr int kOffSrow = 280;
constexpr int kOffMagic = 344;

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) {
        z_stream zs{};
        if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
            throw Error("zlib init failed");
        std::vector<std::uint8_t> out;
        std::array<std::uint8_t, 1 << 16> chunk{};
        zs.next_in = raw.data();
        zs.avail_in = static_cast<uInt>(raw.size());
        int rc = Z_OK;
        while (rc != Z_STREAM_END) {
            zs.next_out = chunk.data();
            zs.avail_out = static_cast<uInt>(chunk.size());
            rc = inflate(&zs, Z_NO_FLUSH);
            if (rc != Z_OK && rc != Z_STREAM_END) {
                inflateEnd(&zs);
                throw Error("gzip stream corrupt in " + path.string());
            }
            out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
            if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
                inflateEnd(&zs);
                throw Error("gzip stream truncated in " + path.string());
            }
        }
        inflateEnd(&zs);
        return out;
    }
    return raw;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes)
{
    const bool gz = path.extension() == ".gz";
    if (gz) {
        gzFile f = gzopen(path.string().c_str(), "wb6");
        if (!f)
            throw Error("cannot write " + path.string());
        const int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
        const int rc = gzclose(f);
        if (n != static_cast<int>(bytes.size()) || rc != Z_OK)
            throw Error("write failed for " + path.string());
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error("write failed for " + path.string());
}

template <typename T>
T load(const std::uint8_t* p, bool swap)
{
    std::array<std::uint8_t, sizeof(T)> b;
    std::memcpy(b.data(), p, sizeof(T));
    if (swap)
        std::reverse(b.begin(), b.end());
    T v;
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
}

template <typename T>
void store(std::uint8_t* p, T v)
{
    std::memcpy(p, &v, sizeof(T));
}

struct Parsed {
    Geometry geom;
    Eigen::ArrayXd values;
};

// Rotation from a qform quaternion; only the off-diagonal part matters here.
bool quaternion_is_axis_aligned(double b, double c, double d)
{
    double a2 = 1.0 - (b * b + c * c + d * d);
    const double a = a2 > 0 ? std::sqrt(a2) : 0.0;
    Eigen::Matrix3d r;
    r << a * a + b * b - c * c - d * d, 2 * b * c - 2 * a * d, 2 * b * d + 2 * a * c,
        2 * b * c + 2 * a * d, a * a + c * c - b * b - d * d, 2 * c * d - 2 * a * b,
        2 * b * d - 2 * a * c, 2 * c * d + 2 * a * b, a * a + d * d - c * c - b * b;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j && std::abs(r(i, j)) > 1e-6)
                return false;
    return true;
}

Parsed parse(const std::vector<std::uint8_t>& bytes, const std::string& name)
{
    if (bytes.size() < static_cast<std::size_t>(kHeaderSize))
        throw Error(name + ": file shorter than a NIfTI-1 header");
    const std::uint8_t* h = bytes.data();

    bool swap = false;
    if (load<std::int32_t>(h + kOffSizeofHdr, false) != kHeaderSize) {
        if (load<std::int32_t>(h + kOffSizeofHdr, true) != kHeaderSize)
            throw Error(name + ": sizeof_hdr is not 348");
        swap = true;
    }
    if (std::memcmp(h + kOffMagic, "n+1\0", 4) != 0)
        throw Error(name + ": bad magic (expected single-file \"n+1\")");

    std::array<std::int16_t, 8> dim{};
    for (int i = 0; i < 8; ++i)
        dim[i] = load<std::int16_t>(h + kOffDim + 2 * i, swap);
    if (dim[0] != 3)
        throw Error(name + ": dim[0] is " + std::to_string(dim[0]) + ", only 3D images are supported");

    const auto datatype = load<std::int16_t>(h + kOffDatatype, swap);
    std::size_t bytes_per_voxel = 0;
    switch (datatype) {
    case static_cast<std::int16_t>(DataType::UInt8): bytes_per_voxel = 1; break;
    case static_cast<std::int16_t>(DataType::Int16): bytes_per_voxel = 2; break;
    case static_cast<std::int16_t>(DataType::Float32): bytes_per_voxel = 4; break;
    default: throw Error(name + ": unsupported datatype code " + std::to_string(datatype));
    }

    Parsed out;
    for (int d = 0; d < 3; ++d) {
        out.geom.dims[d] = dim[d + 1];
        out.geom.spacing[d] = std::abs(load<float>(h + kOffPixdim + 4 * (d + 1), swap));
    }

    const auto qform_code = load<std::int16_t>(h + kOffQformCode, swap);
    const auto sform_code = load<std::int16_t>(h + kOffSformCode, swap);
    if (sform_code > 0) {
        Eigen::Matrix<double, 3, 4> srow;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c)
                srow(r, c) = load<float>(h + kOffSrow + 16 * r + 4 * c, swap);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                if (r != c && srow(r, c) != 0.0)
                    throw Error(name + ": rotated sform is not supported");
        out.geom.origin = srow.col(3);
    } else if (qform_code > 0) {
        const double b = load<float>(h + kOffQuatern, swap);
        const double c = load<float>(h + kOffQuatern + 4, swap);
        const double d = load<float>(h + kOffQuatern + 8, swap);
        if (!quaternion_is_axis_aligned(b, c, d))
            throw Error(name + ": rotated qform is not supported");
        for (int i = 0; i < 3; ++i)
            out.geom.origin[i] = load<float>(h + kOffQoffset + 4 * i, swap);
    }
    out.geom.validate();

    const auto vox_offset = static_cast<std::size_t>(load<float>(h + kOffVoxOffset, swap));
    const std::size_t n = static_cast<std::size_t>(out.geom.numel());
    if (vox_offset < static_cast<std::size_t>(kHeaderSize) || bytes.size() < vox_offset + n * bytes_per_voxel)
        throw Error(name + ": voxel payload truncated");

    const double slope = load<float>(h + kOffSclSlope, swap);
    const double inter = load<float>(h + kOffSclInter, swap);
    const bool scaled = std::isfinite(slope) && slope != 0.0 && !(slope == 1.0 && inter == 0.0);
    out.values.resize(static_cast<Eigen::Index>(n));
    const std::uint8_t* p = bytes.data() + vox_offset;
    for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        switch (bytes_per_voxel) {
        case 1: v = p[i]; break;
        case 2: v = load<std::int16_t>(p + 2 * i, swap); break;
        default: v = load<float>(p + 4 * i, swap); break;
        }
        if (scaled)
            v = v * slope + inter;
        if (!std::isfinite(v))
            throw Error(name + ": non-finite voxel at index " + std::to_string(i));
        out.values[static_cast<Eigen::Index>(i)] = v;
    }
    return out;
}

std::vector<std::uint8_t> make_header(const Geometry& g, DataType type)
{
    std::vector<std::uint8_t> buf(kVoxOffset, 0);
    std::uint8_t* h = buf.data();
    store<std::int32_t>(h + kOffSizeofHdr, kHeaderSize);
    store<std::int16_t>(h + kOffDim, 3);
    for (int d = 0; d < 3; ++d) {
        if (g.dims[d] > std::numeric_limits<std::int16_t>::max())
            throw Error("nifti: dimension too large for NIfTI-1");
        store<std::int16_t>(h + kOffDim + 2 * (d + 1), static_cast<std::int16_t>(g.dims[d]));
    }
    for (int d = 4; d < 8; ++d)
        store<std::int16_t>(h + kOffDim + 2 * d, 1);
    store<std::int16_t>(h + kOffDatatype, static_cast<std::int16_t>(type));
    const std::int16_t bitpix = type == DataType::UInt8 ? 8 : type == DataType::Int16 ? 16 : 32;
    store<std::int16_t>(h + kOffBitpix, bitpix);
    store<float>(h + kOffPixdim, 1.0f);
    for (int d = 0; d < 3; ++d)
        store<float>(h + kOffPixdim + 4 * (d + 1), static_cast<float>(g.spacing[d]));
    store<float>(h + kOffVoxOffset, static_cast<float>(kVoxOffset));
    store<float>(h + kOffSclSlope, 1.0f);
    h[kOffXyztUnits] = 2;  // millimetres
    store<std::int16_t>(h + kOffSformCode, 1);
    for (int r = 0; r < 3; ++r) {
        store<float>(h + kOffSrow + 16 * r + 4 * r, static_cast<float>(g.spacing[r]));
        store<float>(h + kOffSrow + 16 * r + 12, static_cast<float>(g.origin[r]));
    }
    std::memcpy(h + kOffMagic, "n+1\0", 4);
    return buf;
}

}  // namespace

Volume3 read_volume(const std::filesystem::path& path)
{
    Parsed p = parse(read_file_bytes(path), path.string());
    return Volume3(p.geom, p.values.cast<float>());
}

LabelMask read_mask(const std::filesystem::path& path)
{
    Parsed p = parse(read_file_bytes(path), path.string());
    if (((p.values != 0.0) && (p.values != 1.0)).any())
        throw Error(path.string() + ": label file contains values other than 0 and 1");
    return LabelMask(p.geom, p.values.cast<std::uint8_t>());
}

void write(const Volume3& vol, const std::filesystem::path& path, DataType type)
{
    std::vector<std::uint8_t> buf = make_header(vol.geom, type);
    const auto n = static_cast<std::size_t>(vol.voxels.size());
    if (type == DataType::Float32) {
        buf.resize(kVoxOffset + 4 * n);
        std::memcpy(buf.data() + kVoxOffset, vol.voxels.data(), 4 * n);
    } else {
        const double lo = type == DataType::UInt8 ? 0.0 : std::numeric_limits<std::int16_t>::min();
        const double hi = type == DataType::UInt8 ? 255.0 : std::numeric_limits<std::int16_t>::max();
        const std::size_t width = type == DataType::UInt8 ? 1 : 2;
        buf.resize(kVoxOffset + width * n);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = vol.voxels[static_cast<Eigen::Index>(i)];
            if (v < lo || v > hi || v != std::round(v))
                throw Error("nifti: value " + std::to_string(v) + " not representable in requested datatype");
            if (width == 1)
                buf[kVoxOffset + i] = static_cast<std::uint8_t>(v);
            else
                store<std::int16_t>(buf.data() + kVoxOffset + 2 * i, static_cast<std::int16_t>(v));
        }
    }
    write_file_bytes(path, buf);
}

void write(const LabelMask& mask, const std::filesystem::path& path)
{
    if ((mask.voxels > 1).any())
        throw Error("nifti: label mask contains values other than 0 and 1");
    std::vector<std::uint8_t> buf = make_header(mask.geom, DataType::UInt8);
    buf.insert(buf.end(), mask.voxels.data(), mask.voxels.data() + mask.voxels.size());
    write_file_bytes(path, buf);
}

}  // namespace aneuseg::nifti
