#include "ncf/blob_io.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <sstream>

#include "ncf/error.hpp"

static_assert(std::endian::native == std::endian::little, "on-disk format assumes a little-endian host");

namespace ncf {

void write_f64_blob(const std::string& path, const double* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    if (!out) throw ValidationError("write failed: " + path);
}

std::vector<double> read_f64_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw ValidationError("cannot open: " + path);
    const std::streamsize bytes = in.tellg();
    if (bytes % static_cast<std::streamsize>(sizeof(double)) != 0)
        throw ValidationError("blob size not a multiple of 8 bytes: " + path);
    in.seekg(0);
    std::vector<double> data(static_cast<std::size_t>(bytes) / sizeof(double));
    in.read(reinterpret_cast<char*>(data.data()), bytes);
    if (!in) throw ValidationError("read failed: " + path);
    return data;
}

namespace {

// CRC-64/XZ (reflected, poly 0x42f0e1eba9ea3693).
std::array<std::uint64_t, 256> make_crc64_table() {
    std::array<std::uint64_t, 256> table{};
    const std::uint64_t poly = 0xc96c5795d7870f42ULL;  // reflected polynomial
    for (std::uint64_t i = 0; i < 256; ++i) {
        std::uint64_t crc = i;
        for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (poly & (~(crc & 1) + 1));
        table[i] = crc;
    }
    return table;
}

}  // namespace

std::uint64_t crc64(const void* data, std::size_t n_bytes) {
    static const std::array<std::uint64_t, 256> table = make_crc64_table();
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t crc = ~0ULL;
    for (std::size_t i = 0; i < n_bytes; ++i) crc = table[(crc ^ p[i]) & 0xff] ^ (crc >> 8);
    return ~crc;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << content;
    if (!out) throw ValidationError("write failed: " + path);
}

}  // namespace ncf
