#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ncf {

// Raw little-endian float64 blobs. The build targets little-endian hosts;
// this is asserted at compile time in blob_io.cpp.
void write_f64_blob(const std::string& path, const double* data, std::size_t n);
std::vector<double> read_f64_blob(const std::string& path);

// CRC-64/XZ, used to checksum blobs and to fingerprint parameter vectors.
std::uint64_t crc64(const void* data, std::size_t n_bytes);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace ncf
