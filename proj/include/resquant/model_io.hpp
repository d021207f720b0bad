#ifndef RESQUANT_MODEL_IO_HPP
#define RESQUANT_MODEL_IO_HPP

#include <filesystem>
#include <string>

#include "resquant/network.hpp"

namespace resquant {

/// On-disk model container: a directory holding manifest.json plus one raw
/// little-endian row-major blob per tensor. Blobs are written as 64-bit
/// reals ("f64"); 32-bit blobs ("f32") load transparently. format_version 1.
enum class BlobDtype { f64, f32 };

void save_model(const Network& net, const std::filesystem::path& dir,
                BlobDtype dtype = BlobDtype::f64);

Network load_model(const std::filesystem::path& dir);

} // namespace resquant

#endif
