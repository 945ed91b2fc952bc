#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "avdit/numerics/tensor.hpp"

namespace avdit {

// AVT1 layout: "AVT1" | u32 rank | rank x u64 dims | numel x f64, all little-endian.
void write_avt(std::ostream& os, const Tensor& t);
Tensor read_avt(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

/// Several AVT1 records back to back in one file.
void save_tensors(const std::filesystem::path& path, const std::vector<Tensor>& ts);
std::vector<Tensor> load_tensors(const std::filesystem::path& path);

}  // namespace avdit
