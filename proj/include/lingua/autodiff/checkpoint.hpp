#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lingua/autodiff/tensor.hpp"

namespace lingua::ad {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// "LCT1" container: magic, u32 record count, then per record a u32-length
// prefixed UTF-8 name, u32 rank, u32 dims and binary64 values, all little-endian.
void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedArray>& records);
std::vector<NamedArray> read_tensor_file(const std::filesystem::path& path);

}  // namespace lingua::ad
