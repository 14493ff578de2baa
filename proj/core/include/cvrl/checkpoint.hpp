#pragma once

#include "cvrl/errors.hpp"
#include "cvrl/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cvrl {

// Portable container of named f64 arrays plus a JSON metadata blob and the
// config hash of the run that produced it.
//
// Layout (little endian):
//   magic "CVRLCKPT", u32 version=1, u64 config_hash,
//   u32 metadata_len, metadata bytes,
//   u32 n_arrays, then per array:
//     u16 name_len, name bytes, u8 dtype (0 = f64), u32 rows, u32 cols,
//     rows*cols f64 values (column-major)
class Checkpoint {
 public:
  void add(const std::string& name, const Mat& data);
  bool has(const std::string& name) const;
  const Mat& get(const std::string& name) const;  // throws CheckpointError

  void set_metadata(std::string json) { metadata_ = std::move(json); }
  const std::string& metadata() const { return metadata_; }
  void set_config_hash(uint64_t h) { config_hash_ = h; }
  uint64_t config_hash() const { return config_hash_; }
  size_t size() const { return names_.size(); }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);  // throws CheckpointError

 private:
  std::vector<std::string> names_;
  std::vector<Mat> arrays_;
  std::string metadata_;
  uint64_t config_hash_ = 0;
};

}  // namespace cvrl
