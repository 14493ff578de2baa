#include "cvrl/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace cvrl {

namespace {

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void Checkpoint::add(const std::string& name, const Mat& data) {
  names_.push_back(name);
  arrays_.push_back(data);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& n : names_)
    if (n == name) return true;
  return false;
}

const Mat& Checkpoint::get(const std::string& name) const {
  for (size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return arrays_[i];
  throw CheckpointError("checkpoint has no array named " + name);
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint for writing: " + path);
  f.write("CVRLCKPT", 8);
  write_pod(f, uint32_t{1});
  write_pod(f, config_hash_);
  write_pod(f, static_cast<uint32_t>(metadata_.size()));
  f.write(metadata_.data(), static_cast<std::streamsize>(metadata_.size()));
  write_pod(f, static_cast<uint32_t>(names_.size()));
  for (size_t i = 0; i < names_.size(); ++i) {
    write_pod(f, static_cast<uint16_t>(names_[i].size()));
    f.write(names_[i].data(), static_cast<std::streamsize>(names_[i].size()));
    write_pod(f, uint8_t{0});  // f64
    write_pod(f, static_cast<uint32_t>(arrays_[i].rows()));
    write_pod(f, static_cast<uint32_t>(arrays_[i].cols()));
    f.write(reinterpret_cast<const char*>(arrays_[i].data()),
            static_cast<std::streamsize>(sizeof(double) * arrays_[i].size()));
  }
  if (!f) throw CheckpointError("checkpoint write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint not found: " + path);
  char magic[8];
  f.read(magic, 8);
  if (f.gcount() != 8 || std::memcmp(magic, "CVRLCKPT", 8) != 0)
    throw CheckpointError("not a checkpoint file: " + path);
  uint32_t version = 0;
  read_pod(f, version);
  if (version != 1) throw CheckpointError("unsupported checkpoint version in " + path);

  Checkpoint ck;
  read_pod(f, ck.config_hash_);
  uint32_t meta_len = 0;
  read_pod(f, meta_len);
  ck.metadata_.resize(meta_len);
  f.read(ck.metadata_.data(), meta_len);
  uint32_t count = 0;
  read_pod(f, count);
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t name_len = 0;
    read_pod(f, name_len);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    uint8_t dtype = 0;
    read_pod(f, dtype);
    if (dtype != 0) throw CheckpointError("unsupported dtype in " + path);
    uint32_t rows = 0, cols = 0;
    read_pod(f, rows);
    read_pod(f, cols);
    Mat m(rows, cols);
    f.read(reinterpret_cast<char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!f) throw CheckpointError("truncated checkpoint: " + path);
    ck.names_.push_back(std::move(name));
    ck.arrays_.push_back(std::move(m));
  }
  return ck;
}

}  // namespace cvrl
