#include "cvrl/image_io.hpp"

#include "cvrl/errors.hpp"

#include <array>
#include <fstream>

namespace cvrl {

namespace {

uint32_t crc32_update(uint32_t crc, const uint8_t* data, size_t len) {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t n = 0; n < 256; ++n) {
      uint32_t c = n;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[n] = c;
    }
    return t;
  }();
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc;
}

uint32_t adler32(const std::vector<uint8_t>& data) {
  uint32_t a = 1, b = 0;
  for (uint8_t byte : data) {
    a = (a + byte) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& data) {
  std::vector<uint8_t> head;
  put_be32(head, static_cast<uint32_t>(data.size()));
  f.write(reinterpret_cast<const char*>(head.data()), 4);
  f.write(type, 4);
  if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  uint32_t crc = crc32_update(0xffffffffu, reinterpret_cast<const uint8_t*>(type), 4);
  if (!data.empty()) crc = crc32_update(crc, data.data(), data.size());
  crc ^= 0xffffffffu;
  std::vector<uint8_t> tail;
  put_be32(tail, crc);
  f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<uint8_t>& rgb) {
  if (static_cast<size_t>(width) * height * 3 != rgb.size())
    throw OutputError("write_png_rgb: buffer size does not match dimensions");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw OutputError("cannot open image for writing: " + path);

  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<uint8_t> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(width));
  put_be32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  write_chunk(f, "IHDR", ihdr);

  // raw scanlines with filter byte 0
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(height) * (1 + 3 * width));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    const uint8_t* row = rgb.data() + static_cast<size_t>(y) * width * 3;
    raw.insert(raw.end(), row, row + static_cast<size_t>(width) * 3);
  }

  // zlib stream of stored deflate blocks
  std::vector<uint8_t> idat;
  idat.push_back(0x78);
  idat.push_back(0x01);
  size_t pos = 0;
  while (pos < raw.size()) {
    const size_t block = std::min<size_t>(65535, raw.size() - pos);
    const bool final = pos + block == raw.size();
    idat.push_back(final ? 1 : 0);
    idat.push_back(static_cast<uint8_t>(block & 0xff));
    idat.push_back(static_cast<uint8_t>(block >> 8));
    idat.push_back(static_cast<uint8_t>(~block & 0xff));
    idat.push_back(static_cast<uint8_t>((~block >> 8) & 0xff));
    idat.insert(idat.end(), raw.begin() + static_cast<long>(pos),
                raw.begin() + static_cast<long>(pos + block));
    pos += block;
  }
  put_be32(idat, adler32(raw));
  write_chunk(f, "IDAT", idat);
  write_chunk(f, "IEND", {});
  if (!f) throw OutputError("image write failed: " + path);
}

}  // namespace cvrl
