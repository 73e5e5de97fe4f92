#include "magniflow/flow/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "magniflow/errors.hpp"

namespace magniflow {

namespace fs = std::filesystem;

namespace {

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, &value, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

template <typename T>
T get_le(std::span<const unsigned char> bytes, std::size_t offset) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= std::uint32_t{bytes[offset + i]} << (8 * i);
  T value;
  std::memcpy(&value, &bits, 4);
  return value;
}

}  // namespace

std::vector<unsigned char> encode_flo(const FlowField& flow) {
  std::vector<unsigned char> out;
  out.reserve(12 + 8 * flow.size());
  put_le(out, kFloMagic);
  put_le(out, static_cast<std::int32_t>(flow.width()));
  put_le(out, static_cast<std::int32_t>(flow.height()));
  const auto u = flow.u();
  const auto v = flow.v();
  for (std::size_t i = 0; i < flow.size(); ++i) {
    put_le(out, u[i]);
    put_le(out, v[i]);
  }
  return out;
}

FlowField decode_flo(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4) throw LengthError(".flo: file shorter than magic");
  if (get_le<float>(bytes, 0) != kFloMagic) throw FormatError(".flo: bad magic");
  if (bytes.size() < 12) throw LengthError(".flo: truncated header");
  const auto width = get_le<std::int32_t>(bytes, 4);
  const auto height = get_le<std::int32_t>(bytes, 8);
  if (width < 1 || height < 1) throw FormatError(".flo: nonpositive dimensions");
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() < 12 + 8 * n) throw LengthError(".flo: truncated payload");
  std::vector<float> u(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = get_le<float>(bytes, 12 + 8 * i);
    v[i] = get_le<float>(bytes, 16 + 8 * i);
    if (!std::isfinite(u[i]) || !std::isfinite(v[i])) throw FormatError(".flo: non-finite value");
  }
  return FlowField(width, height, std::move(u), std::move(v));
}

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_flo(const fs::path& path, const FlowField& flow) {
  write_file(path, encode_flo(flow));
}

FlowField read_flo(const fs::path& path) { return decode_flo(read_file(path)); }

void write_ppm(const fs::path& path, const ImageBuffer& image) {
  std::ostringstream header;
  header << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  const auto h = header.str();
  std::vector<unsigned char> bytes(h.begin(), h.end());
  bytes.reserve(bytes.size() + 3 * static_cast<std::size_t>(image.width()) * image.height());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const float value = image.at(x, y, image.channels() == 3 ? c : 0);
        bytes.push_back(static_cast<unsigned char>(std::lround(value * 255.0f)));
      }
    }
  }
  write_file(path, bytes);
}

ImageBuffer read_ppm(const fs::path& path) {
  const auto bytes = read_file(path);
  std::size_t pos = 0;
  auto next_token = [&]() {
    std::string token;
    while (pos < bytes.size()) {
      const char ch = static_cast<char>(bytes[pos]);
      if (ch == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!token.empty()) break;
        ++pos;
      } else {
        token.push_back(ch);
        ++pos;
      }
    }
    return token;
  };
  if (next_token() != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": malformed PPM header");
  }
  if (width < 1 || height < 1 || maxval != 255) {
    throw FormatError(path.string() + ": unsupported PPM dimensions or maxval");
  }
  ++pos;  // single whitespace after maxval
  const auto n = static_cast<std::size_t>(width) * height * 3;
  if (bytes.size() < pos + n) throw LengthError(path.string() + ": truncated PPM payload");
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
  return ImageBuffer(width, height, 3, std::move(data));
}

fs::path frame_path(const fs::path& dir, int index, std::string_view prefix, std::string_view ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return dir / (std::string(prefix) + buf + std::string(ext));
}

std::vector<fs::path> list_frames(const fs::path& dir, std::string_view ext, std::string_view prefix) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.starts_with(prefix) && entry.path().extension() == ext) {
      frames.push_back(entry.path());
    }
  }
  std::sort(frames.begin(), frames.end());
  return frames;
}

std::vector<ImageBuffer> read_video(const fs::path& dir) {
  std::vector<ImageBuffer> frames;
  for (const auto& p : list_frames(dir)) frames.push_back(read_ppm(p));
  return frames;
}

}  // namespace magniflow
