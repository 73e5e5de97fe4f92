#pragma once

#include <filesystem>
#include <vector>

#include "magniflow/flow/flow_field.hpp"
#include "magniflow/flow/image.hpp"

namespace magniflow {

// Middlebury .flo: float32 magic 202021.25, int32 width, int32 height, then
// interleaved (u, v) float32 pairs row-major. Little-endian throughout.
inline constexpr float kFloMagic = 202021.25f;

std::vector<unsigned char> encode_flo(const FlowField& flow);
FlowField decode_flo(std::span<const unsigned char> bytes);

void write_flo(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flo(const std::filesystem::path& path);

// Binary PPM (P6, maxval 255). Single-channel images are written as gray RGB.
void write_ppm(const std::filesystem::path& path, const ImageBuffer& image);
ImageBuffer read_ppm(const std::filesystem::path& path);

// Videos are directories of frame_000001.ppm, frame_000002.ppm, ...
std::filesystem::path frame_path(const std::filesystem::path& dir, int index,
                                 std::string_view prefix = "frame_",
                                 std::string_view ext = ".ppm");
// Sorted regular files named <prefix>*<ext>.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir,
                                               std::string_view ext = ".ppm",
                                               std::string_view prefix = "frame_");
std::vector<ImageBuffer> read_video(const std::filesystem::path& dir);

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);

}  // namespace magniflow
