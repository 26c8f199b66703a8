#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "quadtrack/geometry.hpp"
#include "quadtrack/tensor.hpp"

namespace quadtrack {

/// Decodes binary PPM (P6) or PGM (P5) with maxval <= 255 into a
/// 1 x 3 x H x W tensor scaled to [0, 1]; grayscale is replicated.
Tensor decode_image(const std::filesystem::path& path);
Tensor decode_image(std::span<const std::uint8_t> bytes);

/// Encodes a 1 x 3 x H x W tensor in [0, 1] as binary P6 (values rounded).
std::vector<std::uint8_t> encode_ppm(const Tensor& image);
void write_ppm(const std::filesystem::path& path, const Tensor& image);

/// Frames plus one ground-truth box per frame. Frames are either held in
/// memory or decoded on demand from `frame_paths`.
struct Sequence {
    std::string name;
    std::vector<std::filesystem::path> frame_paths;
    std::vector<Tensor> frames;
    std::vector<BoundingBox> boxes;

    std::size_t size() const { return boxes.size(); }
    Tensor frame(std::size_t i) const;
};

/// OTB-style directory: img/ with zero-padded numbered .ppm/.pgm frames and
/// groundtruth_rect.txt (1-based x,y,w,h per line, comma/tab/space separated).
Sequence load_sequence(const std::filesystem::path& dir);

/// Every sequence directory directly below `dir` (sorted by name), or `dir`
/// itself when it is a sequence.
std::vector<Sequence> load_dataset(const std::filesystem::path& dir);

/// Parses ground-truth text; boxes returned 0-based.
std::vector<BoundingBox> parse_groundtruth(const std::string& text);
std::string format_groundtruth(const std::vector<BoundingBox>& boxes);

/// Predicted boxes, one `frame_index,x,y,w,h` line per frame (0-based, two decimals).
struct FrameBox {
    std::size_t frame = 0;
    BoundingBox box;
};

std::string format_boxes(const std::vector<FrameBox>& boxes);
std::vector<FrameBox> parse_boxes(const std::string& text);
void write_boxes(const std::filesystem::path& path, const std::vector<FrameBox>& boxes);
std::vector<FrameBox> read_boxes(const std::filesystem::path& path);

std::vector<FrameBox> number_boxes(const std::vector<BoundingBox>& boxes);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace quadtrack
