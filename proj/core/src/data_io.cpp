#include "quadtrack/data_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "quadtrack/log.hpp"

namespace quadtrack {

namespace fs = std::filesystem;

namespace {

class PnmReader {
public:
    explicit PnmReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t header_int() {
        skip_space_and_comments();
        if (pos_ >= bytes_.size()) throw DataError("unexpected end of data in image header");
        std::size_t v = 0;
        bool any = false;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            v = v * 10 + (bytes_[pos_++] - '0');
            any = true;
            if (v > (1u << 20)) throw DataError("image header value too large");
        }
        if (!any) throw DataError("malformed image header");
        return v;
    }

    // Exactly one whitespace byte separates the header from the raster.
    void end_header() {
        if (pos_ >= bytes_.size()) throw DataError("unexpected end of data in image header");
        ++pos_;
    }

    std::span<const std::uint8_t> raster(std::size_t n) {
        if (bytes_.size() - pos_ < n) throw DataError("unexpected end of data in image raster");
        return bytes_.subspan(pos_, n);
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const auto c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 2;
};

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

bool parse_double(std::string_view s, double& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        const bool sep = i == line.size() || line[i] == ',' || line[i] == '\t' || line[i] == ' ';
        if (!sep) continue;
        if (i > start) fields.push_back(line.substr(start, i - start));
        start = i + 1;
    }
    return fields;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

bool is_blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t'; });
}

}  // namespace

Tensor decode_image(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw DataError("bad magic: not a binary PGM/PPM image");
    }
    const bool color = bytes[1] == '6';
    PnmReader in(bytes);
    const std::size_t w = in.header_int();
    const std::size_t h = in.header_int();
    const std::size_t maxval = in.header_int();
    if (w == 0 || h == 0) throw DataError("image has zero size");
    if (maxval == 0 || maxval > 255) throw DataError("unsupported maxval " + std::to_string(maxval));
    in.end_header();
    const std::size_t channels = color ? 3 : 1;
    const auto raster = in.raster(w * h * channels);
    Tensor out(1, 3, h, w);
    // Division rather than a reciprocal multiply, so sample k decodes to the float nearest k / maxval.
    std::array<float, 256> level{};
    for (std::size_t k = 0; k <= maxval; ++k) level[k] = static_cast<float>(k) / static_cast<float>(maxval);
    for (std::size_t i = 0; i < w * h; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const std::uint8_t v = raster[i * channels + (color ? c : 0)];
            out.plane(0, c)[i] = level[v];
        }
    }
    return out;
}

Tensor decode_image(const fs::path& path) {
    const auto bytes = read_bytes(path);
    try {
        return decode_image(bytes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
    const Shape& s = image.shape();
    if (s.n != 1 || s.c != 3) throw ShapeError("encode_ppm expects 1 x 3 x H x W, got " + s.str());
    const std::string header = "P6\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + 3 * s.plane());
    for (std::size_t i = 0; i < s.plane(); ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const float v = std::clamp(image.plane(0, c)[i], 0.0f, 1.0f);
            out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
        }
    }
    return out;
}

void write_ppm(const fs::path& path, const Tensor& image) {
    const auto bytes = encode_ppm(image);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor Sequence::frame(std::size_t i) const {
    if (!frames.empty()) return frames.at(i);
    return decode_image(frame_paths.at(i));
}

std::vector<BoundingBox> parse_groundtruth(const std::string& text) {
    std::vector<BoundingBox> boxes;
    const auto lines = lines_of(text);
    for (std::size_t n = 0; n < lines.size(); ++n) {
        if (is_blank(lines[n])) continue;
        const auto fields = split_fields(lines[n]);
        double v[4];
        if (fields.size() != 4 || !parse_double(fields[0], v[0]) || !parse_double(fields[1], v[1]) ||
            !parse_double(fields[2], v[2]) || !parse_double(fields[3], v[3])) {
            throw DataError("groundtruth line " + std::to_string(n + 1) + ": expected x,y,w,h");
        }
        const BoundingBox b{v[0] - 1.0, v[1] - 1.0, v[2], v[3]};
        if (!b.valid()) throw DataError("groundtruth line " + std::to_string(n + 1) + ": box has non-positive area");
        boxes.push_back(b);
    }
    return boxes;
}

std::string format_groundtruth(const std::vector<BoundingBox>& boxes) {
    std::string out;
    char buf[160];
    for (const auto& b : boxes) {
        std::snprintf(buf, sizeof buf, "%.2f,%.2f,%.2f,%.2f\n", b.x + 1.0, b.y + 1.0, b.w, b.h);
        out += buf;
    }
    return out;
}

Sequence load_sequence(const fs::path& dir) {
    const fs::path img = dir / "img";
    const fs::path gt = dir / "groundtruth_rect.txt";
    if (!fs::is_directory(img)) throw DataError(dir.string() + ": missing img/ directory");
    if (!fs::is_regular_file(gt)) throw DataError(dir.string() + ": missing groundtruth_rect.txt");
    Sequence seq;
    seq.name = dir.filename().string();
    if (seq.name.empty()) seq.name = dir.parent_path().filename().string();
    for (const auto& entry : fs::directory_iterator(img)) {
        const auto ext = entry.path().extension().string();
        if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) seq.frame_paths.push_back(entry.path());
    }
    std::sort(seq.frame_paths.begin(), seq.frame_paths.end());
    try {
        seq.boxes = parse_groundtruth(read_text_file(gt));
    } catch (const DataError& e) {
        throw DataError(gt.string() + ": " + e.what());
    }
    if (seq.boxes.empty()) throw DataError(dir.string() + ": empty ground truth");
    if (seq.boxes.size() != seq.frame_paths.size()) {
        throw DataError(dir.string() + ": " + std::to_string(seq.frame_paths.size()) + " frames but " +
                        std::to_string(seq.boxes.size()) + " ground-truth lines");
    }
    return seq;
}

std::vector<Sequence> load_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
    if (fs::exists(dir / "groundtruth_rect.txt")) return {load_sequence(dir)};
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "groundtruth_rect.txt")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<Sequence> out;
    out.reserve(dirs.size());
    for (const auto& d : dirs) out.push_back(load_sequence(d));
    log::debug("loaded {} sequences from {}", out.size(), dir.string());
    return out;
}

std::string format_boxes(const std::vector<FrameBox>& boxes) {
    std::string out;
    char buf[200];
    for (const auto& fb : boxes) {
        std::snprintf(buf, sizeof buf, "%zu,%.2f,%.2f,%.2f,%.2f\n", fb.frame, fb.box.x, fb.box.y, fb.box.w, fb.box.h);
        out += buf;
    }
    return out;
}

std::vector<FrameBox> parse_boxes(const std::string& text) {
    std::vector<FrameBox> out;
    const auto lines = lines_of(text);
    for (std::size_t n = 0; n < lines.size(); ++n) {
        if (is_blank(lines[n])) continue;
        const auto fields = split_fields(lines[n]);
        const std::string where = "boxes line " + std::to_string(n + 1);
        if (fields.size() != 5) throw DataError(where + ": expected frame_index,x,y,w,h");
        std::size_t frame = 0;
        const auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), frame);
        if (ec != std::errc() || ptr != fields[0].data() + fields[0].size()) {
            throw DataError(where + ": bad frame index");
        }
        double v[4];
        for (int k = 0; k < 4; ++k) {
            if (!parse_double(fields[k + 1], v[k])) throw DataError(where + ": bad number");
        }
        if (!out.empty() && frame <= out.back().frame) {
            throw DataError(where + ": frame index " + std::to_string(frame) + " out of order");
        }
        out.push_back({frame, {v[0], v[1], v[2], v[3]}});
    }
    return out;
}

void write_boxes(const fs::path& path, const std::vector<FrameBox>& boxes) {
    write_text_file(path, format_boxes(boxes));
}

std::vector<FrameBox> read_boxes(const fs::path& path) {
    try {
        return parse_boxes(read_text_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::vector<FrameBox> number_boxes(const std::vector<BoundingBox>& boxes) {
    std::vector<FrameBox> out;
    out.reserve(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) out.push_back({i, boxes[i]});
    return out;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw DataError("write failed: " + path.string());
}

}  // namespace quadtrack
