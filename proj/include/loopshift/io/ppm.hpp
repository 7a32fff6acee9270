#pragma once

#include "loopshift/codec.hpp"
#include "loopshift/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace loopshift::io {

struct ImageShape {
    std::size_t height = 0;
    std::size_t width = 0;
};

// Squarest factorization height * width = n with height <= width.
inline ImageShape squarest_shape(std::size_t n) {
    if (n == 0) {
        throw ConfigError("cannot reshape an empty frame");
    }
    std::size_t h = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
    while (h > 1 && n % h != 0) {
        --h;
    }
    h = std::max<std::size_t>(h, 1);
    return {h, n / h};
}

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
};

// Binary P6 with the gray value replicated into R, G and B.
inline void write_ppm(const std::filesystem::path& path, const GrayImage& image) {
    if (image.pixels.size() != image.width * image.height) {
        throw ConfigError("write_ppm: pixel count does not match the shape");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open " + path.string() + " for writing");
    }
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    for (std::uint8_t p : image.pixels) {
        const char rgb[3] = {static_cast<char>(p), static_cast<char>(p), static_cast<char>(p)};
        out.write(rgb, 3);
    }
    if (!out) {
        throw FormatError("write failed for " + path.string());
    }
}

namespace ppm_detail {

inline std::size_t read_header_int(std::istream& in) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') {
                c = in.get();
            }
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) {
        throw FormatError("malformed PNM header");
    }
    std::size_t value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + static_cast<std::size_t>(c - '0');
        if (value > (1u << 24)) {
            throw FormatError("PNM dimension too large");
        }
        c = in.get();
    }
    return value;
}

} // namespace ppm_detail

// Reads binary P6 (red channel) or P5 with maxval 255.
inline GrayImage read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || (magic[1] != '6' && magic[1] != '5')) {
        throw FormatError(path.string() + " is not a binary PPM/PGM");
    }
    const std::size_t channels = magic[1] == '6' ? 3 : 1;
    GrayImage image;
    image.width = ppm_detail::read_header_int(in);
    image.height = ppm_detail::read_header_int(in);
    if (ppm_detail::read_header_int(in) != 255) {
        throw FormatError(path.string() + ": only maxval 255 is supported");
    }
    std::vector<char> raw(image.width * image.height * channels);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
        throw FormatError(path.string() + ": truncated pixel data");
    }
    image.pixels.resize(image.width * image.height);
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        image.pixels[i] = static_cast<std::uint8_t>(raw[i * channels]);
    }
    return image;
}

struct Normalization {
    double min = 0.0;
    double max = 0.0;
};

inline std::string frame_filename(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05zu.ppm", index);
    return buf;
}

// Writes frame_%05d.ppm for every frame, mapping [min, max] over the whole
// video to [0, 255]. A constant video maps to 0.
inline Normalization export_frames(const std::filesystem::path& dir, const VideoFrames& video) {
    std::filesystem::create_directories(dir);
    Normalization norm{video.frames.minCoeff(), video.frames.maxCoeff()};
    const double span = norm.max - norm.min;
    const ImageShape shape = squarest_shape(video.dim());
    for (std::size_t k = 0; k < video.count(); ++k) {
        GrayImage image{shape.width, shape.height, std::vector<std::uint8_t>(video.dim())};
        for (std::size_t i = 0; i < video.dim(); ++i) {
            const double x = video.frames(static_cast<long>(k), static_cast<long>(i));
            const double unit = span > 0.0 ? (x - norm.min) / span : 0.0;
            image.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(unit, 0.0, 1.0) * 255.0));
        }
        write_ppm(dir / frame_filename(k), image);
    }
    return norm;
}

// Loads every frame_*.ppm / *.pgm in a directory, sorted by file name, as
// frame vectors with values in [0, 255].
inline VideoFrames load_frames(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw ConfigError("frames directory not found: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string ext = entry.path().extension().string();
        if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw ConfigError("no .ppm/.pgm frames in " + dir.string());
    }
    VideoFrames video;
    for (std::size_t k = 0; k < files.size(); ++k) {
        const GrayImage image = read_pnm(files[k]);
        if (k == 0) {
            video.frames.resize(static_cast<long>(files.size()), static_cast<long>(image.pixels.size()));
        } else if (static_cast<long>(image.pixels.size()) != video.frames.cols()) {
            throw FormatError("frame " + files[k].string() + " has a different size");
        }
        for (std::size_t i = 0; i < image.pixels.size(); ++i) {
            video.frames(static_cast<long>(k), static_cast<long>(i)) = image.pixels[i];
        }
    }
    return video;
}

} // namespace loopshift::io
