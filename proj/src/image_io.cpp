#include "gdip/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace gdip {

namespace {

unsigned char to_byte(double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

double to_unit(unsigned char b) { return static_cast<double>(b) / 255.0; }

void skip_ppm_space(std::istream& in) {
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw std::runtime_error(path + ": not a P6 PPM");
    skip_ppm_space(in);
    int w, h, maxval;
    in >> w;
    skip_ppm_space(in);
    in >> h;
    skip_ppm_space(in);
    in >> maxval;
    if (!in || maxval != 255) throw std::runtime_error(path + ": unsupported PPM header");
    in.get();  // single whitespace before raster
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw std::runtime_error(path + ": truncated PPM raster");
    Image img(h, w);
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = to_unit(raw[i]);
    return img;
}

void write_ppm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.data.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = to_byte(img.data[i]);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

Image read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open " + path);
    png_image pi{};
    pi.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_stdio(&pi, fp.get()))
        throw std::runtime_error(path + ": " + pi.message);
    pi.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> raw(PNG_IMAGE_SIZE(pi));
    if (!png_image_finish_read(&pi, nullptr, raw.data(), 0, nullptr))
        throw std::runtime_error(path + ": " + pi.message);
    Image img(static_cast<int>(pi.height), static_cast<int>(pi.width));
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = to_unit(raw[i]);
    return img;
}

void write_png(const Image& img, const std::string& path) {
    png_image pi{};
    pi.version = PNG_IMAGE_VERSION;
    pi.width = static_cast<png_uint_32>(img.width);
    pi.height = static_cast<png_uint_32>(img.height);
    pi.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> raw(img.data.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = to_byte(img.data[i]);
    if (!png_image_write_to_file(&pi, path.c_str(), 0, raw.data(), 0, nullptr))
        throw std::runtime_error(path + ": " + pi.message);
}

namespace {
bool has_suffix(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}
}  // namespace

Image read_image(const std::string& path) {
    if (has_suffix(path, ".ppm")) return read_ppm(path);
    if (has_suffix(path, ".png")) return read_png(path);
    throw std::runtime_error(path + ": unsupported image extension");
}

void write_image(const Image& img, const std::string& path) {
    if (has_suffix(path, ".ppm")) return write_ppm(img, path);
    if (has_suffix(path, ".png")) return write_png(img, path);
    throw std::runtime_error(path + ": unsupported image extension");
}

}  // namespace gdip
