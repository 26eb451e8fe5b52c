#include "derender/raster.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "derender/common.hpp"

namespace derender::raster {

Image8 rasterize_dot(const Eigen::Vector2d& p, int size, double radius) {
    require(size > 0 && radius > 0.0, Errc::invalid_config, "raster size and radius must be positive");
    require(p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0, Errc::out_of_bounds,
            "dot position outside the unit square");

    Image8 img;
    img.width = img.height = size;
    img.rgb.assign(static_cast<std::size_t>(size * size * 3), 255);

    double cx = p.x() * size, cy = p.y() * size;  // pixel coordinates
    double r2 = radius * radius;
    // Half-diagonal of a pixel: beyond it a pixel is fully inside/outside.
    double margin = 0.7072;
    int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
    int x1 = std::min(size - 1, static_cast<int>(std::ceil(cx + radius + 1)));
    int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
    int y1 = std::min(size - 1, static_cast<int>(std::ceil(cy + radius + 1)));

    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            double d = std::sqrt(dx * dx + dy * dy);
            int covered;
            if (d >= radius + margin) {
                covered = 0;
            } else if (d <= radius - margin) {
                covered = 16;
            } else {
                covered = 0;
                for (int sy = 0; sy < 4; ++sy) {
                    for (int sx = 0; sx < 4; ++sx) {
                        double ux = x + (sx + 0.5) / 4.0 - cx;
                        double uy = y + (sy + 0.5) / 4.0 - cy;
                        if (ux * ux + uy * uy <= r2) ++covered;
                    }
                }
            }
            if (covered == 0) continue;
            auto rest = static_cast<std::uint8_t>(std::lround(255.0 * (16 - covered) / 16.0));
            img.at(x, y, 1) = rest;  // red stays 255
            img.at(x, y, 2) = rest;
        }
    }
    return img;
}

std::vector<float> to_deficit(const Image8& img) {
    std::vector<float> out(static_cast<std::size_t>(img.width * img.height));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out[static_cast<std::size_t>(y * img.width + x)] = 1.0f - img.at(x, y, 1) / 255.0f;
    return out;
}

Eigen::Vector2d deficit_centroid(const Image8& img) {
    double mass = 0.0, mx = 0.0, my = 0.0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double w = 1.0 - img.at(x, y, 1) / 255.0;
            mass += w;
            mx += w * (x + 0.5);
            my += w * (y + 0.5);
        }
    }
    require(mass > 0.0, Errc::empty_input, "image has no ink to take a centroid of");
    return {mx / mass / img.width, my / mass / img.height};
}

// PNG -------------------------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t pos) {
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + 3]));
}

void put_chunk(std::string& out, const char type[4], const std::string& data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    std::string body(type, 4);
    body += data;
    out += body;
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
    put_u32(out, crc);
}

}  // namespace

void write_png(const Image8& img, const std::filesystem::path& path) {
    require(img.width > 0 && img.height > 0 &&
                img.rgb.size() == static_cast<std::size_t>(img.width * img.height * 3),
            Errc::invalid_config, "image buffer does not match its dimensions");

    // Filter-0 scanlines.
    std::string raw;
    raw.reserve(static_cast<std::size_t>(img.height * (1 + img.width * 3)));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back('\0');
        raw.append(reinterpret_cast<const char*>(img.rgb.data() + static_cast<std::size_t>(y * img.width * 3)),
                   static_cast<std::size_t>(img.width * 3));
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::string deflated(bound, '\0');
    int rc = compress2(reinterpret_cast<Bytef*>(deflated.data()), &bound,
                       reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()), 6);
    require(rc == Z_OK, Errc::io_error, "zlib compression failed");
    deflated.resize(bound);

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(img.width));
    put_u32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr += '\x08';  // bit depth
    ihdr += '\x02';  // truecolor
    ihdr += '\x00';  // compression
    ihdr += '\x00';  // filter
    ihdr += '\x00';  // no interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", deflated);
    put_chunk(out, "IEND", "");

    std::ofstream f(path, std::ios::binary);
    require(f.good(), Errc::io_error, "cannot open for writing: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    require(f.good(), Errc::io_error, "short write: " + path.string());
}

Image8 read_png(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), Errc::io_error, "cannot open: " + path.string());
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    require(data.size() > 8 && data.compare(0, 8, "\x89PNG\r\n\x1a\n", 8) == 0, Errc::data_error,
            "not a PNG file: " + path.string());

    Image8 img;
    std::string idat;
    std::size_t pos = 8;
    while (pos + 12 <= data.size()) {
        std::uint32_t len = get_u32(data, pos);
        std::string type = data.substr(pos + 4, 4);
        require(pos + 12 + len <= data.size(), Errc::data_error, "truncated PNG chunk");
        std::string chunk = data.substr(pos + 8, len);
        if (type == "IHDR") {
            require(len == 13, Errc::data_error, "bad IHDR");
            img.width = static_cast<int>(get_u32(chunk, 0));
            img.height = static_cast<int>(get_u32(chunk, 4));
            require(chunk[8] == 8 && chunk[9] == 2, Errc::data_error,
                    "unsupported PNG format (need 8-bit truecolor)");
        } else if (type == "IDAT") {
            idat += chunk;
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    require(img.width > 0 && img.height > 0, Errc::data_error, "PNG missing IHDR");

    std::size_t raw_size = static_cast<std::size_t>(img.height) * (1 + static_cast<std::size_t>(img.width) * 3);
    std::string raw(raw_size, '\0');
    uLongf got = static_cast<uLongf>(raw_size);
    int rc = uncompress(reinterpret_cast<Bytef*>(raw.data()), &got, reinterpret_cast<const Bytef*>(idat.data()),
                        static_cast<uLong>(idat.size()));
    require(rc == Z_OK && got == raw_size, Errc::data_error, "PNG inflate failed");

    img.rgb.resize(static_cast<std::size_t>(img.width * img.height * 3));
    for (int y = 0; y < img.height; ++y) {
        const char* row = raw.data() + static_cast<std::size_t>(y) * (1 + static_cast<std::size_t>(img.width) * 3);
        require(row[0] == 0, Errc::data_error, "unsupported PNG row filter");
        std::memcpy(img.rgb.data() + static_cast<std::size_t>(y * img.width * 3), row + 1,
                    static_cast<std::size_t>(img.width) * 3);
    }
    return img;
}

}  // namespace derender::raster
