#include "sparsevid/imageio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "sparsevid/errors.hpp"

namespace sparsevid {
namespace {

unsigned char to_byte(double v) {
    const double x = (std::clamp(v, -1.0, 1.0) + 1.0) * 0.5 * 255.0;
    return static_cast<unsigned char>(std::lround(x));
}

// Skips whitespace and '#' comments, then reads one unsigned int.
int read_pnm_int(std::istream& is) {
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (!std::isspace(c)) {
            break;
        } else {
            c = is.get();
        }
    }
    if (c == EOF || !std::isdigit(c)) throw FormatError("pnm: malformed header");
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        if (v > 1000000) throw FormatError("pnm: header value out of range");
        c = is.get();
    }
    return v;
}

}  // namespace

void write_ppm_frame(const std::string& path, const Tensor& video, int frame) {
    if (video.shape().size() != 4 || video.shape()[1] != 3)
        throw ArgumentError("write_ppm_frame: video must be [N,3,H,W]");
    const int N = video.shape()[0], H = video.shape()[2], W = video.shape()[3];
    if (frame < 0 || frame >= N) throw ArgumentError("write_ppm_frame: frame out of range");
    const size_t plane = static_cast<size_t>(H) * W;
    const double* p = video.data() + static_cast<size_t>(frame) * 3 * plane;

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_ppm_frame: cannot open '" + path + "'");
    os << "P6\n" << W << ' ' << H << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(W) * 3);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<size_t>(x) * 3 + c] =
                    to_byte(p[static_cast<size_t>(c) * plane + static_cast<size_t>(y) * W + x]);
        os.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!os) throw IoError("write_ppm_frame: write failed");
}

std::vector<std::string> write_ppm_video(const std::string& prefix, const Tensor& video) {
    const int N = video.shape()[0];
    std::vector<std::string> paths;
    paths.reserve(N);
    char buf[32];
    for (int f = 0; f < N; ++f) {
        std::snprintf(buf, sizeof(buf), "_%03d.ppm", f);
        paths.push_back(prefix + buf);
        write_ppm_frame(paths.back(), video, f);
    }
    return paths;
}

LoadedImage read_pnm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_pnm: cannot open '" + path + "'");
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || (m1 != '5' && m1 != '6')) throw FormatError("read_pnm: not a P5/P6 file");
    const bool rgb = (m1 == '6');
    const int W = read_pnm_int(is);
    const int H = read_pnm_int(is);
    const int maxval = read_pnm_int(is);
    if (W < 1 || H < 1 || maxval < 1 || maxval > 255)
        throw FormatError("read_pnm: unsupported dimensions or maxval");
    // Exactly one whitespace byte separates the header from pixel data.

    const size_t plane = static_cast<size_t>(H) * W;
    const size_t raw_sz = plane * (rgb ? 3 : 1);
    std::vector<unsigned char> raw(raw_sz);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw_sz));
    if (static_cast<size_t>(is.gcount()) != raw_sz)
        throw FormatError("read_pnm: truncated pixel data");

    LoadedImage img;
    img.height = H;
    img.width = W;
    img.chw.resize(3 * plane);
    const double inv = 2.0 / maxval;
    for (size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < 3; ++c) {
            const unsigned char b = rgb ? raw[p * 3 + c] : raw[p];
            img.chw[static_cast<size_t>(c) * plane + p] = b * inv - 1.0;
        }
    }
    return img;
}

}  // namespace sparsevid
