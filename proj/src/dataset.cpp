#include "sparsevid/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sparsevid/errors.hpp"
#include "sparsevid/vocab.hpp"

namespace sparsevid {
namespace {

constexpr char kMagic[8] = {'S', 'V', 'D', 'A', 'T', 'A', '1', '\n'};
constexpr uint32_t kVersion = 1;

inline double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

struct NamedColor {
    const char* name;
    double rgb[3];
};

const NamedColor kPalette[] = {
    {"red", {1.00, 0.15, 0.15}},
    {"green", {0.15, 1.00, 0.15}},
    {"blue", {0.20, 0.30, 1.00}},
    {"yellow", {1.00, 1.00, 0.20}},
    {"white", {1.00, 1.00, 1.00}},
    {"magenta", {1.00, 0.20, 1.00}},
};
constexpr int kPaletteSize = 6;

const double kBackground[3] = {0.08, 0.08, 0.08};

bool covers(const SceneObject& o, double cx, double cy, double px, double py) {
    if (o.kind == SceneObject::Kind::kCircle) {
        const double dx = px - cx, dy = py - cy;
        return dx * dx + dy * dy <= o.radius * o.radius;
    }
    return std::abs(px - cx) <= o.radius && std::abs(py - cy) <= o.radius;
}

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("dataset: truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_u64(std::ostream& os, uint64_t v) {
    write_u32(os, static_cast<uint32_t>(v));
    write_u32(os, static_cast<uint32_t>(v >> 32));
}

uint64_t read_u64(std::istream& is) {
    const uint64_t lo = read_u32(is);
    const uint64_t hi = read_u32(is);
    return lo | (hi << 32);
}

void write_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}

double read_f64(std::istream& is) {
    const uint64_t bits = read_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void write_tensor_f32(std::ostream& os, const Tensor& t) {
    std::vector<float> buf(t.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.data()[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Tensor read_tensor_f32(std::istream& is, std::vector<int> shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    std::vector<float> buf(t.size());
    if (!is.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float))))
        throw FormatError("dataset: truncated tensor payload");
    for (size_t i = 0; i < buf.size(); ++i) t.data()[i] = static_cast<double>(buf[i]);
    return t;
}

void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& is) {
    const uint32_t n = read_u32(is);
    if (n > (1u << 16)) throw FormatError("dataset: implausible string length");
    std::string s(n, '\0');
    if (!is.read(s.data(), n)) throw FormatError("dataset: truncated file");
    return s;
}

}  // namespace

const double* background_color() { return kBackground; }

void SceneSpec::validate(int frames) const {
    if (frames < 1) throw ArgumentError("SceneSpec: frames must be >= 1");
    for (size_t i = 0; i < objects.size(); ++i) {
        const auto& o = objects[i];
        if (o.depth <= 0.0 || o.depth > 1.0)
            throw ArgumentError("SceneSpec: object depth must be in (0,1]");
        if (o.depth >= background_depth)
            throw ArgumentError("SceneSpec: object depth must be closer than background");
        if (o.radius <= 0.0 || o.radius >= 0.5)
            throw ArgumentError("SceneSpec: radius out of range");
        for (size_t j = i + 1; j < objects.size(); ++j)
            if (objects[j].depth == o.depth)
                throw ArgumentError("SceneSpec: object depths must be pairwise distinct");
        for (int n = 0; n < frames; ++n) {
            const double cx = o.x0 + o.vx * n;
            const double cy = o.y0 + o.vy * n;
            if (cx < 0.0 || cx > 1.0 || cy < 0.0 || cy > 1.0)
                throw ArgumentError("SceneSpec: trajectory leaves the frame");
        }
    }
    for (int tok : prompt_tokens)
        if (tok < 0 || tok >= vocab_size())
            throw ArgumentError("SceneSpec: prompt token out of range");
}

RenderedScene render_scene(const SceneSpec& spec, int frames, int height, int width) {
    spec.validate(frames);
    RenderedScene out;
    out.rgb = Tensor::zeros({frames, 3, height, width});
    out.depth = Tensor::zeros({frames, 1, height, width});
    const size_t plane = static_cast<size_t>(height) * width;
    for (int n = 0; n < frames; ++n) {
        double* rgb = out.rgb.data() + static_cast<size_t>(n) * 3 * plane;
        double* dep = out.depth.data() + static_cast<size_t>(n) * plane;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const double px = (x + 0.5) / width;
                const double py = (y + 0.5) / height;
                double best_depth = spec.background_depth;
                const double* color = kBackground;
                for (const auto& o : spec.objects) {
                    const double cx = o.x0 + o.vx * n;
                    const double cy = o.y0 + o.vy * n;
                    if (covers(o, cx, cy, px, py) && o.depth < best_depth) {
                        best_depth = o.depth;
                        color = o.color;
                    }
                }
                const size_t p = static_cast<size_t>(y) * width + x;
                dep[p] = f32(best_depth);
                for (int c = 0; c < 3; ++c) rgb[static_cast<size_t>(c) * plane + p] =
                    f32(2.0 * color[c] - 1.0);
            }
    }
    return out;
}

std::vector<double> extract_condition(const RenderedScene& video, int frame,
                                      Modality modality, double sobel_threshold) {
    const int N = video.rgb.shape()[0], H = video.rgb.shape()[2], W = video.rgb.shape()[3];
    if (frame < 0 || frame >= N) throw ArgumentError("extract_condition: frame out of range");
    const size_t plane = static_cast<size_t>(H) * W;
    std::vector<double> out(3 * plane);
    const double* rgb = video.rgb.data() + static_cast<size_t>(frame) * 3 * plane;
    const double* dep = video.depth.data() + static_cast<size_t>(frame) * plane;

    switch (modality) {
        case Modality::kRgb:
            std::copy_n(rgb, 3 * plane, out.data());
            return out;
        case Modality::kDepth:
            for (size_t p = 0; p < plane; ++p) {
                const double c = f32(1.0 - dep[p]);
                out[p] = c;
                out[plane + p] = c;
                out[2 * plane + p] = c;
            }
            return out;
        case Modality::kSketch: {
            // Grayscale in [0,1], replicate-padded 3x3 Sobel, thresholded.
            std::vector<double> gray(plane);
            for (size_t p = 0; p < plane; ++p)
                gray[p] = ((rgb[p] + rgb[plane + p] + rgb[2 * plane + p]) / 3.0 + 1.0) / 2.0;
            auto at = [&](int y, int x) {
                y = std::clamp(y, 0, H - 1);
                x = std::clamp(x, 0, W - 1);
                return gray[static_cast<size_t>(y) * W + x];
            };
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                                      (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
                    const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                                      (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
                    const double mag = std::sqrt(gx * gx + gy * gy);
                    const double e = (mag > sobel_threshold) ? 1.0 : 0.0;
                    const size_t p = static_cast<size_t>(y) * W + x;
                    out[p] = e;
                    out[plane + p] = e;
                    out[2 * plane + p] = e;
                }
            return out;
        }
    }
    throw ConfigError("extract_condition: unknown modality");
}

void write_dataset(const std::string& path, const std::vector<DatasetRecord>& records) {
    if (records.empty()) throw ArgumentError("write_dataset: no records");
    const int N = records[0].video.rgb.shape()[0];
    const int H = records[0].video.rgb.shape()[2];
    const int W = records[0].video.rgb.shape()[3];
    for (const auto& r : records) {
        if (r.video.rgb.shape() != std::vector<int>{N, 3, H, W} ||
            r.video.depth.shape() != std::vector<int>{N, 1, H, W})
            throw ArgumentError("write_dataset: records must share [N,H,W]");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_dataset: cannot open '" + path + "'");
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    write_u32(os, static_cast<uint32_t>(records.size()));
    write_u32(os, static_cast<uint32_t>(N));
    write_u32(os, static_cast<uint32_t>(H));
    write_u32(os, static_cast<uint32_t>(W));
    write_str(os, "rgb,depth,sketch");
    for (const auto& r : records) {
        write_u32(os, static_cast<uint32_t>(r.spec.objects.size()));
        for (const auto& o : r.spec.objects) {
            os.put(o.kind == SceneObject::Kind::kCircle ? 0 : 1);
            for (double c : o.color) write_f64(os, c);
            write_f64(os, o.x0);
            write_f64(os, o.y0);
            write_f64(os, o.vx);
            write_f64(os, o.vy);
            write_f64(os, o.radius);
            write_f64(os, o.depth);
        }
        write_f64(os, r.spec.background_depth);
        write_u32(os, static_cast<uint32_t>(r.spec.prompt_tokens.size()));
        for (int tok : r.spec.prompt_tokens) write_u32(os, static_cast<uint32_t>(tok));
        write_u64(os, r.spec.seed);
        write_tensor_f32(os, r.video.rgb);
        write_tensor_f32(os, r.video.depth);
    }
    if (!os) throw IoError("write_dataset: write failed for '" + path + "'");
}

std::vector<DatasetRecord> read_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_dataset: cannot open '" + path + "'");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("dataset: bad magic");
    if (read_u32(is) != kVersion) throw FormatError("dataset: unsupported version");
    const uint32_t count = read_u32(is);
    const int N = static_cast<int>(read_u32(is));
    const int H = static_cast<int>(read_u32(is));
    const int W = static_cast<int>(read_u32(is));
    if (N < 1 || H < 1 || W < 1 || count < 1) throw FormatError("dataset: bad manifest");
    (void)read_str(is);  // modalities list
    std::vector<DatasetRecord> records;
    records.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        DatasetRecord r;
        const uint32_t nobj = read_u32(is);
        if (nobj > 64) throw FormatError("dataset: implausible object count");
        r.spec.objects.resize(nobj);
        for (auto& o : r.spec.objects) {
            int kind = is.get();
            if (kind < 0) throw FormatError("dataset: truncated record");
            o.kind = kind == 0 ? SceneObject::Kind::kCircle : SceneObject::Kind::kSquare;
            for (double& c : o.color) c = read_f64(is);
            o.x0 = read_f64(is);
            o.y0 = read_f64(is);
            o.vx = read_f64(is);
            o.vy = read_f64(is);
            o.radius = read_f64(is);
            o.depth = read_f64(is);
        }
        r.spec.background_depth = read_f64(is);
        const uint32_t ntok = read_u32(is);
        if (ntok > 256) throw FormatError("dataset: implausible prompt length");
        r.spec.prompt_tokens.resize(ntok);
        for (auto& tok : r.spec.prompt_tokens) tok = static_cast<int>(read_u32(is));
        r.spec.seed = read_u64(is);
        r.video.rgb = read_tensor_f32(is, {N, 3, H, W});
        r.video.depth = read_tensor_f32(is, {N, 1, H, W});
        records.push_back(std::move(r));
    }
    char extra;
    if (is.read(&extra, 1)) throw FormatError("dataset: trailing bytes after records");
    return records;
}

SceneSpec random_scene(Rng& rng, int frames) {
    SceneSpec spec;
    spec.seed = rng.next_u64();
    const int nobj = 1 + static_cast<int>(rng.uniform_int(2));

    // Distinct colors and depths per scene so the depth proxy is exact.
    std::vector<int> color_ids(kPaletteSize);
    for (int i = 0; i < kPaletteSize; ++i) color_ids[i] = i;
    for (int i = kPaletteSize - 1; i > 0; --i)
        std::swap(color_ids[i], color_ids[rng.uniform_int(i + 1)]);
    std::vector<double> depths = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
    for (int i = static_cast<int>(depths.size()) - 1; i > 0; --i)
        std::swap(depths[i], depths[rng.uniform_int(i + 1)]);

    static const char* kDirs[] = {"right", "left", "down", "up", "still"};
    int first_color = -1, first_dir = -1;
    bool first_circle = true;
    for (int i = 0; i < nobj; ++i) {
        SceneObject o;
        o.kind = rng.uniform() < 0.5 ? SceneObject::Kind::kCircle : SceneObject::Kind::kSquare;
        const int cid = color_ids[i];
        std::copy_n(kPalette[cid].rgb, 3, o.color);
        o.depth = depths[i];
        o.radius = 0.12 + 0.10 * rng.uniform();
        const int dir = static_cast<int>(rng.uniform_int(5));
        const double speed = (dir == 4) ? 0.0 : 0.01 + 0.02 * rng.uniform();
        o.vx = (dir == 0) ? speed : (dir == 1) ? -speed : 0.0;
        o.vy = (dir == 2) ? speed : (dir == 3) ? -speed : 0.0;
        const double travel_x = o.vx * (frames - 1);
        const double travel_y = o.vy * (frames - 1);
        const double margin = 0.02;
        const double lo_x = margin + std::max(0.0, -travel_x);
        const double hi_x = 1.0 - margin - std::max(0.0, travel_x);
        const double lo_y = margin + std::max(0.0, -travel_y);
        const double hi_y = 1.0 - margin - std::max(0.0, travel_y);
        o.x0 = lo_x + (hi_x - lo_x) * rng.uniform();
        o.y0 = lo_y + (hi_y - lo_y) * rng.uniform();
        spec.objects.push_back(o);
        if (i == 0) {
            first_color = cid;
            first_dir = dir;
            first_circle = (o.kind == SceneObject::Kind::kCircle);
        }
    }

    std::string prompt = std::string(kPalette[first_color].name) + " " +
                         (first_circle ? "circle" : "square");
    if (first_dir == 4)
        prompt += " still";
    else
        prompt += std::string(" moves ") + kDirs[first_dir];
    spec.prompt_tokens = tokenize(prompt);
    return spec;
}

std::vector<DatasetRecord> generate_dataset(uint64_t seed, int count, int frames,
                                            int height, int width) {
    if (count < 1) throw ArgumentError("generate_dataset: count must be >= 1");
    Rng rng(seed);
    std::vector<DatasetRecord> records;
    records.reserve(count);
    for (int i = 0; i < count; ++i) {
        DatasetRecord r;
        r.spec = random_scene(rng, frames);
        r.video = render_scene(r.spec, frames, height, width);
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace sparsevid
