#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsevid/rng.hpp"
#include "sparsevid/sparse_encoder.hpp"
#include "sparsevid/tensor.hpp"

namespace sparsevid {

inline constexpr double kDefaultSobelThreshold = 0.2;

struct SceneObject {
    enum class Kind { kCircle, kSquare };
    Kind kind = Kind::kCircle;
    double color[3] = {1.0, 0.0, 0.0};  // in [0,1]
    double x0 = 0.5, y0 = 0.5;          // start center, unit square
    double vx = 0.0, vy = 0.0;          // per-frame velocity
    double radius = 0.15;               // radius / half-width, fraction of image
    double depth = 0.5;                 // smaller = closer, in (0,1]
};

struct SceneSpec {
    std::vector<SceneObject> objects;
    double background_depth = 1.0;
    std::vector<int> prompt_tokens;
    uint64_t seed = 0;

    // Checks depth ordering/distinctness and that centers stay in [0,1]^2
    // for the given frame count. Throws ArgumentError.
    void validate(int frames) const;
};

// rgb [N,3,H,W] in [-1,1]; depth [N,1,H,W] with nearest-object values.
// All values pass through float32 so container round-trips are exact.
struct RenderedScene {
    Tensor rgb;
    Tensor depth;
};

RenderedScene render_scene(const SceneSpec& spec, int frames, int height, int width);

// One condition map [3,H,W] for the given frame.
// rgb: the frame itself; depth: (1 - d) replicated to 3 channels;
// sketch: 3x3 Sobel magnitude of grayscale, thresholded to {0,1}.
std::vector<double> extract_condition(const RenderedScene& video, int frame,
                                      Modality modality,
                                      double sobel_threshold = kDefaultSobelThreshold);

// Background color shared by every rendered scene, in [0,1].
const double* background_color();

struct DatasetRecord {
    SceneSpec spec;
    RenderedScene video;
};

// Container format: magic, version, manifest (count, N, H, W, modalities),
// then records with float32 little-endian tensors.
void write_dataset(const std::string& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_dataset(const std::string& path);

// Deterministic random scene generator for training/eval corpora.
SceneSpec random_scene(Rng& rng, int frames);
std::vector<DatasetRecord> generate_dataset(uint64_t seed, int count, int frames,
                                            int height, int width);

}  // namespace sparsevid
