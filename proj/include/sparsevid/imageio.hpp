#pragma once

#include <string>
#include <vector>

#include "sparsevid/tensor.hpp"

namespace sparsevid {

// Write one [3,H,W] plane of video (frame index f) as binary PPM (P6),
// mapping [-1,1] to [0,255] with clamping.
void write_ppm_frame(const std::string& path, const Tensor& video, int frame);

// Write every frame as <prefix>_NNN.ppm; returns the paths written.
std::vector<std::string> write_ppm_video(const std::string& prefix, const Tensor& video);

// Read a binary P6 (RGB) or P5 (gray, replicated to 3 channels) image into a
// [3,H,W] buffer in [-1,1]. Throws FormatError on malformed input.
struct LoadedImage {
    int height = 0;
    int width = 0;
    std::vector<double> chw;  // [3,H,W]
};
LoadedImage read_pnm(const std::string& path);

}  // namespace sparsevid
