#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "sparsevid/checkpoint.hpp"
#include "sparsevid/config.hpp"
#include "sparsevid/errors.hpp"
#include "sparsevid/imageio.hpp"
#include "sparsevid/rng.hpp"
#include "sparsevid/vocab.hpp"

using namespace sparsevid;
namespace fs = std::filesystem;

namespace {

ArchConfig tiny_arch() {
    ArchConfig a;
    a.width0 = 4;
    a.width1 = 8;
    a.temb_dim = 8;
    a.text_dim = 4;
    return a;
}

std::string temp_path(const char* name) {
    return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("vocabulary and tokenizer") {
    CHECK(vocab_size() >= 10);
    CHECK(vocabulary()[kNullToken] == "<null>");
    CHECK(tokenize("") == std::vector<int>{kNullToken});
    auto toks = tokenize("red circle moves right");
    CHECK(toks.size() == 4);
    CHECK(detokenize(toks) == "red circle moves right");
    CHECK_THROWS_AS(tokenize("purple dodecahedron"), ArgumentError);
}

TEST_CASE("config parsing, getters, and validation") {
    const std::string path = temp_path("svtest_config.cfg");
    {
        std::ofstream f(path);
        f << "# run configuration\n"
          << "steps = 500\n"
          << "lr=3e-4\n"
          << "name = overfit smoke \n"
          << "\n"
          << "seed = 42\n";
    }
    KvConfig cfg = KvConfig::load(path);
    CHECK(cfg.get_int("steps") == 500);
    CHECK(cfg.get_double("lr") == doctest::Approx(3e-4));
    CHECK(cfg.get_str("name") == "overfit smoke");
    CHECK(cfg.get_u64("seed", 0) == 42);
    CHECK(cfg.get_int("missing", 7) == 7);
    CHECK_THROWS_WITH_AS(cfg.get_int("absent"),
                         doctest::Contains("absent"), ConfigError);
    CHECK_THROWS_WITH_AS(cfg.restrict_keys({"steps", "lr", "seed"}),
                         doctest::Contains("name"), ConfigError);
    CHECK_NOTHROW(cfg.restrict_keys({"steps", "lr", "seed", "name"}));

    cfg.set("steps", "9");
    CHECK(cfg.get_int("steps") == 9);  // flag override wins

    // Canonical form is sorted and stable.
    CHECK(cfg.canonical().find("lr=") != std::string::npos);

    {
        std::ofstream f(path);
        f << "steps 500\n";  // no '=' separator
    }
    CHECK_THROWS_AS(KvConfig::load(path), ConfigError);
    fs::remove(path);
    CHECK_THROWS_AS(KvConfig::load(path), IoError);
}

TEST_CASE("backbone checkpoint round-trips bitwise") {
    Backbone net(tiny_arch(), 31);
    {
        Rng rng(1);
        for (auto& [name, t] : net.params().all()) fill_normal(t, rng, 0.3);
    }
    const std::string path = temp_path("svtest_backbone.ckpt");
    save_backbone(path, net);
    auto back = load_backbone(path);
    CHECK(back->config() == net.config());
    CHECK(params_digest(back->params()) == params_digest(net.params()));
    REQUIRE(back->params().all().size() == net.params().all().size());
    for (size_t i = 0; i < net.params().all().size(); ++i) {
        CHECK(back->params().all()[i].first == net.params().all()[i].first);
        CHECK(back->params().all()[i].second.values() ==
              net.params().all()[i].second.values());
    }
    fs::remove(path);
}

TEST_CASE("encoder checkpoint preserves variant and modality") {
    SparseEncoder enc(tiny_arch(), EncoderVariant::kTemporalWithNoise, Modality::kSketch, 32);
    const std::string path = temp_path("svtest_encoder.ckpt");
    save_encoder(path, enc);
    auto back = load_encoder(path);
    CHECK(back->variant() == EncoderVariant::kTemporalWithNoise);
    CHECK(back->modality() == Modality::kSketch);
    CHECK(params_digest(back->params()) == params_digest(enc.params()));
    fs::remove(path);
}

TEST_CASE("corrupted checkpoints are rejected") {
    Backbone net(tiny_arch(), 33);
    const std::string path = temp_path("svtest_bad.ckpt");
    save_backbone(path, net);
    const auto size = fs::file_size(path);

    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.put('Z');
    }
    CHECK_THROWS_AS(load_backbone(path), FormatError);

    save_backbone(path, net);
    fs::resize_file(path, size - 16);
    CHECK_THROWS_AS(load_backbone(path), FormatError);

    save_backbone(path, net);
    {
        std::ofstream f(path, std::ios::app | std::ios::binary);
        f.put('\0');
    }
    CHECK_THROWS_AS(load_backbone(path), FormatError);

    // A backbone file is not an encoder file.
    save_backbone(path, net);
    CHECK_THROWS_AS(load_encoder(path), FormatError);
    fs::remove(path);
}

TEST_CASE("file digest detects single-byte flips") {
    const std::string path = temp_path("svtest_digest.bin");
    {
        std::ofstream f(path, std::ios::binary);
        f << "some artifact bytes";
    }
    const std::string d0 = file_digest(path);
    CHECK(d0.size() == 64);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(3);
        f.put('X');
    }
    CHECK(file_digest(path) != d0);
    fs::remove(path);
}

TEST_CASE("ppm write/read round-trip within quantization") {
    Tensor video = Tensor::zeros({2, 3, 4, 6});
    Rng rng(9);
    for (double& v : video.values()) v = 2.0 * rng.uniform() - 1.0;
    const std::string path = temp_path("svtest_frame.ppm");
    write_ppm_frame(path, video, 1);
    LoadedImage img = read_pnm(path);
    CHECK(img.height == 4);
    CHECK(img.width == 6);
    const size_t plane = 24;
    for (size_t i = 0; i < 3 * plane; ++i) {
        const double orig = video.data()[3 * plane + i];
        CHECK(std::abs(img.chw[i] - orig) < 2.0 / 255.0 + 1e-9);
    }
    fs::remove(path);
    CHECK_THROWS_AS(read_pnm(path), IoError);
}

TEST_CASE("pnm reader rejects malformed files") {
    const std::string path = temp_path("svtest_bad.pnm");
    {
        std::ofstream f(path, std::ios::binary);
        f << "P3\n2 2\n255\n";  // ASCII variant unsupported
    }
    CHECK_THROWS_AS(read_pnm(path), FormatError);
    {
        std::ofstream f(path, std::ios::binary);
        f << "P6\n4 4\n255\nxx";  // truncated pixels
    }
    CHECK_THROWS_AS(read_pnm(path), FormatError);
    fs::remove(path);
}

TEST_CASE("grayscale P5 input is replicated across channels") {
    const std::string path = temp_path("svtest_gray.pgm");
    {
        std::ofstream f(path, std::ios::binary);
        f << "P5\n2 1\n255\n";
        f.put(static_cast<char>(0));
        f.put(static_cast<char>(255));
    }
    LoadedImage img = read_pnm(path);
    const size_t plane = 2;
    CHECK(img.chw[0] == doctest::Approx(-1.0));
    CHECK(img.chw[1] == doctest::Approx(1.0));
    for (int c = 1; c < 3; ++c)
        for (size_t p = 0; p < plane; ++p)
            CHECK(img.chw[c * plane + p] == img.chw[p]);
    fs::remove(path);
}
