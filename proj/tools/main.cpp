#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sparsevid/checkpoint.hpp"
#include "sparsevid/config.hpp"
#include "sparsevid/dataset.hpp"
#include "sparsevid/errors.hpp"
#include "sparsevid/evaluation.hpp"
#include "sparsevid/imageio.hpp"
#include "sparsevid/sampling.hpp"
#include "sparsevid/training.hpp"
#include "sparsevid/vocab.hpp"

namespace sv = sparsevid;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

sv::ArchConfig arch_from_config(const sv::KvConfig& cfg) {
    sv::ArchConfig a;
    a.channels = cfg.get_int("arch.channels", a.channels);
    a.cond_channels = cfg.get_int("arch.cond_channels", a.cond_channels);
    a.width0 = cfg.get_int("arch.width0", a.width0);
    a.width1 = cfg.get_int("arch.width1", a.width1);
    a.temb_dim = cfg.get_int("arch.temb_dim", a.temb_dim);
    a.text_dim = cfg.get_int("arch.text_dim", a.text_dim);
    return a;
}

sv::TrainConfig train_from_config(const sv::KvConfig& cfg) {
    sv::TrainConfig t;
    t.steps = cfg.get_int("steps", t.steps);
    t.lr = cfg.get_double("lr", t.lr);
    t.T = cfg.get_int("T", t.T);
    t.schedule_kind = cfg.get_str("schedule", t.schedule_kind);
    t.cfg_dropout = cfg.get_double("cfg_dropout", t.cfg_dropout);
    t.cond_dropout = cfg.get_double("cond_dropout", t.cond_dropout);
    t.seed = cfg.get_u64("seed", t.seed);
    t.digest_check_interval = cfg.get_int("digest_check_interval", t.digest_check_interval);
    return t;
}

const std::vector<std::string> kArchKeys = {"arch.channels", "arch.cond_channels",
                                            "arch.width0",   "arch.width1",
                                            "arch.temb_dim", "arch.text_dim"};

int cmd_gen_data(uint64_t seed, int count, int frames, int height, int width,
                 const std::string& out) {
    if (count < 1) throw sv::ArgumentError("gen-data: count must be >= 1");
    if (frames < 1 || height < 4 || width < 4)
        throw sv::ArgumentError("gen-data: bad geometry");
    auto records = sv::generate_dataset(seed, count, frames, height, width);
    sv::write_dataset(out, records);
    std::cout << "wrote " << records.size() << " videos to " << out << "\n";
    return sv::kExitOk;
}

int cmd_train_backbone(const sv::KvConfig& cfg) {
    std::vector<std::string> allowed = {"dataset",     "steps", "lr",  "T",
                                        "schedule",    "seed",  "out", "log",
                                        "cfg_dropout", "cond_dropout",
                                        "digest_check_interval"};
    allowed.insert(allowed.end(), kArchKeys.begin(), kArchKeys.end());
    cfg.restrict_keys(allowed);

    auto dataset = sv::read_dataset(cfg.get_str("dataset"));
    sv::TrainConfig tc = train_from_config(cfg);
    sv::Backbone net(arch_from_config(cfg), tc.seed);
    auto log = sv::pretrain_backbone(net, dataset, tc);
    const std::string out = cfg.get_str("out");
    sv::save_backbone(out, net);
    if (cfg.has("log")) sv::write_training_log(cfg.get_str("log"), log);
    std::cout << "backbone checkpoint: " << out << "\n";
    if (!log.empty())
        std::cout << "final loss " << log.back().loss << " after " << log.size()
                  << " steps (" << log.back().wall_seconds << " s)\n";
    return sv::kExitOk;
}

int cmd_train_encoder(const sv::KvConfig& cfg) {
    cfg.restrict_keys({"dataset", "backbone", "variant", "modality", "steps", "lr", "T",
                       "schedule", "cfg_dropout", "cond_dropout", "seed", "out", "log",
                       "digest_check_interval"});

    auto dataset = sv::read_dataset(cfg.get_str("dataset"));
    auto backbone = sv::load_backbone(cfg.get_str("backbone"));
    sv::TrainConfig tc = train_from_config(cfg);
    sv::SparseEncoder encoder(backbone->config(),
                              sv::variant_from_name(cfg.get_str("variant")),
                              sv::modality_from_name(cfg.get_str("modality")),
                              tc.seed + 1);
    auto log = sv::train_encoder(encoder, *backbone, dataset, tc);
    const std::string out = cfg.get_str("out");
    sv::save_encoder(out, encoder);
    if (cfg.has("log")) sv::write_training_log(cfg.get_str("log"), log);
    std::cout << "encoder checkpoint: " << out << "\n";
    if (!log.empty())
        std::cout << "final loss " << log.back().loss << " after " << log.size()
                  << " steps (" << log.back().wall_seconds << " s)\n";
    return sv::kExitOk;
}

struct SampleArgs {
    std::string backbone_path;
    std::string encoder_path;
    std::string prompt;
    std::vector<std::string> cond_files;
    std::string keyframes_csv;
    std::string out_dir;
    uint64_t seed = 0;
    int steps = 50;
    double guidance = 3.0;
    int frames = 8;
    int height = 32;
    int width = 32;
    int T = 1000;
    std::string schedule = "linear-vp";
    bool stochastic = false;
};

int cmd_sample(const SampleArgs& a) {
    auto backbone = sv::load_backbone(a.backbone_path);
    std::unique_ptr<sv::SparseEncoder> encoder;
    if (!a.encoder_path.empty()) encoder = sv::load_encoder(a.encoder_path);

    std::vector<int> keyframes;
    for (const auto& tok : split(a.keyframes_csv, ','))
        keyframes.push_back(std::stoi(tok));
    if (!a.cond_files.empty() && !encoder)
        throw sv::ArgumentError("sample: condition files given without an encoder");
    if (encoder && a.cond_files.size() != keyframes.size())
        throw sv::ArgumentError("sample: need one condition file per keyframe index");

    sv::SampleOptions opt;
    opt.frames = a.frames;
    opt.height = a.height;
    opt.width = a.width;
    opt.steps = a.steps;
    opt.guidance = a.guidance;
    opt.seed = a.seed;
    opt.T = a.T;
    opt.schedule_kind = a.schedule;
    opt.mode = a.stochastic ? sv::SamplerMode::kStochastic : sv::SamplerMode::kDeterministic;

    sv::ConditionBundle bundle;
    const sv::ConditionBundle* bundle_ptr = nullptr;
    if (encoder) {
        for (int k : keyframes)
            if (k < 0 || k >= a.frames)
                throw sv::ArgumentError("sample: keyframe index out of range");
        std::vector<std::vector<double>> maps;
        for (const auto& path : a.cond_files) {
            sv::LoadedImage img = sv::read_pnm(path);
            if (img.height != a.height || img.width != a.width)
                throw sv::ArgumentError("sample: condition image size mismatch: " + path);
            if (encoder->modality() != sv::Modality::kRgb)
                for (double& v : img.chw) v = (v + 1.0) / 2.0;  // depth/sketch live in [0,1]
            maps.push_back(std::move(img.chw));
        }
        bundle = sv::ConditionBundle::from_keyframes(a.frames, 3, a.height, a.width,
                                                     encoder->modality(), keyframes, maps);
        bundle_ptr = &bundle;
    }

    sv::Tensor video = sv::sample_video(*backbone, encoder.get(), bundle_ptr,
                                        sv::tokenize(a.prompt), opt);

    fs::create_directories(a.out_dir);
    auto paths = sv::write_ppm_video((fs::path(a.out_dir) / "frame").string(), video);

    json meta;
    meta["backbone"] = a.backbone_path;
    meta["backbone_digest"] = sv::file_digest(a.backbone_path);
    if (encoder) {
        meta["encoder"] = a.encoder_path;
        meta["encoder_digest"] = sv::file_digest(a.encoder_path);
        meta["modality"] = sv::modality_name(encoder->modality());
        meta["variant"] = sv::variant_name(encoder->variant());
    }
    meta["prompt"] = a.prompt;
    meta["condition_files"] = a.cond_files;
    meta["keyframes"] = keyframes;
    meta["seed"] = a.seed;
    meta["steps"] = a.steps;
    meta["guidance"] = a.guidance;
    meta["frames"] = a.frames;
    meta["height"] = a.height;
    meta["width"] = a.width;
    meta["T"] = a.T;
    meta["schedule"] = a.schedule;
    meta["stochastic"] = a.stochastic;
    std::ofstream ms((fs::path(a.out_dir) / "metadata.json").string());
    if (!ms) throw sv::IoError("sample: cannot write metadata");
    ms << meta.dump(2) << "\n";

    std::cout << "wrote " << paths.size() << " frames to " << a.out_dir << "\n";
    return sv::kExitOk;
}

int cmd_eval(const sv::KvConfig& cfg) {
    cfg.restrict_keys({"dataset", "backbone", "encoders", "r_masks", "modality", "steps",
                       "guidance", "feat_dim", "extractor_seed", "sample_seed", "T",
                       "schedule", "stochastic", "max_videos", "out"});

    auto dataset = sv::read_dataset(cfg.get_str("dataset"));
    auto backbone = sv::load_backbone(cfg.get_str("backbone"));

    sv::EvalConfig ec;
    if (cfg.has("r_masks")) {
        ec.r_masks.clear();
        for (const auto& tok : split(cfg.get_str("r_masks"), ','))
            ec.r_masks.push_back(std::stod(tok));
    }
    ec.modality = sv::modality_from_name(cfg.get_str("modality", "depth"));
    ec.steps = cfg.get_int("steps", ec.steps);
    ec.guidance = cfg.get_double("guidance", ec.guidance);
    ec.feat_dim = cfg.get_int("feat_dim", ec.feat_dim);
    ec.extractor_seed = cfg.get_u64("extractor_seed", ec.extractor_seed);
    ec.sample_seed = cfg.get_u64("sample_seed", ec.sample_seed);
    ec.T = cfg.get_int("T", ec.T);
    ec.schedule_kind = cfg.get_str("schedule", ec.schedule_kind);
    ec.stochastic = cfg.get_int("stochastic", ec.stochastic ? 1 : 0) != 0;
    ec.max_videos = cfg.get_int("max_videos", ec.max_videos);

    std::vector<std::unique_ptr<sv::SparseEncoder>> loaded;
    std::vector<std::pair<std::string, const sv::SparseEncoder*>> encoders;
    for (const auto& item : split(cfg.get_str("encoders"), ',')) {
        loaded.push_back(sv::load_encoder(item));
        encoders.emplace_back(sv::variant_name(loaded.back()->variant()),
                              loaded.back().get());
    }

    sv::MetricsReport report = sv::run_sparsity_sweep(*backbone, encoders, dataset, ec);
    const std::string out = cfg.get_str("out");
    sv::write_report_text(out + ".txt", report);
    sv::write_report_json(out + ".json", report);
    std::cout << "report: " << out << ".txt / .json (digest " << report.config_digest
              << ")\n";
    for (const auto& c : report.cells)
        std::cout << c.variant << " r=" << c.r_mask << " err=" << c.mae
                  << " cons=" << c.consistency << "\n";
    return sv::kExitOk;
}

sv::KvConfig load_config_with_overrides(const std::string& path,
                                        const std::vector<std::string>& overrides) {
    sv::KvConfig cfg = sv::KvConfig::load(path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw sv::ArgumentError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse-condition video diffusion toolkit"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic video dataset");
    uint64_t g_seed = 0;
    int g_count = 16, g_frames = 8, g_height = 32, g_width = 32;
    std::string g_out = "dataset.svd";
    gen->add_option("--seed", g_seed);
    gen->add_option("--count", g_count);
    gen->add_option("--frames", g_frames);
    gen->add_option("--height", g_height);
    gen->add_option("--width", g_width);
    gen->add_option("--out", g_out);

    // shared config-driven subcommands
    std::string tb_config, te_config, ev_config;
    std::vector<std::string> tb_set, te_set, ev_set;
    std::string te_variant, te_modality;
    uint64_t tb_seed = 0, te_seed = 0;
    bool tb_seed_given = false, te_seed_given = false;
    std::string tb_out, te_out, ev_out;

    auto* tb = app.add_subcommand("train-backbone", "phase-1 backbone pretraining");
    tb->add_option("--config", tb_config)->required();
    tb->add_option("--seed", tb_seed)->each([&](const std::string&) { tb_seed_given = true; });
    tb->add_option("--out", tb_out);
    tb->add_option("--set", tb_set, "key=value config override");

    auto* te = app.add_subcommand("train-encoder", "phase-2 condition-encoder training");
    te->add_option("--config", te_config)->required();
    te->add_option("--variant", te_variant)->check(
        CLI::IsMember({"frame_wise", "temporal_noise", "full"}));
    te->add_option("--modality", te_modality)->check(CLI::IsMember({"sketch", "depth", "rgb"}));
    te->add_option("--seed", te_seed)->each([&](const std::string&) { te_seed_given = true; });
    te->add_option("--out", te_out);
    te->add_option("--set", te_set, "key=value config override");

    auto* sa = app.add_subcommand("sample", "generate a video from checkpoints");
    SampleArgs s;
    sa->add_option("--backbone", s.backbone_path)->required();
    sa->add_option("--encoder", s.encoder_path);
    sa->add_option("--prompt", s.prompt);
    sa->add_option("--cond", s.cond_files, "condition image (P5/P6), one per keyframe");
    sa->add_option("--keyframes", s.keyframes_csv, "comma-separated frame indices");
    sa->add_option("--out", s.out_dir)->required();
    sa->add_option("--seed", s.seed);
    sa->add_option("--steps", s.steps);
    sa->add_option("--guidance", s.guidance);
    sa->add_option("--frames", s.frames);
    sa->add_option("--height", s.height);
    sa->add_option("--width", s.width);
    sa->add_option("--T", s.T);
    sa->add_option("--schedule", s.schedule);
    sa->add_flag("--stochastic", s.stochastic);

    auto* ev = app.add_subcommand("eval", "sparsity sweep over trained encoders");
    std::string ev_rmask, ev_modality;
    ev->add_option("--config", ev_config)->required();
    ev->add_option("--out", ev_out);
    ev->add_option("--r-mask", ev_rmask, "comma-separated mask ratios");
    ev->add_option("--modality", ev_modality)->check(CLI::IsMember({"sketch", "depth", "rgb"}));
    ev->add_option("--set", ev_set, "key=value config override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? sv::kExitOk : sv::kExitUsage;
    }

    try {
        if (gen->parsed())
            return cmd_gen_data(g_seed, g_count, g_frames, g_height, g_width, g_out);
        if (tb->parsed()) {
            sv::KvConfig cfg = load_config_with_overrides(tb_config, tb_set);
            if (tb_seed_given) cfg.set("seed", std::to_string(tb_seed));
            if (!tb_out.empty()) cfg.set("out", tb_out);
            return cmd_train_backbone(cfg);
        }
        if (te->parsed()) {
            sv::KvConfig cfg = load_config_with_overrides(te_config, te_set);
            if (te_seed_given) cfg.set("seed", std::to_string(te_seed));
            if (!te_out.empty()) cfg.set("out", te_out);
            if (!te_variant.empty()) cfg.set("variant", te_variant);
            if (!te_modality.empty()) cfg.set("modality", te_modality);
            return cmd_train_encoder(cfg);
        }
        if (sa->parsed()) return cmd_sample(s);
        if (ev->parsed()) {
            sv::KvConfig cfg = load_config_with_overrides(ev_config, ev_set);
            if (!ev_out.empty()) cfg.set("out", ev_out);
            if (!ev_rmask.empty()) cfg.set("r_masks", ev_rmask);
            if (!ev_modality.empty()) cfg.set("modality", ev_modality);
            return cmd_eval(cfg);
        }
    } catch (const sv::ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return sv::kExitUsage;
    } catch (const sv::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return sv::kExitConfig;
    } catch (const sv::IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return sv::kExitIntegrity;
    } catch (const sv::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return sv::kExitIo;
    } catch (const sv::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return sv::kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return sv::kExitUsage;
    }
    return sv::kExitUsage;
}
