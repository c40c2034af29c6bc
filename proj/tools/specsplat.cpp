#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "specsplat/anchor.hpp"
#include "specsplat/anchor_trainer.hpp"
#include "specsplat/checkpoint.hpp"
#include "specsplat/config.hpp"
#include "specsplat/dataset.hpp"
#include "specsplat/image.hpp"
#include "specsplat/loss.hpp"
#include "specsplat/ply.hpp"
#include "specsplat/trainer.hpp"

using namespace specsplat;
namespace fs = std::filesystem;

namespace {

Vec3<float> parse_background(const std::string& s) {
    Vec3<float> bg;
    char comma1 = 0, comma2 = 0;
    std::istringstream in(s);
    in >> bg.x >> comma1 >> bg.y >> comma2 >> bg.z;
    if (!in || comma1 != ',' || comma2 != ',')
        throw std::runtime_error("--background expects r,g,b, got '" + s + "'");
    return bg;
}

std::vector<TrainView<float>> views_for(const Dataset& ds, Split split) {
    std::vector<TrainView<float>> out;
    for (std::size_t i : ds.indices(split))
        out.push_back({ds.items[i].cam, ds.items[i].image});
    return out;
}

std::vector<Camera<float>> all_cameras(const Dataset& ds) {
    std::vector<Camera<float>> cams;
    for (const auto& item : ds.items) cams.push_back(item.cam);
    return cams;
}

// Uniform seed cloud inside the camera rig: cube centred on the rig
// centroid, half-width of half the scene extent.
std::vector<Vec3<float>> seed_cloud(const std::vector<Camera<float>>& cams, float extent,
                                    int count, std::uint32_t seed) {
    Vec3<double> c{};
    for (const auto& cam : cams) {
        const Vec3<float> p = cam.center();
        c += Vec3<double>{double(p.x), double(p.y), double(p.z)};
    }
    c = (1.0 / double(cams.size())) * c;
    Rng rng(seed);
    std::vector<Vec3<float>> pts(static_cast<std::size_t>(count));
    const double half = 0.5 * double(extent);
    for (auto& p : pts)
        p = {float(c.x + half * rng.uniform(-1.0, 1.0)),
             float(c.y + half * rng.uniform(-1.0, 1.0)),
             float(c.z + half * rng.uniform(-1.0, 1.0))};
    return pts;
}

FrameBuffer<float> render_checkpoint(const Checkpoint& ck, const Camera<float>& cam) {
    if (ck.variant == Variant::kAnchor)
        return render_anchor_scene(ck.anchors, ck.anchor_model, cam, ck.config.background);
    return render(ck.gaussians, ck.model, cam, ck.config.background);
}

struct EvalRow {
    std::string source;
    double psnr = 0;
    double ssim = 0;
};

std::vector<EvalRow> evaluate_split(const Checkpoint& ck, const Dataset& ds, Split split) {
    std::vector<EvalRow> rows;
    LossWorkspace<float> ws;
    for (std::size_t i : ds.indices(split)) {
        const auto& item = ds.items[i];
        const FrameBuffer<float> fb = render_checkpoint(ck, item.cam);
        EvalRow row;
        row.source = item.source;
        row.psnr = double(psnr(fb.color, item.image.pixels));
        const auto loss =
            image_loss(fb.color, item.image.pixels, fb.width, fb.height, 1.0f,
                       static_cast<std::vector<Vec3<float>>*>(nullptr), ws);
        row.ssim = 1.0 - 2.0 * double(loss.dssim);
        rows.push_back(row);
    }
    return rows;
}

Split pick_eval_split(const Dataset& ds, const std::string& name) {
    if (name == "train") return Split::kTrain;
    if (name == "holdout") return Split::kHoldout;
    return Split::kTest;
}

int cmd_train(const std::string& data, const std::string& out, const std::string& config_path,
              const std::string& variant, const std::string& c2f, bool c2f_set, float tau_g,
              bool tau_g_set, int seed, bool seed_set, const std::string& background,
              bool background_set) {
    RunConfig rc;
    if (!config_path.empty()) rc = load_run_config(config_path);
    if (c2f_set) rc.train.c2f_enabled = c2f == "on";
    if (tau_g_set) rc.train.tau_g = tau_g;
    if (seed_set) rc.train.seed = std::uint32_t(seed);
    if (background_set) rc.train.background = parse_background(background);

    const Dataset ds = load_nerf_synthetic(data, rc.train.background);
    const auto views = views_for(ds, Split::kTrain);
    if (views.empty()) throw std::runtime_error("train: dataset has no training views");

    const auto holdout_views = views_for(ds, Split::kHoldout);
    const TrainView<float>* holdout = holdout_views.empty() ? nullptr : &holdout_views.front();

    const auto cams = all_cameras(ds);
    const float extent = scene_extent_from(cams, std::vector<Vec3<float>>{});
    const auto points = seed_cloud(cams, extent, rc.init_points, rc.train.seed);

    Checkpoint ck;
    ck.config = rc.train;
    ck.cameras = cams;

    std::vector<TrainLogRow> log;
    if (variant == "anchor") {
        auto anchors = voxelize_init(points, rc.anchor_voxel * extent, rc.train.seed + 1);
        Rng frng(rc.train.seed + 2);
        for (auto& a : anchors)
            for (auto& f : a.feature) f = float(frng.normal(0.0, 0.1));
        auto model = AnchorModel<float>::make(rc.num_lobes, rc.train.seed + 3);
        AnchorTrainer<float> trainer(std::move(anchors), std::move(model), rc.train, extent);
        std::cerr << "training anchor scene: " << trainer.anchors.size() << " anchors, "
                  << views.size() << " views\n";
        log = trainer.run(views, holdout);
        ck.variant = Variant::kAnchor;
        ck.iteration = trainer.iter;
        ck.anchors = std::move(trainer.anchors);
        ck.anchor_model = std::move(trainer.model);
        ck.rng_state = trainer.rng.save_state();
    } else {
        auto gaussians = init_gaussians_from_points(points, rc.train.seed + 1);
        auto model = AppearanceModel<float>::make(rc.num_lobes, rc.train.seed + 2);
        Trainer<float> trainer(std::move(gaussians), std::move(model), rc.train, extent);
        std::cerr << "training: " << trainer.gaussians.size() << " seed gaussians, "
                  << views.size() << " views\n";
        log = trainer.run(views, holdout);
        ck.variant = Variant::kVanilla;
        ck.iteration = trainer.iter;
        ck.gaussians = std::move(trainer.gaussians);
        ck.model = std::move(trainer.model);
        ck.rng_state = trainer.rng.save_state();
    }

    write_train_log_csv(std::cout, log);
    save_checkpoint(out, ck);
    std::cerr << "saved " << out << "\n";
    return 0;
}

int cmd_render(const std::string& ckpt, int camera_index, const std::string& out) {
    const Checkpoint ck = load_checkpoint(ckpt);
    if (camera_index < 0 || std::size_t(camera_index) >= ck.cameras.size())
        throw std::runtime_error("render: camera index " + std::to_string(camera_index) +
                                 " out of range (checkpoint has " +
                                 std::to_string(ck.cameras.size()) + " cameras)");
    const FrameBuffer<float> fb = render_checkpoint(ck, ck.cameras[std::size_t(camera_index)]);
    Image<float> img;
    img.resize(fb.width, fb.height);
    img.pixels = fb.color;
    write_png(out, img);
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& split_name) {
    const Checkpoint ck = load_checkpoint(ckpt);
    const Dataset ds = load_nerf_synthetic(data, ck.config.background);
    const Split split = pick_eval_split(ds, split_name);
    const auto rows = evaluate_split(ck, ds, split);
    if (rows.empty()) throw std::runtime_error("eval: split '" + split_name + "' is empty");

    std::cout << "view,psnr,ssim\n";
    double sum_psnr = 0, sum_ssim = 0;
    for (const auto& r : rows) {
        std::cout << r.source << ',' << r.psnr << ',' << r.ssim << '\n';
        sum_psnr += r.psnr;
        sum_ssim += r.ssim;
    }
    std::cout << "mean," << sum_psnr / double(rows.size()) << ','
              << sum_ssim / double(rows.size()) << '\n';
    return 0;
}

int cmd_ablate(const std::string& data, const std::string& config_path, int iters, int seed) {
    RunConfig rc;
    if (!config_path.empty()) rc = load_run_config(config_path);
    rc.train.total_iters = iters;
    rc.train.seed = std::uint32_t(seed);

    const Dataset ds = load_nerf_synthetic(data, rc.train.background);
    const auto views = views_for(ds, Split::kTrain);
    if (views.empty()) throw std::runtime_error("ablate-asg: dataset has no training views");
    const Split eval_split =
        ds.indices(Split::kTest).empty() ? Split::kHoldout : Split::kTest;
    if (ds.indices(eval_split).empty())
        throw std::runtime_error("ablate-asg: dataset has no held-out views");

    const auto cams = all_cameras(ds);
    const float extent = scene_extent_from(cams, std::vector<Vec3<float>>{});
    const auto points = seed_cloud(cams, extent, rc.init_points, rc.train.seed);

    // Identical seeds, schedules and budgets; the only difference is
    // whether the view-dependent specular term is evaluated.
    struct Arm {
        const char* name;
        bool specular;
        double psnr = 0, ssim = 0;
        std::size_t count = 0;
    } arms[2] = {{"sh_only", false}, {"asg_field", true}};

    for (auto& arm : arms) {
        auto model = AppearanceModel<float>::make(rc.num_lobes, rc.train.seed + 2);
        model.specular_enabled = arm.specular;
        Trainer<float> trainer(init_gaussians_from_points(points, rc.train.seed + 1),
                               std::move(model), rc.train, extent);
        std::cerr << "ablate-asg: training " << arm.name << "\n";
        trainer.run(views, nullptr);

        Checkpoint ck;
        ck.gaussians = std::move(trainer.gaussians);
        ck.model = std::move(trainer.model);
        ck.config = rc.train;
        const auto rows = evaluate_split(ck, ds, eval_split);
        for (const auto& r : rows) {
            arm.psnr += r.psnr;
            arm.ssim += r.ssim;
        }
        arm.psnr /= double(rows.size());
        arm.ssim /= double(rows.size());
        arm.count = ck.gaussians.size();
    }

    std::cout << "model,psnr,ssim,num_gaussians\n";
    for (const auto& arm : arms)
        std::cout << arm.name << ',' << arm.psnr << ',' << arm.ssim << ',' << arm.count << '\n';
    std::cout << "delta_db," << arms[1].psnr - arms[0].psnr << ",,\n";
    return 0;
}

// Emits the camera in the OpenGL camera-to-world convention the loader
// expects: columns [right, up, backward], translation = camera centre.
nlohmann::json transform_json(const Camera<float>& cam) {
    const Vec3<float> center = cam.center();
    nlohmann::json m = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < 4; ++c) {
            double v = 0;
            if (r == 3) {
                v = c == 3 ? 1.0 : 0.0;
            } else if (c == 3) {
                v = double(center[std::size_t(r)]);
            } else {
                const float sign = c == 0 ? 1.0f : -1.0f;
                v = double(sign * cam.rotation(std::size_t(c), std::size_t(r)));
            }
            row.push_back(v);
        }
        m.push_back(row);
    }
    return m;
}

int cmd_gen_scene(int seed, const std::string& out, int blobs, int train_views, int eval_views,
                  int resolution, float amplitude) {
    AnisoSceneSpec spec;
    spec.seed = std::uint32_t(seed);
    spec.num_blobs = blobs;
    spec.train_views = train_views;
    spec.eval_views = eval_views;
    spec.resolution = resolution;
    spec.specular_amplitude = amplitude;
    const AnisoScene scene = generate_aniso_scene(spec);

    fs::create_directories(fs::path(out) / "train");
    fs::create_directories(fs::path(out) / "test");

    nlohmann::json train_frames = nlohmann::json::array();
    nlohmann::json test_frames = nlohmann::json::array();
    int n_train = 0, n_test = 0;
    double angle_x = 0;
    for (const auto& item : scene.dataset.items) {
        const bool is_train = item.split == Split::kTrain;
        const std::string rel = std::string(is_train ? "train/r_" : "test/r_") +
                                std::to_string(is_train ? n_train++ : n_test++);
        write_png((fs::path(out) / (rel + ".png")).string(), item.image);
        nlohmann::json frame = {{"file_path", "./" + rel},
                                {"transform_matrix", transform_json(item.cam)}};
        (is_train ? train_frames : test_frames).push_back(frame);
        angle_x = 2.0 * std::atan(0.5 * double(item.cam.width) / double(item.cam.focal.x));
    }

    const auto dump = [&](const char* name, const nlohmann::json& frames) {
        nlohmann::json root = {{"camera_angle_x", angle_x}, {"frames", frames}};
        std::ofstream f(fs::path(out) / name);
        if (!f) throw std::runtime_error(std::string("gen-scene: cannot write ") + name);
        f << root.dump(2) << "\n";
    };
    dump("transforms_train.json", train_frames);
    dump("transforms_test.json", test_frames);
    std::cerr << "wrote " << n_train << " train + " << n_test << " test views to " << out
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"specsplat: differentiable gaussian splatting with an anisotropic "
                 "spherical-gaussian appearance field"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    std::string data, out, ckpt, config_path;
    std::string variant = "vanilla", c2f = "on", background, split_name = "test";
    float tau_g = 0;
    int seed = 1, camera_index = 0, iters = 2000;
    int blobs = 12, train_views = 24, eval_views = 8, resolution = 64;
    float amplitude = 1.2f;
    std::string export_ply;

    auto* train = app.add_subcommand("train", "optimize a scene against a dataset");
    train->add_option("--data", data, "dataset directory (transforms_*.json + images)")
        ->required();
    train->add_option("--out", out, "output checkpoint path")->required();
    train->add_option("--config", config_path, "key=value config file");
    train->add_option("--variant", variant, "scene parameterization")
        ->check(CLI::IsMember({"vanilla", "anchor"}));
    auto* c2f_opt = train->add_option("--c2f", c2f, "coarse-to-fine resolution schedule")
                        ->check(CLI::IsMember({"on", "off"}));
    auto* tau_opt = train->add_option("--tau-g", tau_g, "densification gradient threshold");
    auto* seed_opt = train->add_option("--seed", seed, "rng seed");
    auto* bg_opt = train->add_option("--background", background, "background color r,g,b");
    train->add_option("--export-ply", export_ply,
                      "also write the scene as a 3D-GS-layout PLY (vanilla only)");

    auto* render = app.add_subcommand("render", "render one checkpoint camera to a PNG");
    render->add_option("--ckpt", ckpt, "checkpoint path")->required();
    render->add_option("--camera-index", camera_index, "index into the stored cameras")
        ->required();
    render->add_option("--out", out, "output PNG path")->required();

    auto* eval = app.add_subcommand("eval", "print a per-view PSNR/SSIM table as CSV");
    eval->add_option("--ckpt", ckpt, "checkpoint path")->required();
    eval->add_option("--data", data, "dataset directory")->required();
    eval->add_option("--split", split_name, "which split to evaluate")
        ->check(CLI::IsMember({"test", "holdout", "train"}));

    auto* ablate = app.add_subcommand(
        "ablate-asg", "train matched SH-only and ASG models, print the comparison");
    ablate->add_option("--data", data, "dataset directory")->required();
    ablate->add_option("--config", config_path, "key=value config file");
    ablate->add_option("--iters", iters, "iterations per arm");
    ablate->add_option("--seed", seed, "rng seed");

    auto* gen = app.add_subcommand("gen-scene", "write a procedural glossy-slab dataset");
    gen->add_option("--seed", seed, "rng seed")->required();
    gen->add_option("--out", out, "output dataset directory")->required();
    gen->add_option("--blobs", blobs, "number of gaussian blobs");
    gen->add_option("--train-views", train_views, "training view count");
    gen->add_option("--eval-views", eval_views, "test view count");
    gen->add_option("--resolution", resolution, "image width and height");
    gen->add_option("--amplitude", amplitude, "specular highlight strength");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (train->parsed()) {
            const int rc = cmd_train(data, out, config_path, variant, c2f, c2f_opt->count() > 0,
                                     tau_g, tau_opt->count() > 0, seed, seed_opt->count() > 0,
                                     background, bg_opt->count() > 0);
            if (rc == 0 && !export_ply.empty()) {
                const Checkpoint ck = load_checkpoint(out);
                if (ck.variant != Variant::kVanilla)
                    throw std::runtime_error("--export-ply supports the vanilla variant only");
                export_gs_ply(export_ply, ck.gaussians);
                std::cerr << "wrote " << export_ply << "\n";
            }
            return rc;
        }
        if (render->parsed()) return cmd_render(ckpt, camera_index, out);
        if (eval->parsed()) return cmd_eval(ckpt, data, split_name);
        if (ablate->parsed()) return cmd_ablate(data, config_path, iters, seed);
        if (gen->parsed())
            return cmd_gen_scene(seed, out, blobs, train_views, eval_views, resolution,
                                 amplitude);
    } catch (const std::exception& e) {
        std::cerr << "specsplat: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
