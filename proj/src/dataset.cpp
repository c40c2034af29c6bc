#include "specsplat/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "specsplat/asg.hpp"
#include "specsplat/rng.hpp"
#include "specsplat/threading.hpp"

namespace specsplat {

namespace {

using nlohmann::json;

json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open file");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

// OpenGL camera-to-world (looks down -z, y up) -> world-to-camera with
// +z forward and y down: R = diag(1,-1,-1) * R_c2w^T, t = -R * C.
Camera<float> camera_from_transform(const json& matrix, float camera_angle_x, int width,
                                    int height, const std::string& where) {
    if (!matrix.is_array() || matrix.size() != 4)
        throw std::runtime_error(where + ": transform_matrix must be a 4x4 array");
    float m[4][4];
    for (std::size_t r = 0; r < 4; ++r) {
        if (!matrix[r].is_array() || matrix[r].size() != 4)
            throw std::runtime_error(where + ": transform_matrix must be a 4x4 array");
        for (std::size_t c = 0; c < 4; ++c) m[r][c] = matrix[r][c].get<float>();
    }

    Camera<float> cam;
    for (int c = 0; c < 3; ++c) {
        cam.rotation(0, std::size_t(c)) = m[std::size_t(c)][0];
        cam.rotation(1, std::size_t(c)) = -m[std::size_t(c)][1];
        cam.rotation(2, std::size_t(c)) = -m[std::size_t(c)][2];
    }
    const Vec3<float> center{m[0][3], m[1][3], m[2][3]};
    cam.translation = -1.0f * (cam.rotation * center);

    const float f = 0.5f * float(width) / std::tan(0.5f * camera_angle_x);
    cam.focal = {f, f};
    cam.principal = {0.5f * float(width), 0.5f * float(height)};
    cam.width = width;
    cam.height = height;
    cam.validate();
    return cam;
}

struct FrameRef {
    std::string image_path;
    json transform;
    Split split;
    std::string where;
};

void collect_frames(const std::string& dir, const std::string& name, Split split,
                    std::vector<FrameRef>& out, float& camera_angle_x) {
    const std::string path = dir + "/" + name;
    const json root = parse_json_file(path);
    try {
        camera_angle_x = root.at("camera_angle_x").get<float>();
        const json& frames = root.at("frames");
        if (!frames.is_array()) throw std::runtime_error(path + ": 'frames' must be an array");
        for (std::size_t i = 0; i < frames.size(); ++i) {
            FrameRef ref;
            ref.where = path + ": frames[" + std::to_string(i) + "]";
            std::string rel = frames[i].at("file_path").get<std::string>();
            if (rel.rfind("./", 0) == 0) rel = rel.substr(2);
            if (rel.size() < 4 || rel.compare(rel.size() - 4, 4, ".png") != 0) rel += ".png";
            ref.image_path = dir + "/" + rel;
            ref.transform = frames[i].at("transform_matrix");
            ref.split = split;
            out.push_back(ref);
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

}  // namespace

Dataset load_nerf_synthetic(const std::string& dir, Vec3<float> background) {
    std::vector<FrameRef> frames;
    float train_angle = 0;
    collect_frames(dir, "transforms_train.json", Split::kTrain, frames, train_angle);
    const std::size_t num_train = frames.size();

    bool has_test = false;
    {
        std::ifstream probe(dir + "/transforms_test.json");
        has_test = bool(probe);
    }
    float test_angle = train_angle;
    if (has_test) collect_frames(dir, "transforms_test.json", Split::kTest, frames, test_angle);
    else
        for (std::size_t i = 0; i < num_train; i += 8) frames[i].split = Split::kHoldout;

    Dataset ds;
    ds.items.resize(frames.size());
    parallel_chunks(frames.size(), 4, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const FrameRef& ref = frames[i];
            std::vector<float> alpha;
            Image<float> img = read_png(ref.image_path, &alpha);
            if (!alpha.empty())
                for (std::size_t p = 0; p < img.pixels.size(); ++p) {
                    const float a = alpha[p];
                    for (int c = 0; c < 3; ++c)
                        img.pixels[p][std::size_t(c)] =
                            a * img.pixels[p][std::size_t(c)] +
                            (1.0f - a) * background[std::size_t(c)];
                }
            DatasetItem& item = ds.items[i];
            item.image = std::move(img);
            item.split = ref.split;
            item.source = ref.image_path;
            const float angle = ref.split == Split::kTest ? test_angle : train_angle;
            item.cam = camera_from_transform(ref.transform, angle, item.image.width,
                                             item.image.height, ref.where);
        }
    });
    return ds;
}

Camera<float> look_at_camera(Vec3<float> eye, Vec3<float> target, float focal_px, int width,
                             int height, Vec3<float> up) {
    const Vec3<float> fwd = normalized(target - eye);
    const Vec3<float> right = normalized(cross(fwd, up));
    const Vec3<float> down = cross(fwd, right);
    Camera<float> cam;
    for (int c = 0; c < 3; ++c) {
        cam.rotation(0, std::size_t(c)) = right[std::size_t(c)];
        cam.rotation(1, std::size_t(c)) = down[std::size_t(c)];
        cam.rotation(2, std::size_t(c)) = fwd[std::size_t(c)];
    }
    cam.translation = -1.0f * (cam.rotation * eye);
    cam.focal = {focal_px, focal_px};
    cam.principal = {0.5f * float(width), 0.5f * float(height)};
    cam.width = width;
    cam.height = height;
    cam.validate();
    return cam;
}

Vec3<float> AnisoScene::blob_color(std::size_t i, const Camera<float>& cam) const {
    const Gaussian<float>& g = blobs[i];
    const Vec3<float> w_o = normalized(cam.center() - g.position);
    const Vec3<float> nrm = shortest_axis_normal(g, w_o);
    const Vec3<float> w_r = reflect(w_o, nrm);

    const LobeFrame<float>& lobe = lobes[i];
    const float along = dot(w_r, lobe.z);
    float s = 0.0f;
    if (along > 0.0f) {
        const float tx = dot(w_r, lobe.x), ty = dot(w_r, lobe.y);
        s = along * std::exp(-spec.sharpness_x * tx * tx - spec.sharpness_y * ty * ty);
    }
    const float h = spec.specular_amplitude * s;
    Vec3<float> c = albedo[i] + h * highlight_tint;
    for (int k = 0; k < 3; ++k) c[std::size_t(k)] = std::min(c[std::size_t(k)], 1.0f);
    return c;
}

FrameBuffer<float> AnisoScene::render_view(const Camera<float>& cam) const {
    std::vector<Splat2D<float>> splats(blobs.size());
    std::vector<Vec3<float>> colors(blobs.size());
    std::vector<float> opacities(blobs.size());
    for (std::size_t i = 0; i < blobs.size(); ++i) {
        const Sym3<float> cov = covariance3d(blobs[i].rotation, blobs[i].log_scale);
        splats[i] = project_gaussian(blobs[i], cov, cam);
        colors[i] = blob_color(i, cam);
        opacities[i] = blobs[i].opacity();
    }
    const TileGrid grid = cull_and_bin(splats, cam.width, cam.height);
    FrameBuffer<float> fb;
    std::vector<std::int32_t> contrib;
    blend_forward(grid, splats, colors, opacities, spec.background, fb, contrib);
    return fb;
}

std::vector<Vec3<float>> AnisoScene::seed_points() const {
    std::vector<Vec3<float>> pts;
    for (const auto& g : blobs) pts.push_back(g.position);
    return pts;
}

AnisoScene generate_aniso_scene(const AnisoSceneSpec& spec) {
    if (spec.num_blobs < 1 || spec.train_views < 1 || spec.eval_views < 1 ||
        spec.resolution < 16)
        throw std::invalid_argument("generate_aniso_scene: degenerate spec");

    AnisoScene scene;
    scene.spec = spec;
    Rng rng(spec.seed);

    // Flat pancakes on a slab, shortest axis up so every view above the
    // slab sees the same +y normal.
    for (int i = 0; i < spec.num_blobs; ++i) {
        Gaussian<float> g;
        g.position = {float(rng.uniform(-0.6, 0.6)), float(rng.uniform(-0.12, 0.12)),
                      float(rng.uniform(-0.6, 0.6))};
        g.rotation = {1.0f, 0.0f, 0.0f, 0.0f};
        g.log_scale = {std::log(float(rng.uniform(0.16, 0.26))),
                       std::log(float(rng.uniform(0.05, 0.07))),
                       std::log(float(rng.uniform(0.16, 0.26)))};
        g.opacity_logit = float(rng.uniform(0.8, 1.4));
        scene.blobs.push_back(g);
        scene.albedo.push_back({float(rng.uniform(0.15, 0.65)), float(rng.uniform(0.15, 0.65)),
                                float(rng.uniform(0.15, 0.65))});
    }

    // Per-blob planted lobe axes: azimuths stratified around the ring so
    // every view direction catches a highlight on some blob, elevations in
    // the band the camera rig actually reflects into. Frames by
    // Gram-Schmidt; the sharp falloff axis is the elevation-like tangent.
    const float kTau = float(2.0 * 3.14159265358979323846);
    for (int i = 0; i < spec.num_blobs; ++i) {
        const float az =
            kTau * float(i) / float(spec.num_blobs) + float(rng.uniform(-0.12, 0.12));
        const float el = float(rng.uniform(0.42, 0.72));
        LobeFrame<float> lobe;
        lobe.z = {std::cos(el) * std::cos(az), std::sin(el), std::cos(el) * std::sin(az)};
        const Vec3<float> ref =
            std::abs(lobe.z.y) < 0.95f ? Vec3<float>{0, 1, 0} : Vec3<float>{1, 0, 0};
        lobe.x = normalized(ref - dot(ref, lobe.z) * lobe.z);
        lobe.y = cross(lobe.z, lobe.x);
        scene.lobes.push_back(lobe);
    }

    const auto rig_camera = [&](float azimuth, float elevation) {
        const float r = 2.6f;
        const Vec3<float> eye{r * std::cos(elevation) * std::cos(azimuth),
                              r * std::sin(elevation),
                              r * std::cos(elevation) * std::sin(azimuth)};
        return look_at_camera(eye, {0, 0, 0}, 1.1f * float(spec.resolution), spec.resolution,
                              spec.resolution);
    };

    const auto add_view = [&](const Camera<float>& cam, Split split, int idx) {
        const FrameBuffer<float> fb = scene.render_view(cam);
        DatasetItem item;
        item.cam = cam;
        item.split = split;
        item.source = (split == Split::kTrain ? "train_" : "eval_") + std::to_string(idx);
        item.image.resize(cam.width, cam.height);
        item.image.pixels = fb.color;
        scene.dataset.items.push_back(std::move(item));
    };

    const float two_pi = float(2.0 * 3.14159265358979323846);
    for (int i = 0; i < spec.train_views; ++i) {
        const float azimuth = two_pi * float(i) / float(spec.train_views);
        const float elevation = 0.35f + 0.25f * float(i % 3);
        add_view(rig_camera(azimuth, elevation), Split::kTrain, i);
    }
    for (int i = 0; i < spec.eval_views; ++i) {
        const float azimuth = two_pi * (float(i) + 0.37f) / float(spec.eval_views);
        const float elevation = 0.42f + 0.2f * float(i % 2);
        add_view(rig_camera(azimuth, elevation), Split::kTest, i);
    }
    return scene;
}

}  // namespace specsplat
