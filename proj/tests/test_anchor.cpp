#include <doctest.h>

#include <array>
#include <cmath>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "specsplat/anchor.hpp"
#include "specsplat/anchor_trainer.hpp"
#include "specsplat/rng.hpp"

using namespace specsplat;
using testutil::central_diff;

namespace {

template <typename T>
Camera<T> front_camera(int size, Vec2<T> principal) {
    Camera<T> cam;
    cam.rotation = Mat3<T>::identity();
    cam.translation = {T(0), T(0), T(0)};
    cam.focal = {T(size), T(size)};
    cam.principal = principal;
    cam.width = size;
    cam.height = size;
    return cam;
}

// Zero every weight and bias; heads then emit exactly their final biases.
template <typename T>
void zero_params(Mlp<T>& net) {
    std::fill(net.params.begin(), net.params.end(), T(0));
}

template <typename T>
T& final_bias(Mlp<T>& net, int unit) {
    return net.params[net.layers.back().b_off + std::size_t(unit)];
}

}  // namespace

TEST_CASE("voxelize snaps points to cell centers and keeps one anchor per cell") {
    const std::vector<Vec3<float>> pts{
        {0.1f, 0.0f, 0.0f}, {0.12f, 0.02f, -0.04f},  // same cell as the first
        {0.3f, 0.0f, 0.0f},                          // rounds up to the next cell
        {-0.3f, 0.0f, 0.0f},                         // rounds down on the negative side
    };
    const auto anchors = voxelize_init(pts, 0.5f, 7);
    REQUIRE(anchors.size() == 3);
    CHECK(anchors[0].position.x == 0.0f);
    CHECK(anchors[0].position.y == 0.0f);
    CHECK(anchors[0].position.z == 0.0f);
    CHECK(anchors[1].position.x == 0.5f);
    CHECK(anchors[2].position.x == -0.5f);
    for (const auto& a : anchors) {
        CHECK(a.scaling.x == 0.5f);
        CHECK(a.scaling.y == 0.5f);
        CHECK(a.scaling.z == 0.5f);
        for (float f : a.feature) CHECK(f == 0.0f);
    }
}

TEST_CASE("voxelize matches a brute-force dedup oracle at several cell sizes") {
    Rng rng(11);
    std::vector<Vec3<float>> pts(1000);
    for (auto& p : pts)
        p = {float(rng.uniform(-2.0, 2.0)), float(rng.uniform(-2.0, 2.0)),
             float(rng.uniform(-2.0, 2.0))};

    for (float eps : {0.1f, 0.5f, 1.0f}) {
        std::vector<std::array<long long, 3>> order;
        std::set<std::array<long long, 3>> seen;
        for (const auto& p : pts) {
            std::array<long long, 3> cell;
            for (int a = 0; a < 3; ++a)
                cell[std::size_t(a)] =
                    (long long)std::floor(double(p[std::size_t(a)]) / double(eps) + 0.5);
            if (seen.insert(cell).second) order.push_back(cell);
        }

        const auto anchors = voxelize_init(pts, eps, 3);
        REQUIRE(anchors.size() == order.size());
        for (std::size_t i = 0; i < anchors.size(); ++i)
            for (int a = 0; a < 3; ++a)
                CHECK(anchors[i].position[std::size_t(a)] ==
                      float(order[i][std::size_t(a)] * double(eps)));
    }
}

TEST_CASE("voxelize is idempotent on its own output") {
    Rng rng(12);
    std::vector<Vec3<float>> pts(200);
    for (auto& p : pts)
        p = {float(rng.uniform(-1.0, 1.0)), float(rng.uniform(-1.0, 1.0)),
             float(rng.uniform(-1.0, 1.0))};
    const auto first = voxelize_init(pts, 0.5f, 1);
    std::vector<Vec3<float>> centers;
    for (const auto& a : first) centers.push_back(a.position);
    const auto second = voxelize_init(centers, 0.5f, 1);
    REQUIRE(second.size() == first.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK(second[i].position.x == first[i].position.x);
        CHECK(second[i].position.y == first[i].position.y);
        CHECK(second[i].position.z == first[i].position.z);
    }
}

TEST_CASE("voxelize offsets are seeded noise") {
    const std::vector<Vec3<float>> pts{{0, 0, 0}, {1, 1, 1}};
    const auto a = voxelize_init(pts, 0.5f, 5);
    const auto b = voxelize_init(pts, 0.5f, 5);
    const auto c = voxelize_init(pts, 0.5f, 6);
    bool all_zero = true, differs = false;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (int j = 0; j < kAnchorChildren; ++j)
            for (int k = 0; k < 3; ++k) {
                const float v = a[i].offsets[std::size_t(j)][std::size_t(k)];
                CHECK(v == b[i].offsets[std::size_t(j)][std::size_t(k)]);
                if (v != 0.0f) all_zero = false;
                if (v != c[i].offsets[std::size_t(j)][std::size_t(k)]) differs = true;
            }
    CHECK_FALSE(all_zero);
    CHECK(differs);

    CHECK_THROWS_AS(voxelize_init(std::vector<Vec3<float>>{}, 0.5f, 1), std::invalid_argument);
    CHECK_THROWS_AS(voxelize_init(pts, 0.0f, 1), std::invalid_argument);
}

TEST_CASE("anchor model validation rejects mismatched head shapes") {
    auto model = AnchorModel<float>::make(4, 21);
    CHECK_NOTHROW(model.validate());

    auto broken = model;
    Rng rng(22);
    broken.heads.diffuse = Mlp<float>::make({kAnchorFeatureDim + 1, 3},
                                            {Activation::kSigmoid}, rng);
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);

    broken = model;
    broken.heads.theta = Mlp<float>::make({kAnchorFeatureDim + 3, 8}, {Activation::kLinear}, rng);
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);

    broken = model;
    broken.heads.opacity =
        Mlp<float>::make({kAnchorHeadInDim, kAnchorChildren + 1}, {Activation::kLinear}, rng);
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}

TEST_CASE("spawn decodes heads into children with the documented closed forms") {
    auto model = AnchorModel<float>::make(2, 31);
    zero_params(model.heads.opacity);
    zero_params(model.heads.rotation);
    zero_params(model.heads.scale);
    zero_params(model.heads.diffuse);

    // Child 2 spawns with a chosen opacity; everything else stays at
    // tanh(bias <= 0) <= 0 and is dropped.
    const float sigma = 0.6f;
    for (int j = 0; j < kAnchorChildren; ++j) final_bias(model.heads.opacity, j) = -1.0f;
    final_bias(model.heads.opacity, 2) = std::atanh(sigma);
    final_bias(model.heads.rotation, 4 * 2 + 0) = 1.0f;  // identity quaternion
    final_bias(model.heads.scale, 3 * 2 + 1) = 0.25f;

    AnchorGaussian<float> a;
    a.position = {0.5f, -0.25f, 2.0f};
    a.scaling = {0.5f, 0.25f, 0.125f};
    a.offsets[2] = {1.0f, -2.0f, 4.0f};

    const auto cam = front_camera<float>(16, {8.0f, 8.0f});
    AnchorWorkspace<float> ws;
    const auto kids = spawn_neural(a, cam, model.heads, ws);
    REQUIRE(kids.size() == 1);
    const auto& g = kids[0];
    CHECK(g.child == 2);
    CHECK(g.opacity == doctest::Approx(sigma).epsilon(1e-6));
    CHECK(g.position.x == doctest::Approx(0.5f + 1.0f * 0.5f).epsilon(1e-6));
    CHECK(g.position.y == doctest::Approx(-0.25f + -2.0f * 0.25f).epsilon(1e-6));
    CHECK(g.position.z == doctest::Approx(2.0f + 4.0f * 0.125f).epsilon(1e-6));
    CHECK(g.rotation.w == 1.0f);
    CHECK(g.rotation.x == 0.0f);
    CHECK(g.log_scale.x == doctest::Approx(std::log(0.5f)).epsilon(1e-6));
    CHECK(g.log_scale.y == doctest::Approx(std::log(0.25f) + 0.25f).epsilon(1e-6));
    CHECK(g.log_scale.z == doctest::Approx(std::log(0.125f)).epsilon(1e-6));
    for (int c = 0; c < 3; ++c)
        CHECK(g.diffuse[std::size_t(c)] == doctest::Approx(0.5f).epsilon(1e-6));  // sigmoid(0)

    // All biases at -1: nothing survives the opacity gate.
    final_bias(model.heads.opacity, 2) = -1.0f;
    CHECK(spawn_neural(a, cam, model.heads, ws).empty());
}

TEST_CASE("spawned positions follow the offset map for random models") {
    auto model = AnchorModel<float>::make(4, 41);
    Rng rng(42);
    auto anchors = voxelize_init(
        std::vector<Vec3<float>>{{0.0f, 0.0f, 2.0f}, {0.4f, -0.4f, 2.4f}, {-0.4f, 0.4f, 2.2f}},
        0.4f, 43);
    for (auto& a : anchors)
        for (auto& f : a.feature) f = float(rng.normal(0.0, 0.8));

    const auto cam = front_camera<float>(32, {16.0f, 16.0f});
    AnchorRenderContext<float> ctx;
    render_anchor_scene(anchors, model, cam, {0.1f, 0.1f, 0.1f}, &ctx);

    REQUIRE(!ctx.children.empty());
    int last_anchor = -1, last_child = -1;
    for (std::size_t i = 0; i < ctx.children.size(); ++i) {
        const auto& g = ctx.children[i];
        const auto& a = anchors[ctx.anchor_of[i]];
        CHECK(g.opacity > 0.0f);
        const Vec3<float> want =
            a.position + cwise_mul(a.offsets[std::size_t(g.child)], a.scaling);
        CHECK(g.position.x == want.x);
        CHECK(g.position.y == want.y);
        CHECK(g.position.z == want.z);
        // anchor-major order, strictly increasing child index within an anchor
        if (int(ctx.anchor_of[i]) == last_anchor) CHECK(g.child > last_child);
        else CHECK(int(ctx.anchor_of[i]) > last_anchor);
        last_anchor = int(ctx.anchor_of[i]);
        last_child = g.child;
    }
}

TEST_CASE("anchors outside the frustum spawn nothing") {
    auto model = AnchorModel<float>::make(2, 51);
    const auto cam = front_camera<float>(16, {8.0f, 8.0f});

    AnchorGaussian<float> behind;
    behind.position = {0.0f, 0.0f, -1.0f};
    behind.scaling = {0.1f, 0.1f, 0.1f};
    AnchorGaussian<float> far_off;
    far_off.position = {50.0f, 0.0f, 2.0f};
    far_off.scaling = {0.1f, 0.1f, 0.1f};

    AnchorRenderContext<float> ctx;
    const Vec3<float> bg{0.3f, 0.5f, 0.7f};
    const auto fb = render_anchor_scene<float>({behind, far_off}, model, cam, bg, &ctx);
    CHECK(ctx.children.empty());
    for (const auto& p : fb.color) {
        CHECK(p.x == bg.x);
        CHECK(p.y == bg.y);
        CHECK(p.z == bg.z);
    }

    const auto fb2 = render_anchor_scene<float>({}, model, cam, bg);
    for (const auto& p : fb2.color) CHECK(p.x == bg.x);
}

TEST_CASE("one child on the optical axis blends to an exact pixel value") {
    auto model = AnchorModel<double>::make(2, 61);
    zero_params(model.heads.opacity);
    zero_params(model.heads.rotation);
    zero_params(model.heads.scale);
    zero_params(model.heads.diffuse);
    zero_params(model.heads.theta);
    zero_params(model.psi);

    const double sigma = 0.6;
    for (int j = 0; j < kAnchorChildren; ++j) final_bias(model.heads.opacity, j) = -1.0;
    final_bias(model.heads.opacity, 0) = std::atanh(sigma);
    final_bias(model.heads.rotation, 0) = 1.0;

    AnchorGaussian<double> a;
    a.position = {0.0, 0.0, 2.0};
    a.scaling = {0.05, 0.05, 0.05};  // offsets stay zero: the child sits on the axis

    // Principal point on a pixel center, so the peak lands exactly there.
    auto cam = front_camera<double>(16, {8.5, 8.5});
    const Vec3<double> bg{0.25, 0.1, 0.4};
    const auto fb = render_anchor_scene<double>({a}, model, cam, bg);

    // Diffuse sigmoid(0) and specular sigmoid(0) compose to white.
    const Vec3<double> color{1.0, 1.0, 1.0};
    const Vec3<double>& center = fb.color[8 * 16 + 8];
    for (int c = 0; c < 3; ++c)
        CHECK(center[std::size_t(c)] ==
              doctest::Approx(sigma * color[std::size_t(c)] +
                              (1.0 - sigma) * bg[std::size_t(c)])
                  .epsilon(1e-12));
}

TEST_CASE("anchor rendering and gradients are bit-reproducible") {
    auto model = AnchorModel<float>::make(4, 71);
    Rng rng(72);
    std::vector<Vec3<float>> pts(40);
    for (auto& p : pts)
        p = {float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-0.5, 0.5)),
             float(rng.uniform(1.5, 2.5))};
    auto anchors = voxelize_init(pts, 0.3f, 73);
    for (auto& a : anchors)
        for (auto& f : a.feature) f = float(rng.normal(0.0, 0.8));

    const auto cam = front_camera<float>(32, {16.0f, 16.0f});
    const Vec3<float> bg{0.2f, 0.2f, 0.2f};
    std::vector<Vec3<float>> dimage(32 * 32);
    for (auto& d : dimage) d = {float(rng.normal()), float(rng.normal()), float(rng.normal())};

    AnchorRenderContext<float> ctx1, ctx2;
    const auto fb1 = render_anchor_scene(anchors, model, cam, bg, &ctx1);
    const auto fb2 = render_anchor_scene(anchors, model, cam, bg, &ctx2);
    REQUIRE(fb1.color.size() == fb2.color.size());
    for (std::size_t i = 0; i < fb1.color.size(); ++i) {
        CHECK(fb1.color[i].x == fb2.color[i].x);
        CHECK(fb1.color[i].y == fb2.color[i].y);
        CHECK(fb1.color[i].z == fb2.color[i].z);
    }

    AnchorGradBuffers<float> g1, g2;
    render_anchor_backward(anchors, model, ctx1, fb1, dimage, g1);
    render_anchor_backward(anchors, model, ctx2, fb2, dimage, g2);
    REQUIRE(!ctx1.children.empty());
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        for (int k = 0; k < kAnchorFeatureDim; ++k)
            CHECK(g1.feature[i][std::size_t(k)] == g2.feature[i][std::size_t(k)]);
        for (int k = 0; k < 3; ++k)
            CHECK(g1.scaling[i][std::size_t(k)] == g2.scaling[i][std::size_t(k)]);
    }
    for (std::size_t i = 0; i < g1.theta_params.size(); ++i)
        CHECK(g1.theta_params[i] == g2.theta_params[i]);
    for (std::size_t i = 0; i < g1.psi_params.size(); ++i)
        CHECK(g1.psi_params[i] == g2.psi_params[i]);
}

TEST_CASE("anchor backward matches finite differences") {
    auto model = AnchorModel<double>::make(4, 81);
    // Push the opacity head away from the spawn threshold so differencing
    // never creates or destroys a child, and damp the scale head so every
    // child stays compact. Fat low-opacity splats put many pixels on the
    // 1/255 fragment cutoff, where central differences pick up jumps the
    // analytic gradient rightly ignores.
    for (int j = 0; j < kAnchorChildren; ++j) final_bias(model.heads.opacity, j) += 0.6;
    for (auto& w : model.heads.scale.params) w *= 0.15;

    AnchorGaussian<double> a;
    a.position = {0.03, -0.04, 2.0};
    a.scaling = {0.15, 0.13, 0.17};
    Rng rng(82);
    for (auto& f : a.feature) f = rng.normal(0.0, 0.6);
    for (auto& o : a.offsets) o = {rng.normal(0.0, 0.3), rng.normal(0.0, 0.3), rng.normal(0.0, 0.3)};
    std::vector<AnchorGaussian<double>> anchors{a};

    const auto cam = front_camera<double>(16, {8.0, 8.0});
    const Vec3<double> bg{0.15, 0.25, 0.35};
    std::vector<Vec3<double>> dimage(16 * 16);
    for (auto& d : dimage) d = {rng.normal(), rng.normal(), rng.normal()};

    AnchorRenderContext<double> probe;
    render_anchor_scene(anchors, model, cam, bg, &probe);
    REQUIRE(!probe.children.empty());
    // Every sigma output clear of zero, spawned or dropped.
    {
        AnchorWorkspace<double> ws;
        anchor_head_input(anchors[0], cam, ws.head_in);
        ws.sigma_raw.resize(kAnchorChildren);
        model.heads.opacity.forward(ws.head_in.data(), ws.sigma_raw.data(), ws.opacity_ws);
        for (double raw : ws.sigma_raw) REQUIRE(std::abs(raw) > 0.02);
    }

    const auto scalar = [&] {
        const FrameBuffer<double> fb = render_anchor_scene(anchors, model, cam, bg);
        double acc = 0;
        for (std::size_t i = 0; i < fb.color.size(); ++i) acc += dot(dimage[i], fb.color[i]);
        return acc;
    };

    AnchorRenderContext<double> ctx;
    const auto fb = render_anchor_scene(anchors, model, cam, bg, &ctx);
    AnchorGradBuffers<double> grads;
    render_anchor_backward(anchors, model, ctx, fb, dimage, grads);

    testutil::GradCheckStats stats;
    for (int k = 0; k < kAnchorFeatureDim; ++k)
        stats.add(grads.feature[0][std::size_t(k)],
                  central_diff(scalar, &anchors[0].feature[std::size_t(k)]), 1e-3, 1e-3);
    for (int k = 0; k < 3; ++k)
        stats.add(grads.scaling[0][std::size_t(k)],
                  central_diff(scalar, &anchors[0].scaling[std::size_t(k)]), 1e-3, 1e-3);
    for (int j = 0; j < kAnchorChildren; ++j)
        for (int k = 0; k < 3; ++k)
            stats.add(grads.offsets[0][std::size_t(j)][std::size_t(k)],
                      central_diff(scalar, &anchors[0].offsets[std::size_t(j)][std::size_t(k)]),
                      1e-3, 1e-3);

    const auto sample_params = [&](Mlp<double>& net, std::vector<double>& analytic, int count) {
        for (int k = 0; k < count; ++k) {
            const std::size_t i = rng.uniform_int(std::uint32_t(net.param_count()));
            stats.add(analytic[i], central_diff(scalar, &net.params[i]), 1e-3, 1e-3);
        }
    };
    sample_params(model.heads.opacity, grads.opacity_params, 20);
    sample_params(model.heads.rotation, grads.rotation_params, 20);
    sample_params(model.heads.scale, grads.scale_params, 20);
    sample_params(model.heads.diffuse, grads.diffuse_params, 20);
    sample_params(model.heads.theta, grads.theta_params, 30);
    sample_params(model.psi, grads.psi_params, 30);

    CHECK(stats.total == kAnchorFeatureDim + 3 + 3 * kAnchorChildren + 140);
    CHECK(stats.bad == 0);
    CHECK(stats.worst < 1e-3);
}

TEST_CASE("anchor gradients accumulate across anchors independently") {
    auto model = AnchorModel<double>::make(2, 91);
    for (int j = 0; j < kAnchorChildren; ++j) final_bias(model.heads.opacity, j) += 0.5;
    for (auto& w : model.heads.scale.params) w *= 0.15;

    Rng rng(92);
    std::vector<AnchorGaussian<double>> anchors(2);
    anchors[0].position = {-0.55, 0.0, 2.0};
    anchors[1].position = {0.55, 0.0, 2.0};
    for (auto& a : anchors) {
        a.scaling = {0.08, 0.08, 0.08};
        for (auto& f : a.feature) f = rng.normal(0.0, 0.6);
        for (auto& o : a.offsets)
            o = {rng.normal(0.0, 0.3), rng.normal(0.0, 0.3), rng.normal(0.0, 0.3)};
    }

    const auto cam = front_camera<double>(32, {16.0, 16.0});
    const Vec3<double> bg{0.1, 0.1, 0.1};
    std::vector<Vec3<double>> dimage(32 * 32);
    for (auto& d : dimage) d = {rng.normal(), rng.normal(), rng.normal()};

    AnchorRenderContext<double> ctx;
    const auto fb = render_anchor_scene(anchors, model, cam, bg, &ctx);
    AnchorGradBuffers<double> grads;
    render_anchor_backward(anchors, model, ctx, fb, dimage, grads);

    REQUIRE(!ctx.children.empty());
    double mag0 = 0, mag1 = 0;
    for (int k = 0; k < kAnchorFeatureDim; ++k) {
        mag0 += std::abs(grads.feature[0][std::size_t(k)]);
        mag1 += std::abs(grads.feature[1][std::size_t(k)]);
    }
    CHECK(mag0 > 0.0);
    CHECK(mag1 > 0.0);

    // The right anchor's footprint stays clear of the left quarter of the
    // image, so an image gradient confined there reaches only anchor 0.
    bool saw_right = false;
    for (std::size_t i = 0; i < ctx.children.size(); ++i)
        if (ctx.anchor_of[i] == 1 && !ctx.splats[i].culled) {
            REQUIRE(ctx.splats[i].mean2d.x - ctx.splats[i].bin_radius > 8.0);
            saw_right = true;
        }
    REQUIRE(saw_right);
    std::vector<Vec3<double>> quarter = dimage;
    for (int y = 0; y < 32; ++y)
        for (int x = 8; x < 32; ++x) quarter[std::size_t(y) * 32 + std::size_t(x)] = {};
    AnchorGradBuffers<double> gq;
    render_anchor_backward(anchors, model, ctx, fb, quarter, gq);
    double off_screen = 0, on_screen = 0;
    for (int k = 0; k < kAnchorFeatureDim; ++k) {
        off_screen += std::abs(gq.feature[1][std::size_t(k)]);
        on_screen += std::abs(gq.feature[0][std::size_t(k)]);
    }
    CHECK(off_screen == 0.0);
    CHECK(on_screen > 0.0);
}

TEST_CASE("anchor training descends toward a rendered target and reproduces bitwise") {
    const auto cam = front_camera<float>(24, {12.0f, 12.0f});
    const Vec3<float> bg{0.1f, 0.1f, 0.1f};

    auto make_anchor = [](Rng& rng) {
        AnchorGaussian<float> a;
        a.position = {0.0f, 0.0f, 2.0f};
        a.scaling = {0.15f, 0.15f, 0.15f};
        for (auto& f : a.feature) f = float(rng.normal(0.0, 0.5));
        for (auto& o : a.offsets)
            o = {float(rng.normal(0.0, 0.3)), float(rng.normal(0.0, 0.3)),
                 float(rng.normal(0.0, 0.3))};
        return a;
    };

    Rng gt_rng(101);
    auto gt_model = AnchorModel<float>::make(2, 102);
    for (int j = 0; j < kAnchorChildren; ++j) final_bias(gt_model.heads.opacity, j) += 0.5f;
    const std::vector<AnchorGaussian<float>> gt_anchors{make_anchor(gt_rng)};
    const auto gt_fb = render_anchor_scene(gt_anchors, gt_model, cam, bg);

    TrainView<float> view;
    view.cam = cam;
    view.image.resize(24, 24);
    view.image.pixels = gt_fb.color;

    auto run = [&] {
        Rng init_rng(103);
        auto model = AnchorModel<float>::make(2, 104);
        for (int j = 0; j < kAnchorChildren; ++j) final_bias(model.heads.opacity, j) += 0.5f;
        std::vector<AnchorGaussian<float>> anchors{make_anchor(init_rng)};

        TrainConfig<float> cfg;
        cfg.total_iters = 60;
        cfg.c2f_enabled = false;
        cfg.c2f_tau = 0;
        cfg.background = bg;
        cfg.seed = 105;
        AnchorTrainer<float> trainer(anchors, model, cfg, 1.0f);
        std::vector<float> losses;
        for (int i = 0; i < cfg.total_iters; ++i) losses.push_back(trainer.run_iteration(view));
        return std::make_pair(losses, trainer);
    };

    auto [losses1, trainer1] = run();
    auto [losses2, trainer2] = run();

    double head = 0, tail = 0;
    for (int i = 0; i < 10; ++i) {
        head += losses1[std::size_t(i)];
        tail += losses1[losses1.size() - 10 + std::size_t(i)];
    }
    CHECK(tail < 0.7 * head);

    for (std::size_t i = 0; i < losses1.size(); ++i) CHECK(losses1[i] == losses2[i]);
    for (std::size_t i = 0; i < trainer1.anchors.size(); ++i) {
        for (int k = 0; k < kAnchorFeatureDim; ++k)
            CHECK(trainer1.anchors[i].feature[std::size_t(k)] ==
                  trainer2.anchors[i].feature[std::size_t(k)]);
        for (int j = 0; j < kAnchorChildren; ++j)
            for (int k = 0; k < 3; ++k)
                CHECK(trainer1.anchors[i].offsets[std::size_t(j)][std::size_t(k)] ==
                      trainer2.anchors[i].offsets[std::size_t(j)][std::size_t(k)]);
    }
    for (std::size_t i = 0; i < trainer1.model.psi.params.size(); ++i)
        CHECK(trainer1.model.psi.params[i] == trainer2.model.psi.params[i]);

    // scaling stays positive through optimization
    for (const auto& a : trainer1.anchors)
        for (int k = 0; k < 3; ++k) CHECK(a.scaling[std::size_t(k)] > 0.0f);
}
