#include "specsplat/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace specsplat {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'G', 'S'};

struct Writer {
    std::vector<std::uint8_t> bytes;

    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(std::uint8_t(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(std::uint32_t(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void vec2(Vec2<float> v) { f32(v.x), f32(v.y); }
    void vec3(Vec3<float> v) { f32(v.x), f32(v.y), f32(v.z); }

    void mlp(const Mlp<float>& net) {
        u32(std::uint32_t(net.layers.size()));
        for (const auto& l : net.layers) {
            u32(std::uint32_t(l.in));
            u32(std::uint32_t(l.out));
            u8(std::uint8_t(l.act));
        }
        u32(std::uint32_t(net.params.size()));
        for (float p : net.params) f32(p);
    }
    void camera(const Camera<float>& cam) {
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) f32(cam.rotation(std::size_t(r), std::size_t(c)));
        vec3(cam.translation);
        vec2(cam.focal);
        vec2(cam.principal);
        i32(cam.width);
        i32(cam.height);
        f32(cam.near_plane);
        f32(cam.far_plane);
    }
};

struct Reader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t at = 0;
    std::string path;

    void need(std::size_t n) const {
        if (at + n > size)
            throw CheckpointError("checkpoint: " + path + ": truncated file");
    }
    std::uint8_t u8() {
        need(1);
        return data[at++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(data[at++]) << (8 * i);
        return v;
    }
    std::int32_t i32() { return std::int32_t(u32()); }
    float f32() { return std::bit_cast<float>(u32()); }
    Vec2<float> vec2() {
        const float x = f32(), y = f32();
        return {x, y};
    }
    Vec3<float> vec3() {
        const float x = f32(), y = f32(), z = f32();
        return {x, y, z};
    }

    Mlp<float> mlp() {
        const std::uint32_t n_layers = u32();
        if (n_layers == 0 || n_layers > 64)
            throw CheckpointError("checkpoint: " + path + ": implausible network layout");
        std::vector<int> dims;
        std::vector<Activation> acts;
        for (std::uint32_t l = 0; l < n_layers; ++l) {
            const int in = i32(), out = i32();
            const std::uint8_t act = u8();
            if (in < 1 || out < 1 || act > std::uint8_t(Activation::kTanh))
                throw CheckpointError("checkpoint: " + path + ": implausible network layout");
            if (l == 0) dims.push_back(in);
            else if (dims.back() != in)
                throw CheckpointError("checkpoint: " + path + ": implausible network layout");
            dims.push_back(out);
            acts.push_back(Activation(act));
        }
        Rng scratch(0);
        Mlp<float> net = Mlp<float>::make(dims, acts, scratch);
        const std::uint32_t n_params = u32();
        if (n_params != net.params.size())
            throw CheckpointError("checkpoint: " + path + ": network weight count mismatch");
        for (auto& p : net.params) p = f32();
        return net;
    }
    Camera<float> camera() {
        Camera<float> cam;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) cam.rotation(std::size_t(r), std::size_t(c)) = f32();
        cam.translation = vec3();
        cam.focal = vec2();
        cam.principal = vec2();
        cam.width = i32();
        cam.height = i32();
        cam.near_plane = f32();
        cam.far_plane = f32();
        return cam;
    }
};

void write_config(Writer& w, const TrainConfig<float>& c) {
    w.i32(c.total_iters);
    w.f32(c.lambda_dssim);
    w.i32(c.c2f_tau);
    w.u8(c.c2f_enabled ? 1 : 0);
    w.f32(c.tau_g);
    w.i32(c.densify_interval);
    w.i32(c.densify_start);
    w.i32(c.densify_stop);
    w.u8(c.densify_enabled ? 1 : 0);
    w.i32(c.opacity_reset_interval);
    w.f32(c.prune_opacity);
    w.f32(c.split_scale_fraction);
    w.f32(c.prune_radius_fraction);
    w.i32(c.holdout_psnr_interval);
    w.vec3(c.background);
    w.f32(c.lr.position_init);
    w.f32(c.lr.position_final);
    w.f32(c.lr.rotation);
    w.f32(c.lr.log_scale);
    w.f32(c.lr.opacity);
    w.f32(c.lr.sh_dc);
    w.f32(c.lr.sh_rest);
    w.f32(c.lr.asg_feature);
    w.f32(c.lr.mlp_init);
    w.f32(c.lr.mlp_final);
    w.u32(c.seed);
}

TrainConfig<float> read_config(Reader& r) {
    TrainConfig<float> c;
    c.total_iters = r.i32();
    c.lambda_dssim = r.f32();
    c.c2f_tau = r.i32();
    c.c2f_enabled = r.u8() != 0;
    c.tau_g = r.f32();
    c.densify_interval = r.i32();
    c.densify_start = r.i32();
    c.densify_stop = r.i32();
    c.densify_enabled = r.u8() != 0;
    c.opacity_reset_interval = r.i32();
    c.prune_opacity = r.f32();
    c.split_scale_fraction = r.f32();
    c.prune_radius_fraction = r.f32();
    c.holdout_psnr_interval = r.i32();
    c.background = r.vec3();
    c.lr.position_init = r.f32();
    c.lr.position_final = r.f32();
    c.lr.rotation = r.f32();
    c.lr.log_scale = r.f32();
    c.lr.opacity = r.f32();
    c.lr.sh_dc = r.f32();
    c.lr.sh_rest = r.f32();
    c.lr.asg_feature = r.f32();
    c.lr.mlp_init = r.f32();
    c.lr.mlp_final = r.f32();
    c.seed = r.u32();
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    Writer w;
    w.bytes.insert(w.bytes.end(), kMagic, kMagic + 4);
    w.u32(kCheckpointVersion);
    w.u8(std::uint8_t(ck.variant));
    w.u32(ck.iteration);

    if (ck.variant == Variant::kVanilla) {
        w.u32(std::uint32_t(ck.gaussians.size()));
        for (const auto& g : ck.gaussians) w.vec3(g.position);
        for (const auto& g : ck.gaussians)
            for (int k = 0; k < 4; ++k) w.f32(g.rotation[std::size_t(k)]);
        for (const auto& g : ck.gaussians) w.vec3(g.log_scale);
        for (const auto& g : ck.gaussians) w.f32(g.opacity_logit);
        for (const auto& g : ck.gaussians)
            for (const auto& c : g.sh_coeffs) w.vec3(c);
        for (const auto& g : ck.gaussians)
            for (float f : g.asg_feature) w.f32(f);

        w.u32(std::uint32_t(ck.model.bank.lobes.size()));
        for (const auto& l : ck.model.bank.lobes) {
            w.vec3(l.x);
            w.vec3(l.y);
            w.vec3(l.z);
        }
        w.u8(ck.model.specular_enabled ? 1 : 0);
        w.mlp(ck.model.theta);
        w.mlp(ck.model.psi);
    } else {
        w.u32(std::uint32_t(ck.anchors.size()));
        for (const auto& a : ck.anchors) w.vec3(a.position);
        for (const auto& a : ck.anchors)
            for (float f : a.feature) w.f32(f);
        for (const auto& a : ck.anchors) w.vec3(a.scaling);
        for (const auto& a : ck.anchors)
            for (const auto& o : a.offsets) w.vec3(o);

        w.u32(std::uint32_t(ck.anchor_model.bank.lobes.size()));
        for (const auto& l : ck.anchor_model.bank.lobes) {
            w.vec3(l.x);
            w.vec3(l.y);
            w.vec3(l.z);
        }
        w.mlp(ck.anchor_model.heads.opacity);
        w.mlp(ck.anchor_model.heads.rotation);
        w.mlp(ck.anchor_model.heads.scale);
        w.mlp(ck.anchor_model.heads.diffuse);
        w.mlp(ck.anchor_model.heads.theta);
        w.mlp(ck.anchor_model.psi);
    }

    write_config(w, ck.config);
    w.u32(std::uint32_t(ck.cameras.size()));
    for (const auto& cam : ck.cameras) w.camera(cam);

    w.u32(std::uint32_t(ck.rng_state.size()));
    w.bytes.insert(w.bytes.end(), ck.rng_state.begin(), ck.rng_state.end());

    const auto crc = std::uint32_t(
        ::crc32(0L, reinterpret_cast<const Bytef*>(w.bytes.data()), uInt(w.bytes.size())));
    w.u32(crc);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("checkpoint: " + tmp + ": cannot open for writing");
        out.write(reinterpret_cast<const char*>(w.bytes.data()),
                  std::streamsize(w.bytes.size()));
        if (!out) {
            out.close();
            std::remove(tmp.c_str());
            throw CheckpointError("checkpoint: " + tmp + ": write failed");
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw CheckpointError("checkpoint: " + path + ": rename failed");
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: " + path + ": cannot open file");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());

    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw CheckpointError("checkpoint: " + path + ": bad magic (not a checkpoint file)");

    Reader r{bytes.data(), bytes.size(), 4, path};
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint: " + path + ": unsupported version " +
                              std::to_string(version) + " (this build reads version " +
                              std::to_string(kCheckpointVersion) + ")");

    if (bytes.size() < r.at + 4)
        throw CheckpointError("checkpoint: " + path + ": truncated file");
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= std::uint32_t(bytes[body + std::size_t(i)]) << (8 * i);
    const auto computed =
        std::uint32_t(::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), uInt(body)));
    if (stored != computed)
        throw CheckpointError("checkpoint: " + path + ": CRC mismatch (file corrupt)");
    r.size = body;  // the trailer is not part of any section

    Checkpoint ck;
    const std::uint8_t variant = r.u8();
    if (variant > std::uint8_t(Variant::kAnchor))
        throw CheckpointError("checkpoint: " + path + ": unknown variant tag");
    ck.variant = Variant(variant);
    ck.iteration = r.u32();

    if (ck.variant == Variant::kVanilla) {
        const std::uint32_t n = r.u32();
        ck.gaussians.resize(n);
        for (auto& g : ck.gaussians) g.position = r.vec3();
        for (auto& g : ck.gaussians)
            for (int k = 0; k < 4; ++k) g.rotation[std::size_t(k)] = r.f32();
        for (auto& g : ck.gaussians) g.log_scale = r.vec3();
        for (auto& g : ck.gaussians) g.opacity_logit = r.f32();
        for (auto& g : ck.gaussians)
            for (auto& c : g.sh_coeffs) c = r.vec3();
        for (auto& g : ck.gaussians)
            for (auto& f : g.asg_feature) f = r.f32();

        const std::uint32_t lobes = r.u32();
        ck.model.bank.lobes.resize(lobes);
        for (auto& l : ck.model.bank.lobes) {
            l.x = r.vec3();
            l.y = r.vec3();
            l.z = r.vec3();
        }
        ck.model.specular_enabled = r.u8() != 0;
        ck.model.theta = r.mlp();
        ck.model.psi = r.mlp();
    } else {
        const std::uint32_t n = r.u32();
        ck.anchors.resize(n);
        for (auto& a : ck.anchors) a.position = r.vec3();
        for (auto& a : ck.anchors)
            for (auto& f : a.feature) f = r.f32();
        for (auto& a : ck.anchors) a.scaling = r.vec3();
        for (auto& a : ck.anchors)
            for (auto& o : a.offsets) o = r.vec3();

        const std::uint32_t lobes = r.u32();
        ck.anchor_model.bank.lobes.resize(lobes);
        for (auto& l : ck.anchor_model.bank.lobes) {
            l.x = r.vec3();
            l.y = r.vec3();
            l.z = r.vec3();
        }
        ck.anchor_model.heads.opacity = r.mlp();
        ck.anchor_model.heads.rotation = r.mlp();
        ck.anchor_model.heads.scale = r.mlp();
        ck.anchor_model.heads.diffuse = r.mlp();
        ck.anchor_model.heads.theta = r.mlp();
        ck.anchor_model.psi = r.mlp();
    }

    ck.config = read_config(r);
    const std::uint32_t num_cams = r.u32();
    ck.cameras.resize(num_cams);
    for (auto& cam : ck.cameras) cam = r.camera();

    const std::uint32_t rng_len = r.u32();
    r.need(rng_len);
    ck.rng_state.assign(reinterpret_cast<const char*>(r.data + r.at), rng_len);
    r.at += rng_len;

    if (r.at != r.size)
        throw CheckpointError("checkpoint: " + path + ": trailing bytes after last section");
    return ck;
}

}  // namespace specsplat
