#include "specsplat/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace specsplat {

namespace {

std::string trim(const std::string& s) {
    const std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(int line, const std::string& what) {
    throw std::runtime_error("config: line " + std::to_string(line) + ": " + what);
}

int to_int(const std::string& v, int line) {
    try {
        std::size_t used = 0;
        const int out = std::stoi(v, &used);
        if (used != v.size()) fail(line, "expected an integer, got '" + v + "'");
        return out;
    } catch (const std::logic_error&) {
        fail(line, "expected an integer, got '" + v + "'");
    }
}

float to_float(const std::string& v, int line) {
    try {
        std::size_t used = 0;
        const float out = std::stof(v, &used);
        if (used != v.size()) fail(line, "expected a number, got '" + v + "'");
        return out;
    } catch (const std::logic_error&) {
        fail(line, "expected a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& v, int line) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    fail(line, "expected a boolean (true/false/on/off/1/0), got '" + v + "'");
}

Vec3<float> to_vec3(const std::string& v, int line) {
    std::stringstream ss(v);
    Vec3<float> out;
    char c1 = 0, c2 = 0;
    if (!(ss >> out.x >> c1 >> out.y >> c2 >> out.z) || c1 != ',' || c2 != ',' ||
        !(ss >> std::ws).eof())
        fail(line, "expected r,g,b, got '" + v + "'");
    return out;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, RunConfig base) {
    std::map<std::string, std::function<void(const std::string&, int)>> setters;
    const auto int_key = [&](const std::string& k, int& slot) {
        setters[k] = [&slot](const std::string& v, int line) { slot = to_int(v, line); };
    };
    const auto float_key = [&](const std::string& k, float& slot) {
        setters[k] = [&slot](const std::string& v, int line) { slot = to_float(v, line); };
    };
    const auto bool_key = [&](const std::string& k, bool& slot) {
        setters[k] = [&slot](const std::string& v, int line) { slot = to_bool(v, line); };
    };

    TrainConfig<float>& t = base.train;
    int_key("total_iters", t.total_iters);
    float_key("lambda_dssim", t.lambda_dssim);
    int_key("c2f_tau", t.c2f_tau);
    bool_key("c2f_enabled", t.c2f_enabled);
    float_key("tau_g", t.tau_g);
    int_key("densify_interval", t.densify_interval);
    int_key("densify_start", t.densify_start);
    int_key("densify_stop", t.densify_stop);
    bool_key("densify_enabled", t.densify_enabled);
    int_key("opacity_reset_interval", t.opacity_reset_interval);
    float_key("prune_opacity", t.prune_opacity);
    float_key("split_scale_fraction", t.split_scale_fraction);
    float_key("prune_radius_fraction", t.prune_radius_fraction);
    int_key("holdout_psnr_interval", t.holdout_psnr_interval);
    setters["background"] = [&t](const std::string& v, int line) {
        t.background = to_vec3(v, line);
    };
    setters["seed"] = [&t](const std::string& v, int line) {
        t.seed = std::uint32_t(to_int(v, line));
    };
    float_key("lr_position_init", t.lr.position_init);
    float_key("lr_position_final", t.lr.position_final);
    float_key("lr_rotation", t.lr.rotation);
    float_key("lr_log_scale", t.lr.log_scale);
    float_key("lr_opacity", t.lr.opacity);
    float_key("lr_sh_dc", t.lr.sh_dc);
    float_key("lr_sh_rest", t.lr.sh_rest);
    float_key("lr_asg_feature", t.lr.asg_feature);
    float_key("lr_mlp_init", t.lr.mlp_init);
    float_key("lr_mlp_final", t.lr.mlp_final);
    int_key("num_lobes", base.num_lobes);
    int_key("init_points", base.init_points);
    float_key("anchor_voxel", base.anchor_voxel);

    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        raw = trim(raw);
        if (raw.empty()) continue;
        const std::size_t eq = raw.find('=');
        if (eq == std::string::npos) fail(line, "expected key=value, got '" + raw + "'");
        const std::string key = trim(raw.substr(0, eq));
        const std::string value = trim(raw.substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end()) fail(line, "unknown key '" + key + "'");
        if (value.empty()) fail(line, "empty value for key '" + key + "'");
        it->second(value, line);
    }
    return base;
}

RunConfig load_run_config(const std::string& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: " + path + ": cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), base);
}

}  // namespace specsplat
