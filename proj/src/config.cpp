#include "aneuseg/config.hpp"

#include <fstream>

namespace aneuseg {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed)
{
    if (!obj.is_object())
        throw Error("config: " + where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const char* a : allowed)
            known = known || key == a;
        if (!known)
            throw Error("config: unknown key '" + where + (where.empty() ? "" : ".") + key + "'");
    }
}

template <typename T>
void take(const json& obj, const char* key, T& out, const std::string& where)
{
    if (!obj.contains(key))
        return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error("config: bad value for '" + where + "." + key + "'");
    }
}

void take_int(const json& obj, const char* key, int& out, const std::string& where)
{
    if (obj.contains(key) && !obj.at(key).is_number_integer())
        throw Error("config: '" + where + "." + key + "' must be an integer");
    take(obj, key, out, where);
}

void take_double(const json& obj, const char* key, double& out, const std::string& where)
{
    if (obj.contains(key) && !obj.at(key).is_number())
        throw Error("config: '" + where + "." + key + "' must be a number");
    take(obj, key, out, where);
}

template <typename V>
void take_vec3(const json& obj, const char* key, V& out, const std::string& where)
{
    if (!obj.contains(key))
        return;
    const json& a = obj.at(key);
    if (!a.is_array() || a.size() != 3)
        throw Error("config: '" + where + "." + key + "' must be an array of 3 numbers");
    for (int d = 0; d < 3; ++d) {
        if (!a[d].is_number())
            throw Error("config: '" + where + "." + key + "' must be an array of 3 numbers");
        out[d] = a[d].get<typename V::Scalar>();
        if (std::is_integral_v<typename V::Scalar> && !a[d].is_number_integer())
            throw Error("config: '" + where + "." + key + "' must hold integers");
    }
}

void take_range(const json& obj, const char* key, Range& out, const std::string& where)
{
    if (!obj.contains(key))
        return;
    const json& a = obj.at(key);
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
        throw Error("config: '" + where + "." + key + "' must be [lo, hi]");
    out = {a[0].get<double>(), a[1].get<double>()};
}

json vec3(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
json vec3(const Index3& v) { return {v.x(), v.y(), v.z()}; }
json range(const Range& r) { return {r.lo, r.hi}; }

}  // namespace

void RunConfig::validate() const
{
    preprocess.validate();
    train.validate();
    if (folds < 2)
        throw Error("config: train.folds must be at least 2");
    if (!(metrics.hd_percentile > 0.0 && metrics.hd_percentile <= 100.0))
        throw Error("config: metrics.hd_percentile must be in (0, 100]");
    if (!(train.infer.overlap >= 0.0 && train.infer.overlap < 1.0) || !(train.infer.sigma_scale > 0.0))
        throw Error("config: infer.overlap must be in [0, 1) and infer.sigma_scale > 0");
}

RunConfig synthetic_run_config()
{
    RunConfig c;
    c.train.net.num_resolutions = 3;
    c.train.net.base_channels = 4;
    c.train.patch_size = Index3(32, 32, 32);
    c.train.batch_size = 2;
    c.train.epochs = 50;
    c.train.iterations_per_epoch = 25;
    return c;
}

json to_json(const RunConfig& c)
{
    const TrainRunConfig& t = c.train;
    const AugmentConfig& a = t.augment;
    json j;
    j["seed"] = t.seed;
    j["preprocess"] = {{"target_spacing", vec3(c.preprocess.target_spacing)},
                       {"image_order", c.preprocess.image_order}};
    j["patch"] = {{"size", vec3(t.patch_size)}, {"batch_size", t.batch_size}};
    j["net"] = {{"num_resolutions", t.net.num_resolutions},
                {"base_channels", t.net.base_channels},
                {"channel_cap", t.net.channel_cap},
                {"norm", to_string(t.net.norm)}};
    j["optimizer"] = {{"lr0", t.optimizer.lr0},
                      {"momentum", t.optimizer.momentum},
                      {"power", t.optimizer.power},
                      {"epsilon", t.optimizer.epsilon}};
    j["augment"] = {{"p_rotate", a.p_rotate}, {"angle_deg", range(a.angle_deg)},
                    {"p_scale", a.p_scale},   {"scale", range(a.scale)},
                    {"p_noise", a.p_noise},   {"noise_sigma", range(a.noise_sigma)},
                    {"p_gamma", a.p_gamma},   {"gamma", range(a.gamma)}};
    j["train"] = {{"epochs", t.epochs},
                  {"iterations_per_epoch", t.iterations_per_epoch},
                  {"val_every", t.val_every},
                  {"fg_probability", t.fg_probability},
                  {"folds", c.folds}};
    j["infer"] = {{"overlap", t.infer.overlap}, {"sigma_scale", t.infer.sigma_scale}};
    j["metrics"] = {{"hd_percentile", c.metrics.hd_percentile}};
    j["paths"] = {{"images", c.paths.images}, {"labels", c.paths.labels}, {"run_dir", c.paths.run_dir}};
    return j;
}

RunConfig config_from_json(const json& doc)
{
    check_keys(doc, "",
               {"seed", "preprocess", "patch", "net", "optimizer", "augment", "train", "infer", "metrics", "paths"});
    RunConfig c;
    TrainRunConfig& t = c.train;
    if (doc.contains("seed") && !doc.at("seed").is_number_unsigned())
        throw Error("config: 'seed' must be a non-negative integer");
    take(doc, "seed", t.seed, "");

    const json empty = json::object();
    auto section = [&](const char* name) -> const json& { return doc.contains(name) ? doc.at(name) : empty; };

    const json& pp = section("preprocess");
    check_keys(pp, "preprocess", {"target_spacing", "image_order"});
    take_vec3(pp, "target_spacing", c.preprocess.target_spacing, "preprocess");
    take_int(pp, "image_order", c.preprocess.image_order, "preprocess");

    const json& pa = section("patch");
    check_keys(pa, "patch", {"size", "batch_size"});
    take_vec3(pa, "size", t.patch_size, "patch");
    take_int(pa, "batch_size", t.batch_size, "patch");

    const json& n = section("net");
    check_keys(n, "net", {"num_resolutions", "base_channels", "channel_cap", "norm"});
    take_int(n, "num_resolutions", t.net.num_resolutions, "net");
    take_int(n, "base_channels", t.net.base_channels, "net");
    take_int(n, "channel_cap", t.net.channel_cap, "net");
    if (n.contains("norm")) {
        if (!n.at("norm").is_string())
            throw Error("config: 'net.norm' must be a string");
        t.net.norm = parse_norm(n.at("norm").get<std::string>());
    }

    const json& o = section("optimizer");
    check_keys(o, "optimizer", {"lr0", "momentum", "power", "epsilon"});
    take_double(o, "lr0", t.optimizer.lr0, "optimizer");
    take_double(o, "momentum", t.optimizer.momentum, "optimizer");
    take_double(o, "power", t.optimizer.power, "optimizer");
    take_double(o, "epsilon", t.optimizer.epsilon, "optimizer");

    const json& a = section("augment");
    check_keys(a, "augment",
               {"p_rotate", "angle_deg", "p_scale", "scale", "p_noise", "noise_sigma", "p_gamma", "gamma"});
    take_double(a, "p_rotate", t.augment.p_rotate, "augment");
    take_range(a, "angle_deg", t.augment.angle_deg, "augment");
    take_double(a, "p_scale", t.augment.p_scale, "augment");
    take_range(a, "scale", t.augment.scale, "augment");
    take_double(a, "p_noise", t.augment.p_noise, "augment");
    take_range(a, "noise_sigma", t.augment.noise_sigma, "augment");
    take_double(a, "p_gamma", t.augment.p_gamma, "augment");
    take_range(a, "gamma", t.augment.gamma, "augment");

    const json& tr = section("train");
    check_keys(tr, "train", {"epochs", "iterations_per_epoch", "val_every", "fg_probability", "folds"});
    take_int(tr, "epochs", t.epochs, "train");
    take_int(tr, "iterations_per_epoch", t.iterations_per_epoch, "train");
    take_int(tr, "val_every", t.val_every, "train");
    take_double(tr, "fg_probability", t.fg_probability, "train");
    take_int(tr, "folds", c.folds, "train");

    const json& in = section("infer");
    check_keys(in, "infer", {"overlap", "sigma_scale"});
    take_double(in, "overlap", t.infer.overlap, "infer");
    take_double(in, "sigma_scale", t.infer.sigma_scale, "infer");

    const json& m = section("metrics");
    check_keys(m, "metrics", {"hd_percentile"});
    take_double(m, "hd_percentile", c.metrics.hd_percentile, "metrics");

    const json& p = section("paths");
    check_keys(p, "paths", {"images", "labels", "run_dir"});
    take(p, "images", c.paths.images, "paths");
    take(p, "labels", c.paths.labels, "paths");
    take(p, "run_dir", c.paths.run_dir, "paths");

    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("config " + path.string() + ": " + e.what());
    }
    return config_from_json(doc);
}

bool operator==(const RunConfig& a, const RunConfig& b)
{
    return to_json(a) == to_json(b);
}

}  // namespace aneuseg
