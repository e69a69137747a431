#include "aneuseg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace aneuseg {

namespace {

constexpr char kMagic[8] = {'A', 'N', 'S', 'G', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& name)
{
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw Error(name + ": truncated checkpoint");
    return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path)
{
    const ParamLayout lay = param_layout(ckpt.net);
    if (ckpt.params.tensors.size() != lay.tensors.size())
        throw Error("save_checkpoint: parameters do not match the net config");

    nlohmann::json h;
    h["format"] = "aneuseg-checkpoint";
    h["version"] = kCheckpointVersion;
    h["net"] = {{"num_resolutions", ckpt.net.num_resolutions}, {"in_channels", ckpt.net.in_channels},
                {"num_classes", ckpt.net.num_classes},         {"base_channels", ckpt.net.base_channels},
                {"channel_cap", ckpt.net.channel_cap},         {"norm", to_string(ckpt.net.norm)}};
    h["patch_size"] = {ckpt.patch_size.x(), ckpt.patch_size.y(), ckpt.patch_size.z()};
    h["preprocess"] = {{"target_spacing",
                        {ckpt.preprocess.target_spacing.x(), ckpt.preprocess.target_spacing.y(),
                         ckpt.preprocess.target_spacing.z()}},
                       {"image_order", ckpt.preprocess.image_order}};
    h["seed"] = ckpt.seed;
    h["epoch"] = ckpt.epoch;
    h["fold"] = ckpt.fold;
    nlohmann::json tensors = nlohmann::json::array();
    for (std::size_t i = 0; i < lay.tensors.size(); ++i) {
        const auto& t = ckpt.params.tensors[i];
        if (t.rows() != lay.tensors[i].rows || t.cols() != lay.tensors[i].cols)
            throw Error("save_checkpoint: shape mismatch for " + lay.tensors[i].name);
        tensors.push_back({{"name", lay.tensors[i].name}, {"shape", {t.rows(), t.cols()}}});
    }
    h["tensors"] = tensors;
    const std::string header = h.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& t : ckpt.params.tensors)
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!out)
        throw Error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    const std::string name = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + name);
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw Error(name + ": not a checkpoint (bad magic)");
    const auto version = get<std::uint32_t>(in, name);
    if (version != kCheckpointVersion)
        throw Error(name + ": unsupported checkpoint version " + std::to_string(version));
    const auto len = get<std::uint64_t>(in, name);
    if (len > (std::uint64_t{1} << 30))
        throw Error(name + ": implausible header length");
    std::string header(len, '\0');
    if (!in.read(header.data(), static_cast<std::streamsize>(len)))
        throw Error(name + ": truncated header");

    Checkpoint ck;
    try {
        const nlohmann::json h = nlohmann::json::parse(header);
        const auto& n = h.at("net");
        ck.net.num_resolutions = n.at("num_resolutions").get<int>();
        ck.net.in_channels = n.at("in_channels").get<int>();
        ck.net.num_classes = n.at("num_classes").get<int>();
        ck.net.base_channels = n.at("base_channels").get<int>();
        ck.net.channel_cap = n.at("channel_cap").get<int>();
        ck.net.norm = parse_norm(n.at("norm").get<std::string>());
        const auto ps = h.at("patch_size").get<std::vector<std::int64_t>>();
        if (ps.size() != 3)
            throw Error(name + ": patch_size must have 3 entries");
        ck.patch_size = Index3(ps[0], ps[1], ps[2]);
        const auto ts = h.at("preprocess").at("target_spacing").get<std::vector<double>>();
        if (ts.size() != 3)
            throw Error(name + ": target_spacing must have 3 entries");
        ck.preprocess.target_spacing = Vec3(ts[0], ts[1], ts[2]);
        ck.preprocess.image_order = h.at("preprocess").at("image_order").get<int>();
        ck.seed = h.at("seed").get<std::uint64_t>();
        ck.epoch = h.at("epoch").get<int>();
        ck.fold = h.at("fold").get<int>();

        const ParamLayout lay = param_layout(ck.net);
        const auto& tensors = h.at("tensors");
        if (tensors.size() != lay.tensors.size())
            throw Error(name + ": tensor count does not match the net config");
        for (std::size_t i = 0; i < lay.tensors.size(); ++i) {
            const auto shape = tensors[i].at("shape").get<std::vector<Eigen::Index>>();
            if (tensors[i].at("name").get<std::string>() != lay.tensors[i].name || shape.size() != 2 ||
                shape[0] != lay.tensors[i].rows || shape[1] != lay.tensors[i].cols)
                throw Error(name + ": tensor " + std::to_string(i) + " does not match the net layout");
        }
        for (const auto& info : lay.tensors) {
            Mat<float> t(info.rows, info.cols);
            if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float))))
                throw Error(name + ": truncated tensor payload");
            if (!t.allFinite())
                throw Error(name + ": non-finite value in " + info.name);
            ck.params.tensors.push_back(std::move(t));
            ck.params.velocity.push_back(Mat<float>::Zero(info.rows, info.cols));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(name + ": malformed checkpoint header: " + e.what());
    }
    return ck;
}

}  // namespace aneuseg
