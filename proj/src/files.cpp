#include "aneuseg/files.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace aneuseg {

using nlohmann::json;

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write " + path.string());
        out << text;
        if (!out)
            throw Error("write failed for " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

json read_json(const std::filesystem::path& path)
{
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const json& doc)
{
    write_text(path, doc.dump(2) + "\n");
}

json split_to_json(const FoldSplit& split)
{
    return {{"k", split.k}, {"seed", split.seed}, {"folds", split.folds}};
}

FoldSplit split_from_json(const json& doc)
{
    FoldSplit s;
    try {
        s.k = doc.at("k").get<int>();
        s.seed = doc.at("seed").get<std::uint64_t>();
        s.folds = doc.at("folds").get<std::vector<std::vector<std::string>>>();
    } catch (const json::exception& e) {
        throw Error(std::string("malformed split: ") + e.what());
    }
    if (s.folds.size() != static_cast<std::size_t>(s.k))
        throw Error("malformed split: fold count does not match k");
    for (auto& f : s.folds)
        std::sort(f.begin(), f.end());
    return s;
}

std::string case_stem(const std::filesystem::path& path)
{
    std::string name = path.filename().string();
    for (const char* ext : {".nii.gz", ".nii"}) {
        const std::string e = ext;
        if (name.size() > e.size() && name.compare(name.size() - e.size(), e.size(), e) == 0)
            return name.substr(0, name.size() - e.size());
    }
    return path.stem().string();
}

}  // namespace aneuseg
