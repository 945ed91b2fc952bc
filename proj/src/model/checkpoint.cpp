#include "avdit/model/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "avdit/model/config.hpp"
#include "avdit/numerics/io.hpp"

namespace avdit {

void save_checkpoint(const std::filesystem::path& dir, const ParamList& params, const nlohmann::json& config) {
    std::filesystem::create_directories(dir);
    std::vector<Tensor> ts;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& p : params.items()) {
        ts.push_back(p.tensor);
        entries.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
    }
    save_tensors(dir / "params.avt", ts);
    nlohmann::json manifest{{"format", "AVT1"},
                            {"params", entries},
                            {"config", config},
                            {"config_hash", model::config_hash(config)}};
    std::ofstream os(dir / "manifest.json");
    if (!os) throw Error("save_checkpoint: cannot write " + (dir / "manifest.json").string());
    os << manifest.dump(2) << "\n";
}

nlohmann::json load_checkpoint(const std::filesystem::path& dir, const ParamList& params) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw Error("load_checkpoint: missing " + (dir / "manifest.json").string());
    const auto manifest = nlohmann::json::parse(is);
    const auto& entries = manifest.at("params");
    if (manifest.at("config_hash").get<std::string>() != model::config_hash(manifest.at("config"))) {
        throw Error("load_checkpoint: config hash mismatch in " + dir.string());
    }
    const auto ts = load_tensors(dir / "params.avt");
    if (entries.size() != params.size() || ts.size() != params.size()) {
        throw Error("load_checkpoint: expected " + std::to_string(params.size()) + " parameters, found " +
                    std::to_string(ts.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = params.items()[i];
        const auto name = entries[i].at("name").get<std::string>();
        if (name != p.name) throw Error("load_checkpoint: parameter " + std::to_string(i) + " is " + name + ", expected " + p.name);
        if (ts[i].shape() != p.tensor.shape()) {
            throw Error("load_checkpoint: shape mismatch for " + name + ": " + shape_str(ts[i].shape()) + " vs " +
                        shape_str(p.tensor.shape()));
        }
        auto dst = Tensor(p.tensor).data();
        auto src = ts[i].data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return manifest.at("config");
}

std::string checkpoint_id(const std::filesystem::path& dir) {
    std::ifstream is(dir / "params.avt", std::ios::binary);
    if (!is) throw Error("checkpoint_id: cannot read " + (dir / "params.avt").string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::istreambuf_iterator<char> it(is), end; it != end; ++it) {
        h ^= static_cast<unsigned char>(*it);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace avdit
