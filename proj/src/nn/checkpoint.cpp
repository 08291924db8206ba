#include "phaforce/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace phaforce::nn {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "blob format assumes a little-endian host");

namespace {

std::string blob_name(const std::string& param) {
    std::string out;
    for (char c : param) out += (c == '/' ? '_' : c);
    return out + ".f64";
}

}  // namespace

void write_f64(const fs::path& file, std::span<const double> values) {
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write " + file.string());
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

std::vector<double> read_f64(const fs::path& file) {
    std::ifstream is(file, std::ios::binary | std::ios::ate);
    if (!is) throw CheckpointError("cannot read " + file.string());
    const auto bytes = static_cast<std::size_t>(is.tellg());
    if (bytes % sizeof(double) != 0) throw CheckpointError("truncated blob " + file.string());
    std::vector<double> v(bytes / sizeof(double));
    is.seekg(0);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
    return v;
}

void save_checkpoint(const fs::path& dir, const ParamStore& params, const nlohmann::json& meta) {
    fs::create_directories(dir / "params");
    nlohmann::json manifest;
    manifest["format"] = "phaforce-checkpoint-v1";
    manifest["meta"] = meta;
    auto& list = manifest["params"] = nlohmann::json::array();
    for (const auto& [name, t] : params.items()) {
        const std::string file = "params/" + blob_name(name);
        list.push_back({{"name", name}, {"shape", t.shape()}, {"file", file}});
        write_f64(dir / file, t.data());
    }
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    os << manifest.dump(2) << "\n";
}

nlohmann::json read_manifest(const fs::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw CheckpointError("missing checkpoint manifest in " + dir.string());
    return nlohmann::json::parse(is);
}

nlohmann::json load_checkpoint(const fs::path& dir, ParamStore& params) {
    const auto manifest = read_manifest(dir);
    const auto& list = manifest.at("params");
    if (list.size() != params.items().size())
        throw CheckpointError("checkpoint has " + std::to_string(list.size()) + " parameters, model has " +
                              std::to_string(params.items().size()));
    for (const auto& entry : list) {
        const auto name = entry.at("name").get<std::string>();
        if (!params.contains(name)) throw CheckpointError("unexpected parameter " + name);
        Tensor t = params.get(name);
        const auto shape = entry.at("shape").get<Shape>();
        if (shape != t.shape())
            throw CheckpointError("shape mismatch for " + name + ": " + shape_str(shape) + " vs " + shape_str(t.shape()));
        auto values = read_f64(dir / entry.at("file").get<std::string>());
        if (values.size() != t.size()) throw CheckpointError("blob size mismatch for " + name);
        std::copy(values.begin(), values.end(), t.data().begin());
    }
    return manifest.value("meta", nlohmann::json::object());
}

}  // namespace phaforce::nn
