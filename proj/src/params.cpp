#include "dsthcn/params.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace dsthcn {

Param* ParamStore::add(std::string path, std::vector<int> shape, bool trainable, bool decay) {
    for (const auto& p : items_)
        if (p->path == path) throw input_error("duplicate parameter path " + path);
    auto p = std::make_unique<Param>(std::move(path), std::move(shape));
    p->trainable = trainable;
    p->decay = decay;
    items_.push_back(std::move(p));
    return items_.back().get();
}

Param* ParamStore::find(const std::string& path) {
    for (const auto& p : items_)
        if (p->path == path) return p.get();
    return nullptr;
}

void ParamStore::zero_grad() {
    for (auto& p : items_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

std::size_t ParamStore::param_count() const {
    std::size_t n = 0;
    for (const auto& p : items_)
        if (p->trainable) n += p->value.numel();
    return n;
}

namespace {

std::string blob_path_for(const std::string& json_path) {
    std::string p = json_path;
    const auto dot = p.rfind('.');
    if (dot != std::string::npos && p.substr(dot) == ".json") p = p.substr(0, dot);
    return p + ".bin";
}

void atomic_write(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw input_error("cannot write " + tmp);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw input_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw input_error("rename failed: " + path);
}

} // namespace

void ParamStore::save(const std::string& json_path) const {
    const std::string blob_path = blob_path_for(json_path);
    std::string blob;
    nlohmann::json manifest;
    manifest["format"] = "dsthcn-params";
    manifest["version"] = 1;
    const auto slash = blob_path.rfind('/');
    manifest["blob"] = slash == std::string::npos ? blob_path : blob_path.substr(slash + 1);
    auto params = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& p : items_) {
        nlohmann::json j;
        j["path"] = p->path;
        j["shape"] = p->value.shape;
        j["offset"] = offset;
        j["trainable"] = p->trainable;
        params.push_back(std::move(j));
        for (double v : p->value.data) {
            const float f = static_cast<float>(v);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int i = 0; i < 4; ++i)
                blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
        }
        offset += p->value.numel();
    }
    manifest["params"] = std::move(params);
    atomic_write(blob_path, blob);
    atomic_write(json_path, manifest.dump(2) + "\n");
}

void ParamStore::load(const std::string& json_path) {
    std::ifstream f(json_path);
    if (!f) throw format_error("cannot open " + json_path);
    nlohmann::json manifest;
    try {
        f >> manifest;
    } catch (const std::exception& e) {
        throw format_error(std::string("bad parameter manifest: ") + e.what());
    }
    if (manifest.value("format", "") != "dsthcn-params")
        throw format_error("not a dsthcn parameter manifest: " + json_path);
    std::string blob_name = manifest.at("blob").get<std::string>();
    std::string dir;
    const auto slash = json_path.rfind('/');
    if (slash != std::string::npos) dir = json_path.substr(0, slash + 1);
    std::ifstream bf(dir + blob_name, std::ios::binary);
    if (!bf) throw format_error("cannot open parameter blob " + dir + blob_name);
    std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());
    for (const auto& j : manifest.at("params")) {
        const std::string path = j.at("path").get<std::string>();
        Param* p = find(path);
        if (!p) throw format_error("archive parameter " + path + " not present in model");
        const auto shape = j.at("shape").get<std::vector<int>>();
        if (shape != p->value.shape)
            throw format_error("shape mismatch for " + path + ": archive " + shape_str(shape) +
                               " vs model " + shape_str(p->value.shape));
        const std::size_t offset = j.at("offset").get<std::size_t>();
        if ((offset + p->value.numel()) * 4 > blob.size())
            throw format_error("blob too small for " + path);
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            uint32_t bits = 0;
            for (int b = 0; b < 4; ++b)
                bits |= static_cast<uint32_t>(
                            static_cast<uint8_t>(blob[(offset + i) * 4 + static_cast<std::size_t>(b)]))
                        << (8 * b);
            float v;
            std::memcpy(&v, &bits, 4);
            p->value.data[i] = static_cast<double>(v);
        }
    }
}

} // namespace dsthcn
