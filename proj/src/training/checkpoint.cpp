#include "msa/training/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "msa/error.hpp"

namespace msa {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

std::uint64_t fnv1a(const char* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL)
{
    for (std::size_t i = 0; i < n; ++i) h = (h ^ static_cast<unsigned char>(data[i])) * 0x100000001b3ULL;
    return h;
}

}  // namespace

Checkpoint snapshot(Network<float>& net, nlohmann::json meta)
{
    Checkpoint c;
    c.network = net.config();
    c.meta = std::move(meta);
    for (const auto& p : net.parameters()) c.tensors.push_back({p.name, *p.value});
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    nlohmann::json header;
    header["network"] = to_json(ckpt.network);
    header["meta"] = ckpt.meta;
    header["tensors"] = nlohmann::json::array();
    std::string payload;
    for (const auto& t : ckpt.tensors) {
        const Shape& s = t.value.shape();
        header["tensors"].push_back(
            {{"name", t.name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", payload.size()}});
        payload.append(reinterpret_cast<const char*>(t.value.data()), t.value.size() * sizeof(float));
    }
    header["payload_bytes"] = payload.size();
    header["payload_fnv1a"] = fnv1a(payload.data(), payload.size());
    const std::string text = header.dump();
    const std::uint64_t len = text.size();

    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint " + path.string());
        out.write(kCheckpointMagic, sizeof kCheckpointMagic);
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(text.data(), std::streamsize(text.size()));
        out.write(payload.data(), std::streamsize(payload.size()));
        if (!out) throw IoError("short write on checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[8];
    std::uint64_t len = 0;
    if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw IoError(path.string() + " is not a checkpoint (bad magic)");
    if (!in.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1u << 28))
        throw IoError(path.string() + ": bad header length");
    std::string text(len, '\0');
    if (!in.read(text.data(), std::streamsize(len))) throw IoError(path.string() + ": truncated header");

    Checkpoint c;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
        c.network = network_config_from_json(header.at("network"));
        c.meta = header.at("meta");
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": bad header: " + e.what());
    }
    const auto bytes = header.at("payload_bytes").get<std::size_t>();
    std::string payload(bytes, '\0');
    if (!in.read(payload.data(), std::streamsize(bytes))) throw IoError(path.string() + ": truncated payload");
    if (fnv1a(payload.data(), bytes) != header.at("payload_fnv1a").get<std::uint64_t>())
        throw IoError(path.string() + ": payload checksum mismatch");

    for (const auto& t : header.at("tensors")) {
        const auto s = t.at("shape");
        Tensor<float> v(s[0].get<int>(), s[1].get<int>(), s[2].get<int>(), s[3].get<int>());
        const auto off = t.at("offset").get<std::size_t>();
        if (off + v.size() * sizeof(float) > bytes) throw IoError(path.string() + ": tensor outside payload");
        std::memcpy(v.data(), payload.data() + off, v.size() * sizeof(float));
        c.tensors.push_back({t.at("name").get<std::string>(), std::move(v)});
    }
    return c;
}

void restore(Network<float>& net, const Checkpoint& ckpt)
{
    const auto diff = config_differences(ckpt.network, net.config());
    if (!diff.empty()) {
        std::string msg = "checkpoint/config mismatch in:";
        for (const auto& d : diff) msg += " " + d;
        throw ConfigError(msg);
    }
    auto& params = net.parameters();
    if (params.size() != ckpt.tensors.size())
        throw ConfigError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, network expects " +
                          std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = ckpt.tensors[i];
        if (t.name != params[i].name || t.value.shape() != params[i].value->shape())
            throw ConfigError("checkpoint tensor " + t.name + " " + t.value.shape().str() + " does not match " +
                              params[i].name + " " + params[i].value->shape().str());
        *params[i].value = t.value;
    }
}

}  // namespace msa
