#include "kepler/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace kepler {

namespace {
constexpr char kMagic[4] = {'K', 'E', 'P', 'F'};

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw CheckpointError("checkpoint truncated");
    return v;
}
} // namespace

void save_checkpoint(const std::string& path, const ParameterSet& params,
                     const nlohmann::json& meta) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open for write: " + path);

    out.write(kMagic, 4);
    write_u32(out, kCheckpointVersion);

    const std::string meta_str = meta.dump();
    write_u32(out, static_cast<std::uint32_t>(meta_str.size()));
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

    write_u32(out, static_cast<std::uint32_t>(params.count()));
    std::vector<float> buf;
    for (int s = 0; s < params.count(); ++s) {
        const Param& p = params.at(s);
        write_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_u32(out, 2);
        write_u32(out, static_cast<std::uint32_t>(p.value.rows()));
        write_u32(out, static_cast<std::uint32_t>(p.value.cols()));
        buf.resize(static_cast<std::size_t>(p.value.size()));
        for (std::int64_t i = 0; i < p.value.size(); ++i)
            buf[static_cast<std::size_t>(i)] = static_cast<float>(p.value[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw CheckpointError("write failed: " + path);
}

nlohmann::json load_checkpoint(const std::string& path, ParameterSet& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open: " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("bad magic in " + path);
    const std::uint32_t version = read_u32(in);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    const std::uint32_t meta_len = read_u32(in);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), meta_len);
    if (!in) throw CheckpointError("checkpoint truncated");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_str);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("bad meta block: " + std::string(e.what()));
    }

    ParameterSet loaded;
    const std::uint32_t n_params = read_u32(in);
    for (std::uint32_t k = 0; k < n_params; ++k) {
        const std::uint32_t name_len = read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw CheckpointError("checkpoint truncated");
        const std::uint32_t rank = read_u32(in);
        if (rank != 2) throw CheckpointError("unsupported tensor rank " + std::to_string(rank));
        const std::uint32_t rows = read_u32(in);
        const std::uint32_t cols = read_u32(in);
        Tensor t(static_cast<int>(rows), static_cast<int>(cols));
        std::vector<float> buf(static_cast<std::size_t>(t.size()));
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!in) throw CheckpointError("checkpoint truncated");
        for (std::int64_t i = 0; i < t.size(); ++i)
            t[i] = static_cast<double>(buf[static_cast<std::size_t>(i)]);
        loaded.add(name, std::move(t));
    }
    out = std::move(loaded);
    return meta;
}

} // namespace kepler
