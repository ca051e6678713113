#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "kepler/checkpoint.hpp"

using namespace kepler;

namespace {
std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}
} // namespace

TEST_CASE("save, load, save is byte identical") {
    Rng rng(13);
    ParameterSet ps;
    ps.add("enc.w", test::random_tensor(6, 4, rng));
    ps.add("table", test::random_tensor(3, 4, rng));
    nlohmann::json meta;
    meta["kind"] = "transe";
    meta["gamma"] = 4.0;
    meta["steps"] = 128;

    const std::string p1 = tmp_path("ckpt_a.kepf");
    const std::string p2 = tmp_path("ckpt_b.kepf");
    save_checkpoint(p1, ps, meta);

    ParameterSet loaded;
    const nlohmann::json meta2 = load_checkpoint(p1, loaded);
    CHECK(meta2 == meta);
    REQUIRE(loaded.count() == 2);
    CHECK(loaded.at("enc.w").value == ps.at("enc.w").value);
    CHECK(loaded.at("table").value == ps.at("table").value);

    save_checkpoint(p2, loaded, meta2);
    CHECK(read_bytes(p1) == read_bytes(p2));
}

TEST_CASE("truncated files fail cleanly with no partial state") {
    Rng rng(14);
    ParameterSet ps;
    ps.add("w", test::random_tensor(8, 8, rng));
    const std::string full = tmp_path("ckpt_full.kepf");
    save_checkpoint(full, ps, nlohmann::json::object());

    const std::string bytes = read_bytes(full);
    const std::string cut = tmp_path("ckpt_cut.kepf");
    {
        std::ofstream out(cut, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    ParameterSet target;
    target.add("sentinel", Tensor::row({42.0}));
    CHECK_THROWS_AS(load_checkpoint(cut, target), CheckpointError);
    REQUIRE(target.count() == 1);
    CHECK(target.at("sentinel").value[0] == 42.0);
}

TEST_CASE("bad magic and bad version are load errors") {
    const std::string path = tmp_path("ckpt_bad.kepf");
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "NOPE and some trailing garbage to get past the header reads";
    }
    ParameterSet ps;
    CHECK_THROWS_WITH_AS(load_checkpoint(path, ps), doctest::Contains("magic"),
                         CheckpointError);

    // flip the version field of a valid file
    ParameterSet src;
    src.add("w", Tensor::row({1.0}));
    save_checkpoint(path, src, nlohmann::json::object());
    std::string bytes = read_bytes(path);
    bytes[4] = 9;
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path, ps), doctest::Contains("version"),
                         CheckpointError);
}
