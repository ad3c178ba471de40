#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "asl/dataset_io.hpp"
#include "asl/phantom.hpp"

using namespace asl;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/asl_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("dataset io: save/load round-trip is exact") {
    PhantomConfig cfg;
    cfg.width = 4;
    cfg.height = 4;
    cfg.noise_std = 0.25;
    cfg.seed = 77;
    const auto g = generate_phantom(cfg);

    TempFile f("roundtrip.json");
    save_dataset(g, f.path);
    const auto loaded = load_dataset(f.path);
    CHECK(loaded == g);
}

TEST_CASE("dataset io: partial mask and 1x1 degenerate grid") {
    PhantomConfig cfg;
    cfg.width = 3;
    cfg.height = 3;
    cfg.seed = 1;
    auto g = generate_phantom(cfg);
    // Unmask a corner: signal and ground truth must go with it.
    g.mask[0] = 0;
    g.signal[0].values.clear();
    g.ground_truth->cbf_map[0] = std::numeric_limits<double>::quiet_NaN();
    g.ground_truth->at_map[0] = std::numeric_limits<double>::quiet_NaN();

    TempFile f("masked.json");
    save_dataset(g, f.path);
    CHECK(load_dataset(f.path) == g);

    PhantomConfig tiny;
    tiny.width = 1;
    tiny.height = 1;
    tiny.seed = 2;
    const auto one = generate_phantom(tiny);
    TempFile f2("tiny.json");
    save_dataset(one, f2.path);
    CHECK(load_dataset(f2.path) == one);
}

TEST_CASE("dataset io: missing field names the offender") {
    PhantomConfig cfg;
    cfg.width = 2;
    cfg.height = 2;
    const auto g = generate_phantom(cfg);
    TempFile f("broken.json");
    save_dataset(g, f.path);

    std::ifstream in(f.path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    in.close();
    const auto pos = text.find("times_ms");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 8, "times_xx");
    std::ofstream out(f.path);
    out << text;
    out.close();

    try {
        load_dataset(f.path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("times_ms") != std::string::npos);
    }
}

TEST_CASE("dataset io: schema version mismatch") {
    PhantomConfig cfg;
    cfg.width = 2;
    cfg.height = 2;
    const auto g = generate_phantom(cfg);
    TempFile f("version.json");
    save_dataset(g, f.path);

    std::ifstream in(f.path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    in.close();
    const auto pos = text.find("\"schema_version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 19, "\"schema_version\": 9");
    std::ofstream out(f.path);
    out << text;
    out.close();

    CHECK_THROWS_AS(load_dataset(f.path), VersionError);
}

TEST_CASE("map csv: round-trip with nan sentinels") {
    const int w = 3, h = 2;
    std::vector<double> map{0.1, std::numeric_limits<double>::quiet_NaN(),
                            0.30000000000000004, 1234.5678901234567, -1.0, 0.0};
    TempFile f("map.csv");
    save_map_csv(map, w, h, f.path);

    int rw = 0, rh = 0;
    const auto loaded = load_map_csv(f.path, rw, rh);
    CHECK(rw == w);
    CHECK(rh == h);
    REQUIRE(loaded.size() == map.size());
    for (size_t i = 0; i < map.size(); ++i) {
        if (std::isnan(map[i]))
            CHECK(std::isnan(loaded[i]));
        else
            CHECK(loaded[i] == map[i]); // %.17g is lossless for doubles
    }
}
