#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "quadshade/io.hpp"
#include "quadshade/proposal.hpp"
#include "quadshade/rng.hpp"

using namespace quadshade;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("quadshade_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

} // namespace

TEST_CASE("pfm: round trip is bit-exact") {
    TempDir tmp;
    Rng rng(1);
    Eigen::ArrayXXd data(13, 17);
    for (int r = 0; r < 13; ++r)
        for (int c = 0; c < 17; ++c)
            data(r, c) = static_cast<float>(rng.uniform(-100, 100)); // float-representable

    write_pfm(tmp.file("a.pfm"), data);
    Eigen::ArrayXXd back = read_pfm(tmp.file("a.pfm"));
    REQUIRE(back.rows() == 13);
    REQUIRE(back.cols() == 17);
    CHECK((back == data).all());

    // writing the read-back gives identical bytes
    write_pfm(tmp.file("b.pfm"), back);
    CHECK(read_text_file(tmp.file("a.pfm")) == read_text_file(tmp.file("b.pfm")));
}

TEST_CASE("pfm: big-endian input with positive scale is converted") {
    TempDir tmp;
    // 2x2 grayscale, bottom row first; values 1, 2, 3, 4
    std::ofstream out(tmp.file("be.pfm"), std::ios::binary);
    out << "Pf\n2 2\n1.0\n";
    auto put_be = [&](float f) {
        unsigned char b[4];
        std::memcpy(b, &f, 4);
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
        out.write(reinterpret_cast<char*>(b), 4);
    };
    put_be(3.0f); put_be(4.0f); // bottom row
    put_be(1.0f); put_be(2.0f); // top row
    out.close();

    Eigen::ArrayXXd img = read_pfm(tmp.file("be.pfm"));
    CHECK(img(0, 0) == 1.0);
    CHECK(img(0, 1) == 2.0);
    CHECK(img(1, 0) == 3.0);
    CHECK(img(1, 1) == 4.0);
}

TEST_CASE("pfm: malformed inputs raise structured errors") {
    TempDir tmp;
    CHECK_THROWS_AS(read_pfm(tmp.file("missing.pfm")), IoError);

    write_text_file(tmp.file("trunc.pfm"), "Pf\n4 4\n-1.0\nshort");
    CHECK_THROWS_AS(read_pfm(tmp.file("trunc.pfm")), IoError);

    write_text_file(tmp.file("color.pfm"), "PF\n2 2\n-1.0\n");
    CHECK_THROWS_AS(read_pfm(tmp.file("color.pfm")), IoError);
}

TEST_CASE("pgm16: round trip and validation") {
    TempDir tmp;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask(5, 7);
    Rng rng(2);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 7; ++c) mask(r, c) = rng.uniform() > 0.4;
    write_pgm16(tmp.file("m.pgm"), mask);
    auto back = read_pgm16(tmp.file("m.pgm"));
    CHECK((back == mask).all());

    write_text_file(tmp.file("bad.pgm"), "P5\n2 2\n255\nxxxx");
    CHECK_THROWS_AS(read_pgm16(tmp.file("bad.pgm")), IoError);
}

TEST_CASE("proposals container: round trip preserves every number") {
    TempDir tmp;
    ImageProposals p;
    p.height = 9;
    p.width = 9;
    p.light = LightVector(0.51234567891234, -0.2, 0.83);
    p.noise = NoiseModel{0.013, 2.5e-7};
    p.J = 5;
    p.config = default_run_config();

    ScaleDistributions sd;
    sd.patch_size = 5;
    sd.row0 = sd.col0 = 2;
    sd.rows = sd.cols = 5;
    sd.sets.assign(25, std::nullopt);
    Rng rng(3);
    for (int i : {3, 7, 24}) {
        ProposalSet set;
        set.row = sd.row0 + i / 5;
        set.col = sd.col0 + i % 5;
        set.size = 5;
        for (int j = 0; j < p.J; ++j) {
            Proposal pr;
            pr.theta = -M_PI + 2 * M_PI * (j + 1) / p.J;
            pr.shape = QuadShape(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
                                 rng.uniform(-1, 1), rng.uniform(-1, 1));
            pr.residual_sse = rng.uniform(0, 1e-3);
            pr.cost = rng.uniform(-200, -100);
            set.proposals.push_back(pr);
        }
        sd.sets[i] = set;
    }
    p.scales.push_back(sd);

    write_proposals(tmp.file("p.json"), p);
    ImageProposals q = read_proposals(tmp.file("p.json"));

    CHECK(q.height == p.height);
    CHECK(q.light.lx == p.light.lx); // exact: shortest round-trip serialization
    CHECK(q.noise.sigma_n0_sq == p.noise.sigma_n0_sq);
    REQUIRE(q.scales.size() == 1);
    CHECK(q.scales[0].sets[3].has_value());
    CHECK(!q.scales[0].sets[0].has_value());
    const auto& a = *p.scales[0].sets[7];
    const auto& b = *q.scales[0].sets[7];
    REQUIRE(b.proposals.size() == a.proposals.size());
    for (size_t j = 0; j < a.proposals.size(); ++j) {
        CHECK(b.proposals[j].theta == a.proposals[j].theta);
        CHECK(b.proposals[j].shape == a.proposals[j].shape);
        CHECK(b.proposals[j].residual_sse == a.proposals[j].residual_sse);
        CHECK(b.proposals[j].cost == a.proposals[j].cost);
    }

    // second serialization is byte-identical
    write_proposals(tmp.file("q.json"), q);
    CHECK(read_text_file(tmp.file("p.json")) == read_text_file(tmp.file("q.json")));

    write_text_file(tmp.file("bad.json"), "{\"schema\": \"other/v9\"}");
    CHECK_THROWS_AS(read_proposals(tmp.file("bad.json")), IoError);
}

TEST_CASE("run config: defaults, overrides, unknown keys rejected") {
    nlohmann::json cfg = resolve_run_config(nlohmann::json::object());
    CHECK(cfg["noise"]["sigma_i"] == 0.01);
    CHECK(cfg["theta"]["J"] == 21);
    CHECK(cfg["noise"]["sigma_n0_sq"] == 1e-6);

    nlohmann::json user = {{"theta", {{"J", 31}}}, {"workers", 4}};
    nlohmann::json merged = resolve_run_config(user);
    CHECK(merged["theta"]["J"] == 31);
    CHECK(merged["workers"] == 4);
    CHECK(merged["noise"]["sigma_i"] == 0.01); // untouched defaults survive

    CHECK_THROWS_AS(resolve_run_config(nlohmann::json{{"nope", 1}}), ConfigError);
    CHECK_THROWS_AS(resolve_run_config(nlohmann::json{{"theta", {{"K", 2}}}}), ConfigError);
}
