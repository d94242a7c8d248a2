#include <doctest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "roadfusion/error.hpp"
#include "roadfusion/io.hpp"

using namespace rf;
using testutil::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("pgm16 fixed-point decoding and invalid marker") {
    // P5 header, 2x1, samples 512 and 0 (big endian).
    std::istringstream in(std::string("P5\n2 1\n65535\n") +
                          std::string("\x02\x00\x00\x00", 4));
    const DisparityImage img = io::read_pgm16(in);
    CHECK(img.width == 2);
    CHECK(img.height == 1);
    CHECK(img.at(0, 0) == doctest::Approx(2.0));
    CHECK(img.is_valid(0, 0));
    CHECK(img.at(1, 0) == 0.0);
    CHECK_FALSE(img.is_valid(1, 0));
}

TEST_CASE("pgm16 constant image") {
    std::string payload;
    for (int i = 0; i < 6; ++i) payload += std::string("\x01\x00", 2);  // 256 big-endian
    std::istringstream in("P5\n3 2\n65535\n" + payload);
    const DisparityImage img = io::read_pgm16(in);
    for (int v = 0; v < 2; ++v)
        for (int u = 0; u < 3; ++u) CHECK(img.at(u, v) == doctest::Approx(1.0));
}

TEST_CASE("pgm16 round trip is identity") {
    TempDir dir("pgm16");
    DisparityImage img(5, 4);
    Rng rng(11);
    for (int v = 0; v < 4; ++v) {
        for (int u = 0; u < 5; ++u) {
            if (u == 2 && v == 1) continue;  // leave one pixel invalid
            img.at(u, v) = std::floor(rng.uniform(0.5, 200.0) * 256.0) / 256.0;
            img.valid[img.idx(u, v)] = 1;
        }
    }
    io::write_pgm16(img, dir / "a.pgm");
    const DisparityImage back = io::read_pgm16(dir / "a.pgm");
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        CHECK(back.valid[i] == img.valid[i]);
        CHECK(back.data[i] == img.data[i]);
    }
}

TEST_CASE("pgm16 write quantization and range errors") {
    TempDir dir("pgm16rng");
    DisparityImage img(1, 1);
    img.valid[0] = 1;

    SUBCASE("disparity 2.0 encodes as sample 512") {
        img.data[0] = 2.0;
        io::write_pgm16(img, dir / "x.pgm");
        const std::string bytes = slurp(dir / "x.pgm");
        const std::size_t n = bytes.size();
        CHECK(static_cast<unsigned char>(bytes[n - 2]) == 2);
        CHECK(static_cast<unsigned char>(bytes[n - 1]) == 0);
    }
    SUBCASE("tiny disparity quantizes to the invalid sample") {
        img.data[0] = 0.001;  // documented lossy case
        io::write_pgm16(img, dir / "y.pgm");
        const DisparityImage back = io::read_pgm16(dir / "y.pgm");
        CHECK_FALSE(back.is_valid(0, 0));
    }
    SUBCASE("maximum representable disparity") {
        img.data[0] = 65535.0 / 256.0;  // 255.996...
        io::write_pgm16(img, dir / "z.pgm");
        const std::string bytes = slurp(dir / "z.pgm");
        const std::size_t n = bytes.size();
        CHECK(static_cast<unsigned char>(bytes[n - 2]) == 0xff);
        CHECK(static_cast<unsigned char>(bytes[n - 1]) == 0xff);
    }
    SUBCASE("out-of-range value names the pixel") {
        img.data[0] = 257.0;
        CHECK_THROWS_AS(io::write_pgm16(img, dir / "w.pgm"), RangeError);
        try {
            io::write_pgm16(img, dir / "w.pgm");
        } catch (const RangeError& e) {
            CHECK(std::string(e.what()).find("(0,0)") != std::string::npos);
        }
    }
}

TEST_CASE("pgm16 malformed inputs give format errors with offsets") {
    SUBCASE("bad magic") {
        std::istringstream in("P2\n1 1\n65535\nxx");
        CHECK_THROWS_AS(io::read_pgm16(in), FormatError);
    }
    SUBCASE("wrong maxval") {
        std::istringstream in(std::string("P5\n1 1\n255\n\x01", 12));
        CHECK_THROWS_AS(io::read_pgm16(in), FormatError);
    }
    SUBCASE("truncated payload") {
        std::istringstream in(std::string("P5\n2 1\n65535\n\x01", 15));
        try {
            io::read_pgm16(in);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
        }
    }
}

TEST_CASE("pfm round trip is bitwise for f32 data") {
    TempDir dir("pfm");
    Rng rng(3);
    const Tensor t = testutil::random_f32_tensor({3, 4, 1}, rng);
    io::write_pfm(t, dir / "m.pfm");
    const Tensor back = io::read_pfm(dir / "m.pfm");
    REQUIRE(back.dims() == t.dims());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
}

TEST_CASE("pfm negative scale is little endian, positive is big endian") {
    // One sample, 1.0f: little endian bytes 00 00 80 3f.
    std::istringstream le(std::string("Pf\n1 1\n-1.0\n") + std::string("\x00\x00\x80\x3f", 4));
    CHECK(io::read_pfm(le)[0] == doctest::Approx(1.0));
    std::istringstream be(std::string("Pf\n1 1\n1.0\n") + std::string("\x3f\x80\x00\x00", 4));
    CHECK(io::read_pfm(be)[0] == doctest::Approx(1.0));
}

TEST_CASE("pfm rejects color magic and NaN writes") {
    std::istringstream in("PF\n1 1\n-1.0\nxxxx");
    CHECK_THROWS_AS(io::read_pfm(in), FormatError);

    TempDir dir("pfmnan");
    Tensor t({1, 1, 1});
    t[0] = std::nan("");
    CHECK_THROWS_AS(io::write_pfm(t, dir / "n.pfm"), RangeError);
}

TEST_CASE("tnsr layout matches the specified byte structure") {
    std::ostringstream os;
    io::write_tensor(Tensor::zeros({2, 2, 1}), os);
    const std::string bytes = os.str();
    // magic + version + rank + 3 dims + 4 f32 samples
    REQUIRE(bytes.size() == 4 + 4 + 4 + 12 + 16);
    CHECK(bytes.substr(0, 4) == "TNSR");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);  // version, little endian
    CHECK(static_cast<unsigned char>(bytes[8]) == 3);  // rank
    CHECK(static_cast<unsigned char>(bytes[12]) == 2);
    CHECK(static_cast<unsigned char>(bytes[16]) == 2);
    CHECK(static_cast<unsigned char>(bytes[20]) == 1);
    for (std::size_t i = 24; i < bytes.size(); ++i) CHECK(bytes[i] == 0);
}

TEST_CASE("tnsr round trip is bitwise") {
    TempDir dir("tnsr");
    Rng rng(5);
    const Tensor t = testutil::random_f32_tensor({5, 7, 3}, rng);
    io::write_tensor(t, dir / "t.tnsr");
    const Tensor back = io::read_tensor(dir / "t.tnsr");
    REQUIRE(back.dims() == t.dims());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
}

TEST_CASE("tnsr header and payload errors") {
    SUBCASE("bad magic") {
        std::istringstream in("TNSX" + std::string(32, '\0'));
        CHECK_THROWS_AS(io::read_tensor(in), FormatError);
    }
    SUBCASE("truncated payload") {
        std::ostringstream os;
        io::write_tensor(Tensor::zeros({2, 2, 1}), os);
        std::string bytes = os.str();
        bytes.resize(bytes.size() - 5);
        std::istringstream in(bytes);
        CHECK_THROWS_AS(io::read_tensor(in), FormatError);
    }
    SUBCASE("oversized payload") {
        std::ostringstream os;
        io::write_tensor(Tensor::zeros({2, 2, 1}), os);
        std::istringstream in(os.str() + "extra");
        CHECK_THROWS_AS(io::read_tensor(in), FormatError);
    }
}

TEST_CASE("road model text document") {
    TempDir dir("model");
    RoadModel m;
    m.a0 = 2.0;
    m.a1 = 0.5;
    m.theta = 0.0;
    m.delta = 10.0;
    m.energy = 0.0;
    m.inlier_count = 100;
    io::write_road_model(m, dir / "m.txt");
    const std::string text = slurp(dir / "m.txt");
    CHECK(text.find("a1=0.5") != std::string::npos);

    SUBCASE("round trip within 1e-12 relative") {
        m.a0 = 1.234567890123456;
        m.a1 = -0.000123456789012345;
        m.theta = 0.087266462599716;
        m.energy = 345.678901234567;
        io::write_road_model(m, dir / "m2.txt");
        const RoadModel back = io::read_road_model(dir / "m2.txt");
        CHECK(back.a0 == doctest::Approx(m.a0).epsilon(1e-12));
        CHECK(back.a1 == doctest::Approx(m.a1).epsilon(1e-12));
        CHECK(back.theta == doctest::Approx(m.theta).epsilon(1e-12));
        CHECK(back.energy == doctest::Approx(m.energy).epsilon(1e-12));
        CHECK(back.inlier_count == m.inlier_count);
    }
    SUBCASE("missing key") {
        std::istringstream in("a0=1\na1=2\ndelta=0\nenergy=0\ninlier_count=3\n");
        CHECK_THROWS_AS(io::read_road_model(in), FormatError);
    }
    SUBCASE("non-numeric value") {
        std::istringstream in(
            "a0=1\na1=x\ntheta_rad=0\ndelta=0\nenergy=0\ninlier_count=3\n");
        CHECK_THROWS_AS(io::read_road_model(in), FormatError);
    }
}

TEST_CASE("readers survive fuzzed bytes with structured errors") {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        std::string junk;
        const int len = static_cast<int>(rng.uniform_int(200));
        for (int i = 0; i < len; ++i) {
            junk.push_back(static_cast<char>(rng.uniform_int(256)));
        }
        // Half the trials keep a plausible magic to reach deeper code paths.
        if (trial % 2 == 0 && junk.size() >= 4) {
            const char* magics[] = {"P5\n", "Pf\n", "TNSR"};
            std::memcpy(junk.data(), magics[trial % 3], trial % 3 == 2 ? 4 : 3);
        }
        std::istringstream a(junk), b(junk), c(junk), d(junk);
        CHECK_THROWS_AS(io::read_pgm16(a), Error);
        CHECK_THROWS_AS(io::read_pfm(b), Error);
        CHECK_THROWS_AS(io::read_tensor(c), Error);
        CHECK_THROWS_AS(io::read_road_model(d), Error);
    }
}
