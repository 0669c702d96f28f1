#include <doctest.h>

#include "maelab/binio.hpp"
#include "maelab/error.hpp"
#include "maelab/image_io.hpp"
#include "maelab/rng.hpp"

#include <cmath>
#include <filesystem>
#include <string>

using namespace maelab;

namespace {

std::filesystem::path temp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

ImageBuffer quantized_random_image(uint64_t seed, int64_t h, int64_t w, int64_t c) {
    Rng rng(seed);
    ImageBuffer img = ImageBuffer::create(h, w, c);
    for (double& v : img.pixels) v = static_cast<double>(rng.next_below(256)) / 255.0;
    return img;
}

} // namespace

TEST_CASE("read_pnm maps P5 bytes to [0,1]") {
    const auto path = temp_path("gray2x2.pgm");
    std::string payload = "P5\n2 2\n255\n";
    payload.push_back(static_cast<char>(0));
    payload.push_back(static_cast<char>(255));
    payload.push_back(static_cast<char>(128));
    payload.push_back(static_cast<char>(64));
    write_file(path, payload);

    ImageBuffer img = read_pnm(path);
    CHECK(img.channels == 1);
    CHECK(img.height == 2);
    CHECK(img.width == 2);
    CHECK(img.pixels[0] == 0.0);
    CHECK(img.pixels[1] == 1.0);
    CHECK(img.pixels[2] == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
    CHECK(img.pixels[3] == doctest::Approx(64.0 / 255.0).epsilon(1e-15));
    std::filesystem::remove(path);
}

TEST_CASE("pnm header accepts comments and arbitrary whitespace") {
    const auto path = temp_path("comment.pgm");
    std::string payload = "P5 # gray\n# full-line comment\n 2\t1 \n255\n";
    payload.push_back(static_cast<char>(10)); // pixel values that look like whitespace
    payload.push_back(static_cast<char>(32));
    write_file(path, payload);
    ImageBuffer img = read_pnm(path);
    CHECK(img.height == 1);
    CHECK(img.width == 2);
    CHECK(img.pixels[0] == doctest::Approx(10.0 / 255.0));
    CHECK(img.pixels[1] == doctest::Approx(32.0 / 255.0));
    std::filesystem::remove(path);
}

TEST_CASE("pnm write-then-read is the identity on quantized buffers") {
    for (int64_t channels : {int64_t{1}, int64_t{3}}) {
        ImageBuffer img = quantized_random_image(21 + static_cast<uint64_t>(channels), 7, 5,
                                                 channels);
        const auto path = temp_path(channels == 1 ? "rt.pgm" : "rt.ppm");
        write_pnm(path, img);
        ImageBuffer back = read_pnm(path);
        REQUIRE(back.pixels.size() == img.pixels.size());
        for (size_t i = 0; i < img.pixels.size(); ++i) CHECK(back.pixels[i] == img.pixels[i]);

        // read-write-read fixpoint on the file bytes
        const auto path2 = temp_path("rt2.pnm");
        write_pnm(path2, back);
        CHECK(read_file(path) == read_file(path2));
        std::filesystem::remove(path);
        std::filesystem::remove(path2);
    }
}

TEST_CASE("pnm rejects malformed input") {
    const auto path = temp_path("bad.pnm");

    SUBCASE("wrong magic") {
        write_file(path, "P2\n2 2\n255\n0 0 0 0");
        CHECK_THROWS_AS(read_pnm(path), IoError);
    }
    SUBCASE("maxval not 255") {
        write_file(path, "P5\n1 1\n65535\n\0\0");
        CHECK_THROWS_AS(read_pnm(path), IoError);
    }
    SUBCASE("truncated payload") {
        std::string p = "P6\n2 2\n255\n";
        p.append(5, '\0'); // needs 12 bytes
        write_file(path, p);
        CHECK_THROWS_AS(read_pnm(path), IoError);
    }
    SUBCASE("truncated header") {
        write_file(path, "P5\n2");
        CHECK_THROWS_AS(read_pnm(path), IoError);
    }
    SUBCASE("garbage dimension") {
        write_file(path, "P5\n2x 2\n255\n....");
        CHECK_THROWS_AS(read_pnm(path), IoError);
    }
    std::filesystem::remove(path);
}

TEST_CASE("to_tensor is planar [1,C,H,W] with exact values") {
    ImageBuffer img = ImageBuffer::create(2, 2, 3);
    // pixel (y,x) gets r=0.1y, g=0.2x, b=0.5
    for (int64_t y = 0; y < 2; ++y)
        for (int64_t x = 0; x < 2; ++x) {
            img.at(y, x, 0) = 0.1 * static_cast<double>(y);
            img.at(y, x, 1) = 0.2 * static_cast<double>(x);
            img.at(y, x, 2) = 0.5;
        }
    Tensor t = to_tensor(img);
    REQUIRE(t.shape() == Shape{1, 3, 2, 2});
    auto tp = t.data();
    CHECK(tp[0] == 0.0);  // r at (0,0)
    CHECK(tp[2] == 0.1);  // r at (1,0)
    CHECK(tp[5] == 0.2);  // g at (0,1)
    CHECK(tp[8] == 0.5);  // b plane start
    ImageBuffer back = from_tensor(t);
    for (size_t i = 0; i < img.pixels.size(); ++i) CHECK(back.pixels[i] == img.pixels[i]);
}

TEST_CASE("from_tensor clamps out-of-range values") {
    Tensor t = Tensor::from_data({1, 1, 1, 2}, {1.7, -0.3});
    ImageBuffer img = from_tensor(t);
    CHECK(img.pixels[0] == 1.0);
    CHECK(img.pixels[1] == 0.0);

    Tensor wrong = Tensor::zeros({2, 1, 1, 1});
    CHECK_THROWS_AS(from_tensor(wrong), ShapeError);
}

TEST_CASE("stack_frames lays frames along channels in temporal order") {
    FrameStack fs;
    for (int k = 0; k < 2; ++k) {
        ImageBuffer f = ImageBuffer::create(2, 2, 3, 0.0);
        for (double& v : f.pixels) v = 0.25 + 0.5 * k;
        fs.frames.push_back(f);
    }
    Tensor t = stack_frames(fs);
    REQUIRE(t.shape() == Shape{1, 6, 2, 2});
    CHECK(t.data()[0] == 0.25);       // frame 0, channel 0
    CHECK(t.data()[3 * 4] == 0.75);   // frame 1 starts at channel 3

    FrameStack back = unstack_frames(t, 2);
    REQUIRE(back.count() == 2);
    for (int k = 0; k < 2; ++k)
        for (size_t i = 0; i < 12; ++i)
            CHECK(back.frames[k].pixels[i] == fs.frames[k].pixels[i]);

    // single frame stacks exactly like to_tensor
    FrameStack one;
    one.frames.push_back(fs.frames[0]);
    Tensor t1 = stack_frames(one);
    Tensor t2 = to_tensor(fs.frames[0]);
    REQUIRE(t1.shape() == t2.shape());
    for (size_t i = 0; i < t1.data().size(); ++i) CHECK(t1.data()[i] == t2.data()[i]);
}

TEST_CASE("frame stacks must be uniform and non-empty") {
    FrameStack fs;
    CHECK_THROWS_AS(fs.validate(), ValueError);
    fs.frames.push_back(ImageBuffer::create(2, 2, 3));
    fs.frames.push_back(ImageBuffer::create(2, 3, 3));
    CHECK_THROWS_AS(stack_frames(fs), ShapeError);
}

TEST_CASE("bicubic resize preserves constants exactly") {
    ImageBuffer img = ImageBuffer::create(8, 6, 3, 0.4);
    ImageBuffer small = resize_bicubic(img, 4, 3);
    CHECK(small.height == 4);
    CHECK(small.width == 3);
    for (double v : small.pixels) CHECK(v == doctest::Approx(0.4).epsilon(1e-13));
    ImageBuffer big = resize_bicubic(img, 13, 17);
    for (double v : big.pixels) CHECK(v == doctest::Approx(0.4).epsilon(1e-13));
}

TEST_CASE("bicubic resize to the same size is the identity") {
    ImageBuffer img = quantized_random_image(3, 6, 7, 1);
    ImageBuffer same = resize_bicubic(img, 6, 7);
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        CHECK(same.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-13));
    }
}

TEST_CASE("bicubic downscale averages local structure reasonably") {
    // vertical half-split image: left 0.2, right 0.8 -> halves keep their value
    ImageBuffer img = ImageBuffer::create(8, 8, 1);
    for (int64_t y = 0; y < 8; ++y)
        for (int64_t x = 0; x < 8; ++x) img.at(y, x, 0) = x < 4 ? 0.2 : 0.8;
    ImageBuffer half = resize_bicubic(img, 4, 4);
    CHECK(half.at(0, 0, 0) == doctest::Approx(0.2).epsilon(1e-6));
    CHECK(half.at(3, 3, 0) == doctest::Approx(0.8).epsilon(1e-6));
}
