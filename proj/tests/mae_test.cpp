#include <doctest.h>

#include "maelab/crc32.hpp"
#include "maelab/data.hpp"
#include "maelab/error.hpp"
#include "maelab/gradcheck.hpp"
#include "maelab/mae.hpp"
#include "maelab/masking.hpp"
#include "maelab/ops.hpp"
#include "maelab/rng.hpp"
#include "maelab/tensor.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

using namespace maelab;

namespace {

bool same_values(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(),
                       static_cast<size_t>(a.numel()) * sizeof(double)) == 0;
}

double mean_of(const std::vector<double>& v, size_t from, size_t count) {
    return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(from),
                           v.begin() + static_cast<std::ptrdiff_t>(from + count), 0.0) /
           static_cast<double>(count);
}

} // namespace

TEST_CASE("initialization is seeded, shaped, and validated") {
    MaeModel m = init_mae(3, 32, 3, 77);
    CHECK(m.widths() == std::vector<int64_t>{16, 32, 32});
    REQUIRE(m.enc_kernels.size() == 3);
    REQUIRE(m.dec_kernels.size() == 3);
    CHECK(m.enc_kernels[0].shape() == Shape{16, 3, 3, 3});
    CHECK(m.enc_kernels[1].shape() == Shape{32, 16, 3, 3});
    CHECK(m.enc_kernels[2].shape() == Shape{32, 32, 3, 3});
    CHECK(m.dec_kernels[0].shape() == Shape{32, 32, 3, 3});
    CHECK(m.dec_kernels[1].shape() == Shape{32, 16, 3, 3});
    CHECK(m.dec_kernels[2].shape() == Shape{16, 3, 3, 3});
    CHECK(m.enc_biases[0].shape() == Shape{16});
    CHECK(m.dec_biases[2].shape() == Shape{3});
    for (const Tensor& b : m.enc_biases)
        for (double v : b.data()) CHECK(v == 0.0);

    MaeModel same = init_mae(3, 32, 3, 77);
    for (size_t i = 0; i < m.enc_kernels.size(); ++i)
        CHECK(same_values(m.enc_kernels[i], same.enc_kernels[i]));
    CHECK(weight_checksum(m) == weight_checksum(same));

    MaeModel other = init_mae(3, 32, 3, 78);
    CHECK(weight_checksum(m) != weight_checksum(other));

    CHECK_THROWS_AS(init_mae(0, 32, 3, 1), ValueError);
    CHECK_THROWS_AS(init_mae(3, 0, 3, 1), ValueError);
    CHECK_THROWS_AS(init_mae(3, 32, 0, 1), ValueError);
}

TEST_CASE("encode and reconstruct honor the shape contract") {
    MaeModel m = init_mae(3, 32, 3, 5);

    Tensor x64 = synthetic_texture(1, 3, 64, 64);
    CHECK(encode(nullptr, m, x64).shape() == Shape{1, 32, 8, 8});

    Tensor x32 = synthetic_texture(2, 3, 32, 32);
    CHECK(encode(nullptr, m, x32).shape() == Shape{1, 32, 4, 4});
    CHECK(reconstruct(nullptr, m, x32).shape() == x32.shape());

    // odd sizes force the decoder to pick the non-minimal transpose shape
    Tensor odd = synthetic_texture(3, 3, 17, 19);
    CHECK(reconstruct(nullptr, m, odd).shape() == odd.shape());

    Tensor wrong = synthetic_texture(4, 1, 32, 32);
    CHECK_THROWS_AS(encode(nullptr, m, wrong), ShapeError);
    CHECK_THROWS_AS(reconstruct(nullptr, m, wrong), ShapeError);
}

TEST_CASE("encode is deterministic and zero-preserving at init") {
    MaeModel m = init_mae(3, 16, 2, 9);
    Tensor x = synthetic_texture(5, 3, 32, 32);
    Tensor f1 = encode(nullptr, m, x);
    Tensor f2 = encode(nullptr, m, x);
    CHECK(same_values(f1, f2));
    Tensor r1 = reconstruct(nullptr, m, x);
    Tensor r2 = reconstruct(nullptr, m, x);
    CHECK(same_values(r1, r2));

    // biases are zero after init, so a zero image maps to zero features
    Tensor zeros = Tensor::zeros({1, 3, 32, 32});
    Tensor fz = encode(nullptr, m, zeros);
    for (double v : fz.data()) CHECK(v == 0.0);
}

TEST_CASE("reconstruction loss gradients match finite differences") {
    MaeModel m = init_mae(1, 8, 2, 21);
    set_trainable(m, true);
    Tensor x = synthetic_texture(6, 1, 8, 8);
    x.set_requires_grad(true);
    Tensor target = synthetic_texture(7, 1, 8, 8);

    std::vector<Tensor> inputs = m.parameters();
    inputs.push_back(x);

    auto fn = [&m, &x, &target](Tape* tape, std::vector<Tensor>&) {
        return ops::l2_loss(tape, reconstruct(tape, m, x), target);
    };
    GradCheckResult res = grad_check(fn, inputs);
    INFO(res.summary());
    CHECK(res.ok);
    CHECK(res.coords_checked > 200); // every parameter tensor probed
}

TEST_CASE("pretrain validates its inputs") {
    MaeModel m = init_mae(1, 8, 2, 3);
    PretrainConfig cfg;
    cfg.steps = 1;

    std::vector<Tensor> empty;
    CHECK_THROWS_AS(pretrain(m, empty, cfg), ValueError);

    std::vector<Tensor> ok_data{Tensor::full({1, 1, 32, 32}, 0.5)};
    PretrainConfig bad = cfg;
    bad.steps = 0;
    CHECK_THROWS_AS(pretrain(m, ok_data, bad), ValueError);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(pretrain(m, ok_data, bad), ValueError);

    std::vector<Tensor> wrong_channels{Tensor::full({1, 3, 32, 32}, 0.5)};
    CHECK_THROWS_AS(pretrain(m, wrong_channels, cfg), ShapeError);

    std::vector<Tensor> indivisible{Tensor::full({1, 1, 20, 32}, 0.5)};
    CHECK_THROWS_AS(pretrain(m, indivisible, cfg), ValueError);

    // steps=1 gives a one-entry loss curve
    auto curve = pretrain(m, ok_data, cfg);
    CHECK(curve.size() == 1);
}

TEST_CASE("a constant image is learned to a tenth of the initial error") {
    MaeModel m = init_mae(1, 8, 2, 11);
    std::vector<Tensor> data{Tensor::full({1, 1, 32, 32}, 0.5)};
    PretrainConfig cfg;
    cfg.steps = 500;
    cfg.batch_size = 2;
    cfg.seed = 11;
    auto curve = pretrain(m, data, cfg);
    REQUIRE(curve.size() == 500);
    CHECK(curve.back() <= 0.1 * curve.front());
}

TEST_CASE("masked pretraining learns textures") {
    MaeModel m = init_mae(3, 32, 3, 13);
    std::vector<Tensor> data = synthetic_dataset(13, 20, 3, 32, 32);
    PretrainConfig cfg;
    cfg.steps = 2000;
    cfg.batch_size = 2;
    cfg.lr = 1e-3;
    cfg.optimizer = OptimizerKind::adam;
    cfg.seed = 13;
    auto curve = pretrain(m, data, cfg);
    REQUIRE(curve.size() == 2000);
    const double first_window = mean_of(curve, 0, 50);
    const double last_window = mean_of(curve, curve.size() - 50, 50);
    INFO("first window ", first_window, " last window ", last_window);
    CHECK(last_window <= 0.5 * first_window);
}

TEST_CASE("masked-only loss ignores visible pixels") {
    Tensor img = synthetic_texture(17, 3, 32, 32);
    MaskSpec spec = make_mask_spec(32, 32, 16, 0.75, 99);
    auto [masked, mask01] = apply_mask(img, spec, 0.0);

    Tensor pred = synthetic_texture(18, 3, 32, 32);
    const double before = ops::masked_l2_loss(nullptr, pred, img, mask01).item();

    // shift every visible (mask == 0) pixel of the target in every channel
    Tensor perturbed = img.clone();
    auto mask = mask01.data();
    auto vals = perturbed.mutable_data();
    const int64_t plane = 32 * 32;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < plane; ++i)
            if (mask[static_cast<size_t>(i)] == 0.0) vals[static_cast<size_t>(c * plane + i)] += 0.3;
    const double after = ops::masked_l2_loss(nullptr, pred, perturbed, mask01).item();
    CHECK(before == after);

    // sanity: perturbing a masked pixel does change it
    Tensor touched = img.clone();
    for (int64_t i = 0; i < plane; ++i)
        if (mask[static_cast<size_t>(i)] == 1.0) {
            touched.mutable_data()[static_cast<size_t>(i)] += 0.3;
            break;
        }
    CHECK(ops::masked_l2_loss(nullptr, pred, touched, mask01).item() != before);
}

TEST_CASE("pretraining is bit-reproducible under a fixed seed") {
    std::vector<Tensor> data = synthetic_dataset(23, 4, 1, 32, 32);
    PretrainConfig cfg;
    cfg.steps = 30;
    cfg.batch_size = 2;
    cfg.seed = 23;

    MaeModel a = init_mae(1, 8, 2, 42);
    MaeModel b = init_mae(1, 8, 2, 42);
    auto curve_a = pretrain(a, data, cfg);
    auto curve_b = pretrain(b, data, cfg);
    REQUIRE(curve_a.size() == curve_b.size());
    CHECK(std::memcmp(curve_a.data(), curve_b.data(), curve_a.size() * sizeof(double)) == 0);
    CHECK(weight_checksum(a) == weight_checksum(b));

    PretrainConfig other = cfg;
    other.seed = 24;
    MaeModel c = init_mae(1, 8, 2, 42);
    pretrain(c, data, other);
    CHECK(weight_checksum(c) != weight_checksum(a));
}

TEST_CASE("checkpoints round-trip and reject damage") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "maelab_mae_test";
    fs::create_directories(dir);
    const fs::path path = dir / "model.maec";

    MaeModel m = init_mae(3, 16, 2, 31);
    std::vector<Tensor> data = synthetic_dataset(31, 3, 3, 32, 32);
    PretrainConfig cfg;
    cfg.steps = 5;
    cfg.seed = 31;
    pretrain(m, data, cfg);

    save_checkpoint(path, m);
    MaeModel loaded = load_checkpoint(path);
    CHECK(loaded.in_channels == 3);
    CHECK(loaded.feature_channels == 16);
    CHECK(loaded.depth == 2);
    CHECK(loaded.seed == 31);
    CHECK(loaded.pretrain_patch_px == cfg.patch_px);
    CHECK(loaded.pretrain_mask_ratio == cfg.mask_ratio);
    CHECK(weight_checksum(loaded) == weight_checksum(m));

    Tensor probe = synthetic_texture(32, 3, 32, 32);
    CHECK(same_values(encode(nullptr, m, probe), encode(nullptr, loaded, probe)));

    // loaded models are frozen feature extractors until told otherwise
    for (const Tensor& p : loaded.parameters()) CHECK(!p.requires_grad());

    CHECK_THROWS_AS(load_checkpoint(path, 1), IoError); // consumer wants 1 channel

    auto read_blob = [&](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    auto write_blob = [&](const fs::path& p, const std::string& blob) {
        std::ofstream out(p, std::ios::binary);
        out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    };

    // truncation -> checksum failure
    std::string blob = read_blob(path);
    write_blob(dir / "short.maec", blob.substr(0, blob.size() * 2 / 3));
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "short.maec"), doctest::Contains("checksum"),
                         IoError);

    // single flipped payload byte -> checksum failure
    std::string corrupt = blob;
    corrupt[corrupt.size() / 2] = static_cast<char>(corrupt[corrupt.size() / 2] ^ 0x10);
    write_blob(dir / "corrupt.maec", corrupt);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "corrupt.maec"), doctest::Contains("checksum"),
                         IoError);

    // bumped version with a fixed-up checksum -> version error
    std::string versioned = blob;
    versioned[4] = 2;
    const uint32_t crc = crc32(versioned.data(), versioned.size() - 4);
    for (int i = 0; i < 4; ++i)
        versioned[versioned.size() - 4 + static_cast<size_t>(i)] =
            static_cast<char>((crc >> (8 * i)) & 0xff);
    write_blob(dir / "v2.maec", versioned);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "v2.maec"), doctest::Contains("version"), IoError);

    fs::remove_all(dir);
}
