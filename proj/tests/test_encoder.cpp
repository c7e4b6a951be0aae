#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>

#include "paint/encoder.hpp"

using namespace paint;
namespace fs = std::filesystem;

namespace {

EncoderArch tiny_arch() {
    EncoderArch a;
    a.image_size = 8;
    a.patch_size = 4;
    a.dim = 16;
    a.heads = 2;
    a.mlp_hidden = 32;
    a.num_blocks = 2;
    a.num_classes = 4;
    return a;
}

Image random_image(const EncoderArch& arch, std::mt19937_64& rng) {
    Image img(arch.image_size, arch.image_size, arch.channels);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : img.data) v = u(rng);
    return img;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("architecture validation") {
    EncoderArch a;  // defaults
    CHECK_NOTHROW(a.validate());
    CHECK(a.num_patches() == 16);
    CHECK(a.patch_dim() == 16);

    EncoderArch bad = a;
    bad.patch_size = 5;  // 16 not divisible by 5
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = a;
    bad.heads = 3;  // 64 not divisible by 3
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("patch flattening produces the expected grid") {
    // default arch: 16x16 image, patch 4 -> 16 tokens
    std::mt19937_64 rng(3);
    const EncoderArch arch;
    const Tensor patches = flatten_patches(random_image(arch, rng), arch);
    CHECK(patches.n_rows == 16);
    CHECK(patches.n_cols == 16);

    // one-patch edge case: 8x8 image with patch 8
    EncoderArch one = tiny_arch();
    one.patch_size = 8;
    const Tensor single = flatten_patches(random_image(one, rng), one);
    CHECK(single.n_rows == 1);
    CHECK(single.n_cols == 64);

    // exact layout on a 4x4 image with patch 2: patch-grid row-major, pixels
    // row-major inside a patch
    EncoderArch four = tiny_arch();
    four.image_size = 4;
    four.patch_size = 2;
    Image img(4, 4, 1);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) img.at(y, x, 0) = (y * 4 + x) / 16.0;
    const Tensor t = flatten_patches(img, four);
    REQUIRE(t.n_rows == 4);
    REQUIRE(t.n_cols == 4);
    // top-right patch holds pixels (0,2),(0,3),(1,2),(1,3)
    CHECK(t.at(1, 0) == doctest::Approx(2 / 16.0));
    CHECK(t.at(1, 1) == doctest::Approx(3 / 16.0));
    CHECK(t.at(1, 2) == doctest::Approx(6 / 16.0));
    CHECK(t.at(1, 3) == doctest::Approx(7 / 16.0));

    // wrong image size and out-of-range pixels are rejected
    CHECK_THROWS_AS(flatten_patches(Image(8, 8, 1), arch), std::invalid_argument);
    Image hot(16, 16, 1);
    hot.at(0, 0, 0) = 1.5;
    CHECK_THROWS_AS(flatten_patches(hot, arch), std::invalid_argument);
}

TEST_CASE("all-zero image embeds to all-zero tokens") {
    std::mt19937_64 rng(5);
    const EncoderArch arch = tiny_arch();
    const EncoderParams p = EncoderParams::random_init(arch, rng);
    const Tensor tokens = embed_patches(Image(8, 8, 1), p);
    CHECK(tokens.n_rows == arch.num_patches());
    CHECK(tokens.n_cols == arch.dim);
    for (double v : tokens.data) CHECK(v == 0.0);
}

TEST_CASE("forward produces a probability row; a prompt changes it") {
    std::mt19937_64 rng(7);
    const EncoderArch arch = tiny_arch();
    const EncoderParams p = EncoderParams::random_init(arch, rng);
    const Tensor emb = embed_patches(random_image(arch, rng), p);

    const Prediction plain = forward_prompted(p, emb, std::nullopt);
    CHECK(plain.features.n_rows == 1);
    CHECK(plain.features.n_cols == arch.dim);
    CHECK(plain.probs.n_rows == 1);
    CHECK(plain.probs.n_cols == arch.num_classes);
    double sum = 0.0;
    for (double v : plain.probs.data) {
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);

    Tensor prompt(2, arch.dim);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (double& v : prompt.data) v = u(rng);
    const Prediction prompted = forward_prompted(p, emb, prompt);
    CHECK(!bitwise_equal(prompted.probs, plain.probs));

    Tensor bad(2, arch.dim + 1);
    CHECK_THROWS_AS(forward_prompted(p, emb, bad), std::invalid_argument);
}

TEST_CASE("a zero-row prompt is bitwise-identical to the prompt-free pass") {
    std::mt19937_64 rng(9);
    const EncoderArch arch = tiny_arch();
    const EncoderParams p = EncoderParams::random_init(arch, rng);
    const Tensor emb = embed_patches(random_image(arch, rng), p);
    const Prediction plain = forward_prompted(p, emb, std::nullopt);
    const Prediction empty = forward_prompted(p, emb, Tensor(0, arch.dim));
    CHECK(bitwise_equal(plain.features, empty.features));
    CHECK(bitwise_equal(plain.probs, empty.probs));
}

TEST_CASE("queries are deterministic and prompt-independent") {
    std::mt19937_64 rng(11);
    const EncoderArch arch = tiny_arch();
    const EncoderParams p = EncoderParams::random_init(arch, rng);
    const Tensor emb = embed_patches(random_image(arch, rng), p);

    const Tensor q1 = extract_query(p, emb);
    const Tensor q2 = extract_query(p, emb);
    CHECK(bitwise_equal(q1, q2));
    CHECK(q1.n_rows == 1);
    CHECK(q1.n_cols == arch.dim);
    CHECK(bitwise_equal(q1, forward_prompted(p, emb, std::nullopt).features));
}

TEST_CASE("snapshot is a deep copy unaffected by live updates") {
    std::mt19937_64 rng(13);
    EncoderParams live = EncoderParams::random_init(tiny_arch(), rng);
    const EncoderParams frozen = snapshot_source(live);
    const std::uint64_t before = params_fingerprint(frozen);
    live.blocks[0].ln1_gain.data[0] += 1.0;
    live.class_token.data[3] = -9.0;
    CHECK(params_fingerprint(frozen) == before);
    CHECK(params_fingerprint(live) != before);
    CHECK(params_fingerprint(snapshot_source(frozen)) == before);
}

TEST_CASE("encoder checkpoints round-trip bit-exactly") {
    std::mt19937_64 rng(17);
    const EncoderParams p = EncoderParams::random_init(tiny_arch(), rng);
    const fs::path dir = fs::temp_directory_path() / "paint_encoder_tests";
    fs::create_directories(dir);
    const fs::path stem = dir / "source";
    nlohmann::json extra;
    extra["clean_accuracy"] = 0.95;
    save_encoder(stem, p, extra);

    const EncoderParams q = load_encoder(stem);
    CHECK(params_fingerprint(q) == params_fingerprint(p));
    CHECK(q.arch.dim == p.arch.dim);
    CHECK(q.arch.num_blocks == p.arch.num_blocks);
    CHECK(q.shallow_blocks == p.shallow_blocks);

    const LoadedCheckpoint raw = load_tensors(stem);
    CHECK(raw.metadata.at("clean_accuracy") == 0.95);
}

TEST_CASE("gradients reach only the prompt and the shallow blocks during adaptation") {
    std::mt19937_64 rng(19);
    const EncoderArch arch = tiny_arch();
    EncoderParams p = EncoderParams::random_init(arch, rng);
    p.shallow_blocks = 1;  // with 2 blocks: block 0 trainable, block 1 frozen

    Graph g;
    const EncoderVars vars = lift_params(g, p, TrainScope::adaptation);
    Tensor prompt(2, arch.dim, 0.01);
    Var prompt_var = g.leaf(prompt, true);
    const Tensor raw = flatten_patches(random_image(arch, rng), arch);
    const ForwardResult out = forward_from_patches(g, vars, arch, raw, prompt_var);
    Var loss = g.sum(g.sum(out.probs, 1), 0);
    g.backward(loss);

    CHECK(g.grad_if_any(prompt_var) != nullptr);
    CHECK(g.grad_if_any(vars.blocks[0].ln1_gain) != nullptr);
    CHECK(g.grad_if_any(vars.blocks[0].wq[0]) != nullptr);
    CHECK(g.grad_if_any(vars.blocks[0].mlp_w2) != nullptr);
    CHECK(g.grad_if_any(vars.blocks[1].ln1_gain) == nullptr);
    CHECK(g.grad_if_any(vars.blocks[1].mlp_w1) == nullptr);
    CHECK(g.grad_if_any(vars.patch_projection) == nullptr);
    CHECK(g.grad_if_any(vars.class_token) == nullptr);
    CHECK(g.grad_if_any(vars.positional) == nullptr);
    CHECK(g.grad_if_any(vars.head_weight) == nullptr);
    CHECK(g.grad_if_any(vars.head_bias) == nullptr);
}

TEST_CASE("train scopes mark the right leaves trainable") {
    std::mt19937_64 rng(23);
    const EncoderParams p = EncoderParams::random_init(tiny_arch(), rng);

    Graph g_none;
    const EncoderVars none = lift_params(g_none, p, TrainScope::none);
    for (bool t : none.trainable) CHECK(!t);

    Graph g_all;
    const EncoderVars all = lift_params(g_all, p, TrainScope::all);
    for (bool t : all.trainable) CHECK(t);

    Graph g_adapt;
    const EncoderVars adapt = lift_params(g_adapt, p, TrainScope::adaptation);
    std::size_t i = 0;
    std::size_t trainable_count = 0;
    visit_params(p, [&](const std::string&, const Tensor&, int block) {
        const bool expect = block >= 0 && block < p.shallow_blocks;
        CHECK(adapt.trainable[i] == expect);
        trainable_count += adapt.trainable[i] ? 1 : 0;
        ++i;
    });
    CHECK(i == adapt.flat.size());
    CHECK(trainable_count > 0);
}

TEST_CASE("encoder loss gradients agree with finite differences") {
    // Negative log-likelihood of one class through the full tiny encoder;
    // spot-checks a weight tensor from every layer type.
    std::mt19937_64 rng(29);
    const EncoderArch arch = tiny_arch();
    const EncoderParams p = EncoderParams::random_init(arch, rng);

    Graph g;
    const EncoderVars vars = lift_params(g, p, TrainScope::all);
    Tensor prompt(2, arch.dim);
    std::uniform_real_distribution<double> u(-0.02, 0.02);
    for (double& v : prompt.data) v = u(rng);
    Var prompt_var = g.leaf(prompt, true);
    const Tensor raw = flatten_patches(random_image(arch, rng), arch);
    const ForwardResult out = forward_from_patches(g, vars, arch, raw, prompt_var);
    Tensor onehot(1, arch.num_classes);
    onehot.at(0, 1) = 1.0;
    Var target = g.leaf(onehot);
    Var picked = g.sum(g.sum(g.mul(out.probs, target), 1), 0);
    Var loss = g.scale(g.log(g.clamp_min(picked, Graph::kLogClampFloor)), -1.0);

    for (Var param : {prompt_var, vars.patch_projection, vars.class_token, vars.positional,
                      vars.blocks[0].wq[0], vars.blocks[0].wo[1], vars.blocks[1].mlp_w1,
                      vars.blocks[1].ln2_gain, vars.head_weight, vars.head_bias}) {
        const double err = finite_diff_check(g, loss, param, 1e-5);
        CHECK_MESSAGE(err <= 1e-3, "param node " << param.id << " error " << err);
    }
}
