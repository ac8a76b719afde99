#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "test_support.hpp"
#include "vitfill/checkpoint.hpp"
#include "vitfill/mask.hpp"

using namespace vitfill;
using namespace vitfill::testing;
namespace fs = std::filesystem;

namespace {

fs::path fresh_path(const char* tag) {
    static int counter = 0;
    return fs::temp_directory_path() / ("vitfill_ckpt_" + std::string(tag) + "_" +
                                        std::to_string(++counter) + "_" +
                                        std::to_string(::getpid()) + ".vmf");
}

Checkpoint sample_checkpoint(bool with_vit) {
    Checkpoint ck;
    ck.vit_config.scheme = parse_scheme("column:2");
    ck.vit_config.d_model = 16;
    ck.vit_config.heads = 2;
    ck.vit_config.depth = 1;
    ck.vit_config.mlp_hidden = 24;
    ck.vit_mode = with_vit ? "pretrain_scheme" : "none";
    ck.image_channels = 3;
    ck.image_h = 16;
    ck.image_w = 16;
    ck.composition = Composition::residual;
    ck.lambda_known = 0.1;
    ck.mask_spec = MaskSpec{4, 8};
    ck.epoch = 7;
    ck.seed = 42;
    Rng rng(404);
    ck.rng_state = rng.state();
    ck.val_masked_psnr = {11.25, 12.5, 12.75};
    ck.resolved_config = "{\"seed\":42}";
    ck.has_vit = with_vit;
    if (with_vit) ck.vit = init_vit<float>(ck.vit_config, 3, 16, 16, 5);
    ck.gen = init_generator<float>(3, 6);
    // touch a few values so nothing is at its init default
    if (with_vit) ck.vit.embed_b.data[0] = 0.125f;
    ck.gen.b4.data[1] = -0.25f;

    Rng noise(9);
    for (const char* name : {"g.conv1.w", "g.conv4.b"}) {
        AdamState<float> slot;
        const Tensor<float>& p = std::string(name) == "g.conv1.w" ? ck.gen.w1 : ck.gen.b4;
        slot.m = random_tensor<float>(p.shape, noise, -0.1f, 0.1f);
        slot.v = random_tensor<float>(p.shape, noise, 0.0f, 0.1f);
        slot.step = 13;
        ck.optimizer.emplace(name, std::move(slot));
    }
    return ck;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void check_tensors_equal(Checkpoint& a, Checkpoint& b) {
    REQUIRE(a.has_vit == b.has_vit);
    if (a.has_vit) {
        for_each_vit_tensor(a.vit, [&b](const std::string& name, Tensor<float>& t) {
            for_each_vit_tensor(b.vit, [&](const std::string& n2, Tensor<float>& t2) {
                if (n2 == name) {
                    CHECK(t2.shape == t.shape);
                    CHECK(t2.data == t.data);
                }
            });
        });
    }
    for_each_generator_tensor(a.gen, [&b](const std::string& name, Tensor<float>& t) {
        for_each_generator_tensor(b.gen, [&](const std::string& n2, Tensor<float>& t2) {
            if (n2 == name) CHECK(t2.data == t.data);
        });
    });
}

} // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("round trip preserves every field and tensor bit") {
    Checkpoint ck = sample_checkpoint(true);
    const fs::path p = fresh_path("roundtrip");
    save_checkpoint(ck, p.string());

    Checkpoint back = load_checkpoint(p.string());
    CHECK(back.vit_config == ck.vit_config);
    CHECK(back.vit_mode == ck.vit_mode);
    CHECK(back.image_channels == 3);
    CHECK(back.image_h == 16);
    CHECK(back.image_w == 16);
    CHECK(back.composition == Composition::residual);
    CHECK(back.lambda_known == ck.lambda_known);
    CHECK(back.mask_spec.min_side == 4);
    CHECK(back.mask_spec.max_side == 8);
    CHECK(back.epoch == 7);
    CHECK(back.seed == 42);
    CHECK(back.rng_state == ck.rng_state);
    CHECK(back.val_masked_psnr == ck.val_masked_psnr);
    CHECK(back.resolved_config == ck.resolved_config);
    check_tensors_equal(ck, back);

    REQUIRE(back.optimizer.size() == 2);
    for (const auto& [name, slot] : ck.optimizer) {
        REQUIRE(back.optimizer.count(name) == 1);
        const AdamState<float>& got = back.optimizer.at(name);
        CHECK(got.step == slot.step);
        CHECK(got.m.data == slot.m.data);
        CHECK(got.v.data == slot.v.data);
    }
    fs::remove(p);
}

TEST_CASE("round trip without a ViT section") {
    Checkpoint ck = sample_checkpoint(false);
    const fs::path p = fresh_path("novit");
    save_checkpoint(ck, p.string());
    Checkpoint back = load_checkpoint(p.string());
    CHECK(back.has_vit == false);
    CHECK(back.vit_mode == "none");
    check_tensors_equal(ck, back);
    fs::remove(p);
}

TEST_CASE("reloaded parameters reproduce forward outputs bit-exactly") {
    Checkpoint ck = sample_checkpoint(true);
    const fs::path p = fresh_path("forward");
    save_checkpoint(ck, p.string());
    const Checkpoint back = load_checkpoint(p.string());

    Rng rng(77);
    const ImageTensor x = random_tensor<float>({3, 16, 16}, rng, 0.0f, 1.0f);
    const VitForwardResult before = vit_forward(x, ck.vit, ck.vit_config);
    const VitForwardResult after = vit_forward(x, back.vit, back.vit_config);
    CHECK(before.raw.data == after.raw.data);

    const BinaryMask m = sample_mask(3, 16, 16, MaskSpec{4, 8});
    const ComposedInput input = prefill(clamp01(before.raw), x, m);
    CHECK(g_forward(input, ck.gen).data == g_forward(input, back.gen).data);
    fs::remove(p);
}

TEST_CASE("saving twice yields identical bytes") {
    const Checkpoint ck = sample_checkpoint(true);
    const fs::path p1 = fresh_path("bytes1");
    const fs::path p2 = fresh_path("bytes2");
    save_checkpoint(ck, p1.string());
    save_checkpoint(ck, p2.string());
    const std::string b1 = file_bytes(p1);
    CHECK(!b1.empty());
    CHECK(b1 == file_bytes(p2));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("load rejects missing and malformed files") {
    CHECK_THROWS_AS(load_checkpoint("/tmp/vitfill_no_such_checkpoint.vmf"), IoError);

    const fs::path bad = fresh_path("badmagic");
    std::ofstream(bad, std::ios::binary) << "NOPE0000garbage";
    CHECK_THROWS_AS(load_checkpoint(bad.string()), DecodeError);
    fs::remove(bad);

    const Checkpoint ck = sample_checkpoint(true);
    const fs::path p = fresh_path("trunc");
    save_checkpoint(ck, p.string());
    std::string bytes = file_bytes(p);
    std::ofstream(p, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(p.string()), DecodeError);

    std::ofstream(p, std::ios::binary) << bytes << "extra";
    CHECK_THROWS_AS(load_checkpoint(p.string()), DecodeError);
    fs::remove(p);
}

TEST_CASE("load rejects a wrong format version") {
    const Checkpoint ck = sample_checkpoint(false);
    const fs::path p = fresh_path("version");
    save_checkpoint(ck, p.string());
    std::string bytes = file_bytes(p);
    const std::string needle = "\"format_version\":1";
    const size_t at = bytes.find(needle);
    REQUIRE(at != std::string::npos);
    bytes[at + needle.size() - 1] = '2';
    std::ofstream(p, std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_checkpoint(p.string()), ValidationError);
    fs::remove(p);
}

TEST_CASE("load rejects a tampered tensor name") {
    const Checkpoint ck = sample_checkpoint(false);
    const fs::path p = fresh_path("tamper");
    save_checkpoint(ck, p.string());
    std::string bytes = file_bytes(p);
    const std::string needle = "g.conv2.w";
    const size_t at = bytes.find(needle);
    REQUIRE(at != std::string::npos);
    bytes[at + 7] = 'X';
    std::ofstream(p, std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_checkpoint(p.string()), DecodeError);
    fs::remove(p);
}

}
