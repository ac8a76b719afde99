#include <doctest.h>

#include <functional>

#include "test_support.hpp"
#include "vitfill/tape.hpp"

using namespace vitfill;
using namespace vitfill::testing;

using DTape = Tape<double>;
using DVar = DTape::Var;
using OpFn = std::function<DVar(DTape&, const std::vector<DVar>&)>;

namespace {

// Turns an op with arbitrary output shape into a scalar loss by dotting the
// output against fixed positive weights, so every coordinate influences the
// loss.
LossBuilder<double> scalarize(const OpFn& op, const std::vector<Tensor<double>>& inputs,
                              std::uint64_t wseed) {
    DTape probe(false);
    std::vector<DVar> pv;
    for (const auto& t : inputs) pv.push_back(probe.constant(t));
    const auto shape = probe.value(op(probe, pv)).shape;
    Rng rng(wseed);
    const auto w = random_tensor<double>(shape, rng, 0.2, 1.0);
    return [op, w](DTape& tape, const std::vector<DVar>& vars) {
        return tape.sum(tape.mul(op(tape, vars), tape.constant(w)));
    };
}

double op_gradcheck(const OpFn& op, std::vector<Tensor<double>> inputs, std::uint64_t wseed) {
    return gradcheck_relerr<double>(inputs, scalarize(op, inputs, wseed));
}

} // namespace

TEST_SUITE_BEGIN("tape");

// ---- forward oracles -------------------------------------------------------

TEST_CASE("softmax of [0, ln3] is [1/4, 3/4]") {
    Tape<float> tape(false);
    auto x = tape.constant(Tensor<float>({1, 2}, {0.0f, std::log(3.0f)}));
    const auto& y = tape.value(tape.softmax_rows(x));
    CHECK(y.data[0] == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(y.data[1] == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("softmax rows sum to one, even for large logits") {
    Tape<float> tape(false);
    Rng rng(3);
    auto x = random_tensor<float>({6, 17}, rng, -4.0f, 4.0f);
    x.data[0] = 1000.0f;
    x.data[1] = 1001.0f;
    const auto& y = tape.value(tape.softmax_rows(tape.constant(x)));
    CHECK(y.all_finite());
    for (int i = 0; i < 6; ++i) {
        double s = 0.0;
        for (int j = 0; j < 17; ++j) s += y.at(i, j);
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("layer_norm maps [-1,1] to +-1/sqrt(1+eps)") {
    Tape<float> tape(false);
    auto x = tape.constant(Tensor<float>({1, 2}, {-1.0f, 1.0f}));
    auto g = tape.constant(Tensor<float>::full({2}, 1.0f));
    auto b = tape.constant(Tensor<float>::zeros({2}));
    const auto& y = tape.value(tape.layer_norm(x, g, b, kLayerNormEps));
    const double want = 1.0 / std::sqrt(1.0 + kLayerNormEps);
    CHECK(y.data[0] == doctest::Approx(-want).epsilon(1e-7));
    CHECK(y.data[1] == doctest::Approx(want).epsilon(1e-7));
}

TEST_CASE("layer_norm of a constant row is the shift") {
    Tape<float> tape(false);
    auto x = tape.constant(Tensor<float>::full({2, 4}, 0.7f));
    auto g = tape.constant(Tensor<float>::full({4}, 2.0f));
    auto b = tape.constant(Tensor<float>::full({4}, 0.25f));
    const auto& y = tape.value(tape.layer_norm(x, g, b, kLayerNormEps));
    for (float v : y.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("conv2d all-ones oracle: corner 4, edge 6, center 9") {
    Tape<float> tape(false);
    auto x = tape.constant(Tensor<float>::full({1, 3, 3}, 1.0f));
    auto w = tape.constant(Tensor<float>::full({1, 1, 3, 3}, 1.0f));
    auto b = tape.constant(Tensor<float>::zeros({1}));
    const auto& y = tape.value(tape.conv2d(x, w, b));
    const std::vector<float> want = {4, 6, 4, 6, 9, 6, 4, 6, 4};
    CHECK(y.data == want);
}

TEST_CASE("conv2d bias shifts every output plane") {
    Tape<float> tape(false);
    auto x = tape.constant(Tensor<float>::zeros({2, 4, 4}));
    auto w = tape.constant(Tensor<float>::zeros({3, 2, 3, 3}));
    auto b = tape.constant(Tensor<float>({3}, {1.0f, 2.0f, 3.0f}));
    const auto& y = tape.value(tape.conv2d(x, w, b));
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 16; ++i) CHECK(y.data[c * 16 + i] == static_cast<float>(c + 1));
}

TEST_CASE("gelu values") {
    Tape<float> tape(false);
    auto x = tape.constant(Tensor<float>({1, 3}, {-1.0f, 0.0f, 1.0f}));
    const auto& y = tape.value(tape.gelu(x));
    CHECK(y.data[0] == doctest::Approx(-0.158808).epsilon(1e-4));
    CHECK(y.data[1] == 0.0f);
    CHECK(y.data[2] == doctest::Approx(0.841192).epsilon(1e-4));
}

TEST_CASE("masked_mse splits regions and weights the known term") {
    Tape<float> tape(false);
    auto p = tape.constant(Tensor<float>({1, 4}, {1, 2, 3, 4}));
    auto t = Tensor<float>::zeros({1, 4});
    auto m = Tensor<float>({1, 4}, {1, 1, 0, 0});
    const auto& loss = tape.value(tape.masked_mse(p, t, m, 0.5f));
    CHECK(loss.data[0] == doctest::Approx(2.5 + 0.5 * 12.5).epsilon(1e-6));
}

TEST_CASE("masked_mse with an empty region drops that term") {
    Tape<float> tape(false);
    auto p = tape.constant(Tensor<float>({1, 2}, {3.0f, 3.0f}));
    auto t = Tensor<float>::zeros({1, 2});
    CHECK(tape.value(tape.masked_mse(p, t, Tensor<float>::full({1, 2}, 1.0f), 0.5f)).data[0] ==
          doctest::Approx(9.0));
    CHECK(tape.value(tape.masked_mse(p, t, Tensor<float>::zeros({1, 2}), 0.5f)).data[0] ==
          doctest::Approx(4.5));
}

TEST_CASE("matmul forward matches the naive loop") {
    Tape<double> tape(false);
    Rng rng(21);
    auto a = random_tensor<double>({4, 6}, rng);
    auto b = random_tensor<double>({6, 3}, rng);
    const auto& y = tape.value(tape.matmul(tape.constant(a), tape.constant(b)));
    CHECK(max_abs_diff(y.data, naive_matmul(a, b).data) < 1e-12);
}

TEST_CASE("gather reads through an index map") {
    Tape<float> tape(false);
    auto src = tape.constant(Tensor<float>({2, 3}, {10, 11, 12, 13, 14, 15}));
    auto map = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{5, 0, 0, 2});
    const auto& y = tape.value(tape.gather(src, map, {2, 2}));
    CHECK(y.data == std::vector<float>{15, 10, 10, 12});
}

TEST_CASE("concat and slice move columns exactly") {
    Tape<float> tape(false);
    auto a = tape.constant(Tensor<float>({2, 2}, {1, 2, 3, 4}));
    auto b = tape.constant(Tensor<float>({2, 1}, {9, 8}));
    auto cat = tape.concat_cols({a, b});
    CHECK(tape.value(cat).data == std::vector<float>{1, 2, 9, 3, 4, 8});
    auto back = tape.slice_cols(cat, 0, 2);
    CHECK(tape.value(back).data == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("concat_first appends planes") {
    Tape<float> tape(false);
    auto a = tape.constant(Tensor<float>::full({2, 2, 2}, 1.0f));
    auto b = tape.constant(Tensor<float>::full({1, 2, 2}, 5.0f));
    const auto& y = tape.value(tape.concat_first({a, b}));
    CHECK(y.shape == std::vector<int>{3, 2, 2});
    CHECK(y.data[7] == 1.0f);
    CHECK(y.data[8] == 5.0f);
}

// ---- gradient checks (double, central differences) -------------------------

TEST_CASE("gradcheck: elementwise ops") {
    Rng rng(31);
    auto a = random_tensor<double>({3, 4}, rng);
    auto b = random_tensor<double>({3, 4}, rng);
    CHECK(op_gradcheck([](DTape& t, const std::vector<DVar>& v) { return t.add(v[0], v[1]); },
                       {a, b}, 1) < 1e-6);
    CHECK(op_gradcheck([](DTape& t, const std::vector<DVar>& v) { return t.sub(v[0], v[1]); },
                       {a, b}, 2) < 1e-6);
    CHECK(op_gradcheck([](DTape& t, const std::vector<DVar>& v) { return t.mul(v[0], v[1]); },
                       {a, b}, 3) < 1e-6);
    CHECK(op_gradcheck([](DTape& t, const std::vector<DVar>& v) { return t.scale(v[0], 1.7); },
                       {a}, 4) < 1e-6);
}

TEST_CASE("gradcheck: relu away from the kink") {
    Rng rng(32);
    auto a = random_tensor<double>({4, 5}, rng);
    for (double& v : a.data) v += (v >= 0 ? 0.06 : -0.06);
    CHECK(op_gradcheck([](DTape& t, const std::vector<DVar>& v) { return t.relu(v[0]); }, {a},
                       5) < 1e-6);
}

TEST_CASE("gradcheck: gelu") {
    Rng rng(33);
    auto a = random_tensor<double>({3, 3}, rng, -2.0, 2.0);
    CHECK(op_gradcheck([](DTape& t, const std::vector<DVar>& v) { return t.gelu(v[0]); }, {a},
                       6) < 1e-6);
}

TEST_CASE("gradcheck: matmul both sides") {
    Rng rng(34);
    auto a = random_tensor<double>({3, 4}, rng);
    auto b = random_tensor<double>({4, 5}, rng);
    CHECK(op_gradcheck([](DTape& t, const std::vector<DVar>& v) { return t.matmul(v[0], v[1]); },
                       {a, b}, 7) < 1e-6);
}

TEST_CASE("gradcheck: matmul_nt both sides") {
    Rng rng(35);
    auto a = random_tensor<double>({3, 4}, rng);
    auto b = random_tensor<double>({5, 4}, rng);
    CHECK(op_gradcheck(
              [](DTape& t, const std::vector<DVar>& v) { return t.matmul_nt(v[0], v[1]); },
              {a, b}, 8) < 1e-6);
}

TEST_CASE("gradcheck: add_row_bias") {
    Rng rng(36);
    auto a = random_tensor<double>({4, 3}, rng);
    auto b = random_tensor<double>({3}, rng);
    CHECK(op_gradcheck(
              [](DTape& t, const std::vector<DVar>& v) { return t.add_row_bias(v[0], v[1]); },
              {a, b}, 9) < 1e-6);
}

TEST_CASE("gradcheck: softmax_rows") {
    Rng rng(37);
    auto a = random_tensor<double>({3, 5}, rng, -2.0, 2.0);
    CHECK(op_gradcheck([](DTape& t, const std::vector<DVar>& v) { return t.softmax_rows(v[0]); },
                       {a}, 10) < 1e-6);
}

TEST_CASE("gradcheck: layer_norm input and affine") {
    Rng rng(38);
    auto x = random_tensor<double>({4, 6}, rng);
    auto g = random_tensor<double>({6}, rng, 0.5, 1.5);
    auto b = random_tensor<double>({6}, rng, -0.3, 0.3);
    CHECK(op_gradcheck(
              [](DTape& t, const std::vector<DVar>& v) {
                  return t.layer_norm(v[0], v[1], v[2], kLayerNormEps);
              },
              {x, g, b}, 11) < 1e-6);
}

TEST_CASE("gradcheck: conv2d input, weight, bias") {
    Rng rng(39);
    auto x = random_tensor<double>({2, 5, 4}, rng);
    auto w = random_tensor<double>({3, 2, 3, 3}, rng, -0.5, 0.5);
    auto b = random_tensor<double>({3}, rng, -0.2, 0.2);
    CHECK(op_gradcheck(
              [](DTape& t, const std::vector<DVar>& v) { return t.conv2d(v[0], v[1], v[2]); },
              {x, w, b}, 12) < 1e-6);
}

TEST_CASE("gradcheck: gather with repeated indices scatter-adds") {
    Rng rng(40);
    auto src = random_tensor<double>({2, 6}, rng);
    auto map = std::make_shared<std::vector<std::int64_t>>(
        std::vector<std::int64_t>{0, 5, 5, 3, 11, 2});
    CHECK(op_gradcheck(
              [map](DTape& t, const std::vector<DVar>& v) { return t.gather(v[0], map, {2, 3}); },
              {src}, 13) < 1e-6);
}

TEST_CASE("gradcheck: column and plane concatenation, slicing") {
    Rng rng(41);
    auto a = random_tensor<double>({3, 2}, rng);
    auto b = random_tensor<double>({3, 3}, rng);
    CHECK(op_gradcheck(
              [](DTape& t, const std::vector<DVar>& v) { return t.concat_cols({v[0], v[1]}); },
              {a, b}, 14) < 1e-6);
    auto c = random_tensor<double>({3, 6}, rng);
    CHECK(op_gradcheck(
              [](DTape& t, const std::vector<DVar>& v) { return t.slice_cols(v[0], 1, 4); }, {c},
              15) < 1e-6);
    auto p = random_tensor<double>({2, 3}, rng);
    auto q = random_tensor<double>({1, 3}, rng);
    CHECK(op_gradcheck(
              [](DTape& t, const std::vector<DVar>& v) { return t.concat_first({v[0], v[1]}); },
              {p, q}, 16) < 1e-6);
}

TEST_CASE("gradcheck: masked_mse") {
    Rng rng(42);
    auto p = random_tensor<double>({3, 4}, rng);
    auto tgt = random_tensor<double>({3, 4}, rng);
    Tensor<double> m = Tensor<double>::zeros({3, 4});
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = (i % 3 == 0) ? 1.0 : 0.0;
    const double rel = gradcheck_relerr<double>(
        {p}, [tgt, m](DTape& t, const std::vector<DVar>& v) {
            return t.masked_mse(v[0], tgt, m, 0.1);
        });
    CHECK(rel < 1e-6);
}

TEST_CASE("masked_mse with lambda 0 ignores the known region") {
    Tape<double> tape(true);
    auto p = tape.param(Tensor<double>({1, 4}, {1, 2, 3, 4}));
    Tensor<double> tgt = Tensor<double>::zeros({1, 4});
    Tensor<double> m({1, 4}, {1, 0, 0, 1});
    tape.backward(tape.masked_mse(p, tgt, m, 0.0));
    const auto g = tape.grad(p);
    CHECK(g.data[1] == 0.0);
    CHECK(g.data[2] == 0.0);
    CHECK(g.data[0] == doctest::Approx(1.0)); // 2*p/n_masked = 2*1/2
}

TEST_CASE("gradcheck: composite expression end to end") {
    Rng rng(43);
    auto x = random_tensor<double>({4, 6}, rng);
    auto g = random_tensor<double>({6}, rng, 0.5, 1.5);
    auto b = random_tensor<double>({6}, rng, -0.3, 0.3);
    auto w = random_tensor<double>({6, 6}, rng, -0.5, 0.5);
    auto tgt = random_tensor<double>({4, 6}, rng);
    Tensor<double> m = Tensor<double>::zeros({4, 6});
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = (i % 2 == 0) ? 1.0 : 0.0;
    const double rel = gradcheck_relerr<double>(
        {x, g, b, w}, [tgt, m](DTape& t, const std::vector<DVar>& v) {
            auto h = t.layer_norm(v[0], v[1], v[2], kLayerNormEps);
            auto s = t.softmax_rows(t.matmul(h, v[3]));
            auto y = t.gelu(t.matmul(s, v[3]));
            return t.masked_mse(y, tgt, m, 0.1);
        });
    CHECK(rel < 1e-6);
}

// ---- tape mechanics --------------------------------------------------------

TEST_CASE("backward rejects non-scalar losses and non-recording tapes") {
    Tape<float> tape(true);
    auto v = tape.param(Tensor<float>::full({2, 2}, 1.0f));
    CHECK_THROWS_AS(tape.backward(v), ValidationError);

    Tape<float> frozen(false);
    auto s = frozen.param(Tensor<float>::scalar(1.0f));
    CHECK_THROWS_AS(frozen.backward(s), ValidationError);
}

TEST_CASE("constants do not accumulate gradients") {
    Tape<float> tape(true);
    auto c = tape.constant(Tensor<float>::full({2}, 2.0f));
    auto p = tape.param(Tensor<float>::full({2}, 3.0f));
    tape.backward(tape.sum(tape.mul(c, p)));
    CHECK(tape.grad(p).data == std::vector<float>{2, 2});
    CHECK(tape.grad(c).data == std::vector<float>{0, 0});
}

TEST_CASE("unused parameters get zero gradients") {
    Tape<float> tape(true);
    auto used = tape.param(Tensor<float>::scalar(2.0f));
    auto unused = tape.param(Tensor<float>::full({3}, 1.0f));
    tape.backward(tape.scale(used, 4.0f));
    CHECK(tape.grad(used).data[0] == 4.0f);
    CHECK(tape.grad(unused).data == std::vector<float>{0, 0, 0});
}

TEST_CASE("a reused variable accumulates through both paths") {
    Tape<float> tape(true);
    auto p = tape.param(Tensor<float>::scalar(3.0f));
    auto y = tape.mul(p, p); // d/dp p^2 = 2p
    tape.backward(y);
    CHECK(tape.grad(p).data[0] == 6.0f);
}

TEST_CASE("backward can run twice with identical results") {
    Tape<float> tape(true);
    auto p = tape.param(Tensor<float>::full({2, 2}, 1.5f));
    auto loss = tape.sum(tape.mul(p, p));
    tape.backward(loss);
    const auto g1 = tape.grad(p);
    tape.backward(loss);
    CHECK(tape.grad(p).data == g1.data);
}

TEST_CASE("shape violations throw DimensionError") {
    Tape<float> tape(false);
    auto a = tape.constant(Tensor<float>::zeros({2, 3}));
    auto b = tape.constant(Tensor<float>::zeros({3, 2}));
    auto vec = tape.constant(Tensor<float>::zeros({4}));
    CHECK_THROWS_AS(tape.add(a, b), DimensionError);
    CHECK_THROWS_AS(tape.matmul(a, a), DimensionError);
    CHECK_THROWS_AS(tape.add_row_bias(a, vec), DimensionError);
    CHECK_THROWS_AS(tape.softmax_rows(vec), DimensionError);
    CHECK_THROWS_AS(tape.slice_cols(a, 2, 2), DimensionError);
    auto img = tape.constant(Tensor<float>::zeros({2, 4, 4}));
    auto w5 = tape.constant(Tensor<float>::zeros({1, 2, 5, 5}));
    auto w_badc = tape.constant(Tensor<float>::zeros({1, 3, 3, 3}));
    auto bias = tape.constant(Tensor<float>::zeros({1}));
    CHECK_THROWS_AS(tape.conv2d(img, w5, bias), DimensionError);
    CHECK_THROWS_AS(tape.conv2d(img, w_badc, bias), DimensionError);
    auto map = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{99});
    CHECK_THROWS_AS(tape.gather(a, map, {1}), DimensionError);
}

TEST_SUITE_END();
