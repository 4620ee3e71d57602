#include <cmath>
#include <numbers>

#include "doctest.h"
#include "painforge/core/errors.hpp"
#include "painforge/tensor/gradcheck.hpp"
#include "painforge/tensor/ops.hpp"
#include "painforge/tensor/optim.hpp"
#include "painforge/tensor/tensor_io.hpp"
#include "support.hpp"

using namespace painforge;
using painforge::testing::random_tensor;
using painforge::testing::to_vector;

namespace {

Tensor t2(std::vector<double> v, std::size_t r, std::size_t c, bool rg = false) {
  return Tensor::from_vector({r, c}, std::move(v), rg);
}

}  // namespace

TEST_CASE("matmul examples") {
  auto id = t2({1, 0, 0, 1}, 2, 2);
  auto a = t2({1, 2, 3, 4}, 2, 2);
  CHECK(to_vector(matmul(id, a)) == std::vector<double>{1, 2, 3, 4});
  CHECK(to_vector(matmul(a, t2({5, 6, 7, 8}, 2, 2))) == std::vector<double>{19, 22, 43, 50});

  auto bad_a = Tensor::zeros({2, 3});
  auto bad_b = Tensor::zeros({2, 3});
  try {
    matmul(bad_a, bad_b);
    FAIL("expected dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("batched matmul agrees with per-batch products") {
  Rng rng(3);
  auto a = random_tensor(rng, {2, 3, 4}, -1, 1, false);
  auto b = random_tensor(rng, {2, 4, 5}, -1, 1, false);
  auto c = matmul(a, b);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double s = 0;
        for (std::size_t p = 0; p < 4; ++p) s += a.at({t, i, p}) * b.at({t, p, j});
        CHECK(c.at({t, i, j}) == doctest::Approx(s).epsilon(1e-14));
      }
}

TEST_CASE("softmax examples and stability") {
  auto s = softmax(Tensor::from_vector({2}, {0, 0}), 0);
  CHECK(s.data()[0] == doctest::Approx(0.5));
  auto s2 = softmax(Tensor::from_vector({2}, {std::log(2.0), 0}), 0);
  CHECK(s2.data()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(s2.data()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  auto s3 = softmax(Tensor::from_vector({2}, {1000, 1000}), 0);
  CHECK(s3.data()[0] == 0.5);

  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const double shift = trial % 2 ? 1e4 : -1e4;
    auto x = random_tensor(rng, {3, 7}, shift - 5, shift + 5, false);
    auto y = softmax(x, 1);
    for (std::size_t r = 0; r < 3; ++r) {
      double sum = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        const double v = y.at({r, c});
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }

  CHECK_THROWS_AS(softmax(Tensor::from_vector({2}, {std::nan(""), 0}), 0), NumericError);
}

TEST_CASE("softmax along a middle axis") {
  Rng rng(5);
  auto x = random_tensor(rng, {2, 3, 4}, -2, 2, false);
  auto y = softmax(x, 1);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t c = 0; c < 4; ++c) {
      double s = 0;
      for (std::size_t b = 0; b < 3; ++b) s += y.at({a, b, c});
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("layer_norm examples") {
  auto one = Tensor::full({2}, 1.0);
  auto zero = Tensor::zeros({2});
  auto c = layer_norm(Tensor::from_vector({1, 2}, {4, 4}), one, zero);
  CHECK(c.data()[0] == 0.0);
  CHECK(c.data()[1] == 0.0);

  auto y = layer_norm(Tensor::from_vector({1, 2}, {1, 3}), one, zero, 1e-12);
  CHECK(y.data()[0] == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(y.data()[1] == doctest::Approx(1.0).epsilon(1e-10));

  auto y2 = layer_norm(Tensor::from_vector({1, 2}, {1, 3}), Tensor::full({2}, 2.0), Tensor::full({2}, 1.0), 1e-12);
  CHECK(y2.data()[0] == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(y2.data()[1] == doctest::Approx(3.0).epsilon(1e-10));

  CHECK_THROWS_AS(layer_norm(Tensor::zeros({1, 3}), one, zero), DimensionError);
  CHECK_THROWS_AS(layer_norm(Tensor::scalar(1.0), Tensor::full({1}, 1.0), Tensor::zeros({1})), DimensionError);
}

TEST_CASE("activations and dropout") {
  auto r = relu(Tensor::from_vector({2}, {-2, 3}));
  CHECK(to_vector(r) == std::vector<double>{0, 3});
  CHECK(gelu(Tensor::from_vector({1}, {0})).data()[0] == 0.0);

  Rng rng(1);
  auto x = random_tensor(rng, {4, 8});
  auto same = dropout(x, 0.5, false, {});
  CHECK(to_vector(same) == to_vector(x));

  auto d1 = dropout(x, 0.5, true, {7, 1, 3});
  auto d2 = dropout(x, 0.5, true, {7, 1, 3});
  auto d3 = dropout(x, 0.5, true, {7, 1, 4});
  CHECK(to_vector(d1) == to_vector(d2));
  CHECK(to_vector(d1) != to_vector(d3));
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = d1.data()[i];
    CHECK((v == 0.0 || v == doctest::Approx(2.0 * x.data()[i])));
  }

  CHECK_THROWS_AS(dropout(x, 1.0, true, {}), ParameterError);
  CHECK_THROWS_AS(dropout(x, -0.1, false, {}), ParameterError);
}

TEST_CASE("dropout keeps roughly 1-p of the units") {
  auto x = Tensor::full({100, 100}, 1.0);
  auto d = dropout(x, 0.3, true, {42, 2, 9});
  std::size_t kept = 0;
  for (double v : d.data()) kept += v != 0.0;
  CHECK(static_cast<double>(kept) / 10000.0 == doctest::Approx(0.7).epsilon(0.03));
}

TEST_CASE("cross_entropy examples") {
  auto uniform = Tensor::zeros({3, 17});
  std::vector<int> labels{0, 5, 16};
  CHECK(cross_entropy(uniform, labels).item() == doctest::Approx(2.833213344056216).epsilon(1e-12));

  std::vector<double> v(17, 0.0);
  v[4] = 1e4;
  CHECK(cross_entropy(Tensor::from_vector({1, 17}, v), std::vector<int>{4}).item() == doctest::Approx(0.0));

  try {
    cross_entropy(Tensor::zeros({1, 17}), std::vector<int>{17});
    FAIL("expected label error");
  } catch (const LabelError& e) {
    CHECK(std::string(e.what()).find("17") != std::string::npos);
  }
}

TEST_CASE("kl_temperature examples") {
  auto zt = Tensor::from_vector({1, 2}, {std::log(3.0), 0});
  auto zs = Tensor::from_vector({1, 2}, {0, 0});
  CHECK(kl_temperature(zt, zt, 2.5).item() == 0.0);
  CHECK(kl_temperature(zt, zs, 1.0).item() == doctest::Approx(0.13081203594113697).epsilon(1e-12));
  // oracle value from an independent scalar evaluation
  CHECK(kl_temperature(zt, zs, 4.0).item() == doctest::Approx(0.14945786501204306).epsilon(1e-12));
  CHECK_THROWS_AS(kl_temperature(zt, zs, 0.0), ParameterError);
  CHECK_THROWS_AS(kl_temperature(zt, Tensor::zeros({1, 3}), 1.0), DimensionError);
}

TEST_CASE("kl_temperature is non-negative and vanishes on identical inputs") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    auto a = random_tensor(rng, {4, 17}, -6, 6, false);
    auto b = random_tensor(rng, {4, 17}, -6, 6, false);
    const double t = rng.uniform(0.2, 8.0);
    CHECK(kl_temperature(a, b, t).item() >= 0.0);
    CHECK(kl_temperature(a, a, t).item() == 0.0);
  }
}

TEST_CASE("kl_temperature never sends gradient to the teacher") {
  Rng rng(2);
  auto teacher = random_tensor(rng, {2, 5});
  auto student = random_tensor(rng, {2, 5});
  kl_temperature(teacher, student, 4.0).backward();
  CHECK_FALSE(teacher.has_grad());
  CHECK(student.has_grad());
}

TEST_CASE("mse examples") {
  auto a = Tensor::from_vector({2}, {0, 2});
  CHECK(mse(a, a).item() == 0.0);
  CHECK(mse(a, Tensor::from_vector({2}, {1, 0})).item() == 2.5);
  CHECK(mse(Tensor::scalar(3), Tensor::scalar(1)).item() == 4.0);
  CHECK_THROWS_AS(mse(a, Tensor::zeros({3})), DimensionError);
}

TEST_CASE("non-finite values are rejected") {
  auto big = Tensor::from_vector({1}, {1e300});
  CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("adamw examples") {
  AdamWHyper hyper;
  hyper.weight_decay = 0.01;
  std::vector<double> theta{2.0, -4.0};
  std::vector<double> grad{0.0, 0.0};
  std::vector<double> m(2, 0.0), v(2, 0.0);
  adamw_update(theta, grad, m, v, 1, 0.1, hyper);
  CHECK(theta[0] == doctest::Approx(2.0 * (1 - 0.001)).epsilon(1e-15));
  CHECK(theta[1] == doctest::Approx(-4.0 * (1 - 0.001)).epsilon(1e-15));

  hyper.weight_decay = 0.0;
  std::vector<double> t1{1.0}, g1{1.0}, m1{0.0}, v1{0.0};
  adamw_update(t1, g1, m1, v1, 1, 0.1, hyper);
  // scalar oracle: m=0.1, v=0.001, mhat=1, vhat=1
  const double expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
  CHECK(t1[0] == doctest::Approx(expected).epsilon(1e-15));
  CHECK(t1[0] == doctest::Approx(0.9).epsilon(1e-7));

  std::vector<double> t2v{0.3, -0.7}, g2{0.5, -2.0}, m2(2, 0.0), v2(2, 0.0);
  adamw_update(t2v, g2, m2, v2, 1, 0.0, hyper);
  CHECK(t2v == std::vector<double>{0.3, -0.7});

  std::vector<double> short_grad{1.0};
  CHECK_THROWS_AS(adamw_update(t2v, short_grad, m2, v2, 2, 0.1, hyper), DimensionError);
}

TEST_CASE("AdamW groups: lr=0 and wd=0 is the identity, inactive groups are untouched") {
  Rng rng(4);
  auto p1 = random_tensor(rng, {3, 3});
  auto p2 = random_tensor(rng, {5});
  const auto before1 = to_vector(p1);
  const auto before2 = to_vector(p2);
  AdamWHyper hyper;
  hyper.weight_decay = 0.0;
  AdamW opt({{"backbone", {p1}}, {"heads", {p2}}}, hyper);
  sum(add(p1, Tensor::full({3, 3}, 1.0))).backward();
  sum(mul(p2, p2)).backward();
  const double lrs0[] = {0.0, 0.0};
  const bool both[] = {true, true};
  opt.step(lrs0, both);
  CHECK(to_vector(p1) == before1);
  CHECK(to_vector(p2) == before2);
  CHECK(opt.steps() == 1);

  const double lrs[] = {0.1, 0.1};
  const bool heads_only[] = {false, true};
  opt.step(lrs, heads_only);
  CHECK(to_vector(p1) == before1);
  CHECK(to_vector(p2) != before2);
  CHECK(opt.steps() == 2);
}

TEST_CASE("cosine_lr schedule") {
  CHECK(cosine_lr(0, 100, 5e-5, 0.01) == 5e-5);
  CHECK(cosine_lr(100, 100, 5e-5, 0.01) == doctest::Approx(0.01 * 5e-5).epsilon(1e-14));
  CHECK(cosine_lr(50, 100, 1.0, 0.01) == doctest::Approx((1.0 + 0.01) / 2).epsilon(1e-14));
  CHECK(cosine_lr(150, 100, 1.0, 0.01) == doctest::Approx(0.01));
  double prev = cosine_lr(0, 37, 3.0, 0.01);
  for (int e = 1; e <= 37; ++e) {
    const double cur = cosine_lr(e, 37, 3.0, 0.01);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("gradcheck: linear function is exact") {
  Rng rng(8);
  auto x = random_tensor(rng, {10});
  auto r = gradcheck([](const Tensor& t) { return sum(scale(t, 3.0)); }, x, 1e-3);
  CHECK(r.finite);
  CHECK(r.max_rel_error <= 1e-10);
}

namespace {

void check_grad(const std::function<Tensor(const Tensor&)>& f, Shape shape, std::uint64_t seed, double lo = -1.5,
                double hi = 1.5) {
  Rng rng(seed);
  for (int point = 0; point < 10; ++point) {
    auto x = random_tensor(rng, shape, lo, hi);
    auto r = gradcheck(f, x);
    CHECK(r.finite);
    CHECK(r.max_rel_error < 1e-4);
  }
}

}  // namespace

TEST_CASE("gradcheck every differentiable op at 10 random points") {
  Rng aux(99);
  auto w = random_tensor(aux, {4, 3}, -1, 1, false);
  auto wt = random_tensor(aux, {2, 4, 3}, -1, 1, false);
  auto bias = random_tensor(aux, {3}, -1, 1, false);
  auto target = random_tensor(aux, {2, 3}, -1, 1, false);
  auto weights = random_tensor(aux, {2, 3}, -1, 1, false);
  auto teacher = random_tensor(aux, {2, 5}, -2, 2, false);
  auto weigh = [&](const Tensor& y) { return sum(mul(y, weights)); };

  SUBCASE("matmul left") { check_grad([&](const Tensor& x) { return weigh(matmul(x, w)); }, {2, 4}, 1); }
  SUBCASE("matmul right") {
    auto left = random_tensor(aux, {2, 4}, -1, 1, false);
    check_grad([&](const Tensor& x) { return weigh(matmul(left, x)); }, {4, 3}, 2);
  }
  SUBCASE("batched matmul") {
    auto wb = random_tensor(aux, {2, 2, 3}, -1, 1, false);
    check_grad([&](const Tensor& x) { return sum(mul(matmul(x, wt), wb)); }, {2, 2, 4}, 3);
  }
  SUBCASE("add/sub/mul broadcast") {
    check_grad([&](const Tensor& x) { return weigh(mul(add(x, bias), sub(x, bias))); }, {2, 3}, 4);
    check_grad([&](const Tensor& b) { return weigh(mul(add(target, b), target)); }, {3}, 5);
  }
  SUBCASE("permute/reshape/transpose") {
    auto pw = random_tensor(aux, {3, 2, 4}, -1, 1, false);
    check_grad([&](const Tensor& x) { return sum(mul(permute(x, {2, 0, 1}), pw)); }, {2, 4, 3}, 6);
    check_grad([&](const Tensor& x) { return weigh(transpose_last(reshape(x, {3, 2}))); }, {6}, 7);
  }
  SUBCASE("narrow/concat/broadcast") {
    check_grad([&](const Tensor& x) { return weigh(concat({narrow(x, 1, 1, 2), narrow(x, 1, 0, 1)}, 1)); }, {2, 3},
               8);
    check_grad([&](const Tensor& x) { return weigh(broadcast_to(x, {2, 3})); }, {3}, 9);
  }
  SUBCASE("activations") {
    check_grad([&](const Tensor& x) { return weigh(gelu(x)); }, {2, 3}, 10);
    check_grad([&](const Tensor& x) { return weigh(relu(x)); }, {2, 3}, 11);
    check_grad([&](const Tensor& x) { return weigh(dropout(x, 0.4, true, {1, 2, 3})); }, {2, 3}, 12);
  }
  SUBCASE("softmax") {
    check_grad([&](const Tensor& x) { return weigh(softmax(x, 1)); }, {2, 3}, 13);
    check_grad([&](const Tensor& x) { return weigh(softmax(x, 0)); }, {2, 3}, 14);
  }
  SUBCASE("layer_norm") {
    auto g = random_tensor(aux, {3}, 0.5, 1.5, false);
    check_grad([&](const Tensor& x) { return weigh(layer_norm(x, g, bias)); }, {2, 3}, 15);
    auto xin = random_tensor(aux, {2, 3}, -1, 1, false);
    check_grad([&](const Tensor& gm) { return weigh(layer_norm(xin, gm, bias)); }, {3}, 16);
    check_grad([&](const Tensor& b) { return weigh(layer_norm(xin, g, b)); }, {3}, 17);
  }
  SUBCASE("losses") {
    const std::vector<int> labels{3, 0};
    check_grad([&](const Tensor& x) { return cross_entropy(x, labels); }, {2, 5}, 18);
    check_grad([&](const Tensor& x) { return kl_temperature(teacher, x, 4.0); }, {2, 5}, 19);
    check_grad([&](const Tensor& x) { return kl_temperature(teacher, x, 1.0); }, {2, 5}, 20);
    check_grad([&](const Tensor& x) { return mse(x, target); }, {2, 3}, 21);
    check_grad([&](const Tensor& x) { return mean(mul(x, x)); }, {2, 3}, 22);
  }
}

TEST_CASE("backward accumulates through shared subexpressions") {
  auto x = Tensor::from_vector({1}, {3.0}, true);
  auto y = mul(x, x);     // x^2
  auto z = sum(add(y, y));  // 2x^2
  z.backward();
  CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("tensor file layout is bit-exact little-endian") {
  const std::vector<double> values{1.0, -2.5};
  const auto bytes = encode_tensor({2}, values, DType::F32);
  const std::string expected_header = std::string("P3DT") + '\x01' + '\x01' + '\x01' + '\x00' +
                                      std::string("\x02\x00\x00\x00", 4);
  CHECK(bytes.substr(0, 12) == expected_header);
  // 1.0f = 0x3f800000, -2.5f = 0xc0200000
  CHECK(bytes.substr(12) == std::string("\x00\x00\x80\x3f\x00\x00\x20\xc0", 8));

  const auto u8 = encode_tensor({1, 3}, std::vector<double>{0, 7, 255}, DType::U8);
  CHECK(u8.size() == 8 + 8 + 3);
  CHECK(static_cast<unsigned char>(u8[5]) == 3);
  CHECK_THROWS_AS(encode_tensor({1}, std::vector<double>{256}, DType::U8), ParameterError);
  CHECK_THROWS_AS(decode_tensor("P3DX\x01\x02\x00\x00"), DataError);
}

TEST_CASE("tensor file round trip is byte-exact (property)") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    Shape shape;
    const auto rank = rng.below(4);
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(1 + rng.below(5));
    std::vector<double> v(shape_numel(shape));
    const DType dtype = static_cast<DType>(1 + rng.below(3));
    for (auto& x : v) x = dtype == DType::U8 ? static_cast<double>(rng.below(256)) : rng.normal() * 1e3;
    const auto bytes = encode_tensor(shape, v, dtype);
    const auto blob = decode_tensor(bytes);
    CHECK(blob.shape == shape);
    CHECK(blob.dtype == dtype);
    CHECK(encode_tensor(blob.shape, blob.values, dtype) == bytes);
    if (dtype != DType::F32) CHECK(blob.values == v);
  }
}
