// Copyright (c) 2026 The hashmoe Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "hashmoe/field_math.hpp"

using namespace hashmoe;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct MlpFixture {
  ParamStore<double> store;
  DenseMlp<double> mlp;
  std::vector<double> cache, scratch;

  MlpFixture(const std::vector<int>& widths, const std::vector<Act>& acts,
             uint64_t seed) {
    mlp = DenseMlp<double>::create(store, "mlp", widths, acts);
    Rng rng(seed);
    mlp.init(store.data(), rng);
    cache.resize(mlp.cache_size());
    scratch.resize(2 * mlp.max_width());
  }
};

// Straightforward re-implementation of the affine+activation chain, kept
// deliberately naive (plain nested loops, natural summation order).
std::vector<double> naive_mlp_eval(const DenseMlp<double>& mlp,
                                   const double* params,
                                   std::vector<double> x) {
  for (const auto& l : mlp.layers) {
    std::vector<double> y(l.out);
    for (int o = 0; o < l.out; ++o) {
      double s = params[l.b_off + o];
      for (int i = 0; i < l.in; ++i) {
        s += params[l.w_off + size_t(o) * l.in + i] * x[i];
      }
      y[o] = l.act == Act::kRelu && s < 0 ? 0 : s;
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace

TEST_CASE("mlp_forward: identity-initialized single layer") {
  ParamStore<double> store;
  auto mlp = DenseMlp<double>::create(store, "id", {2, 2}, {Act::kNone});
  store.data()[mlp.layers[0].w_off + 0] = 1.0;  // W = I
  store.data()[mlp.layers[0].w_off + 3] = 1.0;
  std::vector<double> cache(mlp.cache_size());
  double x[2] = {1, 2}, y[2];
  mlp.forward(store.data(), x, y, cache.data());
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 2.0);
}

TEST_CASE("mlp_forward: ReLU clamps negative pre-activation") {
  ParamStore<double> store;
  auto mlp = DenseMlp<double>::create(store, "m", {2, 1}, {Act::kRelu});
  store.data()[mlp.layers[0].w_off + 0] = 1.0;
  store.data()[mlp.layers[0].w_off + 1] = 1.0;
  store.data()[mlp.layers[0].b_off] = -3.0;
  std::vector<double> cache(mlp.cache_size());
  double x[2] = {1, 1}, y[1];
  mlp.forward(store.data(), x, y, cache.data());
  CHECK(y[0] == 0.0);  // pre-activation -1 clamped
}

TEST_CASE("mlp_forward matches naive evaluator to 1e-12") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    MlpFixture f({5, 7, 3}, {Act::kRelu, Act::kNone}, seed);
    Rng rng(seed + 777);
    std::vector<double> x(5);
    for (auto& v : x) v = rng.uniform(-2, 2);
    std::vector<double> y(3);
    f.mlp.forward(f.store.data(), x.data(), y.data(), f.cache.data());
    auto want = naive_mlp_eval(f.mlp, f.store.data(), x);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(y[i] - want[i]) < 1e-12);
  }
}

TEST_CASE("mlp_backward: zero cotangent leaves gradients unchanged") {
  MlpFixture f({4, 6, 2}, {Act::kRelu, Act::kNone}, 3);
  std::vector<double> x(4, 0.5), y(2);
  f.mlp.forward(f.store.data(), x.data(), y.data(), f.cache.data());
  auto grads = f.store.make_buffer();
  grads[0] = 42.0;
  std::vector<double> dy(2, 0.0), dx(4, -1.0);
  f.mlp.backward(f.store.data(), f.cache.data(), dy.data(), grads.data(),
                 dx.data(), f.scratch.data());
  CHECK(grads[0] == 42.0);
  for (size_t i = 1; i < grads.size(); ++i) CHECK(grads[i] == 0.0);
  for (int i = 0; i < 4; ++i) CHECK(dx[i] == 0.0);
}

TEST_CASE("mlp_backward: linear map adjoint dx == W^T dy") {
  MlpFixture f({3, 2}, {Act::kNone}, 5);
  std::vector<double> x{0.3, -0.8, 1.2}, y(2);
  f.mlp.forward(f.store.data(), x.data(), y.data(), f.cache.data());
  auto grads = f.store.make_buffer();
  std::vector<double> dy{1.5, -0.25}, dx(3);
  f.mlp.backward(f.store.data(), f.cache.data(), dy.data(), grads.data(),
                 dx.data(), f.scratch.data());
  const auto& l = f.mlp.layers[0];
  for (int i = 0; i < 3; ++i) {
    double want = 0;
    for (int o = 0; o < 2; ++o) {
      want += f.store.data()[l.w_off + size_t(o) * 3 + i] * dy[o];
    }
    CHECK(dx[i] == doctest::Approx(want).epsilon(1e-15));
  }
}

TEST_CASE("mlp gradients match central finite differences over 100 seeds") {
  int checked = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    MlpFixture f({4, 8, 3}, {Act::kRelu, Act::kNone}, seed);
    Rng rng(seed * 31 + 1);
    std::vector<double> x(4), dy(3);
    for (auto& v : x) v = rng.uniform(-1, 1);
    for (auto& v : dy) v = rng.uniform(-1, 1);

    std::vector<double> y(3);
    f.mlp.forward(f.store.data(), x.data(), y.data(), f.cache.data());
    // Skip seeds where a ReLU pre-activation sits inside the FD stencil.
    bool conditioned = true;
    const auto& hidden = f.mlp.layers[0];
    for (int o = 0; o < hidden.out; ++o) {
      const double post = f.cache[4 + o];
      if (post > 0 && post < 1e-2) conditioned = false;
    }
    if (!conditioned) continue;

    auto grads = f.store.make_buffer();
    std::vector<double> dx(4);
    f.mlp.backward(f.store.data(), f.cache.data(), dy.data(), grads.data(),
                   dx.data(), f.scratch.data());

    auto loss = [&](void) {
      std::vector<double> yy(3), cc(f.mlp.cache_size());
      f.mlp.forward(f.store.data(), x.data(), yy.data(), cc.data());
      double s = 0;
      for (int i = 0; i < 3; ++i) s += yy[i] * dy[i];
      return s;
    };
    const double h = 1e-4;
    for (size_t p = 0; p < f.store.size(); p += 1 + f.store.size() / 17) {
      const double save = f.store.data()[p];
      f.store.data()[p] = save + h;
      const double lp = loss();
      f.store.data()[p] = save - h;
      const double lm = loss();
      f.store.data()[p] = save;
      const double fd = (lp - lm) / (2 * h);
      const double rel =
          std::abs(grads[p] - fd) /
          std::max({std::abs(grads[p]), std::abs(fd), 1e-8});
      CHECK(rel < 1e-5);
    }
    ++checked;
  }
  CHECK(checked >= 80);  // conditioning filter must not eat the test
}

TEST_CASE("softmax: symmetry, stability, closed form, shift invariance") {
  double p[4];
  const double z0[4] = {0, 0, 0, 0};
  softmax(z0, p, 4);
  for (int i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25));

  const double z1[2] = {1000, 0};
  double p2[2];
  softmax(z1, p2, 2);
  CHECK(p2[0] == doctest::Approx(1.0));
  CHECK(p2[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::isfinite(p2[0]));

  const double z2[4] = {std::log(1.0), std::log(2.0), std::log(3.0),
                        std::log(4.0)};
  double p3[4];
  softmax(z2, p3, 4);
  CHECK(std::abs(p3[0] - 0.1) < 1e-9);
  CHECK(std::abs(p3[1] - 0.2) < 1e-9);
  CHECK(std::abs(p3[2] - 0.3) < 1e-9);
  CHECK(std::abs(p3[3] - 0.4) < 1e-9);

  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    double z[8], zs[8], a[8], b[8];
    const double c = rng.uniform(-100, 100);
    for (int i = 0; i < 8; ++i) {
      z[i] = rng.uniform(-5, 5);
      zs[i] = z[i] + c;
    }
    softmax(z, a, 8);
    softmax(zs, b, 8);
    double sum = 0;
    for (int i = 0; i < 8; ++i) {
      CHECK(std::abs(a[i] - b[i]) < 1e-12);
      sum += a[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
    // order preservation
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        if (z[i] > z[j]) CHECK(a[i] > a[j]);
      }
    }
  }
}

TEST_CASE("softmax_backward matches finite differences") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    double z[5], dp[5], p[5], dz[5];
    for (int i = 0; i < 5; ++i) {
      z[i] = rng.uniform(-2, 2);
      dp[i] = rng.uniform(-1, 1);
    }
    softmax(z, p, 5);
    softmax_backward(p, dp, dz, 5);
    const double h = 1e-6;
    for (int i = 0; i < 5; ++i) {
      double zp[5], zm[5], pp[5], pm[5];
      std::copy(z, z + 5, zp);
      std::copy(z, z + 5, zm);
      zp[i] += h;
      zm[i] -= h;
      softmax(zp, pp, 5);
      softmax(zm, pm, 5);
      double fd = 0;
      for (int j = 0; j < 5; ++j) fd += dp[j] * (pp[j] - pm[j]) / (2 * h);
      CHECK(std::abs(dz[i] - fd) < 1e-7);
    }
  }
}

TEST_CASE("sh_encode: l=0 band is the constant 1/(2 sqrt(pi))") {
  double out[1];
  sh_encode<double>({0.3, -0.5, 0.81240384}, 1, out);
  CHECK(out[0] == doctest::Approx(0.28209479177).epsilon(1e-10));
}

TEST_CASE("sh_encode: +z axis lights exactly one band-1 entry") {
  double out[4];
  sh_encode<double>({0, 0, 1}, 2, out);
  CHECK(out[1] == 0.0);                               // ~ y
  CHECK(out[2] == doctest::Approx(0.4886025119029199));  // ~ z
  CHECK(out[3] == 0.0);                               // ~ x
}

TEST_CASE("sh_encode degree 4 matches textbook polynomial oracle") {
  Rng rng(13);
  for (int trial = 0; trial < 32; ++trial) {
    Vec3<double> d{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    if (d.norm() < 1e-3) continue;
    d = d.normalized();
    double got[16];
    sh_encode(d, 4, got);
    const double x = d.x, y = d.y, z = d.z;
    // Real spherical harmonics from the published closed forms, computed
    // here with explicit square roots rather than frozen decimals.
    const double want[16] = {
        0.5 * std::sqrt(1.0 / kPi),
        std::sqrt(3.0 / (4 * kPi)) * y,
        std::sqrt(3.0 / (4 * kPi)) * z,
        std::sqrt(3.0 / (4 * kPi)) * x,
        0.5 * std::sqrt(15.0 / kPi) * x * y,
        0.5 * std::sqrt(15.0 / kPi) * y * z,
        0.25 * std::sqrt(5.0 / kPi) * (3 * z * z - 1),
        0.5 * std::sqrt(15.0 / kPi) * x * z,
        0.25 * std::sqrt(15.0 / kPi) * (x * x - y * y),
        0.25 * std::sqrt(35.0 / (2 * kPi)) * y * (3 * x * x - y * y),
        0.5 * std::sqrt(105.0 / kPi) * x * y * z,
        0.25 * std::sqrt(21.0 / (2 * kPi)) * y * (5 * z * z - 1),
        0.25 * std::sqrt(7.0 / kPi) * z * (5 * z * z - 3),
        0.25 * std::sqrt(21.0 / (2 * kPi)) * x * (5 * z * z - 1),
        0.25 * std::sqrt(105.0 / kPi) * z * (x * x - y * y),
        0.25 * std::sqrt(35.0 / (2 * kPi)) * x * (x * x - 3 * y * y),
    };
    for (int i = 0; i < 16; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-10);
  }
}

TEST_CASE("positional_encode dims and values") {
  double out[pe_dim(2)];
  positional_encode<double>({0.5, 0.0, -0.25}, 2, out);
  CHECK(out[0] == 0.5);
  CHECK(out[3] == doctest::Approx(std::sin(kPi * 0.5)));
  CHECK(out[4] == doctest::Approx(std::cos(kPi * 0.5)));
  CHECK(out[9] == doctest::Approx(std::sin(2 * kPi * 0.5)).epsilon(1e-12));
}

TEST_CASE("activations: softplus and sigmoid basics") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(50.0) == doctest::Approx(50.0));
  CHECK(softplus(-50.0) >= 0.0);
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  const double h = 1e-6, x0 = 0.37;
  CHECK(softplus_grad(x0) ==
        doctest::Approx((softplus(x0 + h) - softplus(x0 - h)) / (2 * h))
            .epsilon(1e-6));
}

TEST_CASE("determinism: identical seed gives bitwise identical init") {
  ParamStore<float> s1, s2;
  auto m1 = DenseMlp<float>::create(s1, "m", {8, 16, 4}, {Act::kRelu, Act::kNone});
  auto m2 = DenseMlp<float>::create(s2, "m", {8, 16, 4}, {Act::kRelu, Act::kNone});
  Rng r1(99), r2(99);
  m1.init(s1.data(), r1);
  m2.init(s2.data(), r2);
  for (size_t i = 0; i < s1.size(); ++i) REQUIRE(s1.data()[i] == s2.data()[i]);
}
