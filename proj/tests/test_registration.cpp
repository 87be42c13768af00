#include "registration_cases.hpp"
#include "support.hpp"

#include "life/filters.hpp"
#include "life/phantom.hpp"
#include "life/registration.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace life;

namespace {

using life::test::textured;

DeformationField2D constant_field(Index n, double u, double v) {
  return {Image::Constant(n, n, static_cast<float>(u)), Image::Constant(n, n, static_cast<float>(v))};
}

}  // namespace

TEST_CASE("zero field warp is the identity") {
  const Image img = life::test::random_image(17, 23, 1);
  CHECK((warp(img, DeformationField2D::zero(17, 23)) == img).all());
}

TEST_CASE("integer translation is exact in the interior") {
  Image img(12, 15);
  for (Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(i);
  const Image out = warp(img, {Image::Constant(12, 15, 2.0f), Image::Constant(12, 15, -1.0f)});
  for (Index y = 1; y < 12; ++y) {
    for (Index x = 0; x + 2 < 15; ++x) CHECK(out(y, x) == img(y - 1, x + 2));
  }
}

TEST_CASE("half-pixel shift of a linear ramp") {
  Image ramp(5, 20);
  for (Index y = 0; y < 5; ++y) {
    for (Index x = 0; x < 20; ++x) ramp(y, x) = 3.0f * static_cast<float>(x) + 1.0f;
  }
  const Image out = warp(ramp, {Image::Constant(5, 20, 0.5f), Image::Zero(5, 20)});
  for (Index y = 0; y < 5; ++y) {
    for (Index x = 0; x + 1 < 20; ++x) CHECK(out(y, x) == doctest::Approx(3.0 * (x + 0.5) + 1.0));
  }
}

TEST_CASE("warp stays within the input range and rejects bad fields") {
  std::mt19937_64 rng(4);
  std::normal_distribution<float> d(0.0f, 4.0f);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Image img = life::test::random_image(16, 16, seed, -20.0f, 300.0f);
    DeformationField2D f = DeformationField2D::zero(16, 16);
    for (Index i = 0; i < f.u.size(); ++i) {
      f.u.data()[i] = d(rng);
      f.v.data()[i] = d(rng);
    }
    const Image out = warp(img, f);
    CHECK(out.minCoeff() >= img.minCoeff());
    CHECK(out.maxCoeff() <= img.maxCoeff());
  }
  DeformationField2D bad = DeformationField2D::zero(4, 4);
  bad.u(1, 1) = std::nanf("");
  CHECK_THROWS_AS(warp(Image::Zero(4, 4), bad), std::invalid_argument);
  CHECK_THROWS_AS(warp(Image::Zero(4, 5), bad), std::invalid_argument);
}

TEST_CASE("self-registration yields a near-zero field") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const Image f = textured(seed, 48);
    CHECK(register_2d(f, f).rms() < 0.1);
  }
  const Image noise = life::test::random_image(32, 32, 9);
  CHECK(register_2d(noise, noise).rms() < 0.1);
}

TEST_CASE("translation by (2, 0) is recovered as (-2, 0)") {
  const Index n = 64;
  for (std::uint64_t seed = 100; seed < 103; ++seed) {
    const Image fixed = textured(seed, n);
    const Image moving = warp(fixed, constant_field(n, 2.0, 0.0));
    const DeformationField2D est = register_2d(moving, fixed);
    const Index margin = n / 10;
    double su = 0, sv = 0;
    int count = 0;
    for (Index y = margin; y < n - margin; ++y) {
      for (Index x = margin; x < n - margin; ++x) {
        su += est.u(y, x);
        sv += est.v(y, x);
        ++count;
      }
    }
    CHECK(std::abs(su / count + 2.0) < 0.5);
    CHECK(std::abs(sv / count) < 0.5);
  }
}

TEST_CASE("smooth sinusoidal warp has sub-pixel median endpoint error") {
  const Index n = 64;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (std::uint64_t seed = 200; seed < 203; ++seed) {
    const Image fixed = textured(seed, n);
    const double phases[4] = {phase(rng), phase(rng), phase(rng), phase(rng)};
    const DeformationField2D g = life::test::sinusoid_field(n, 3.0, phases);
    const Image moving = warp(fixed, g);
    const DeformationField2D truth = life::test::inverse_field(g);
    const DeformationField2D est = register_2d(moving, fixed);
    std::vector<double> err;
    const Index margin = 8;
    for (Index y = margin; y < n - margin; ++y) {
      for (Index x = margin; x < n - margin; ++x) {
        err.push_back(std::hypot(est.u(y, x) - truth.u(y, x), est.v(y, x) - truth.v(y, x)));
      }
    }
    std::nth_element(err.begin(), err.begin() + err.size() / 2, err.end());
    CHECK(err[err.size() / 2] < 1.0);
  }
}

TEST_CASE("registration never lowers NCC and respects the displacement cap") {
  RegParams p;
  p.max_disp = 3.0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Image fixed = textured(300 + seed, 40);
    const Image moving = seed % 2 ? life::test::random_image(40, 40, seed) : warp(fixed, constant_field(40, 5, -4));
    const DeformationField2D f = register_2d(moving, fixed, p);
    CHECK(f.u.allFinite());
    CHECK(f.v.allFinite());
    CHECK(f.magnitude().maxCoeff() <= 3.0f + 1e-4f);
    CHECK(ncc(fixed, warp(moving, f)) >= ncc(fixed, moving) - 1e-6);
  }
}

TEST_CASE("registration errors and degenerate inputs") {
  CHECK_THROWS_AS(register_2d(Image::Zero(8, 8), Image::Zero(8, 9)), std::invalid_argument);
  const DeformationField2D f = register_2d(life::test::random_image(16, 16, 2), Image::Constant(16, 16, 5.0f));
  CHECK(f.rms() == 0.0);
  RegParams p;
  p.levels = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = RegParams{};
  p.smoothing_sigma = -1;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = RegParams{};
  p.max_disp = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("ncc of constants is zero and of scaled copies is one") {
  const Image a = life::test::random_image(10, 10, 5);
  CHECK(ncc(a, Image::Constant(10, 10, 3.0f)) == 0.0);
  CHECK(ncc(a, a * 2.0f + 7.0f) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("field dump has two channels") {
  DeformationField2D f = DeformationField2D::zero(3, 4);
  f.u(1, 2) = 1.5f;
  f.v(2, 3) = -2.0f;
  const Volume3D v = field_as_volume(f);
  CHECK(v.dims() == std::array<Index, 3>{2, 3, 4});
  CHECK(v(0, 1, 2) == 1.5f);
  CHECK(v(1, 2, 3) == -2.0f);
}
