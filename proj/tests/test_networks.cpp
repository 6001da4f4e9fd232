#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "healthygan/networks.hpp"

#include <set>
#include <string>

using namespace healthygan;

TEST_CASE("width scaling") {
  CHECK(scaled_width(64, 1.0) == 64);
  CHECK(scaled_width(256, 0.125) == 32);
  CHECK(scaled_width(64, 0.001) == 1);
  CHECK(scaled_width(2048, 0.125) == 256);
}

TEST_CASE("generator output shapes and ranges") {
  Generator<double> gen(3, 0.125, 42);
  Rng rng(7);
  Tensor<double> x({2, 3, 32, 32});
  rng.fill_uniform(x, -1.0, 1.0);
  NoGradGuard guard;
  auto out = gen.forward(Var<double>::constant(x));
  CHECK(out.intermediate.shape() == Shape{2, 3, 32, 32});
  CHECK(out.mask.shape() == Shape{2, 1, 32, 32});
  CHECK(out.intermediate.value().min() >= -1.0);
  CHECK(out.intermediate.value().max() <= 1.0);
  CHECK(out.mask.value().min() >= 0.0);
  CHECK(out.mask.value().max() <= 1.0);
}

TEST_CASE("generator single-channel input gives one-channel intermediate") {
  Generator<double> gen(1, 0.0625, 3);
  Tensor<double> x = Tensor<double>::full({1, 1, 16, 16}, 0.2);
  NoGradGuard guard;
  auto out = gen.forward(Var<double>::constant(x));
  CHECK(out.intermediate.shape() == Shape{1, 1, 16, 16});
  CHECK(out.mask.shape() == Shape{1, 1, 16, 16});
}

TEST_CASE("generator rejects bad inputs") {
  Generator<double> gen(3, 0.0625, 3);
  NoGradGuard guard;
  auto bad_ch = Var<double>::constant(Tensor<double>::zeros({1, 2, 16, 16}));
  CHECK_THROWS_AS((void)gen.forward(bad_ch), std::invalid_argument);
  auto bad_sp = Var<double>::constant(Tensor<double>::zeros({1, 3, 18, 18}));
  CHECK_THROWS_AS((void)gen.forward(bad_sp), std::invalid_argument);
  auto tiny = Var<double>::constant(Tensor<double>::zeros({1, 3, 4, 4}));
  CHECK_THROWS_AS((void)gen.forward(tiny), std::invalid_argument);
}

TEST_CASE("generator parameter count at full width") {
  // Hand tally over the architecture tables: encoder 9600 + 131456 + 525056,
  // six residual blocks of 1181184, decoder 524672 + 131264, head 12548.
  Generator<float> gen(3, 1.0, 1);
  CHECK(parameter_count(gen.params()) == 8421700);
}

TEST_CASE("deterministic re-init") {
  Generator<double> a(3, 0.125, 99), b(3, 0.125, 99), c(3, 0.125, 100);
  REQUIRE(a.params().size() == b.params().size());
  bool all_equal = true, any_diff_c = false;
  for (size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params()[i].name == b.params()[i].name);
    all_equal = all_equal && (a.params()[i].var.value().data == b.params()[i].var.value().data).all();
    any_diff_c = any_diff_c || !(a.params()[i].var.value().data == c.params()[i].var.value().data).all();
  }
  CHECK(all_equal);
  CHECK(any_diff_c);
}

TEST_CASE("parameter names are unique") {
  Generator<double> gen(3, 0.0625, 5);
  Critic<double> critic(3, 0.0625, 6, 6);
  std::set<std::string> names;
  for (const auto& p : gen.params()) names.insert(p.name);
  for (const auto& p : critic.params()) names.insert(p.name);
  CHECK(names.size() == gen.params().size() + critic.params().size());
}

TEST_CASE("critic score map shapes track input size and depth") {
  Critic<double> critic(3, 0.125, 11, 6);
  NoGradGuard guard;
  auto x64 = Var<double>::constant(Tensor<double>::zeros({2, 3, 64, 64}));
  CHECK(critic.forward(x64).shape() == Shape{2, 1, 1, 1});
  auto x128 = Var<double>::constant(Tensor<double>::zeros({1, 3, 128, 128}));
  CHECK(critic.forward(x128).shape() == Shape{1, 1, 2, 2});

  Critic<double> shallow(3, 0.25, 11, 3);
  auto x16 = Var<double>::constant(Tensor<double>::zeros({2, 3, 16, 16}));
  CHECK(shallow.forward(x16).shape() == Shape{2, 1, 2, 2});
}

TEST_CASE("critic rejects sizes not divisible by its reduction factor") {
  Critic<double> critic(3, 0.0625, 11, 6);
  NoGradGuard guard;
  auto x100 = Var<double>::constant(Tensor<double>::zeros({1, 3, 100, 100}));
  CHECK_THROWS_AS((void)critic.forward(x100), std::invalid_argument);
  auto x32 = Var<double>::constant(Tensor<double>::zeros({1, 3, 32, 32}));
  CHECK_THROWS_AS((void)critic.forward(x32), std::invalid_argument);
}

TEST_CASE("critic full-width layer shapes") {
  Critic<float> critic(3, 1.0, 2, 6);
  const auto& ps = critic.params();
  REQUIRE(ps.size() == 14);
  CHECK(ps[0].name == "critic.conv1.w");
  CHECK(ps[0].var.shape() == Shape{64, 3, 4, 4});
  CHECK(ps[10].var.shape() == Shape{2048, 1024, 4, 4});
  CHECK(ps[12].name == "critic.out.w");
  CHECK(ps[12].var.shape() == Shape{1, 2048, 3, 3});
}

TEST_CASE("zeroed output layers give neutral predictions") {
  Generator<double> gen(1, 0.0625, 8);
  for (auto& p : gen.params())
    if (p.name == "gen.out.w" || p.name == "gen.out.b") p.var.value().data.setZero();
  Rng rng(3);
  Tensor<double> x({1, 1, 16, 16});
  rng.fill_uniform(x, -1.0, 1.0);
  NoGradGuard guard;
  auto out = gen.forward(Var<double>::constant(x));
  CHECK(out.intermediate.value().data.abs().maxCoeff() == 0.0);
  CHECK((out.mask.value().data == 0.5).all());

  Critic<double> critic(1, 0.0625, 8, 3);
  for (auto& p : critic.params())
    if (p.name == "critic.out.w" || p.name == "critic.out.b") p.var.value().data.setZero();
  auto scores = critic.forward(Var<double>::constant(Tensor<double>::full({1, 1, 16, 16}, 0.3)));
  CHECK(scores.value().data.abs().maxCoeff() == 0.0);
}

TEST_CASE("critic outputs are spatially local") {
  // Depth 2 plus the 3x3 head has receptive field 18 and stride 4. A change
  // at one input corner must leave the far output corner untouched.
  Critic<double> critic(1, 0.25, 21, 2);
  Rng rng(4);
  Tensor<double> x({1, 1, 64, 64});
  rng.fill_uniform(x, -1.0, 1.0);
  NoGradGuard guard;
  Tensor<double> s0 = critic.forward(Var<double>::constant(x)).value();
  x.at4(0, 0, 0, 0) += 5.0;
  Tensor<double> s1 = critic.forward(Var<double>::constant(x)).value();
  CHECK(s0.shape == Shape{1, 1, 16, 16});
  CHECK(s1.at4(0, 0, 0, 0) != s0.at4(0, 0, 0, 0));
  CHECK(s1.at4(0, 0, 15, 15) == s0.at4(0, 0, 15, 15));
  CHECK(s1.at4(0, 0, 8, 8) == s0.at4(0, 0, 8, 8));
}

TEST_CASE("instance norm normalizes per sample and channel") {
  ParamList<double> reg;
  Rng rng(5);
  InstanceNorm<double> norm(reg, "n", 3);
  Tensor<double> x({2, 3, 6, 6});
  rng.fill_uniform(x, -4.0, 9.0);
  NoGradGuard guard;
  Tensor<double> y = norm.forward(Var<double>::constant(x)).value();
  for (Index n = 0; n < 2; ++n)
    for (Index c = 0; c < 3; ++c) {
      double mean = 0, var = 0;
      for (Index i = 0; i < 6; ++i)
        for (Index j = 0; j < 6; ++j) mean += y.at4(n, c, i, j);
      mean /= 36;
      for (Index i = 0; i < 6; ++i)
        for (Index j = 0; j < 6; ++j) {
          double d = y.at4(n, c, i, j) - mean;
          var += d * d;
        }
      var /= 36;
      CHECK(mean == doctest::Approx(0.0).epsilon(1e-10));
      CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("instance norm is batch independent") {
  ParamList<double> reg;
  Rng rng(6);
  InstanceNorm<double> norm(reg, "n", 2);
  Tensor<double> a({1, 2, 4, 4}), b({1, 2, 4, 4});
  rng.fill_uniform(a, -1.0, 1.0);
  rng.fill_uniform(b, 5.0, 9.0);
  Tensor<double> both({2, 2, 4, 4});
  both.data.head(32) = a.data;
  both.data.tail(32) = b.data;
  NoGradGuard guard;
  Tensor<double> ya = norm.forward(Var<double>::constant(a)).value();
  Tensor<double> yboth = norm.forward(Var<double>::constant(both)).value();
  CHECK((ya.data - yboth.data.head(32)).abs().maxCoeff() < 1e-14);
}
