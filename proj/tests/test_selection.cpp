#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "healthygan/selection.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace healthygan;
namespace fs = std::filesystem;

namespace {

FeatureStats make_stats(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                        long long n = 100) {
  FeatureStats s;
  s.mean = mean;
  s.covariance = cov;
  s.n = n;
  return s;
}

FeatureStats random_stats(int d, unsigned seed) {
  std::mt19937 g(seed);
  std::normal_distribution<double> nd;
  Eigen::VectorXd mean(d);
  for (int i = 0; i < d; ++i) mean[i] = nd(g);
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = nd(g);
  return make_stats(mean, a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d));
}

Eigen::MatrixXd random_features(int n, int d, unsigned seed) {
  std::mt19937 g(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd f(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) f(i, j) = 2.0 * nd(g) + 0.3 * j;
  return f;
}

}  // namespace

TEST_CASE("frechet distance of identical stats is zero") {
  const auto s = random_stats(8, 41);
  const double fid = frechet_distance(s, s);
  CHECK(fid >= 0.0);
  CHECK(fid <= 1e-6);
}

TEST_CASE("frechet distance matches the equal-covariance closed form") {
  Eigen::VectorXd m1(2), m2(2);
  m1 << 0.0, 0.0;
  m2 << 3.0, 4.0;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
  CHECK(frechet_distance(make_stats(m1, eye), make_stats(m2, eye)) ==
        doctest::Approx(25.0).epsilon(1e-4));

  // Same mean, covariances 4I and I: trace term 8 + 2 - 2 tr(2I) = 2.
  CHECK(frechet_distance(make_stats(m1, 4.0 * eye), make_stats(m1, eye)) ==
        doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("frechet distance is symmetric and validates dimensions") {
  const auto a = random_stats(6, 7), b = random_stats(6, 8);
  CHECK(std::abs(frechet_distance(a, b) - frechet_distance(b, a)) <= 1e-8);
  CHECK(frechet_distance(a, b) >= 0.0);
  const auto c = random_stats(5, 9);
  CHECK_THROWS_AS((void)frechet_distance(a, c), std::invalid_argument);
}

TEST_CASE("feature accumulator matches a two-pass oracle") {
  const Eigen::MatrixXd f = random_features(50, 7, 3);
  FeatureAccumulator acc;
  acc.add(f);
  const FeatureStats s = acc.finish();

  const Eigen::VectorXd mean = f.colwise().mean().transpose();
  Eigen::MatrixXd centered = f.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / (f.rows() - 1.0);

  CHECK((s.mean - mean).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((s.covariance - cov).cwiseAbs().maxCoeff() <=
        1e-6 * std::max(1.0, cov.cwiseAbs().maxCoeff()));
  CHECK((s.covariance - s.covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.n == 50);
}

TEST_CASE("feature accumulation is streaming and permutation invariant") {
  const Eigen::MatrixXd f = random_features(60, 5, 11);
  FeatureAccumulator one;
  one.add(f);
  FeatureAccumulator chunked;
  chunked.add(f.topRows(13));
  chunked.add(f.middleRows(13, 20));
  chunked.add(f.bottomRows(27));
  const auto a = one.finish(), b = chunked.finish();
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((a.covariance - b.covariance).cwiseAbs().maxCoeff() <= 1e-10);

  std::vector<int> perm(60);
  for (int i = 0; i < 60; ++i) perm[i] = (37 * i + 11) % 60;
  Eigen::MatrixXd shuffled(60, 5);
  for (int i = 0; i < 60; ++i) shuffled.row(i) = f.row(perm[i]);
  FeatureAccumulator p;
  p.add(shuffled);
  const auto c = p.finish();
  CHECK((a.mean - c.mean).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((a.covariance - c.covariance).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("feature accumulator rejects degenerate streams") {
  FeatureAccumulator acc;
  CHECK_THROWS_AS((void)acc.finish(), std::invalid_argument);
  acc.add(random_features(1, 4, 2));
  CHECK_THROWS_AS((void)acc.finish(), std::invalid_argument);
  CHECK_THROWS_AS(acc.add(random_features(2, 5, 2)), std::invalid_argument);
}

TEST_CASE("identical images produce a zero covariance matrix") {
  RandomConvEmbedder<float> embed(1);
  Tensor<float> batch({2, 1, 16, 16});
  Rng rng(4);
  rng.fill_uniform(batch, -1.0, 1.0);
  batch.data.segment(256, 256) = batch.data.segment(0, 256);
  FeatureAccumulator acc;
  acc.add(embed(batch));
  const auto s = acc.finish();
  CHECK(s.covariance.cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("random embedder is deterministic and validates input") {
  RandomConvEmbedder<float> a(1), b(1);
  Tensor<float> batch({3, 1, 24, 24});
  Rng rng(9);
  rng.fill_uniform(batch, -1.0, 1.0);
  const Eigen::MatrixXd fa = a(batch), fb = b(batch);
  CHECK(fa.rows() == 3);
  CHECK(fa.cols() == a.dim());
  CHECK((fa - fb).cwiseAbs().maxCoeff() == 0.0);
  RandomConvEmbedder<float> other(1, 99);
  CHECK((fa - other(batch)).cwiseAbs().maxCoeff() > 0.0);

  Tensor<float> wrong_c({2, 3, 16, 16});
  CHECK_THROWS_AS((void)a(wrong_c), std::invalid_argument);
  Tensor<float> wrong_s({2, 1, 12, 12});
  CHECK_THROWS_AS((void)a(wrong_s), std::invalid_argument);
}

namespace {

TrainConfig select_config() {
  TrainConfig cfg;
  cfg.channels = 1;
  cfg.image_size = 64;
  cfg.batch_size = 2;
  cfg.total_iterations = 100;
  cfg.decay_iterations = 10;
  cfg.width_scale = 1.0 / 16.0;
  cfg.critic_depth = 2;
  cfg.seed = 3;
  return cfg;
}

/// Saturates the mask channel bias so the mask is numerically zero and the
/// composed output equals the input.
void force_identity(TrainState<float>& state) {
  for (auto& p : state.gen.params())
    if (p.name == "gen.out.b") p.var.value().data[p.var.value().numel() - 1] = -30.0f;
}

struct SelectFixture {
  fs::path root{"sel_scratch"};
  SelectFixture() {
    fs::remove_all(root);
    DatasetSpec spec;
    spec.image_size = 64;
    spec.n_healthy_B = 8;
    spec.n_mixed_healthy_A = 4;
    spec.n_mixed_anomalous_A = 2;
    spec.n_val = 2;
    spec.n_test = 2;
    spec.seed = 5;
    generate_synthetic_benchmark(spec, root.string());
  }
  ~SelectFixture() { fs::remove_all(root); }
};

}  // namespace

TEST_CASE("selection prefers the identity generator and honors the tie rule") {
  SelectFixture fix;
  CachedSet<float> healthy(fix.root.string(), load_split(fix.root.string(), Split::trainB), 1, 64);
  CachedSet<float> mixed(fix.root.string(), load_split(fix.root.string(), Split::trainB), 1, 64);

  const auto cfg = select_config();
  auto identity = make_train_state<float>(cfg);
  force_identity(identity);
  identity.iteration = 5;
  save_checkpoint("sel_identity.hgc", identity);

  auto noise_cfg = cfg;
  noise_cfg.seed = 71;
  auto noise = make_train_state<float>(noise_cfg);
  noise.iteration = 10;
  save_checkpoint("sel_noise.hgc", noise);

  RandomConvEmbedder<float> embed(1);
  FeatureExtractor<float> f = embed;

  std::ostringstream warn;
  auto result = select_best_checkpoint<float>({"sel_noise.hgc", "sel_identity.hgc"}, healthy,
                                              mixed, f, 4, &warn);
  REQUIRE(result.scores.size() == 2);
  CHECK(result.best().path == "sel_identity.hgc");
  CHECK(result.best().fid <= 1e-6);
  CHECK(result.scores[0].fid > result.scores[1].fid);
  CHECK(warn.str().empty());

  // Same weights at two iterations give byte-equal FIDs; the later one wins.
  identity.iteration = 20;
  save_checkpoint("sel_identity20.hgc", identity);
  auto tie = select_best_checkpoint<float>({"sel_identity20.hgc", "sel_identity.hgc"}, healthy,
                                           mixed, f, 4);
  CHECK(tie.scores[0].fid == tie.scores[1].fid);
  CHECK(tie.best().iteration == 20);

  write_selection_report("sel_report.csv", result);
  std::ifstream in("sel_report.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "checkpoint_path,iteration,fid,selected");
  std::getline(in, line);
  CHECK(line.find("sel_noise.hgc,10,") == 0);
  CHECK(line.substr(line.size() - 2) == ",0");
  std::getline(in, line);
  CHECK(line.find("sel_identity.hgc,5,") == 0);
  CHECK(line.substr(line.size() - 2) == ",1");

  for (const char* p : {"sel_identity.hgc", "sel_noise.hgc", "sel_identity20.hgc",
                        "sel_report.csv"})
    std::remove(p);
}

TEST_CASE("failed checkpoints are skipped with a warning") {
  SelectFixture fix;
  CachedSet<float> healthy(fix.root.string(), load_split(fix.root.string(), Split::trainB), 1, 64);
  CachedSet<float> mixed(fix.root.string(), load_split(fix.root.string(), Split::trainA), 1, 64);

  {
    std::ofstream out("sel_garbage.hgc", std::ios::binary);
    out << "not a checkpoint";
  }
  auto good = make_train_state<float>(select_config());
  good.iteration = 3;
  save_checkpoint("sel_good.hgc", good);

  RandomConvEmbedder<float> embed(1);
  FeatureExtractor<float> f = embed;
  std::ostringstream warn;
  auto result =
      select_best_checkpoint<float>({"sel_garbage.hgc", "sel_good.hgc"}, healthy, mixed, f, 4,
                                    &warn);
  CHECK(result.best().path == "sel_good.hgc");
  CHECK(!result.scores[0].ok);
  CHECK(warn.str().find("sel_garbage.hgc") != std::string::npos);

  write_selection_report("sel_fail_report.csv", result);
  std::ifstream in("sel_fail_report.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(row.find("failed") != std::string::npos);

  CHECK_THROWS_AS((void)select_best_checkpoint<float>({"sel_garbage.hgc"}, healthy, mixed, f, 4),
                  std::runtime_error);
  CHECK_THROWS_AS((void)select_best_checkpoint<float>({}, healthy, mixed, f, 4),
                  std::invalid_argument);
  for (const char* p : {"sel_garbage.hgc", "sel_good.hgc", "sel_fail_report.csv"}) std::remove(p);
}
