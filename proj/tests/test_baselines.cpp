#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "locsens/baselines.hpp"

namespace {

using namespace locsens;
using baselines::BaselineKind;
using nn::Tensor;

// Separable toy corpus: tag t owns a one-hot prototype in feature space.
struct Toy {
  std::vector<data::PhotoRecord> records;
  std::vector<const data::PhotoRecord*> ptrs;
  Tensor<double> words;
  std::size_t num_tags = 5;
};

Toy make_toy(std::size_t per_tag, std::uint64_t seed) {
  Toy toy;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.05f);
  const std::size_t dim = 8;
  for (std::size_t t = 0; t < toy.num_tags; ++t) {
    for (std::size_t i = 0; i < per_tag; ++i) {
      data::PhotoRecord r;
      r.id = static_cast<data::ImageId>(t * per_tag + i);
      r.feature.assign(dim, 0.0f);
      for (auto& f : r.feature) f = noise(rng);
      r.feature[t] += 1.0f;
      r.tags = {static_cast<data::TagId>(t)};
      toy.records.push_back(std::move(r));
    }
  }
  for (const auto& r : toy.records) toy.ptrs.push_back(&r);
  toy.words = Tensor<double>::Zero(static_cast<nn::Index>(toy.num_tags), 6);
  std::normal_distribution<double> g(0.0, 1.0);
  for (nn::Index i = 0; i < toy.words.size(); ++i) toy.words.data()[i] = g(rng);
  return toy;
}

TEST(Losses, MlcExamples) {
  Tensor<double> z = Tensor<double>::Zero(1, 1), y = Tensor<double>::Ones(1, 1);
  EXPECT_NEAR(baselines::mlc_loss(z, y).value, std::log(2.0), 1e-12);
  z(0, 0) = 1000.0;
  y(0, 0) = 0.0;
  const auto big = baselines::mlc_loss(z, y);
  EXPECT_NEAR(big.value, 1000.0, 1e-9);
  EXPECT_TRUE(std::isfinite(big.grad(0, 0)));
  EXPECT_NEAR(big.grad(0, 0), 1.0, 1e-12);
  z(0, 0) = -1000.0;
  y(0, 0) = 1.0;
  EXPECT_NEAR(baselines::mlc_loss(z, y).value, 1000.0, 1e-9);
  EXPECT_THROW(baselines::mlc_loss(Tensor<double>(Tensor<double>::Zero(1, 2)), y), ValidationError);
}

TEST(Losses, MccExamples) {
  Tensor<double> z = Tensor<double>::Zero(1, 4);
  EXPECT_NEAR(baselines::mcc_loss(z, {2}).value, std::log(4.0), 1e-12);
  Tensor<double> sharp(1, 2);
  sharp << 10.0, 0.0;
  EXPECT_NEAR(baselines::mcc_loss(sharp, {0}).value, 4.54e-5, 1e-7);
  Tensor<double> huge(1, 2);
  huge << 1e4, -1e4;
  EXPECT_TRUE(std::isfinite(baselines::mcc_loss(huge, {1}).value));
  EXPECT_THROW(baselines::mcc_loss(z, {4}), ValidationError);
  EXPECT_THROW(baselines::mcc_loss(z, {0, 1}), ValidationError);
}

TEST(Losses, MccShiftInvariant) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor<double> z(3, 7);
    for (nn::Index i = 0; i < z.size(); ++i) z.data()[i] = g(rng);
    const std::vector<data::TagId> t = {0, 3, 6};
    const auto a = baselines::mcc_loss(z, t);
    Tensor<double> shifted = z.array() + g(rng) * 100.0;
    const auto b = baselines::mcc_loss(shifted, t);
    EXPECT_NEAR(a.value, b.value, 1e-9);
    EXPECT_LT((a.grad - b.grad).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Losses, HerExamples) {
  Tensor<double> f(1, 2), t(1, 2);
  f << 1.0, 0.0;
  t << 3.0, 0.0;
  EXPECT_NEAR(baselines::her_loss(f, t).value, 0.0, 1e-15);
  t << 0.0, 2.0;
  EXPECT_NEAR(baselines::her_loss(f, t).value, 1.0, 1e-15);
  t << -1.0, 0.0;
  EXPECT_NEAR(baselines::her_loss(f, t).value, 2.0, 1e-15);
  t << 0.0, 0.0;
  EXPECT_THROW(baselines::her_loss(f, t), ValidationError);
}

// Loss gradients agree with central differences.
TEST(Losses, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor<double> z(3, 4), y(3, 4), w(3, 4);
  for (nn::Index i = 0; i < z.size(); ++i) {
    z.data()[i] = g(rng);
    y.data()[i] = (g(rng) > 0) ? 1.0 : 0.0;
    w.data()[i] = g(rng);
  }
  const std::vector<data::TagId> targets = {1, 0, 3};
  auto check = [&](auto loss) {
    const auto base = loss(z);
    for (nn::Index i = 0; i < z.size(); ++i) {
      Tensor<double> p = z, m = z;
      p.data()[i] += 1e-6;
      m.data()[i] -= 1e-6;
      EXPECT_NEAR((loss(p).value - loss(m).value) / 2e-6, base.grad.data()[i], 1e-7);
    }
  };
  check([&](const Tensor<double>& x) { return baselines::mlc_loss(x, y); });
  check([&](const Tensor<double>& x) { return baselines::mcc_loss(x, targets); });
  check([&](const Tensor<double>& x) { return baselines::her_loss(x, w); });
}

TEST(Training, MccSeparatesPlantedClasses) {
  const auto toy = make_toy(60, 1);
  baselines::BaselineTrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 32;
  cfg.embed_dim = 16;
  cfg.adam.lr = 1e-2;
  const auto trained = baselines::train_baseline<float>(BaselineKind::MCC, toy.ptrs, toy.num_tags, nullptr, cfg);
  EXPECT_LT(trained.epoch_loss.back(), trained.epoch_loss.front());
  const auto x = baselines::feature_matrix<float>(toy.ptrs);
  const auto s = baselines::score_matrix(trained.model, x, nullptr);
  std::size_t hits = 0;
  for (nn::Index i = 0; i < s.rows(); ++i) {
    nn::Index best = 0;
    s.row(i).maxCoeff(&best);
    hits += toy.ptrs[static_cast<std::size_t>(i)]->has_tag(static_cast<data::TagId>(best));
    EXPECT_NEAR(s.row(i).sum(), 1.0, 1e-6);
  }
  EXPECT_GE(static_cast<double>(hits) / static_cast<double>(s.rows()), 0.99);
  EXPECT_EQ(trained.model.embed(x).cols(), 16);
  EXPECT_EQ(trained.model.tag_embeddings().rows(), 5);
}

TEST(Training, HerReachesTargets) {
  const auto toy = make_toy(60, 2);
  baselines::BaselineTrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 32;
  cfg.adam.lr = 1e-2;
  const auto trained = baselines::train_baseline<float>(BaselineKind::HER, toy.ptrs, toy.num_tags, &toy.words, cfg);
  const auto x = baselines::feature_matrix<float>(toy.ptrs);
  const auto s = baselines::score_matrix(trained.model, x, &toy.words);
  double mean_cos = 0.0;
  for (nn::Index i = 0; i < s.rows(); ++i) mean_cos += s(i, toy.ptrs[static_cast<std::size_t>(i)]->tags[0]);
  mean_cos /= static_cast<double>(s.rows());
  EXPECT_GE(mean_cos, 0.99);
  EXPECT_LE(s.maxCoeff(), 1.0 + 1e-9);
  EXPECT_GE(s.minCoeff(), -1.0 - 1e-9);
  EXPECT_THROW(baselines::train_baseline<float>(BaselineKind::HER, toy.ptrs, toy.num_tags, nullptr, cfg),
               ValidationError);
}

TEST(Training, MlcStaysFiniteOnLargeInputs) {
  auto toy = make_toy(20, 3);
  for (auto& r : toy.records) {
    for (auto& f : r.feature) f *= 1e4f;
  }
  baselines::BaselineTrainConfig cfg;
  cfg.epochs = 5;
  cfg.adam.lr = 1e-1;
  const auto trained = baselines::train_baseline<float>(BaselineKind::MLC, toy.ptrs, toy.num_tags, nullptr, cfg);
  for (double l : trained.epoch_loss) EXPECT_TRUE(std::isfinite(l));
  const auto s = baselines::score_matrix(trained.model, baselines::feature_matrix<float>(toy.ptrs), nullptr);
  EXPECT_TRUE(s.allFinite());
  EXPECT_GE(s.minCoeff(), 0.0);
  EXPECT_LE(s.maxCoeff(), 1.0);
}

TEST(Training, BitReproducible) {
  const auto toy = make_toy(30, 4);
  baselines::BaselineTrainConfig cfg;
  cfg.epochs = 3;
  cfg.embed_dim = 8;
  cfg.seed = 12;
  for (auto kind : {BaselineKind::MLC, BaselineKind::MCC, BaselineKind::HER}) {
    auto a = baselines::train_baseline<float>(kind, toy.ptrs, toy.num_tags, &toy.words, cfg);
    auto b = baselines::train_baseline<float>(kind, toy.ptrs, toy.num_tags, &toy.words, cfg);
    EXPECT_EQ(a.epoch_loss, b.epoch_loss);
    const auto pa = a.model.parameters(), pb = b.model.parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
  }
}

TEST(Model, SaveLoadRoundTrip) {
  const auto toy = make_toy(10, 5);
  const auto dir = std::filesystem::temp_directory_path() / "locsens_baselines";
  std::filesystem::create_directories(dir);
  baselines::BaselineTrainConfig cfg;
  cfg.epochs = 1;
  cfg.embed_dim = 8;
  const auto x = baselines::feature_matrix<float>(toy.ptrs);
  for (auto kind : {BaselineKind::MLC, BaselineKind::MCC, BaselineKind::HER}) {
    auto trained = baselines::train_baseline<float>(kind, toy.ptrs, toy.num_tags, &toy.words, cfg);
    const auto path = (dir / (baselines::kind_name(kind) + ".ckpt")).string();
    trained.model.save(path);
    const auto loaded = baselines::BaselineModel<float>::load(path);
    EXPECT_EQ(loaded.kind(), kind);
    EXPECT_EQ(loaded.forward(x), trained.model.forward(x));
  }
}

TEST(Model, EmbeddingRequiresMcc) {
  baselines::BaselineModel<float> mlc(BaselineKind::MLC, 4, 3, 3);
  EXPECT_THROW(mlc.embed(Tensor<float>::Zero(1, 4)), ValidationError);
  EXPECT_THROW(mlc.tag_embeddings(), ValidationError);
  EXPECT_EQ(baselines::parse_kind(baselines::kind_name(BaselineKind::HER)), BaselineKind::HER);
}

TEST(Ranking, TiesBreakByAscendingId) {
  const std::vector<Scored> items = {{5, 1.0}, {2, 1.0}, {9, 3.0}, {1, 0.5}, {3, 1.0}};
  EXPECT_EQ(ids_of(top_k(items, 3)), (std::vector<std::int64_t>{9, 2, 3}));
  EXPECT_EQ(top_k(items, 100).size(), items.size());
  EXPECT_TRUE(top_k(items, 0).empty());
  EXPECT_THROW(top_k({{1, std::nan("")}}, 1), Error);
}

TEST(Ranking, RetrieveAndTagAgreeWithScoreMatrix) {
  const auto toy = make_toy(10, 6);
  baselines::BaselineTrainConfig cfg;
  cfg.epochs = 2;
  cfg.embed_dim = 8;
  const auto trained = baselines::train_baseline<float>(BaselineKind::MCC, toy.ptrs, toy.num_tags, nullptr, cfg);
  const auto x = baselines::feature_matrix<float>(toy.ptrs);
  std::vector<data::ImageId> ids;
  for (const auto* r : toy.ptrs) ids.push_back(r->id);
  const auto s = baselines::score_matrix(trained.model, x, nullptr);

  const auto top = baselines::retrieve_by_tag(trained.model, 2, ids, x, 7);
  ASSERT_EQ(top.size(), 7u);
  for (std::size_t i = 1; i < top.size(); ++i) EXPECT_GE(top[i - 1].score, top[i].score);
  for (const auto& t : top) EXPECT_EQ(t.score, s(t.id, 2));
  EXPECT_THROW(baselines::retrieve_by_tag(trained.model, 5, ids, x, 7), ValidationError);

  const Tensor<float> one = x.row(0);
  const auto tags = baselines::tag_image(trained.model, one, 5);
  ASSERT_EQ(tags.size(), 5u);
  std::vector<std::int64_t> sorted = ids_of(tags);
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<std::int64_t>{0, 1, 2, 3, 4}));
  const Tensor<float>* no_candidates = nullptr;
  EXPECT_EQ(baselines::baseline_rank<float>(trained.model, baselines::RankMode::TagImage, std::nullopt, &one, {},
                                            no_candidates, 5),
            tags);
}

}  // namespace
