#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "locsens/scorer/rank.hpp"
#include "locsens/scorer/train.hpp"

namespace {

using namespace locsens;
using scorer::Architecture;
using scorer::NegativeMode;
using scorer::Strategy;
using nn::Tensor;

Architecture tiny_arch(nn::Index embed = 8) {
  Architecture a;
  a.embed_dim = embed;
  a.proj_dim = 16;
  a.trunk = {32, 16};
  a.gn_groups = 4;
  return a;
}

// Tag t is drawn by images clustered around its embedding and located in
// one of two cities.
struct Planted {
  std::vector<data::PhotoRecord> records;
  std::vector<const data::PhotoRecord*> ptrs;
  scorer::EmbeddingSet<float> emb;
  std::size_t num_tags = 4;
};

Planted make_planted(std::size_t per_tag, std::uint64_t seed) {
  Planted p;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  const nn::Index d = 8;
  p.emb.tags.resize(static_cast<nn::Index>(p.num_tags), d);
  for (nn::Index i = 0; i < p.emb.tags.size(); ++i) p.emb.tags.data()[i] = g(rng);
  p.emb.tags.rowwise().normalize();
  p.emb.images.resize(static_cast<nn::Index>(p.num_tags * per_tag), d);
  const geo::GeoCoord cities[] = {{48.85, 2.35}, {-33.87, 151.21}};
  for (std::size_t t = 0; t < p.num_tags; ++t) {
    for (std::size_t i = 0; i < per_tag; ++i) {
      const auto row = static_cast<nn::Index>(t * per_tag + i);
      data::PhotoRecord r;
      r.id = row + 100;
      r.feature = {0.0f};
      r.tags = {static_cast<data::TagId>(t)};
      r.location = cities[(t + i) % 2];
      p.records.push_back(r);
      Eigen::RowVectorXf e = p.emb.tags.row(static_cast<nn::Index>(t));
      for (nn::Index k = 0; k < d; ++k) e(k) += 0.2f * g(rng);
      p.emb.images.row(row) = e.normalized();
      p.emb.ids.push_back(r.id);
      p.emb.row_of.emplace(r.id, row);
    }
  }
  for (const auto& r : p.records) p.ptrs.push_back(&r);
  return p;
}

scorer::TrainConfig tiny_config(int epochs) {
  scorer::TrainConfig c;
  c.arch = tiny_arch();
  c.epochs = epochs;
  c.batch_size = 16;
  c.negatives = 3;
  c.seed = 3;
  c.adam.lr = 3e-3;
  return c;
}

TEST(MarginLoss, Examples) {
  EXPECT_EQ(scorer::margin_ranking_loss(1.0, 0.5, 0.1).value, 0.0);
  const auto l = scorer::margin_ranking_loss(0.5, 0.6, 0.1);
  EXPECT_NEAR(l.value, 0.2, 1e-12);
  EXPECT_EQ(l.d_pos, -1.0);
  EXPECT_EQ(l.d_neg, 1.0);
  EXPECT_NEAR(scorer::margin_ranking_loss(0.3, 0.3, 0.1).value, 0.1, 1e-15);
  const auto at_margin = scorer::margin_ranking_loss(0.6, 0.5, 0.1);
  EXPECT_EQ(at_margin.value > 0.0, 0.6 < 0.5 + 0.1);
  EXPECT_THROW(scorer::margin_ranking_loss(0.0, 0.0, 0.0), ValidationError);
}

TEST(MarginLoss, NonNegativeAndZeroExactlyWhenSeparated) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 10000; ++i) {
    const double sp = u(rng), sn = u(rng), m = std::abs(u(rng)) + 1e-3;
    const auto l = scorer::margin_ranking_loss(sp, sn, m);
    EXPECT_GE(l.value, 0.0);
    EXPECT_EQ(l.value == 0.0, !(sp < sn + m));
  }
}

TEST(Model, ZeroAlphaIgnoresLocation) {
  scorer::LocSensModel<double> model(tiny_arch());
  nn::Rng rng(5);
  model.init(rng);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor<double> r(20, 8), v(20, 8), c1(20, 2), c2(20, 2);
  for (nn::Index i = 0; i < r.size(); ++i) {
    r.data()[i] = g(rng);
    v.data()[i] = g(rng);
  }
  for (nn::Index i = 0; i < c1.size(); ++i) {
    c1.data()[i] = u(rng);
    c2.data()[i] = u(rng);
  }
  const std::vector<double> zero(20, 0.0), one(20, 1.0);
  EXPECT_EQ(model.forward(r, v, c1, zero), model.forward(r, v, c2, zero));
  EXPECT_NE(model.forward(r, v, c1, one), model.forward(r, v, c2, one));
  // Rows are scored independently of their batch neighbours' alpha.
  std::vector<double> mixed(20, 1.0);
  mixed[3] = 0.0;
  const auto a = model.forward(r, v, c1, mixed), b = model.forward(r, v, c2, mixed);
  EXPECT_EQ(a(3, 0), b(3, 0));
  EXPECT_EQ(a(3, 0), model.forward(r, v, c1, zero)(3, 0));
}

TEST(Model, RejectsBadShapes) {
  scorer::LocSensModel<float> model(tiny_arch());
  Tensor<float> r = Tensor<float>::Zero(2, 8), g = Tensor<float>::Zero(2, 3);
  EXPECT_THROW(model.forward(r, r, g, {1.0f, 1.0f}), ValidationError);
  EXPECT_THROW(model.forward(r, r, Tensor<float>::Zero(2, 2), {1.0f}), ValidationError);
  Architecture bad = tiny_arch();
  bad.gn_groups = 5;
  EXPECT_THROW(scorer::LocSensModel<float>{bad}, ValidationError);
  EXPECT_THROW(model.set_inference_alpha(1.5), ValidationError);
}

TEST(Negatives, ReplaceImageProperties) {
  const auto p = make_planted(10, 1);
  const scorer::TripletIndex index(p.ptrs, p.num_tags);
  std::mt19937_64 rng(7);
  std::map<data::TagId, int> pos_tags, neg_tags;
  std::map<data::ImageId, int> picked;
  for (const auto& pos : index.positives()) {
    const auto negs = scorer::make_negatives(pos, NegativeMode::ReplaceImage, 50, index, rng);
    ASSERT_EQ(negs.size(), 50u);
    for (const auto& n : negs) {
      EXPECT_EQ(n.tag_id, pos.tag_id);
      EXPECT_EQ(n.coord, pos.coord);
      EXPECT_FALSE(index.record(n.image_id).has_tag(pos.tag_id));
      ++neg_tags[n.tag_id];
      if (pos.tag_id == 0) ++picked[n.image_id];
    }
    pos_tags[pos.tag_id] += 50;
  }
  EXPECT_EQ(pos_tags, neg_tags);
  // Replacement images for tag 0 are uniform over the 30 eligible images.
  ASSERT_EQ(picked.size(), 30u);
  double chi2 = 0.0;
  const double expected = 10.0 * 50.0 / 30.0;
  for (const auto& [id, c] : picked) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 58.3);  // 29 dof, upper 0.1% point
}

TEST(Negatives, ReplaceTagAndMixed) {
  const auto p = make_planted(10, 2);
  const scorer::TripletIndex index(p.ptrs, p.num_tags);
  std::mt19937_64 rng(8);
  std::size_t image_swaps = 0, total = 0;
  for (const auto& pos : index.positives()) {
    for (const auto& n : scorer::make_negatives(pos, NegativeMode::ReplaceTag, 10, index, rng)) {
      EXPECT_EQ(n.image_id, pos.image_id);
      EXPECT_EQ(n.coord, pos.coord);
      EXPECT_FALSE(index.record(n.image_id).has_tag(n.tag_id));
    }
    for (const auto& n : scorer::make_negatives(pos, NegativeMode::Mixed, 200, index, rng)) {
      image_swaps += n.image_id != pos.image_id;
      ++total;
    }
  }
  EXPECT_NEAR(static_cast<double>(image_swaps) / static_cast<double>(total), 0.5, 0.03);
  EXPECT_THROW(scorer::make_negatives(index.positives()[0], NegativeMode::ReplaceTag, 0, index, rng),
               ValidationError);
}

TEST(Negatives, ExhaustedPoolReportsError) {
  data::PhotoRecord r;
  r.id = 1;
  r.tags = {0, 1};
  std::vector<const data::PhotoRecord*> one = {&r};
  const scorer::TripletIndex index(one, 2);
  std::mt19937_64 rng(1);
  EXPECT_THROW(scorer::make_negatives(index.positives()[0], NegativeMode::ReplaceImage, 1, index, rng), Error);
  EXPECT_THROW(scorer::make_negatives(index.positives()[0], NegativeMode::ReplaceTag, 1, index, rng), Error);
}

TEST(Schedule, SigmaLadder) {
  EXPECT_EQ(scorer::sigma_ladder(0.05), (std::vector<double>{1.0, 0.5, 0.2, 0.1, 0.05}));
  EXPECT_EQ(scorer::sigma_ladder(0.0), (std::vector<double>{1.0, 0.5, 0.2, 0.1, 0.05, 0.01, 0.0}));
  EXPECT_EQ(scorer::sigma_ladder(0.3), (std::vector<double>{1.0, 0.5, 0.3}));
  EXPECT_EQ(scorer::sigma_ladder(1.0), (std::vector<double>{1.0}));
  EXPECT_THROW(scorer::sigma_ladder(-0.1), ValidationError);
  for (double t : {0.0, 0.007, 0.05, 0.2, 0.9}) {
    const auto l = scorer::sigma_ladder(t);
    EXPECT_EQ(l.back(), t);
    for (std::size_t i = 1; i < l.size(); ++i) EXPECT_LT(l[i], l[i - 1]);
  }
}

TEST(Schedule, Plateau) {
  EXPECT_FALSE(scorer::has_plateaued({1.0, 0.9}, 3, 0.01));
  EXPECT_FALSE(scorer::has_plateaued({1.0, 0.9, 0.8, 0.7}, 3, 0.01));
  EXPECT_TRUE(scorer::has_plateaued({1.0, 0.999, 0.998, 0.997}, 3, 0.01));
}

TEST(Training, RawLossFallsOnPlantedData) {
  const auto p = make_planted(25, 3);
  const scorer::TripletIndex index(p.ptrs, p.num_tags);
  const auto trained = scorer::train_locsens(index, p.emb, Strategy::Raw, tiny_config(30));
  ASSERT_EQ(trained.log.size(), 30u);
  EXPECT_LT(trained.log.back().mean_loss, 0.1 * trained.log.front().mean_loss);
  for (const auto& e : trained.log) EXPECT_EQ(e.alpha, 1.0);
  EXPECT_EQ(trained.model.inference_alpha(), 1.0);
}

TEST(Training, Deterministic) {
  const auto p = make_planted(8, 4);
  const scorer::TripletIndex index(p.ptrs, p.num_tags);
  for (auto s : {Strategy::Zeroed, Strategy::Raw, Strategy::Dropout, Strategy::Sampling}) {
    auto a = scorer::train_locsens(index, p.emb, s, tiny_config(2));
    auto b = scorer::train_locsens(index, p.emb, s, tiny_config(2));
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].mean_loss, b.log[i].mean_loss);
    const auto pa = a.model.parameters(), pb = b.model.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
  }
}

TEST(Training, StrategySchedules) {
  const auto p = make_planted(8, 5);
  const scorer::TripletIndex index(p.ptrs, p.num_tags);
  auto cfg = tiny_config(3);
  cfg.epochs_per_rung = 2;
  cfg.sigma_final = 0.1;
  const auto sampling = scorer::train_locsens(index, p.emb, Strategy::Sampling, cfg);
  std::vector<double> sigmas;
  for (const auto& e : sampling.log) sigmas.push_back(e.sigma);
  EXPECT_EQ(sigmas, (std::vector<double>{1.0, 1.0, 0.5, 0.5, 0.2, 0.2, 0.1, 0.1}));

  cfg.epochs = 2;
  cfg.ramp_epochs = 4;
  const auto dropout = scorer::train_locsens(index, p.emb, Strategy::Dropout, cfg);
  std::vector<double> alphas;
  for (const auto& e : dropout.log) alphas.push_back(e.alpha);
  EXPECT_EQ(alphas, (std::vector<double>{0.0, 0.0, 0.25, 0.5, 0.75, 1.0}));
  EXPECT_EQ(dropout.model.inference_alpha(), 1.0);

  const auto zeroed = scorer::train_locsens(index, p.emb, Strategy::Zeroed, cfg);
  for (const auto& e : zeroed.log) EXPECT_EQ(e.alpha, 0.0);
  EXPECT_EQ(zeroed.model.inference_alpha(), 0.0);

  cfg.margin = 0.0;
  EXPECT_THROW(scorer::train_locsens(index, p.emb, Strategy::Raw, cfg), ValidationError);
  EXPECT_EQ(scorer::parse_strategy(scorer::strategy_name(Strategy::Dropout)), Strategy::Dropout);
  EXPECT_THROW(scorer::parse_strategy("nope"), ValidationError);
}

TEST(Training, EpochLogJson) {
  const std::string line = scorer::to_json_line({3, 0.25, 1.0, 0.5, 1.5});
  EXPECT_EQ(line, R"({"epoch":3,"mean_loss":0.25,"alpha":1.0,"sigma":0.5,"wallclock_s":1.5})");
}

TEST(Ranking, ZeroedRetrievalIgnoresQueryLocation) {
  const auto p = make_planted(10, 6);
  const scorer::TripletIndex index(p.ptrs, p.num_tags);
  const auto trained = scorer::train_locsens(index, p.emb, Strategy::Zeroed, tiny_config(2));
  const auto a = scorer::retrieve(trained.model, p.emb.tags, 1, {48.85, 2.35}, p.emb.ids, p.emb.images, 40);
  const auto b = scorer::retrieve(trained.model, p.emb.tags, 1, {-60.0, -120.0}, p.emb.ids, p.emb.images, 40);
  EXPECT_EQ(a, b);
  const Tensor<float> one = p.emb.images.row(0);
  EXPECT_EQ(scorer::tag_image(trained.model, p.emb.tags, one, {10.0, 10.0}, 4),
            scorer::tag_image(trained.model, p.emb.tags, one, {-10.0, 100.0}, 4));
}

TEST(Ranking, TagImageReturnsPermutation) {
  const auto p = make_planted(5, 7);
  scorer::LocSensModel<float> model(tiny_arch());
  nn::Rng rng(1);
  model.init(rng);
  const Tensor<float> one = p.emb.images.row(3);
  const auto tags = scorer::tag_image(model, p.emb.tags, one, {0.0, 0.0}, p.num_tags);
  std::vector<std::int64_t> ids = ids_of(tags);
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(ids, (std::vector<std::int64_t>{0, 1, 2, 3}));
  for (std::size_t i = 1; i < tags.size(); ++i) EXPECT_GE(tags[i - 1].score, tags[i].score);
  for (const auto& t : tags) {
    EXPECT_NEAR(t.score, scorer::score_triplet(model, one, Tensor<float>(p.emb.tags.row(t.id)),
                                               geo::normalize_coord({0.0, 0.0}), 1.0),
                1e-5);
  }
  EXPECT_THROW(scorer::retrieve(model, p.emb.tags, 9, {0.0, 0.0}, p.emb.ids, p.emb.images, 1), ValidationError);
}

TEST(Checkpoint, MetaRoundTrip) {
  auto arch = tiny_arch();
  arch.trunk = {24, 12, 8};
  scorer::LocSensModel<float> model(arch);
  nn::Rng rng(9);
  model.init(rng);
  model.set_inference_alpha(0.0);
  const auto path = (std::filesystem::temp_directory_path() / "locsens_scorer.ckpt").string();
  model.save(path);
  const auto loaded = scorer::LocSensModel<float>::load(path);
  EXPECT_EQ(loaded.architecture(), arch);
  EXPECT_EQ(loaded.inference_alpha(), 0.0);
  const auto p = make_planted(3, 1);
  Tensor<float> g = Tensor<float>::Constant(p.emb.images.rows(), 2, 0.3f);
  const std::vector<float> a(static_cast<std::size_t>(p.emb.images.rows()), 1.0f);
  Tensor<float> v(p.emb.images.rows(), 8);
  for (nn::Index i = 0; i < v.rows(); ++i) v.row(i) = p.emb.tags.row(i % 4);
  EXPECT_EQ(loaded.forward(p.emb.images, v, g, a), model.forward(p.emb.images, v, g, a));

  baselines::BaselineModel<float> other(baselines::BaselineKind::MLC, 4, 3, 3);
  other.save(path);
  EXPECT_THROW(scorer::LocSensModel<float>::load(path), FormatError);
}

}  // namespace
