#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "locsens/data/io.hpp"
#include "locsens/data/pipeline.hpp"
#include "locsens/data/synthetic.hpp"

namespace {

using namespace locsens;
using data::RawRecord;
namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("locsens_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

RawRecord raw(data::ImageId id, std::vector<std::string> tags, bool located = true) {
  RawRecord r;
  r.id = id;
  r.feature = {static_cast<float>(id), 1.0f};
  r.tags = std::move(tags);
  if (located) r.location = geo::GeoCoord{10.0, 20.0};
  return r;
}

// Random corpus with digit-only labels, missing locations, oversized tag
// lists and heavy-tailed tag frequencies.
std::vector<RawRecord> fuzz_corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> labels;
  for (int i = 0; i < 300; ++i) labels.push_back("t" + std::to_string(i));
  for (int i = 0; i < 20; ++i) labels.push_back(std::to_string(1990 + i));
  labels.push_back("a1");
  labels.push_back("007x");
  std::geometric_distribution<int> len(0.2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RawRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    RawRecord r;
    r.id = static_cast<data::ImageId>(i * 3 + 5);
    r.feature = {static_cast<float>(u(rng)), static_cast<float>(u(rng)), static_cast<float>(u(rng))};
    const int k = std::min(25, len(rng));
    for (int j = 0; j < k; ++j) {
      // Zipf-like label choice.
      const auto idx = static_cast<std::size_t>(std::pow(u(rng), 3.0) * static_cast<double>(labels.size()));
      r.tags.push_back(labels[std::min(idx, labels.size() - 1)]);
    }
    if (u(rng) > 0.05) r.location = geo::GeoCoord{u(rng) * 180.0 - 90.0, u(rng) * 360.0 - 180.0};
    if (u(rng) > 0.5) r.country = "c" + std::to_string(i % 7);
    if (u(rng) > 0.5) r.town = "town " + std::to_string(i % 13);
    out.push_back(std::move(r));
  }
  return out;
}

TEST(Vocabulary, ExcludesDigitOnlyLabels) {
  const std::vector<RawRecord> corpus = {raw(1, {"2007", "beach"}), raw(2, {"2007", "sea"}), raw(3, {"2007"})};
  const auto vocab = data::build_vocabulary(corpus, {0, 100, true});
  EXPECT_FALSE(vocab.find("2007").has_value());
  EXPECT_TRUE(vocab.find("beach").has_value());
  EXPECT_TRUE(data::is_numeric_label("2007"));
  EXPECT_FALSE(data::is_numeric_label("a1"));
  EXPECT_FALSE(data::is_numeric_label(""));
}

TEST(Vocabulary, DropTopN) {
  std::vector<RawRecord> corpus;
  // Tag i appears on 12 - i photos, so frequency ranks are unambiguous.
  data::ImageId id = 1;
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 12 - i; ++j) corpus.push_back(raw(id++, {"tag" + std::string(1, static_cast<char>('a' + i))}));
  }
  const auto vocab = data::build_vocabulary(corpus, {10, 100, true});
  ASSERT_EQ(vocab.size(), 2u);
  EXPECT_EQ(vocab.labels()[0], "tagk");
  EXPECT_EQ(vocab.labels()[1], "tagl");
}

TEST(Vocabulary, TiesInAscendingLabelOrder) {
  const std::vector<RawRecord> corpus = {raw(1, {"zeta", "alpha", "mid"}), raw(2, {"mid"})};
  const auto vocab = data::build_vocabulary(corpus, {0, 100, true});
  EXPECT_EQ(vocab.labels(), (std::vector<std::string>{"mid", "alpha", "zeta"}));
}

TEST(Vocabulary, EmptyResultThrows) {
  const std::vector<RawRecord> corpus = {raw(1, {"a", "b"})};
  EXPECT_THROW(data::build_vocabulary(corpus, {5, 100, true}), ValidationError);
}

TEST(Filter, Examples) {
  std::vector<std::string> sixteen;
  for (int i = 0; i < 15; ++i) sixteen.push_back("x" + std::to_string(i));
  sixteen.push_back("keep");
  auto fifteen = sixteen;
  fifteen.erase(fifteen.begin());
  const std::vector<RawRecord> corpus = {raw(1, sixteen), raw(2, {"keep"}, false), raw(3, {"other"}),
                                         raw(4, fifteen)};
  const data::TagVocabulary vocab({"keep", "spare"});
  const auto kept = data::filter_records(corpus, vocab);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].id, 4);
  EXPECT_EQ(kept[0].tags, (std::vector<data::TagId>{0}));
}

// Invariants on a 10k-record fuzz corpus, each checked against a direct
// recomputation from the raw records.
TEST(Pipeline, FuzzCorpusInvariants) {
  const auto corpus = fuzz_corpus(10000, 3);
  const data::VocabSpec spec{10, 150, true};
  const auto ds = data::prepare_dataset(corpus, spec, {500, 1000}, 21);

  std::map<std::string, std::size_t> counts;
  for (const auto& r : corpus) {
    for (const auto& t : std::set<std::string>(r.tags.begin(), r.tags.end())) {
      if (!std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; })) ++counts[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.second > b.second; });
  std::vector<std::string> expected;
  for (std::size_t i = 10; i < ranked.size() && expected.size() < 150; ++i) expected.push_back(ranked[i].first);
  EXPECT_EQ(ds.vocab().labels(), expected);
  for (const auto& l : ds.vocab().labels()) EXPECT_FALSE(data::is_numeric_label(l));

  std::set<data::ImageId> expected_ids;
  const std::set<std::string> vocab_set(expected.begin(), expected.end());
  for (const auto& r : corpus) {
    const std::set<std::string> distinct(r.tags.begin(), r.tags.end());
    if (!r.location || distinct.size() > 15) continue;
    if (std::any_of(distinct.begin(), distinct.end(), [&](auto& t) { return vocab_set.count(t) != 0; })) {
      expected_ids.insert(r.id);
    }
  }
  std::set<data::ImageId> got;
  for (const auto& r : ds.records()) {
    got.insert(r.id);
    EXPECT_LE(r.tags.size(), 15u);
    EXPECT_FALSE(r.tags.empty());
    EXPECT_TRUE(std::is_sorted(r.tags.begin(), r.tags.end()));
  }
  EXPECT_EQ(got, expected_ids);

  const auto& s = ds.split();
  EXPECT_EQ(s.val.size(), 500u);
  EXPECT_EQ(s.test.size(), 1000u);
  std::set<data::ImageId> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), s.train.size() + s.val.size() + s.test.size());
  EXPECT_EQ(all, expected_ids);

  const auto again = data::prepare_dataset(corpus, spec, {500, 1000}, 21);
  EXPECT_TRUE(again == ds);
}

TEST(Pipeline, OrderInsensitive) {
  auto corpus = fuzz_corpus(3000, 4);
  const auto a = data::prepare_dataset(corpus, {5, 80, true}, {100, 200}, 3);
  std::mt19937_64 rng(1);
  std::shuffle(corpus.begin(), corpus.end(), rng);
  const auto b = data::prepare_dataset(corpus, {5, 80, true}, {100, 200}, 3);
  EXPECT_TRUE(a == b);
}

TEST(Split, Examples) {
  std::vector<data::ImageId> ids(50);
  std::iota(ids.begin(), ids.end(), 1);
  const auto all_train = data::split(ids, {0, 0}, 1);
  EXPECT_EQ(all_train.train, ids);
  EXPECT_TRUE(all_train.val.empty());
  EXPECT_TRUE(all_train.test.empty());
  EXPECT_EQ(data::split(ids, {10, 5}, 9), data::split(ids, {10, 5}, 9));
  EXPECT_NE(data::split(ids, {10, 5}, 9), data::split(ids, {10, 5}, 10));
  EXPECT_THROW(data::split(ids, {30, 21}, 1), ValidationError);
  for (std::size_t v = 0; v <= 20; v += 5) {
    const auto s = data::split(ids, {v, 50 - 20 - v}, v);
    std::vector<data::ImageId> joined = s.train;
    joined.insert(joined.end(), s.val.begin(), s.val.end());
    joined.insert(joined.end(), s.test.begin(), s.test.end());
    std::sort(joined.begin(), joined.end());
    EXPECT_EQ(joined, ids);
  }
}

TEST(Io, RoundTripIsExact) {
  const auto ds = data::prepare_dataset(fuzz_corpus(1000, 8), {5, 100, true}, {50, 100}, 2);
  const auto dir = fresh_dir("roundtrip");
  data::save_dataset(dir, ds);
  const auto loaded = data::load_dataset(dir);
  EXPECT_TRUE(loaded == ds);
  for (const auto& r : ds.records()) {
    const auto& l = loaded.record(r.id);
    EXPECT_EQ(l.feature, r.feature);
    EXPECT_EQ(l.location.lat_deg, r.location.lat_deg);
    EXPECT_EQ(l.location.lon_deg, r.location.lon_deg);
    EXPECT_EQ(l.country, r.country);
    EXPECT_EQ(l.town, r.town);
  }
  const auto dir2 = fresh_dir("roundtrip2");
  data::save_dataset(dir2, loaded);
  for (const auto& entry : fs::directory_iterator(dir)) {
    EXPECT_EQ(slurp(entry.path()), slurp(dir2 / entry.path().filename())) << entry.path();
  }
}

TEST(Io, TruncatedFeaturesNamesByteCounts) {
  const auto ds = data::prepare_dataset(fuzz_corpus(200, 1), {2, 50, true}, {10, 10}, 2);
  const auto dir = fresh_dir("truncated");
  data::save_dataset(dir, ds);
  const auto path = dir / "features.bin";
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 6);
  const auto expected = ds.records().size() * ds.feature_dim() * sizeof(float);
  try {
    data::load_dataset(dir);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected " + std::to_string(expected) + " bytes"), std::string::npos) << msg;
    EXPECT_NE(msg.find("found " + std::to_string(expected - 6)), std::string::npos) << msg;
  }
}

TEST(Io, VersionMismatchRejected) {
  const auto ds = data::prepare_dataset(fuzz_corpus(200, 1), {2, 50, true}, {10, 10}, 2);
  const auto dir = fresh_dir("version");
  data::save_dataset(dir, ds);
  auto text = slurp(dir / "metadata.tsv");
  const auto tab = text.find('\t');
  text.replace(tab + 1, 1, "7");
  std::ofstream(dir / "metadata.tsv", std::ios::binary | std::ios::trunc) << text;
  try {
    data::load_dataset(dir);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported version 7"), std::string::npos) << e.what();
  }

  data::save_dataset(dir, ds);
  auto bin = slurp(dir / "features.bin");
  bin[0] = 'X';
  std::ofstream(dir / "features.bin", std::ios::binary | std::ios::trunc) << bin;
  try {
    data::load_dataset(dir);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos) << e.what();
  }
}

TEST(Io, WordVectorsRoundTrip) {
  data::WordVectorTable t{{"a", "b", "c"}, nn::Tensor<double>(3, 2)};
  t.vectors << 0.1, -2.5, 1e-300, 3.0, 7.0, 0.30000000000000004;
  const auto dir = fresh_dir("words");
  data::save_word_vectors(dir / "w.txt", t);
  const auto back = data::load_word_vectors(dir / "w.txt");
  EXPECT_EQ(back.labels, t.labels);
  EXPECT_EQ(back.vectors, t.vectors);
  EXPECT_EQ(slurp(dir / "w.txt").substr(0, 4), "3 2\n");
  const auto aligned = back.aligned_to(data::TagVocabulary({"c", "a"}));
  EXPECT_EQ(aligned.labels, (std::vector<std::string>{"c", "a"}));
  EXPECT_EQ(aligned.vectors.row(0), t.vectors.row(2));
  EXPECT_THROW(back.aligned_to(data::TagVocabulary({"zz", "a"})), ValidationError);
}

class Synthetic : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    config_ = new data::SyntheticConfig();
    config_->seed = 5;
    config_->num_images = 10000;
    corpus_ = new data::SyntheticCorpus(data::generate_synthetic(*config_));
  }
  static void TearDownTestSuite() {
    delete corpus_;
    delete config_;
  }
  static data::SyntheticConfig* config_;
  static data::SyntheticCorpus* corpus_;
};

data::SyntheticConfig* Synthetic::config_ = nullptr;
data::SyntheticCorpus* Synthetic::corpus_ = nullptr;

TEST_F(Synthetic, Deterministic) {
  data::SyntheticConfig c = *config_;
  c.num_images = 500;
  const auto a = data::generate_synthetic(c), b = data::generate_synthetic(c);
  const auto da = fresh_dir("synth_a"), db = fresh_dir("synth_b");
  data::save_dataset(da, data::prepare_dataset(a.records, {c.filler_tags, 100000, true}, {50, 50}, 1));
  data::save_dataset(db, data::prepare_dataset(b.records, {c.filler_tags, 100000, true}, {50, 50}, 1));
  for (const auto& entry : fs::directory_iterator(da)) {
    EXPECT_EQ(slurp(entry.path()), slurp(db / entry.path().filename()));
  }
  EXPECT_EQ(a.word_vectors.vectors, b.word_vectors.vectors);
}

TEST_F(Synthetic, TagCountsMatchTarget) {
  std::set<std::string> planted;
  for (const auto& t : corpus_->manifest.tags) planted.insert(t.label);
  double total = 0.0;
  for (const auto& r : corpus_->records) {
    std::size_t n = 0;
    for (const auto& t : r.tags) n += planted.count(t);
    EXPECT_GE(n, 1u);
    EXPECT_LE(n, 15u);
    total += static_cast<double>(n);
  }
  const double mean = total / static_cast<double>(corpus_->records.size());
  EXPECT_NEAR(mean, config_->mean_tags, 0.05 * config_->mean_tags);
}

TEST_F(Synthetic, VocabularyIsThePlantedSet) {
  const auto ds = data::prepare_dataset(corpus_->records, {config_->filler_tags, 100000, true}, {0, 0}, 1);
  std::set<std::string> planted;
  for (const auto& t : corpus_->manifest.tags) planted.insert(t.label);
  const std::set<std::string> got(ds.vocab().labels().begin(), ds.vocab().labels().end());
  EXPECT_EQ(got, planted);
  EXPECT_EQ(ds.vocab().size(), config_->num_tags);
}

TEST_F(Synthetic, LocationInformativeShareMatchesMix) {
  std::map<std::string, data::TagType> type;
  for (const auto& t : corpus_->manifest.tags) type[t.label] = t.type;
  std::size_t informative = 0, total = 0;
  for (const auto& r : corpus_->records) {
    for (const auto& t : r.tags) {
      auto it = type.find(t);
      if (it == type.end()) continue;
      ++total;
      informative += it->second != data::TagType::LocationInvariant;
    }
  }
  const double share = static_cast<double>(informative) / static_cast<double>(total);
  EXPECT_NEAR(share, config_->mix.place_name + config_->mix.location_conditioned, 0.02);
}

TEST_F(Synthetic, PlaceNameImagesLieInTheirCity) {
  std::map<std::string, const data::PlantedTag*> tags;
  for (const auto& t : corpus_->manifest.tags) tags[t.label] = &t;
  std::size_t checked = 0;
  for (const auto& r : corpus_->records) {
    if (!r.location) continue;
    for (const auto& label : r.tags) {
      auto it = tags.find(label);
      if (it == tags.end() || it->second->type != data::TagType::PlaceName) continue;
      const auto& city = corpus_->manifest.cities[static_cast<std::size_t>(it->second->cities.at(0))];
      EXPECT_LT(geo::haversine_km(*r.location, city.center), 10.0 * config_->city_spread_km);
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000u);
}

TEST_F(Synthetic, RejectsInfeasibleMix) {
  data::SyntheticConfig c;
  c.mix = {0.5, 0.5, 0.5};
  EXPECT_THROW(data::generate_synthetic(c), ValidationError);
  c = {};
  c.noise = -1.0;
  EXPECT_THROW(data::generate_synthetic(c), ValidationError);
}

}  // namespace
