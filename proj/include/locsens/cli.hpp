#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "locsens/baselines.hpp"
#include "locsens/data/io.hpp"
#include "locsens/data/pipeline.hpp"
#include "locsens/data/synthetic.hpp"
#include "locsens/diagnostics.hpp"
#include "locsens/error.hpp"
#include "locsens/eval.hpp"
#include "locsens/experiment.hpp"
#include "locsens/scorer/train.hpp"

namespace locsens::cli {

namespace fs = std::filesystem;

/// Every key accepted in a configuration file, with the subcommands that
/// also expose it as a --flag (underscores become dashes).
struct KeySpec {
  const char* name;
  const char* help;
  std::vector<std::string> commands;
};

inline const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> keys = {
      {"seed", "random seed", {"*"}},
      {"out", "output directory", {"*"}},
      {"dataset", "dataset directory", {"train-baseline", "train-locsens", "evaluate", "retrieve", "tag"}},
      // gen-synthetic
      {"num_images", "synthetic images", {"gen-synthetic"}},
      {"num_tags", "planted vocabulary tags", {"gen-synthetic"}},
      {"feature_dim", "backbone feature width", {"gen-synthetic"}},
      {"word_dim", "word vector width", {"gen-synthetic"}},
      {"noise", "median feature noise scale", {"gen-synthetic"}},
      {"noise_spread", "log-normal spread of per-image noise", {"gen-synthetic"}},
      {"mix_place", "fraction of place-name tags", {"gen-synthetic"}},
      {"mix_conditioned", "fraction of location-conditioned tags", {"gen-synthetic"}},
      {"mix_invariant", "fraction of location-invariant tags", {"gen-synthetic"}},
      {"num_cities", "planted cities", {"gen-synthetic"}},
      {"regions_per_tag", "cities per location-conditioned tag", {"gen-synthetic"}},
      {"city_spread_km", "spatial spread around a city center", {"gen-synthetic"}},
      {"region_specificity", "region-specific share of conditioned prototypes", {"gen-synthetic"}},
      {"mean_tags", "mean tags per image", {"gen-synthetic"}},
      {"val_size", "validation images", {"gen-synthetic"}},
      {"test_size", "test images", {"gen-synthetic"}},
      {"drop_top_n", "most frequent tags removed from the vocabulary", {"gen-synthetic"}},
      // training
      {"kind", "baseline kind: mlc, mcc or her", {"train-baseline"}},
      {"epochs", "training epochs", {"train-baseline", "train-locsens"}},
      {"batch_size", "minibatch size", {"train-baseline", "train-locsens"}},
      {"lr", "Adam learning rate", {"train-baseline", "train-locsens"}},
      {"embed_dim", "MCC bottleneck / HER output width", {"train-baseline"}},
      {"clip_norm", "gradient clipping norm (negative: per-kind default)", {"train-baseline"}},
      {"precision", "float or double", {"train-baseline", "train-locsens", "evaluate", "retrieve", "tag"}},
      {"baseline", "MCC checkpoint providing embeddings", {"train-locsens", "evaluate", "retrieve", "tag"}},
      {"strategy", "zeroed, raw, dropout or sampling", {"train-locsens"}},
      {"negative_mode", "replace_image, replace_tag or mixed", {"train-locsens"}},
      {"sigma_final", "final sampling sigma", {"train-locsens"}},
      {"margin", "ranking margin", {"train-locsens"}},
      {"negatives", "negatives per positive", {"train-locsens"}},
      {"proj_dim", "modality projection width", {"train-locsens"}},
      {"trunk", "comma-separated trunk widths", {"train-locsens"}},
      {"gn_groups", "group norm groups (0: automatic)", {"train-locsens"}},
      {"epochs_per_rung", "sampling epochs per sigma rung", {"train-locsens"}},
      {"ramp_epochs", "dropout alpha ramp epochs", {"train-locsens"}},
      {"dropout_p", "location dropout probability", {"train-locsens"}},
      {"positives_per_epoch", "positives visited per epoch (0: all)", {"train-locsens"}},
      // evaluation and queries
      {"model", "model checkpoint", {"evaluate", "retrieve", "tag"}},
      {"model_id", "model identifier written to reports", {"evaluate"}},
      {"frequency", "frequency baseline scope: global, country or town", {"evaluate"}},
      {"queries", "location-sensitive retrieval queries", {"evaluate"}},
      {"stop_tags", "file listing tags to ignore when tagging", {"evaluate"}},
      {"candidates", "split searched by retrieve: train, val, test or all", {"retrieve"}},
      {"tag", "query hashtag", {"retrieve"}},
      {"image", "image id to tag", {"tag"}},
      {"lat", "query latitude in degrees", {"retrieve", "tag"}},
      {"lon", "query longitude in degrees", {"retrieve", "tag"}},
      {"k", "results to return", {"retrieve", "tag"}},
  };
  return keys;
}

inline bool is_path_key(const std::string& key) {
  return key == "out" || key == "dataset" || key == "baseline" || key == "model" || key == "stop_tags";
}

/// Key-value settings merged from a config file and flags.
class RunConfig {
 public:
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("missing required setting '" + key + "'");
    return it->second;
  }
  std::string str(const std::string& key, const std::string& fallback) const {
    return has(key) ? str(key) : fallback;
  }

  template <typename T>
  T num(const std::string& key) const {
    const std::string s = str(key);
    T value{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), value);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ValidationError("setting '" + key + "': cannot parse '" + s + "'");
    }
    return value;
  }
  template <typename T>
  T num(const std::string& key, T fallback) const {
    return has(key) ? num<T>(key) : fallback;
  }

 private:
  std::map<std::string, std::string> values_;
};

/// Reads "key = value" lines; '#' starts a comment. Relative paths are
/// resolved against the file's directory.
inline void read_config_file(const fs::path& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::set<std::string> known;
  for (const auto& k : key_table()) known.insert(k.name);
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!known.count(key)) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (is_path_key(key) && !value.empty()) value = fs::absolute(path.parent_path() / value).lexically_normal().string();
    cfg.set(key, value);
  }
}

namespace detail {

inline std::string format_score(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline void write_ranking(std::ostream& out, const std::vector<Scored>& ranked,
                          const std::vector<std::string>* labels = nullptr) {
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    out << (i + 1) << '\t';
    if (labels) {
      out << (*labels)[static_cast<std::size_t>(ranked[i].id)];
    } else {
      out << ranked[i].id;
    }
    out << '\t' << format_score(ranked[i].score) << '\n';
  }
}

inline fs::path out_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.str("out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
  return dir;
}

inline std::ofstream open_text(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

inline std::vector<nn::Index> parse_widths(const std::string& s) {
  std::vector<nn::Index> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    nn::Index v = 0;
    auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size() || v <= 0) {
      throw ValidationError("trunk: invalid width '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("trunk: no widths given");
  return out;
}

inline bool use_float(const RunConfig& cfg) {
  const auto p = cfg.str("precision", "double");
  if (p != "float" && p != "double") throw ValidationError("precision must be float or double");
  return p == "float";
}

inline const std::vector<data::ImageId>& split_ids(const data::Dataset& ds, const std::string& which,
                                                   std::vector<data::ImageId>& all) {
  if (which == "train") return ds.split().train;
  if (which == "val") return ds.split().val;
  if (which == "test") return ds.split().test;
  if (which == "all") {
    all = data::record_ids(ds.records());
    return all;
  }
  throw ValidationError("candidates must be train, val, test or all");
}

inline data::WordVectorTable load_aligned_words(const fs::path& dataset, const data::TagVocabulary& vocab) {
  const auto path = dataset / "word_vectors.txt";
  if (!fs::exists(path)) throw ValidationError("HER needs word vectors at " + path.string());
  return data::load_word_vectors(path).aligned_to(vocab);
}

/// Checkpoint families recognized by the query and evaluation commands.
inline bool is_locsens_checkpoint(const fs::path& p) {
  return nn::load_checkpoint(p.string()).count("meta.config") != 0;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands.

inline int cmd_gen_synthetic(const RunConfig& cfg, std::ostream& out) {
  data::SyntheticConfig sc;
  sc.seed = cfg.num<std::uint64_t>("seed", sc.seed);
  sc.num_images = cfg.num<std::size_t>("num_images", sc.num_images);
  sc.num_tags = cfg.num<std::size_t>("num_tags", sc.num_tags);
  sc.feature_dim = cfg.num<std::size_t>("feature_dim", sc.feature_dim);
  sc.word_dim = cfg.num<std::size_t>("word_dim", sc.word_dim);
  sc.noise = cfg.num<double>("noise", sc.noise);
  sc.noise_spread = cfg.num<double>("noise_spread", sc.noise_spread);
  sc.mix.place_name = cfg.num<double>("mix_place", sc.mix.place_name);
  sc.mix.location_conditioned = cfg.num<double>("mix_conditioned", sc.mix.location_conditioned);
  sc.mix.location_invariant = cfg.num<double>("mix_invariant", sc.mix.location_invariant);
  sc.num_cities = cfg.num<std::size_t>("num_cities", sc.num_cities);
  sc.regions_per_tag = cfg.num<std::size_t>("regions_per_tag", sc.regions_per_tag);
  sc.city_spread_km = cfg.num<double>("city_spread_km", sc.city_spread_km);
  sc.region_specificity = cfg.num<double>("region_specificity", sc.region_specificity);
  sc.mean_tags = cfg.num<double>("mean_tags", sc.mean_tags);
  data::VocabSpec vs;
  vs.drop_top_n = cfg.num<std::size_t>("drop_top_n", sc.filler_tags);
  const data::SplitSizes sizes{cfg.num<std::size_t>("val_size", 500), cfg.num<std::size_t>("test_size", 1000)};

  const auto dir = detail::out_dir(cfg);
  const auto corpus = data::generate_synthetic(sc);
  const auto ds = data::prepare_dataset(corpus.records, vs, sizes, sc.seed);
  data::save_dataset(dir, ds);
  data::save_word_vectors(dir / "word_vectors.txt", corpus.word_vectors.aligned_to(ds.vocab()));
  data::save_manifest(dir / "manifest.json", corpus.manifest);
  out << "wrote " << ds.records().size() << " records, " << ds.vocab().size() << " tags to " << dir.string()
      << '\n';
  return 0;
}

template <typename Scalar>
int cmd_train_baseline(const RunConfig& cfg, std::ostream& out) {
  const fs::path dataset = cfg.str("dataset");
  const auto ds = data::load_dataset(dataset);
  const auto kind = baselines::parse_kind(cfg.str("kind", "mcc"));
  baselines::BaselineTrainConfig bc;
  bc.epochs = cfg.num<int>("epochs", bc.epochs);
  bc.batch_size = cfg.num<nn::Index>("batch_size", bc.batch_size);
  bc.adam.lr = cfg.num<double>("lr", bc.adam.lr);
  bc.embed_dim = cfg.num<nn::Index>("embed_dim", bc.embed_dim);
  bc.clip_norm = cfg.num<double>("clip_norm", bc.clip_norm);
  bc.seed = cfg.num<std::uint64_t>("seed", bc.seed);
  std::optional<data::WordVectorTable> words;
  if (kind == baselines::BaselineKind::HER) words = detail::load_aligned_words(dataset, ds.vocab());

  const auto dir = detail::out_dir(cfg);
  auto trained = baselines::train_baseline<Scalar>(kind, ds.subset(ds.split().train), ds.vocab().size(),
                                                   words ? &words->vectors : nullptr, bc);
  trained.model.save((dir / "baseline.ckpt").string());
  auto log = detail::open_text(dir / "baseline_log.jsonl");
  for (std::size_t e = 0; e < trained.epoch_loss.size(); ++e) {
    nlohmann::ordered_json j;
    j["epoch"] = e + 1;
    j["mean_loss"] = trained.epoch_loss[e];
    log << j.dump() << '\n';
  }
  out << baselines::kind_name(kind) << " trained for " << bc.epochs << " epochs, final loss "
      << detail::format_score(trained.epoch_loss.empty() ? 0.0 : trained.epoch_loss.back()) << '\n';
  return 0;
}

template <typename Scalar>
int cmd_train_locsens(const RunConfig& cfg, std::ostream& out) {
  const auto ds = data::load_dataset(cfg.str("dataset"));
  const auto mcc = baselines::BaselineModel<Scalar>::load(cfg.str("baseline"));
  if (mcc.kind() != baselines::BaselineKind::MCC) throw ValidationError("baseline must be an MCC checkpoint");
  const auto strategy = scorer::parse_strategy(cfg.str("strategy", "raw"));
  scorer::TrainConfig tc;
  tc.mode = scorer::parse_negative_mode(cfg.str("negative_mode", "replace_image"));
  tc.epochs = cfg.num<int>("epochs", tc.epochs);
  tc.batch_size = cfg.num<nn::Index>("batch_size", tc.batch_size);
  tc.adam.lr = cfg.num<double>("lr", tc.adam.lr);
  tc.margin = cfg.num<double>("margin", tc.margin);
  tc.negatives = cfg.num<int>("negatives", tc.negatives);
  tc.sigma_final = cfg.num<double>("sigma_final", tc.sigma_final);
  tc.epochs_per_rung = cfg.num<int>("epochs_per_rung", tc.epochs_per_rung);
  tc.ramp_epochs = cfg.num<int>("ramp_epochs", tc.ramp_epochs);
  tc.dropout_p = cfg.num<double>("dropout_p", tc.dropout_p);
  tc.positives_per_epoch = cfg.num<std::size_t>("positives_per_epoch", tc.positives_per_epoch);
  tc.seed = cfg.num<std::uint64_t>("seed", tc.seed);
  tc.arch.embed_dim = mcc.tag_embeddings().cols();
  tc.arch.proj_dim = cfg.num<nn::Index>("proj_dim", tc.arch.proj_dim);
  if (cfg.has("trunk")) tc.arch.trunk = detail::parse_widths(cfg.str("trunk"));
  tc.arch.gn_groups = cfg.num<nn::Index>("gn_groups", tc.arch.gn_groups);

  const auto dir = detail::out_dir(cfg);
  const auto train = ds.subset(ds.split().train);
  const auto emb = scorer::embed_records<Scalar>(mcc, train);
  const scorer::TripletIndex index(train, ds.vocab().size());
  auto trained = scorer::train_locsens<Scalar>(index, emb, strategy, tc);
  trained.model.save((dir / "locsens.ckpt").string());
  auto log = detail::open_text(dir / "locsens_log.jsonl");
  scorer::write_log(log, trained.log);
  out << scorer::strategy_name(strategy) << " model trained for " << trained.log.size() << " epochs, final loss "
      << detail::format_score(trained.log.empty() ? 0.0 : trained.log.back().mean_loss) << '\n';
  return 0;
}

/// Everything needed to answer queries against one dataset with one model.
template <typename Scalar>
struct LoadedModel {
  std::optional<baselines::BaselineModel<Scalar>> baseline;
  std::optional<baselines::BaselineModel<Scalar>> mcc;
  std::optional<scorer::LocSensModel<Scalar>> locsens;
  std::optional<data::WordVectorTable> words;
  std::unique_ptr<experiment::Ranker> ranker;
};

template <typename Scalar>
void load_model(const RunConfig& cfg, const data::Dataset& ds,
                const std::vector<const data::PhotoRecord*>& candidates, LoadedModel<Scalar>& m) {
  const fs::path model = cfg.str("model");
  if (detail::is_locsens_checkpoint(model)) {
    m.locsens = scorer::LocSensModel<Scalar>::load(model.string());
    m.mcc = baselines::BaselineModel<Scalar>::load(cfg.str("baseline"));
    if (m.mcc->kind() != baselines::BaselineKind::MCC) throw ValidationError("baseline must be an MCC checkpoint");
    m.ranker = std::make_unique<experiment::LocSensRanker<Scalar>>(*m.locsens, *m.mcc, candidates);
    return;
  }
  m.baseline = baselines::BaselineModel<Scalar>::load(model.string());
  if (m.baseline->kind() == baselines::BaselineKind::HER) {
    m.words = detail::load_aligned_words(cfg.str("dataset"), ds.vocab());
  }
  m.ranker = std::make_unique<experiment::BaselineRanker<Scalar>>(*m.baseline, candidates,
                                                                  m.words ? &m.words->vectors : nullptr);
}

template <typename Scalar>
int cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
  const fs::path dataset = cfg.str("dataset");
  const auto ds = data::load_dataset(dataset);
  const auto test = ds.subset(ds.split().test);
  experiment::EvalOptions eo;
  eo.seed = cfg.num<std::uint64_t>("seed", 1);
  eo.location_queries = cfg.num<std::size_t>("queries", eo.location_queries);
  if (cfg.has("stop_tags")) eo.stop_tags = eval::read_stop_tags(cfg.str("stop_tags"), ds.vocab());

  LoadedModel<Scalar> loaded;
  std::unique_ptr<experiment::Ranker> freq;
  std::string model_id;
  if (cfg.has("frequency")) {
    const auto scope = eval::parse_scope(cfg.str("frequency"));
    freq = std::make_unique<experiment::FrequencyRanker>(
        eval::build_frequency_tables(ds.subset(ds.split().train), eo.stop_tags), scope);
    model_id = "frequency-" + cfg.str("frequency");
  } else {
    load_model<Scalar>(cfg, ds, test, loaded);
    model_id = fs::path(cfg.str("model")).stem().string();
  }
  model_id = cfg.str("model_id", model_id);
  const auto dir = detail::out_dir(cfg);
  eval::MetricsReport report(model_id, dataset.filename().empty() ? dataset.parent_path().filename().string()
                                                                  : dataset.filename().string(),
                             eo.seed);
  experiment::evaluate(freq ? *freq : *loaded.ranker, test, eo, report);
  report.write((dir / "metrics.tsv").string());
  out << report.to_string();
  return 0;
}

template <typename Scalar>
int cmd_retrieve(const RunConfig& cfg, std::ostream& out) {
  const auto ds = data::load_dataset(cfg.str("dataset"));
  std::vector<data::ImageId> all;
  const auto candidates = ds.subset(detail::split_ids(ds, cfg.str("candidates", "test"), all));
  const auto tag = ds.vocab().id(cfg.str("tag"));
  std::optional<geo::GeoCoord> where;
  if (cfg.has("lat") || cfg.has("lon")) {
    where = geo::GeoCoord{cfg.num<double>("lat"), cfg.num<double>("lon")};
    geo::validate(*where);
  }
  const auto k = cfg.num<std::size_t>("k", 10);
  LoadedModel<Scalar> loaded;
  load_model<Scalar>(cfg, ds, candidates, loaded);
  const auto ranked = loaded.ranker->retrieve(tag, where, k);
  detail::write_ranking(out, ranked);
  if (cfg.has("out")) {
    auto f = detail::open_text(detail::out_dir(cfg) / "retrieval.tsv");
    detail::write_ranking(f, ranked);
  }
  return 0;
}

template <typename Scalar>
int cmd_tag(const RunConfig& cfg, std::ostream& out) {
  const auto ds = data::load_dataset(cfg.str("dataset"));
  const auto& image = ds.record(cfg.num<data::ImageId>("image"));
  std::optional<geo::GeoCoord> where;
  if (cfg.has("lat") || cfg.has("lon")) {
    where = geo::GeoCoord{cfg.num<double>("lat"), cfg.num<double>("lon")};
    geo::validate(*where);
  }
  const auto k = cfg.num<std::size_t>("k", 10);
  LoadedModel<Scalar> loaded;
  load_model<Scalar>(cfg, ds, {&image}, loaded);
  const auto ranked = loaded.ranker->tag(image, where ? where : std::optional<geo::GeoCoord>(image.location), k);
  detail::write_ranking(out, ranked, &ds.vocab().labels());
  if (cfg.has("out")) {
    auto f = detail::open_text(detail::out_dir(cfg) / "tags.tsv");
    detail::write_ranking(f, ranked, &ds.vocab().labels());
  }
  return 0;
}

inline int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  const auto cases = diagnostics::run_gradcheck_suite(cfg.num<std::uint64_t>("seed", 1));
  std::ostringstream text;
  bool ok = true;
  for (const auto& c : cases) {
    text << c.name << '\t' << detail::format_score(c.report.global_max) << '\t'
         << (c.report.passed ? "pass" : "FAIL") << '\n';
    ok = ok && c.report.passed;
  }
  out << text.str();
  if (cfg.has("out")) detail::open_text(detail::out_dir(cfg) / "gradcheck.tsv") << text.str();
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------

/// Parses argv, runs one subcommand. Returns the process exit status: 0 on
/// success, 1 on validation or runtime failure, 2 on usage errors.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  static const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-synthetic", "generate a planted synthetic dataset"},
      {"train-baseline", "train an MLC, MCC or HER baseline"},
      {"train-locsens", "train the location-sensitive triplet scorer"},
      {"evaluate", "compute retrieval and tagging metrics"},
      {"retrieve", "rank images for a hashtag at a location"},
      {"tag", "rank hashtags for an image"},
      {"gradcheck", "finite-difference check of every gradient"},
  };
  CLI::App app{"Location-sensitive image retrieval and tagging", "locsens"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key = value configuration file");
    for (const auto& key : key_table()) {
      const bool applies = std::find(key.commands.begin(), key.commands.end(), "*") != key.commands.end() ||
                           std::find(key.commands.begin(), key.commands.end(), name) != key.commands.end();
      if (!applies) continue;
      std::string flag = "--" + std::string(key.name);
      std::replace(flag.begin(), flag.end(), '_', '-');
      sub->add_option_function<std::string>(
          flag, [&flag_values, k = std::string(key.name)](const std::string& v) { flag_values[k] = v; },
          key.help);
    }
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) read_config_file(config_path, cfg);
    for (const auto& [k, v] : flag_values) {
      cfg.set(k, is_path_key(k) && !v.empty() ? fs::absolute(v).lexically_normal().string() : v);
    }
    std::string cmd;
    for (const auto& [name, sub] : subs) {
      if (sub->parsed()) cmd = name;
    }
    const bool f32 = cmd != "gen-synthetic" && cmd != "gradcheck" && detail::use_float(cfg);
    if (cmd == "gen-synthetic") return cmd_gen_synthetic(cfg, out);
    if (cmd == "gradcheck") return cmd_gradcheck(cfg, out);
    if (cmd == "train-baseline") return f32 ? cmd_train_baseline<float>(cfg, out) : cmd_train_baseline<double>(cfg, out);
    if (cmd == "train-locsens") return f32 ? cmd_train_locsens<float>(cfg, out) : cmd_train_locsens<double>(cfg, out);
    if (cmd == "evaluate") return f32 ? cmd_evaluate<float>(cfg, out) : cmd_evaluate<double>(cfg, out);
    if (cmd == "retrieve") return f32 ? cmd_retrieve<float>(cfg, out) : cmd_retrieve<double>(cfg, out);
    if (cmd == "tag") return f32 ? cmd_tag<float>(cfg, out) : cmd_tag<double>(cfg, out);
    err << "error: no subcommand\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace locsens::cli
