#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "locsens/error.hpp"
#include "locsens/geo.hpp"
#include "locsens/nn/adam.hpp"
#include "locsens/scorer/embeddings.hpp"
#include "locsens/scorer/model.hpp"
#include "locsens/scorer/negatives.hpp"

namespace locsens::scorer {

enum class Strategy { Zeroed, Raw, Dropout, Sampling };

inline std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Zeroed: return "zeroed";
    case Strategy::Raw: return "raw";
    case Strategy::Dropout: return "dropout";
    case Strategy::Sampling: return "sampling";
  }
  return "";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "zeroed") return Strategy::Zeroed;
  if (s == "raw") return Strategy::Raw;
  if (s == "dropout") return Strategy::Dropout;
  if (s == "sampling") return Strategy::Sampling;
  throw ValidationError("unknown strategy '" + s + "' (expected zeroed, raw, dropout or sampling)");
}

struct TrainConfig {
  double margin = 0.1;
  int negatives = 6;
  Index batch_size = 256;
  NegativeMode mode = NegativeMode::ReplaceImage;
  // Zeroed/Raw: total epochs. Dropout: cap on the alpha = 0 phase.
  // Sampling: lower bound on the total, extra epochs run at the final sigma.
  int epochs = 10;
  nn::AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  std::uint64_t seed = 1;
  Architecture arch;
  // Positives visited per epoch; 0 visits every training pair once.
  std::size_t positives_per_epoch = 0;

  // Dropout strategy.
  double dropout_p = 0.5;
  int ramp_epochs = 5;
  double plateau_tolerance = 0.01;  // relative improvement over the window
  int plateau_window = 3;

  // Sampling strategy.
  double sigma_final = 0.05;
  int epochs_per_rung = 2;

  void validate() const {
    if (!(margin > 0.0)) throw ValidationError("margin must be > 0");
    if (negatives < 1) throw ValidationError("negatives must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (!(dropout_p >= 0.0 && dropout_p <= 1.0)) throw ValidationError("dropout_p must lie in [0,1]");
    if (ramp_epochs < 1) throw ValidationError("ramp_epochs must be >= 1");
    if (plateau_window < 1) throw ValidationError("plateau_window must be >= 1");
    if (!(sigma_final >= 0.0)) throw ValidationError("sigma_final must be >= 0");
    if (epochs_per_rung < 1) throw ValidationError("epochs_per_rung must be >= 1");
    arch.validate();
  }
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double alpha = 0.0;
  double sigma = 0.0;
  double wallclock_s = 0.0;
};

inline std::string to_json_line(const EpochLog& e) {
  nlohmann::ordered_json j;
  j["epoch"] = e.epoch;
  j["mean_loss"] = e.mean_loss;
  j["alpha"] = e.alpha;
  j["sigma"] = e.sigma;
  j["wallclock_s"] = e.wallclock_s;
  return j.dump();
}

inline void write_log(std::ostream& out, const std::vector<EpochLog>& log) {
  for (const auto& e : log) out << to_json_line(e) << '\n';
}

/// Standard deviations used by the sampling strategy, coarse to fine, ending
/// at `target`. A target off the ladder is appended after the last larger rung.
inline std::vector<double> sigma_ladder(double target) {
  static constexpr double kRungs[] = {1.0, 0.5, 0.2, 0.1, 0.05, 0.01, 0.0};
  if (!(target >= 0.0)) throw ValidationError("sigma must be >= 0");
  std::vector<double> out;
  for (double s : kRungs) {
    if (s < target) break;
    out.push_back(s);
  }
  if (out.empty() || out.back() != target) out.push_back(target);
  return out;
}

/// Relative improvement of the last loss over the one `window` epochs earlier
/// is below `tol`.
inline bool has_plateaued(const std::vector<double>& losses, int window, double tol) {
  if (static_cast<int>(losses.size()) <= window) return false;
  const double before = losses[losses.size() - 1 - static_cast<std::size_t>(window)];
  const double now = losses.back();
  if (before <= 0.0) return true;
  return (before - now) / before < tol;
}

template <typename Scalar>
struct TrainedLocSens {
  LocSensModel<Scalar> model;
  std::vector<EpochLog> log;
};

namespace detail {

struct EpochPlan {
  double alpha = 1.0;
  double sigma = 0.0;
  bool sample = false;
  double drop = 0.0;  // per-triplet probability of silencing the location
};

template <typename Scalar>
class TripletTrainer {
 public:
  TripletTrainer(const TripletIndex& index, const EmbeddingSet<Scalar>& emb, const TrainConfig& cfg)
      : index_(index), emb_(emb), cfg_(cfg), rng_(cfg.seed), model_(cfg.arch), adam_(cfg.adam) {
    if (emb.dim() != cfg.arch.embed_dim) {
      throw ValidationError("embedding width " + std::to_string(emb.dim()) +
                            " does not match architecture embed_dim " +
                            std::to_string(cfg.arch.embed_dim));
    }
    if (static_cast<std::size_t>(emb.tags.rows()) != index.num_tags()) {
      throw ValidationError("tag embedding count does not match the vocabulary");
    }
    model_.init(rng_);
    params_ = model_.parameters();
    positives_ = index.positives();
  }

  LocSensModel<Scalar>& model() { return model_; }

  double run_epoch(const EpochPlan& plan) {
    std::shuffle(positives_.begin(), positives_.end(), rng_);
    std::size_t n = positives_.size();
    if (cfg_.positives_per_epoch > 0) n = std::min(n, cfg_.positives_per_epoch);
    double total = 0.0;
    const auto bs = static_cast<std::size_t>(cfg_.batch_size);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      total += step(start, end, plan) * static_cast<double>(end - start);
    }
    return total / static_cast<double>(n);
  }

 private:
  // One optimizer step over positives_[start, end). Returns the batch loss.
  double step(std::size_t start, std::size_t end, const EpochPlan& plan) {
    const auto b = static_cast<Index>(end - start);
    const int k = cfg_.negatives;
    const Index rows = b * (1 + k);
    const Index d = emb_.dim();
    Tensor<Scalar> r(rows, d), v(rows, d), g(rows, 2);
    std::vector<Scalar> alpha(static_cast<std::size_t>(rows));
    std::bernoulli_distribution drop(plan.drop);

    auto put = [&](Index row, const Triplet& t) {
      r.row(row) = emb_.images.row(emb_.row(t.image_id));
      v.row(row) = emb_.tags.row(t.tag_id);
      g(row, 0) = static_cast<Scalar>(t.coord.u);
      g(row, 1) = static_cast<Scalar>(t.coord.v);
      double a = plan.alpha;
      if (plan.drop > 0.0 && drop(rng_)) a = 0.0;
      alpha[static_cast<std::size_t>(row)] = static_cast<Scalar>(a);
    };

    // Rows [0, b) are positives; negatives of positive i sit at b + i*k ...
    for (Index i = 0; i < b; ++i) {
      Triplet pos = positives_[start + static_cast<std::size_t>(i)];
      if (plan.sample) pos.coord = geo::sample_location(pos.coord, plan.sigma, rng_);
      put(i, pos);
      const auto negs = make_negatives(pos, cfg_.mode, k, index_, rng_);
      for (int j = 0; j < k; ++j) put(b + i * k + j, negs[static_cast<std::size_t>(j)]);
    }

    typename LocSensModel<Scalar>::Cache cache;
    const Tensor<Scalar> s = model_.forward(r, v, g, alpha, &cache);
    Tensor<Scalar> ds = Tensor<Scalar>::Zero(rows, 1);
    const double scale = 1.0 / (static_cast<double>(b) * k);
    double loss = 0.0;
    for (Index i = 0; i < b; ++i) {
      for (int j = 0; j < k; ++j) {
        const Index nrow = b + i * k + j;
        const auto m = margin_ranking_loss(static_cast<double>(s(i, 0)), static_cast<double>(s(nrow, 0)),
                                           cfg_.margin);
        loss += m.value;
        ds(i, 0) += static_cast<Scalar>(m.d_pos * scale);
        ds(nrow, 0) += static_cast<Scalar>(m.d_neg * scale);
      }
    }
    loss *= scale;
    if (!std::isfinite(loss)) throw DivergenceError("locsens training diverged: non-finite loss");
    nn::zero_grads(params_);
    model_.backward(cache, ds);
    adam_.step(params_);
    return loss;
  }

  const TripletIndex& index_;
  const EmbeddingSet<Scalar>& emb_;
  TrainConfig cfg_;
  nn::Rng rng_;
  LocSensModel<Scalar> model_;
  nn::Adam<Scalar> adam_;
  nn::ParamList<Scalar> params_;
  std::vector<Triplet> positives_;
};

}  // namespace detail

/// Trains the triplet scorer on every (image, tag) pair of the training
/// records. `embeddings` must cover all records in `index`.
template <typename Scalar>
TrainedLocSens<Scalar> train_locsens(const TripletIndex& index, const EmbeddingSet<Scalar>& embeddings,
                                     Strategy strategy, const TrainConfig& config) {
  config.validate();
  detail::TripletTrainer<Scalar> trainer(index, embeddings, config);
  std::vector<EpochLog> log;
  std::vector<double> losses;
  const auto t0 = std::chrono::steady_clock::now();
  auto run = [&](const detail::EpochPlan& plan) {
    const double loss = trainer.run_epoch(plan);
    losses.push_back(loss);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.push_back({static_cast<int>(log.size()) + 1, loss, plan.alpha, plan.sigma, secs});
  };

  switch (strategy) {
    case Strategy::Zeroed:
    case Strategy::Raw: {
      const double a = strategy == Strategy::Zeroed ? 0.0 : 1.0;
      for (int e = 0; e < config.epochs; ++e) run({a, 0.0, false, 0.0});
      break;
    }
    case Strategy::Dropout: {
      for (int e = 0; e < config.epochs; ++e) {
        run({0.0, 0.0, false, 0.0});
        if (has_plateaued(losses, config.plateau_window, config.plateau_tolerance)) break;
      }
      for (int e = 1; e <= config.ramp_epochs; ++e) {
        run({static_cast<double>(e) / config.ramp_epochs, 0.0, false, config.dropout_p});
      }
      break;
    }
    case Strategy::Sampling: {
      const auto ladder = sigma_ladder(config.sigma_final);
      for (double s : ladder) {
        for (int e = 0; e < config.epochs_per_rung; ++e) run({1.0, s, true, 0.0});
      }
      const int done = static_cast<int>(log.size());
      for (int e = done; e < config.epochs; ++e) run({1.0, config.sigma_final, true, 0.0});
      break;
    }
  }
  trainer.model().set_inference_alpha(strategy == Strategy::Zeroed ? 0.0 : 1.0);
  return {std::move(trainer.model()), std::move(log)};
}

}  // namespace locsens::scorer
