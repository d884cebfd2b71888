#pragma once

// Location-agnostic hashtag learners over precomputed backbone features:
//   MLC  sigmoid cross-entropy over all H tags (multi-hot target)
//   MCC  softmax cross-entropy against one groundtruth tag drawn per visit,
//        with a D-wide linear bottleneck whose output is the image embedding
//        and whose classifier rows are the tag embeddings
//   HER  cosine regression onto the sum of the groundtruth word vectors

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "locsens/data/records.hpp"
#include "locsens/error.hpp"
#include "locsens/nn/activations.hpp"
#include "locsens/nn/adam.hpp"
#include "locsens/nn/checkpoint.hpp"
#include "locsens/nn/dense.hpp"
#include "locsens/nn/tensor.hpp"
#include "locsens/ranking.hpp"

namespace locsens::baselines {

using nn::Index;
using nn::Tensor;

enum class BaselineKind { MLC, MCC, HER };

inline std::string kind_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::MLC: return "mlc";
    case BaselineKind::MCC: return "mcc";
    case BaselineKind::HER: return "her";
  }
  return "";
}

inline BaselineKind parse_kind(const std::string& s) {
  if (s == "mlc" || s == "MLC") return BaselineKind::MLC;
  if (s == "mcc" || s == "MCC") return BaselineKind::MCC;
  if (s == "her" || s == "HER") return BaselineKind::HER;
  throw ValidationError("unknown baseline kind '" + s + "' (expected mlc, mcc or her)");
}

template <typename Scalar>
struct LossResult {
  double value = 0.0;
  Tensor<Scalar> grad;  // dL/dinput, same shape as the input
};

// ---------------------------------------------------------------------------
// Losses. All take a batch (one sample per row) and return the batch mean.

/// Mean over tags of the sigmoid cross-entropy, averaged over rows.
template <typename Scalar>
LossResult<Scalar> mlc_loss(const Tensor<Scalar>& logits, const Tensor<Scalar>& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw ValidationError("mlc_loss: logits and targets differ in shape");
  }
  const double scale = 1.0 / static_cast<double>(logits.rows() * logits.cols());
  LossResult<Scalar> out;
  out.grad.resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Index i = 0; i < logits.size(); ++i) {
    const double z = static_cast<double>(logits.data()[i]);
    const double y = static_cast<double>(targets.data()[i]);
    // softplus(z) - y z, written to stay finite for large |z|
    total += std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
    const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    out.grad.data()[i] = static_cast<Scalar>((sig - y) * scale);
  }
  out.value = total * scale;
  return out;
}

/// -log softmax(logits)[target], averaged over rows.
template <typename Scalar>
LossResult<Scalar> mcc_loss(const Tensor<Scalar>& logits, const std::vector<data::TagId>& targets) {
  if (static_cast<Index>(targets.size()) != logits.rows()) {
    throw ValidationError("mcc_loss: one target per row required");
  }
  const double scale = 1.0 / static_cast<double>(logits.rows());
  LossResult<Scalar> out;
  out.grad.resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Index r = 0; r < logits.rows(); ++r) {
    const auto t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= logits.cols()) throw ValidationError("mcc_loss: target index out of range");
    const auto row = logits.row(r).template cast<double>();
    const double mx = row.maxCoeff();
    const Eigen::RowVectorXd e = (row.array() - mx).exp();
    const double sum = e.sum();
    total += (std::log(sum) + mx) - row(t);
    Eigen::RowVectorXd g = e / sum;
    g(t) -= 1.0;
    out.grad.row(r) = (g * scale).template cast<Scalar>();
  }
  out.value = total * scale;
  return out;
}

/// 1 - cos(f, t), averaged over rows. The gradient is taken w.r.t. f.
template <typename Scalar>
LossResult<Scalar> her_loss(const Tensor<Scalar>& f, const Tensor<Scalar>& t) {
  if (f.rows() != t.rows() || f.cols() != t.cols()) {
    throw ValidationError("her_loss: output and target differ in shape");
  }
  const double scale = 1.0 / static_cast<double>(f.rows());
  LossResult<Scalar> out;
  out.grad.resize(f.rows(), f.cols());
  double total = 0.0;
  for (Index r = 0; r < f.rows(); ++r) {
    const Eigen::RowVectorXd fr = f.row(r).template cast<double>();
    const Eigen::RowVectorXd tr = t.row(r).template cast<double>();
    const double nf = fr.norm();
    const double nt = tr.norm();
    if (!(nf > 0.0) || !(nt > 0.0)) throw ValidationError("her_loss: zero-norm vector");
    const double cos = fr.dot(tr) / (nf * nt);
    total += 1.0 - cos;
    const Eigen::RowVectorXd g = -(tr / (nf * nt) - cos * fr / (nf * nf));
    out.grad.row(r) = (g * scale).template cast<Scalar>();
  }
  out.value = total * scale;
  return out;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
class BaselineModel {
 public:
  struct Cache {
    Tensor<Scalar> x;
    Tensor<Scalar> hidden;  // MCC bottleneck pre-activation
    Tensor<Scalar> act;     // MCC bottleneck after ReLU
  };

  BaselineModel() = default;
  BaselineModel(BaselineKind kind, Index feature_dim, Index num_tags, Index embed_dim)
      : kind_(kind), num_tags_(num_tags) {
    switch (kind) {
      case BaselineKind::MLC:
        layers_.emplace_back("mlc.head", feature_dim, num_tags);
        break;
      case BaselineKind::MCC:
        layers_.emplace_back("mcc.bottleneck", feature_dim, embed_dim);
        layers_.emplace_back("mcc.classifier", embed_dim, num_tags);
        break;
      case BaselineKind::HER:
        layers_.emplace_back("her.head", feature_dim, embed_dim);
        break;
    }
  }

  BaselineKind kind() const { return kind_; }
  Index feature_dim() const { return layers_.front().in_features(); }
  Index num_tags() const { return num_tags_; }
  Index output_dim() const { return layers_.back().out_features(); }

  void init(nn::Rng& rng) {
    for (auto& l : layers_) l.init_kaiming(rng);
  }

  /// Logits [B x H] for MLC/MCC, embedding [B x D] for HER.
  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache* cache = nullptr) const {
    if (kind_ != BaselineKind::MCC) {
      if (cache) cache->x = x;
      return layers_[0].forward(x);
    }
    Tensor<Scalar> hidden = layers_[0].forward(x);
    Tensor<Scalar> act = nn::relu(hidden);
    Tensor<Scalar> logits = layers_[1].forward(act);
    if (cache) {
      cache->x = x;
      cache->hidden = std::move(hidden);
      cache->act = std::move(act);
    }
    return logits;
  }

  void backward(const Cache& cache, const Tensor<Scalar>& dout) {
    if (kind_ != BaselineKind::MCC) {
      layers_[0].backward(cache.x, dout);
      return;
    }
    Tensor<Scalar> dact = layers_[1].backward(cache.act, dout);
    layers_[0].backward(cache.x, nn::relu_backward(cache.hidden, dact));
  }

  /// MCC only: bottleneck linear output, before the ReLU.
  Tensor<Scalar> embed(const Tensor<Scalar>& x) const {
    require_mcc("image_embedding");
    return layers_[0].forward(x);
  }

  /// MCC only: classifier rows, one per tag in vocabulary order.
  Tensor<Scalar> tag_embeddings() const {
    require_mcc("tag_embeddings");
    return layers_[1].weight().value;
  }

  nn::ParamList<Scalar> parameters() {
    nn::ParamList<Scalar> out;
    for (auto& l : layers_) {
      for (auto* p : l.parameters()) out.push_back(p);
    }
    return out;
  }

  void save(const std::string& path) { nn::save_checkpoint<Scalar>(path, parameters()); }

  static BaselineModel load(const std::string& path) {
    const auto tensors = nn::load_checkpoint(path);
    BaselineModel model;
    if (tensors.count("mcc.bottleneck.weight") && tensors.count("mcc.classifier.weight")) {
      const auto& b = tensors.at("mcc.bottleneck.weight");
      const auto& c = tensors.at("mcc.classifier.weight");
      model = BaselineModel(BaselineKind::MCC, b.cols(), c.rows(), b.rows());
    } else if (tensors.count("mlc.head.weight")) {
      const auto& w = tensors.at("mlc.head.weight");
      model = BaselineModel(BaselineKind::MLC, w.cols(), w.rows(), w.rows());
    } else if (tensors.count("her.head.weight")) {
      const auto& w = tensors.at("her.head.weight");
      model = BaselineModel(BaselineKind::HER, w.cols(), 0, w.rows());
    } else {
      throw FormatError(path + ": not a baseline checkpoint");
    }
    nn::assign_parameters<Scalar>(tensors, model.parameters());
    return model;
  }

 private:
  void require_mcc(const char* what) const {
    if (kind_ != BaselineKind::MCC) throw ValidationError(std::string(what) + " requires an MCC model");
  }

  BaselineKind kind_ = BaselineKind::MCC;
  Index num_tags_ = 0;
  std::vector<nn::Dense<Scalar>> layers_;
};

// ---------------------------------------------------------------------------

struct BaselineTrainConfig {
  int epochs = 10;
  Index batch_size = 128;
  nn::AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  // Global-norm gradient clipping; negative selects the per-kind default
  // (5.0 for MLC, off otherwise).
  double clip_norm = -1.0;
  Index embed_dim = 300;
  std::uint64_t seed = 1;
};

template <typename Scalar>
struct TrainedBaseline {
  BaselineModel<Scalar> model;
  std::vector<double> epoch_loss;
};

/// Features of `records` stacked row-wise.
template <typename Scalar>
Tensor<Scalar> feature_matrix(const std::vector<const data::PhotoRecord*>& records) {
  if (records.empty()) return {};
  const Index dim = static_cast<Index>(records.front()->feature.size());
  Tensor<Scalar> x(static_cast<Index>(records.size()), dim);
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (Index d = 0; d < dim; ++d) {
      x(static_cast<Index>(i), d) = static_cast<Scalar>(records[i]->feature[static_cast<std::size_t>(d)]);
    }
  }
  return x;
}

/// Sum of the groundtruth word vectors per record.
template <typename Scalar>
Tensor<Scalar> her_targets(const std::vector<const data::PhotoRecord*>& records,
                           const Tensor<double>& word_vectors) {
  Tensor<Scalar> t = Tensor<Scalar>::Zero(static_cast<Index>(records.size()), word_vectors.cols());
  for (std::size_t i = 0; i < records.size(); ++i) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(word_vectors.cols());
    for (auto tag : records[i]->tags) sum += word_vectors.row(tag);
    t.row(static_cast<Index>(i)) = sum.template cast<Scalar>();
  }
  return t;
}

/// Minibatch training. `word_vectors` (H x D, vocabulary order) is required
/// for HER and ignored otherwise.
template <typename Scalar>
TrainedBaseline<Scalar> train_baseline(BaselineKind kind,
                                       const std::vector<const data::PhotoRecord*>& records,
                                       std::size_t num_tags,
                                       const Tensor<double>* word_vectors,
                                       const BaselineTrainConfig& config) {
  if (records.empty()) throw ValidationError("train_baseline: empty dataset");
  if (kind == BaselineKind::HER && (!word_vectors || word_vectors->rows() != static_cast<Index>(num_tags))) {
    throw ValidationError("train_baseline: HER needs one word vector per vocabulary tag");
  }
  const Index embed = kind == BaselineKind::HER ? word_vectors->cols() : config.embed_dim;
  nn::Rng rng(config.seed);
  TrainedBaseline<Scalar> out;
  out.model = BaselineModel<Scalar>(kind, static_cast<Index>(records.front()->feature.size()),
                                    static_cast<Index>(num_tags), embed);
  out.model.init(rng);
  auto params = out.model.parameters();
  nn::Adam<Scalar> adam(config.adam);
  const double clip = config.clip_norm >= 0.0 ? config.clip_norm
                                              : (kind == BaselineKind::MLC ? 5.0 : 0.0);

  const Tensor<Scalar> x_all = feature_matrix<Scalar>(records);
  Tensor<Scalar> her_t;
  if (kind == BaselineKind::HER) her_t = her_targets<Scalar>(records, *word_vectors);

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<data::TagId> epoch_target(records.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    if (kind == BaselineKind::MCC) {
      for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& tags = records[i]->tags;
        epoch_target[i] = tags[std::uniform_int_distribution<std::size_t>(0, tags.size() - 1)(rng)];
      }
    }
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const Index b = static_cast<Index>(end - start);
      Tensor<Scalar> x(b, x_all.cols());
      for (Index r = 0; r < b; ++r) x.row(r) = x_all.row(static_cast<Index>(order[start + static_cast<std::size_t>(r)]));

      typename BaselineModel<Scalar>::Cache cache;
      const Tensor<Scalar> y = out.model.forward(x, &cache);
      LossResult<Scalar> loss;
      if (kind == BaselineKind::MLC) {
        Tensor<Scalar> target = Tensor<Scalar>::Zero(b, static_cast<Index>(num_tags));
        for (Index r = 0; r < b; ++r) {
          for (auto t : records[order[start + static_cast<std::size_t>(r)]]->tags) target(r, t) = Scalar(1);
        }
        loss = mlc_loss(y, target);
      } else if (kind == BaselineKind::MCC) {
        std::vector<data::TagId> target(static_cast<std::size_t>(b));
        for (Index r = 0; r < b; ++r) target[static_cast<std::size_t>(r)] = epoch_target[order[start + static_cast<std::size_t>(r)]];
        loss = mcc_loss(y, target);
      } else {
        Tensor<Scalar> target(b, her_t.cols());
        for (Index r = 0; r < b; ++r) target.row(r) = her_t.row(static_cast<Index>(order[start + static_cast<std::size_t>(r)]));
        loss = her_loss(y, target);
      }
      if (!std::isfinite(loss.value)) {
        throw DivergenceError(kind_name(kind) + " training diverged: non-finite loss at epoch " +
                              std::to_string(epoch + 1));
      }
      nn::zero_grads(params);
      out.model.backward(cache, loss.grad);
      if (clip > 0.0) nn::clip_grad_norm(params, clip);
      adam.step(params);
      weighted += loss.value * static_cast<double>(b);
    }
    out.epoch_loss.push_back(weighted / static_cast<double>(records.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring and ranking.

/// Image-by-tag score matrix [N x H]: the trained output activation (sigmoid
/// for MLC, softmax for MCC), or for HER the cosine between the output and
/// each tag's word vector.
template <typename Scalar>
Tensor<double> score_matrix(const BaselineModel<Scalar>& model, const Tensor<Scalar>& x,
                            const Tensor<double>* word_vectors) {
  const Tensor<Scalar> y = model.forward(x);
  if (model.kind() == BaselineKind::MLC) {
    return y.template cast<double>().unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
  }
  if (model.kind() == BaselineKind::MCC) {
    Tensor<double> p = y.template cast<double>();
    for (Index r = 0; r < p.rows(); ++r) {
      p.row(r).array() -= p.row(r).maxCoeff();
      p.row(r) = p.row(r).array().exp().matrix();
      p.row(r) /= p.row(r).sum();
    }
    return p;
  }
  if (!word_vectors || word_vectors->cols() != y.cols()) {
    throw ValidationError("HER scoring needs word vectors of the model's output width");
  }
  Tensor<double> f = y.template cast<double>();
  Eigen::VectorXd fn = f.rowwise().norm();
  Eigen::VectorXd wn = word_vectors->rowwise().norm();
  Tensor<double> s = f * word_vectors->transpose();
  for (Index i = 0; i < s.rows(); ++i) {
    for (Index j = 0; j < s.cols(); ++j) {
      const double d = fn(i) * wn(j);
      s(i, j) = d > 0.0 ? s(i, j) / d : 0.0;
    }
  }
  return s;
}

enum class RankMode { RetrieveByTag, TagImage };

/// Top-k images for one tag among `candidates` (ids aligned with rows of x).
template <typename Scalar>
std::vector<Scored> retrieve_by_tag(const BaselineModel<Scalar>& model, data::TagId tag,
                                    const std::vector<data::ImageId>& candidates,
                                    const Tensor<Scalar>& x, std::size_t k,
                                    const Tensor<double>* word_vectors = nullptr) {
  const Index h = model.kind() == BaselineKind::HER ? (word_vectors ? word_vectors->rows() : 0)
                                                    : model.num_tags();
  if (tag < 0 || tag >= h) throw ValidationError("unknown tag id " + std::to_string(tag));
  const Tensor<double> s = score_matrix(model, x, word_vectors);
  std::vector<Scored> items(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) items[i] = {candidates[i], s(static_cast<Index>(i), tag)};
  return top_k(std::move(items), k);
}

/// Top-k tags for one image.
template <typename Scalar>
std::vector<Scored> tag_image(const BaselineModel<Scalar>& model, const Tensor<Scalar>& feature,
                              std::size_t k, const Tensor<double>* word_vectors = nullptr) {
  const Tensor<double> s = score_matrix(model, feature, word_vectors);
  std::vector<Scored> items(static_cast<std::size_t>(s.cols()));
  for (Index j = 0; j < s.cols(); ++j) items[static_cast<std::size_t>(j)] = {j, s(0, j)};
  return top_k(std::move(items), k);
}

/// Single entry point for both protocols: `query_tag` for RetrieveByTag,
/// `query_feature` (one row) for TagImage.
template <typename Scalar>
std::vector<Scored> baseline_rank(const BaselineModel<Scalar>& model, RankMode mode,
                                  std::optional<data::TagId> query_tag,
                                  const Tensor<Scalar>* query_feature,
                                  const std::vector<data::ImageId>& candidates,
                                  const Tensor<Scalar>* candidate_features, std::size_t k,
                                  const Tensor<double>* word_vectors = nullptr) {
  if (mode == RankMode::RetrieveByTag) {
    if (!query_tag || !candidate_features) throw ValidationError("retrieve_by_tag needs a tag and candidates");
    return retrieve_by_tag(model, *query_tag, candidates, *candidate_features, k, word_vectors);
  }
  if (!query_feature) throw ValidationError("tag_image needs an image feature");
  return tag_image(model, *query_feature, k, word_vectors);
}

}  // namespace locsens::baselines
