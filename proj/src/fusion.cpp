#include "rolefuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "rolefuse/binary_io.hpp"
#include "rolefuse/error.hpp"
#include "rolefuse/rng.hpp"

namespace rolefuse::fusion {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace {

constexpr char kCheckpointMagic[4] = {'R', 'F', 'M', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr double kSqrtEps = 1e-12;
constexpr double kNormFloor = 1e-12;

Index idx(std::size_t v) { return static_cast<Index>(v); }

MatrixXd xavier(Rng& rng, Index rows, Index cols, double fan_in, double fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  MatrixXd m(rows, cols);
  // Fill row by row so the draw order does not depend on storage order.
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-limit, limit);
  }
  return m;
}

// Everything the backward pass needs from one forward pass.
struct Cache {
  std::vector<AttentionOutput> attention;
  MatrixXd context_in;  // attended contexts, or the raw contexts
  MatrixXd entity_hidden;
  MatrixXd context_hidden;
  MatrixXd u;
  MatrixXd v;
  std::vector<RowMatrix> outer;  // per block: n x (r1 * r2)
  std::vector<MatrixXd> raw;     // per block: n x r3, before normalization
  MatrixXd z;                    // n x (blocks * r3)
  MatrixXd y;                    // n x output
  MatrixXd mask;                 // empty when dropout is off
  MatrixXd y_dropped;
  MatrixXd log_probs;            // n x 4
};

double signed_sqrt(double x) {
  const double r = std::sqrt(std::abs(x) + kSqrtEps) - std::sqrt(kSqrtEps);
  return x < 0 ? -r : r;
}

void fusion_forward(const BlockFusionModel& model, Cache& c) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  const Index n = c.entity_hidden.rows();
  const Index r1 = idx(cfg.rank1), r2 = idx(cfg.rank2), r3 = idx(cfg.rank3);
  c.u.noalias() = c.entity_hidden * p.proj1;
  c.v.noalias() = c.context_hidden * p.proj2;
  c.outer.assign(cfg.blocks, RowMatrix(n, r1 * r2));
  c.raw.assign(cfg.blocks, MatrixXd(n, r3));
  c.z.resize(n, idx(cfg.blocks) * r3);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const Index bi = idx(b);
    RowMatrix& outer = c.outer[b];
    for (Index s = 0; s < n; ++s) {
      for (Index a = 0; a < r1; ++a) {
        const double ua = c.u(s, bi * r1 + a);
        for (Index k = 0; k < r2; ++k) outer(s, a * r2 + k) = ua * c.v(s, bi * r2 + k);
      }
    }
    c.raw[b].noalias() = outer * p.cores[b];
    auto zb = c.z.middleCols(bi * r3, r3);
    if (!cfg.normalize) {
      zb = c.raw[b];
      continue;
    }
    for (Index s = 0; s < n; ++s) {
      VectorXd sq = c.raw[b].row(s).transpose().unaryExpr(&signed_sqrt);
      zb.row(s) = sq.transpose() / std::max(sq.norm(), kNormFloor);
    }
  }
  c.y.noalias() = c.z * p.out_proj;
}

void full_forward(const BlockFusionModel& model, const MatrixXd& entities, const MatrixXd& contexts,
                  std::optional<std::uint64_t> dropout_seed, Cache& c) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  if (entities.cols() != idx(model.entity_dim()) || contexts.cols() != idx(model.context_dim()) ||
      entities.rows() != contexts.rows()) {
    throw DataError("fusion input shape mismatch: entity " + std::to_string(entities.cols()) +
                    " (model " + std::to_string(model.entity_dim()) + "), context " +
                    std::to_string(contexts.cols()) + " (model " +
                    std::to_string(model.context_dim()) + ")");
  }
  const Index n = entities.rows();
  if (cfg.attention) {
    const auto attn = *model.attention();
    c.attention.clear();
    c.context_in.resize(n, idx(cfg.attention_dim));
    for (Index s = 0; s < n; ++s) {
      c.attention.push_back(attend(attn, entities.row(s).transpose(), contexts.row(s).transpose()));
      c.context_in.row(s) = c.attention.back().output.transpose();
    }
  } else {
    c.context_in = contexts;
  }
  c.entity_hidden.noalias() = entities * p.entity_weight;
  c.entity_hidden.rowwise() += p.entity_bias.transpose();
  c.context_hidden.noalias() = c.context_in * p.context_weight;
  c.context_hidden.rowwise() += p.context_bias.transpose();
  fusion_forward(model, c);

  if (dropout_seed && cfg.dropout > 0.0) {
    Rng rng(*dropout_seed);
    const double keep_scale = 1.0 / (1.0 - cfg.dropout);
    c.mask.resize(c.y.rows(), c.y.cols());
    for (Index s = 0; s < c.y.rows(); ++s) {
      for (Index k = 0; k < c.y.cols(); ++k) {
        c.mask(s, k) = rng.uniform() < cfg.dropout ? 0.0 : keep_scale;
      }
    }
    c.y_dropped = c.y.cwiseProduct(c.mask);
  } else {
    c.mask.resize(0, 0);
    c.y_dropped = c.y;
  }
  MatrixXd logits = c.y_dropped * p.head_weight;
  logits.rowwise() += p.head_bias.transpose();
  c.log_probs.resize(n, idx(kNumRoles));
  for (Index s = 0; s < n; ++s) {
    const double m = logits.row(s).maxCoeff();
    const double lse = m + std::log((logits.row(s).array() - m).exp().sum());
    c.log_probs.row(s) = logits.row(s).array() - lse;
  }
  if (!c.log_probs.allFinite()) throw NumericError("non-finite activation in fusion forward pass");
}

void check_labels(const std::vector<Role>& labels, Index n) {
  if (idx(labels.size()) != n) throw DataError("label count does not match the batch size");
}

}  // namespace

std::string_view setting_name(Setting s) {
  switch (s) {
    case Setting::kEntityText:
      return "entity+text";
    case Setting::kEntityImage:
      return "entity+image";
    case Setting::kEntityTextImage:
      return "entity+text_image";
  }
  return "entity+text";
}

std::optional<Setting> parse_setting(std::string_view name) {
  for (Setting s : {Setting::kEntityText, Setting::kEntityImage, Setting::kEntityTextImage}) {
    if (setting_name(s) == name) return s;
  }
  return std::nullopt;
}

void BlockConfig::validate() const {
  if (hidden == 0 || blocks == 0 || rank1 == 0 || rank2 == 0 || rank3 == 0 || output == 0) {
    throw DataError("block fusion sizes must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DataError("dropout rate must be in [0, 1)");
  if (attention && (slots == 0 || attention_dim == 0)) {
    throw DataError("attention slots and dimension must be positive");
  }
}

void to_json(json& j, const BlockConfig& c) {
  j = json{{"hidden", c.hidden},       {"blocks", c.blocks},
           {"rank1", c.rank1},         {"rank2", c.rank2},
           {"rank3", c.rank3},         {"output", c.output},
           {"dropout", c.dropout},     {"normalize", c.normalize},
           {"attention", c.attention}, {"slots", c.slots},
           {"attention_dim", c.attention_dim}};
}

void from_json(const json& j, BlockConfig& c) {
  j.at("hidden").get_to(c.hidden);
  j.at("blocks").get_to(c.blocks);
  j.at("rank1").get_to(c.rank1);
  j.at("rank2").get_to(c.rank2);
  j.at("rank3").get_to(c.rank3);
  j.at("output").get_to(c.output);
  j.at("dropout").get_to(c.dropout);
  j.at("normalize").get_to(c.normalize);
  j.at("attention").get_to(c.attention);
  j.at("slots").get_to(c.slots);
  j.at("attention_dim").get_to(c.attention_dim);
}

void TrainConfig::validate() const {
  block.validate();
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw DataError("learning rate must be positive");
  }
  if (batch_size == 0) throw DataError("batch size must be positive");
  if (max_text_length == 0) throw DataError("max text length must be positive");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate},
           {"batch_size", c.batch_size},
           {"max_text_length", c.max_text_length},
           {"epochs", c.epochs},
           {"seed", c.seed},
           {"setting", setting_name(c.setting)},
           {"block", c.block}};
}

void from_json(const json& j, TrainConfig& c) {
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("batch_size").get_to(c.batch_size);
  j.at("max_text_length").get_to(c.max_text_length);
  j.at("epochs").get_to(c.epochs);
  j.at("seed").get_to(c.seed);
  auto s = parse_setting(j.at("setting").get<std::string>());
  if (!s) throw DataError("unknown setting " + j.at("setting").dump());
  c.setting = *s;
  j.at("block").get_to(c.block);
}

void Parameters::for_each(const std::function<void(const TensorView&)>& fn) {
  auto visit = [&](const std::string& name, auto& m) {
    if (m.size() == 0) return;
    fn(TensorView{name, m.data(), m.rows(), m.cols()});
  };
  visit("entity_weight", entity_weight);
  visit("entity_bias", entity_bias);
  visit("context_weight", context_weight);
  visit("context_bias", context_bias);
  visit("proj1", proj1);
  visit("proj2", proj2);
  for (std::size_t b = 0; b < cores.size(); ++b) visit("core." + std::to_string(b), cores[b]);
  visit("out_proj", out_proj);
  visit("head_weight", head_weight);
  visit("head_bias", head_bias);
  visit("attn_query", attn_query);
  visit("attn_key", attn_key);
  visit("attn_value", attn_value);
}

void Parameters::for_each(const std::function<void(const TensorView&)>& fn) const {
  const_cast<Parameters*>(this)->for_each(fn);
}

Parameters Parameters::zeros_like() const {
  Parameters z = *this;
  z.for_each([](const TensorView& t) { t.flat().setZero(); });
  return z;
}

void Parameters::axpy(double alpha, Parameters& other) {
  std::vector<TensorView> mine;
  for_each([&](const TensorView& t) { mine.push_back(t); });
  std::size_t i = 0;
  other.for_each([&](const TensorView& t) {
    if (i >= mine.size() || mine[i].rows != t.rows || mine[i].cols != t.cols) {
      throw DataError("parameter shape mismatch in update");
    }
    mine[i++].flat() += alpha * t.flat();
  });
}

bool Parameters::all_finite() const {
  bool ok = true;
  for_each([&](const TensorView& t) { ok = ok && t.flat().allFinite(); });
  return ok;
}

BlockFusionModel BlockFusionModel::create(const BlockConfig& config, std::size_t entity_dim,
                                          std::size_t context_dim, std::uint64_t seed) {
  config.validate();
  if (entity_dim == 0 || context_dim == 0) throw DataError("input dimensions must be positive");
  BlockFusionModel m;
  m.config_ = config;
  m.entity_dim_ = entity_dim;
  m.context_dim_ = context_dim;
  Rng rng(seed);
  const auto h = idx(config.hidden);
  const auto b = idx(config.blocks);
  const auto r1 = idx(config.rank1), r2 = idx(config.rank2), r3 = idx(config.rank3);
  const auto k = idx(config.output);
  const auto de = idx(entity_dim);
  Index context_in = idx(context_dim);
  auto& p = m.params_;
  if (config.attention) {
    if (context_dim % config.slots != 0) {
      throw DataError("context dimension " + std::to_string(context_dim) +
                      " is not divisible by the slot count " + std::to_string(config.slots));
    }
    const auto slot_dim = idx(context_dim / config.slots);
    const auto da = idx(config.attention_dim);
    p.attn_query = xavier(rng, de, da, double(de), double(da));
    p.attn_key = xavier(rng, slot_dim, da, double(slot_dim), double(da));
    p.attn_value = xavier(rng, slot_dim, da, double(slot_dim), double(da));
    context_in = da;
  }
  p.entity_weight = xavier(rng, de, h, double(de), double(h));
  p.entity_bias = VectorXd::Zero(h);
  p.context_weight = xavier(rng, context_in, h, double(context_in), double(h));
  p.context_bias = VectorXd::Zero(h);
  p.proj1 = xavier(rng, h, b * r1, double(h), double(b * r1));
  p.proj2 = xavier(rng, h, b * r2, double(h), double(b * r2));
  p.cores.clear();
  for (Index i = 0; i < b; ++i) {
    p.cores.push_back(xavier(rng, r1 * r2, r3, double(r1 * r2), double(r3)));
  }
  p.out_proj = xavier(rng, b * r3, k, double(b * r3), double(k));
  p.head_weight = MatrixXd::Zero(k, idx(kNumRoles));
  p.head_bias = VectorXd::Zero(idx(kNumRoles));
  return m;
}

std::optional<AttentionParams> BlockFusionModel::attention() const {
  if (!config_.attention) return std::nullopt;
  return AttentionParams{params_.attn_query, params_.attn_key, params_.attn_value, config_.slots};
}

double BlockFusionModel::core(std::size_t block, std::size_t a, std::size_t c,
                              std::size_t e) const {
  return params_.cores.at(block)(idx(a * config_.rank2 + c), idx(e));
}

BilinearTensor assemble_full_tensor(const BlockFusionModel& model) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  const std::size_t h = cfg.hidden;
  BilinearTensor t(h, h, cfg.output);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < h; ++j) {
        for (std::size_t a = 0; a < cfg.rank1; ++a) {
          const double pa = p.proj1(idx(i), idx(b * cfg.rank1 + a));
          for (std::size_t c = 0; c < cfg.rank2; ++c) {
            const double pc = pa * p.proj2(idx(j), idx(b * cfg.rank2 + c));
            for (std::size_t e = 0; e < cfg.rank3; ++e) {
              const double w = pc * model.core(b, a, c, e);
              for (std::size_t k = 0; k < cfg.output; ++k) {
                t(i, j, k) += w * p.out_proj(idx(b * cfg.rank3 + e), idx(k));
              }
            }
          }
        }
      }
    }
  }
  return t;
}

VectorXd fuse(const BlockFusionModel& model, const VectorXd& entity_hidden,
              const VectorXd& context_hidden) {
  const auto h = idx(model.config().hidden);
  if (entity_hidden.size() != h || context_hidden.size() != h) {
    throw DataError("fuse: inputs must have the hidden width " + std::to_string(h));
  }
  Cache c;
  c.entity_hidden = entity_hidden.transpose();
  c.context_hidden = context_hidden.transpose();
  fusion_forward(model, c);
  return c.y.row(0).transpose();
}

std::array<double, kNumRoles> block_fusion_forward(const BlockFusionModel& model,
                                                   const VectorXd& entity, const VectorXd& context) {
  Cache c;
  full_forward(model, entity.transpose(), context.transpose(), std::nullopt, c);
  std::array<double, kNumRoles> probs{};
  for (std::size_t r = 0; r < kNumRoles; ++r) probs[r] = std::exp(c.log_probs(0, idx(r)));
  return probs;
}

Role argmax_role(const std::array<double, kNumRoles>& probabilities) {
  std::size_t best = 0;
  for (std::size_t r = 1; r < kNumRoles; ++r) {
    if (probabilities[r] > probabilities[best]) best = r;
  }
  return kAllRoles[best];
}

LossAndGrad loss_and_gradient(const BlockFusionModel& model, const MatrixXd& entities,
                              const MatrixXd& contexts, const std::vector<Role>& labels,
                              std::optional<std::uint64_t> dropout_seed) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  Cache c;
  full_forward(model, entities, contexts, dropout_seed, c);
  const Index n = entities.rows();
  check_labels(labels, n);
  if (n == 0) throw DataError("empty batch");

  LossAndGrad out;
  out.grad = p.zeros_like();
  Parameters& g = out.grad;

  // Softmax cross-entropy.
  MatrixXd d_logits = c.log_probs.array().exp();
  for (Index s = 0; s < n; ++s) {
    const Index y = idx(index(labels[static_cast<std::size_t>(s)]));
    out.loss -= c.log_probs(s, y);
    d_logits(s, y) -= 1.0;
  }
  out.loss /= static_cast<double>(n);
  d_logits /= static_cast<double>(n);

  g.head_weight.noalias() = c.y_dropped.transpose() * d_logits;
  g.head_bias = d_logits.colwise().sum().transpose();
  MatrixXd d_y = d_logits * p.head_weight.transpose();
  if (c.mask.size() != 0) d_y = d_y.cwiseProduct(c.mask);

  g.out_proj.noalias() = c.z.transpose() * d_y;
  const MatrixXd d_z = d_y * p.out_proj.transpose();

  const Index r1 = idx(cfg.rank1), r2 = idx(cfg.rank2), r3 = idx(cfg.rank3);
  MatrixXd d_u = MatrixXd::Zero(n, c.u.cols());
  MatrixXd d_v = MatrixXd::Zero(n, c.v.cols());
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const Index bi = idx(b);
    MatrixXd d_raw = d_z.middleCols(bi * r3, r3);
    if (cfg.normalize) {
      for (Index s = 0; s < n; ++s) {
        const VectorXd raw = c.raw[b].row(s).transpose();
        const VectorXd sq = raw.unaryExpr(&signed_sqrt);
        const double norm = std::max(sq.norm(), kNormFloor);
        const VectorXd normed = sq / norm;
        const VectorXd d_out = d_raw.row(s).transpose();
        VectorXd d_sq = (d_out - normed * normed.dot(d_out)) / norm;
        for (Index e = 0; e < r3; ++e) {
          d_sq(e) *= 0.5 / std::sqrt(std::abs(raw(e)) + kSqrtEps);
        }
        d_raw.row(s) = d_sq.transpose();
      }
    }
    g.cores[b].noalias() = c.outer[b].transpose() * d_raw;
    const RowMatrix d_outer = d_raw * p.cores[b].transpose();
    for (Index s = 0; s < n; ++s) {
      Eigen::Map<const RowMatrix> m(d_outer.row(s).data(), r1, r2);
      d_u.row(s).segment(bi * r1, r1) = (m * c.v.row(s).segment(bi * r2, r2).transpose()).transpose();
      d_v.row(s).segment(bi * r2, r2) = c.u.row(s).segment(bi * r1, r1) * m;
    }
  }

  g.proj1.noalias() = c.entity_hidden.transpose() * d_u;
  g.proj2.noalias() = c.context_hidden.transpose() * d_v;
  const MatrixXd d_entity_hidden = d_u * p.proj1.transpose();
  const MatrixXd d_context_hidden = d_v * p.proj2.transpose();
  g.entity_weight.noalias() = entities.transpose() * d_entity_hidden;
  g.entity_bias = d_entity_hidden.colwise().sum().transpose();
  g.context_weight.noalias() = c.context_in.transpose() * d_context_hidden;
  g.context_bias = d_context_hidden.colwise().sum().transpose();

  if (cfg.attention) {
    const auto attn = *model.attention();
    const MatrixXd d_context_in = d_context_hidden * p.context_weight.transpose();
    AttentionGrad ag{MatrixXd::Zero(p.attn_query.rows(), p.attn_query.cols()),
                     MatrixXd::Zero(p.attn_key.rows(), p.attn_key.cols()),
                     MatrixXd::Zero(p.attn_value.rows(), p.attn_value.cols())};
    for (Index s = 0; s < n; ++s) {
      attend_backward(attn, entities.row(s).transpose(), contexts.row(s).transpose(),
                      c.attention[static_cast<std::size_t>(s)], d_context_in.row(s).transpose(),
                      ag);
    }
    g.attn_query = std::move(ag.query);
    g.attn_key = std::move(ag.key);
    g.attn_value = std::move(ag.value);
  }
  return out;
}

double mean_loss(const BlockFusionModel& model, const MatrixXd& entities, const MatrixXd& contexts,
                 const std::vector<Role>& labels) {
  check_labels(labels, entities.rows());
  if (entities.rows() == 0) return 0.0;
  constexpr Index kChunk = 256;
  double total = 0.0;
  for (Index start = 0; start < entities.rows(); start += kChunk) {
    const Index len = std::min(kChunk, entities.rows() - start);
    Cache c;
    full_forward(model, entities.middleRows(start, len), contexts.middleRows(start, len),
                 std::nullopt, c);
    for (Index s = 0; s < len; ++s) {
      total -= c.log_probs(s, idx(index(labels[static_cast<std::size_t>(start + s)])));
    }
  }
  return total / static_cast<double>(entities.rows());
}

InputBatch resolve_inputs(const std::vector<EntityInstance>& instances, const FusionTables& tables,
                          Setting setting) {
  if (!tables.entity) throw DataError("entity embeddings are required");
  const bool need_text = setting != Setting::kEntityImage;
  const bool need_image = setting != Setting::kEntityText;
  if (need_text && !tables.text) {
    throw DataError("setting " + std::string(setting_name(setting)) + " requires text embeddings");
  }
  if (need_image && !tables.image) {
    throw DataError("setting " + std::string(setting_name(setting)) + " requires image embeddings");
  }
  std::size_t context_dim = 0;
  if (need_text) context_dim += tables.text->dim();
  if (need_image) context_dim += tables.image->dim();

  InputBatch batch;
  const auto n = idx(instances.size());
  batch.entities.resize(n, idx(tables.entity->dim()));
  batch.contexts.resize(n, idx(context_dim));
  for (Index s = 0; s < n; ++s) {
    const auto& inst = instances[static_cast<std::size_t>(s)];
    const Vector& e = tables.entity->lookup(inst.entity_name);
    batch.entities.row(s) = Eigen::Map<const VectorXd>(e.data(), idx(e.size())).transpose();
    Index col = 0;
    if (need_text) {
      const Vector& t = tables.text->lookup(inst.meme_id);
      batch.contexts.row(s).segment(col, idx(t.size())) =
          Eigen::Map<const VectorXd>(t.data(), idx(t.size())).transpose();
      col += idx(t.size());
    }
    if (need_image) {
      const Vector& im = tables.image->lookup(inst.source_id.empty() ? inst.meme_id : inst.source_id);
      batch.contexts.row(s).segment(col, idx(im.size())) =
          Eigen::Map<const VectorXd>(im.data(), idx(im.size())).transpose();
    }
    batch.labels.push_back(inst.role);
  }
  return batch;
}

TrainResult train_fusion(const TrainConfig& cfg, const InputBatch& data,
                         const EpochCallback& on_epoch) {
  cfg.validate();
  const Index n = data.entities.rows();
  if (n == 0) throw DataError("train_fusion needs at least one instance");
  check_labels(data.labels, n);
  TrainResult result{BlockFusionModel::create(cfg.block, static_cast<std::size_t>(data.entities.cols()),
                                              static_cast<std::size_t>(data.contexts.cols()),
                                              mix_seed(cfg.seed, 1)),
                     {}};
  BlockFusionModel& model = result.model;
  result.loss_trace.push_back(mean_loss(model, data.entities, data.contexts, data.labels));

  Rng order_rng(mix_seed(cfg.seed, 2));
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::uint64_t step = 0;
  const auto batch_size = idx(cfg.batch_size);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double total = 0.0;
    for (Index start = 0; start < n; start += batch_size) {
      const Index len = std::min(batch_size, n - start);
      MatrixXd e(len, data.entities.cols());
      MatrixXd c(len, data.contexts.cols());
      std::vector<Role> y;
      y.reserve(static_cast<std::size_t>(len));
      for (Index s = 0; s < len; ++s) {
        const Index row = order[static_cast<std::size_t>(start + s)];
        e.row(s) = data.entities.row(row);
        c.row(s) = data.contexts.row(row);
        y.push_back(data.labels[static_cast<std::size_t>(row)]);
      }
      LossAndGrad lg = loss_and_gradient(model, e, c, y, mix_seed(cfg.seed, 3, step++));
      if (!std::isfinite(lg.loss)) {
        throw NumericError("fusion training diverged in epoch " + std::to_string(epoch));
      }
      model.params().axpy(-cfg.learning_rate, lg.grad);
      total += lg.loss * static_cast<double>(len);
    }
    const double mean = total / static_cast<double>(n);
    if (!std::isfinite(mean) || !model.params().all_finite()) {
      throw NumericError("fusion training diverged in epoch " + std::to_string(epoch));
    }
    result.loss_trace.push_back(mean);
    if (on_epoch && !on_epoch(epoch, model)) break;
  }
  return result;
}

TrainResult train_fusion(const TrainConfig& cfg, const std::vector<EntityInstance>& instances,
                         const FusionTables& tables, const EpochCallback& on_epoch) {
  return train_fusion(cfg, resolve_inputs(instances, tables, cfg.setting), on_epoch);
}

std::vector<Role> predict_batch(const BlockFusionModel& model, const InputBatch& inputs) {
  std::vector<Role> out;
  out.reserve(static_cast<std::size_t>(inputs.entities.rows()));
  constexpr Index kChunk = 256;
  for (Index start = 0; start < inputs.entities.rows(); start += kChunk) {
    const Index len = std::min(kChunk, inputs.entities.rows() - start);
    Cache c;
    full_forward(model, inputs.entities.middleRows(start, len),
                 inputs.contexts.middleRows(start, len), std::nullopt, c);
    for (Index s = 0; s < len; ++s) {
      std::array<double, kNumRoles> probs{};
      for (std::size_t r = 0; r < kNumRoles; ++r) probs[r] = std::exp(c.log_probs(s, idx(r)));
      out.push_back(argmax_role(probs));
    }
  }
  return out;
}

Role predict(const BlockFusionModel& model, const EntityInstance& instance,
             const FusionTables& tables, Setting setting) {
  InputBatch in = resolve_inputs({instance}, tables, setting);
  return argmax_role(
      block_fusion_forward(model, in.entities.row(0).transpose(), in.contexts.row(0).transpose()));
}

double accuracy(const BlockFusionModel& model, const InputBatch& inputs) {
  if (inputs.labels.empty()) return 0.0;
  const auto pred = predict_batch(model, inputs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == inputs.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

void save_checkpoint(const std::filesystem::path& path, const BlockFusionModel& model,
                     const json& metadata) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
    out.write(kCheckpointMagic, 4);
    binary::put_uint<std::uint32_t>(out, kCheckpointVersion);
    binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(model.entity_dim()));
    binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(model.context_dim()));
    std::uint32_t count = 0;
    model.params().for_each([&](const Parameters::TensorView&) { ++count; });
    binary::put_uint<std::uint32_t>(out, count);
    model.params().for_each([&](const Parameters::TensorView& t) {
      binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
      out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows));
      binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols));
      for (Index i = 0; i < t.rows * t.cols; ++i) binary::put_f64(out, t.data[i]);
    });
    if (!out) throw DataError("write failure on checkpoint '" + path.string() + "'");
  }
  json meta = metadata.is_object() ? metadata : json::object();
  meta["format"] = "rolefuse-fusion";
  meta["version"] = kCheckpointVersion;
  meta["block"] = model.config();
  meta["entity_dim"] = model.entity_dim();
  meta["context_dim"] = model.context_dim();
  std::ofstream side(path.string() + ".json");
  if (!side) throw DataError("cannot write checkpoint metadata for '" + path.string() + "'");
  side << meta.dump(2) << '\n';
}

BlockFusionModel load_checkpoint(const std::filesystem::path& path, json* metadata) {
  json meta;
  {
    std::ifstream side(path.string() + ".json");
    if (!side) throw DataError("missing checkpoint metadata '" + path.string() + ".json'");
    try {
      meta = json::parse(side);
    } catch (const json::parse_error& e) {
      throw DataError("checkpoint metadata: " + std::string(e.what()));
    }
  }
  BlockConfig cfg;
  std::size_t entity_dim = 0;
  std::size_t context_dim = 0;
  try {
    cfg = meta.at("block").get<BlockConfig>();
    entity_dim = meta.at("entity_dim").get<std::size_t>();
    context_dim = meta.at("context_dim").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError("checkpoint metadata: " + std::string(e.what()));
  }
  BlockFusionModel model = BlockFusionModel::create(cfg, entity_dim, context_dim, 0);

  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kCheckpointMagic, 4)) {
    throw DataError("bad magic: not a fusion checkpoint");
  }
  if (binary::get_uint<std::uint32_t>(in, "version") != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version");
  }
  if (binary::get_uint<std::uint32_t>(in, "entity dim") != entity_dim ||
      binary::get_uint<std::uint32_t>(in, "context dim") != context_dim) {
    throw DataError("checkpoint dimensions disagree with metadata");
  }
  const auto count = binary::get_uint<std::uint32_t>(in, "tensor count");
  std::uint32_t seen = 0;
  model.params().for_each([&](const Parameters::TensorView& t) {
    if (seen++ >= count) throw DataError("checkpoint has too few tensors");
    const auto len = binary::get_uint<std::uint32_t>(in, "name length");
    const std::string name = binary::get_bytes(in, len, "tensor name");
    const auto rows = binary::get_uint<std::uint32_t>(in, "rows");
    const auto cols = binary::get_uint<std::uint32_t>(in, "cols");
    if (name != t.name || rows != t.rows || cols != t.cols) {
      throw DataError("checkpoint tensor '" + name + "' does not match the model layout");
    }
    for (Index i = 0; i < t.rows * t.cols; ++i) {
      t.data[i] = binary::get_f64(in, "tensor data");
      if (!std::isfinite(t.data[i])) throw DataError("non-finite value in checkpoint");
    }
  });
  if (seen != count) throw DataError("checkpoint tensor count mismatch");
  if (metadata) *metadata = std::move(meta);
  return model;
}

}  // namespace rolefuse::fusion
