#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "rolefuse/attention.hpp"
#include "rolefuse/bilinear.hpp"
#include "rolefuse/dataset.hpp"
#include "rolefuse/embeddings.hpp"
#include "rolefuse/role.hpp"

namespace rolefuse::fusion {

/// Which embeddings form the context the entity is fused with.
enum class Setting { kEntityText, kEntityImage, kEntityTextImage };

std::string_view setting_name(Setting s);
std::optional<Setting> parse_setting(std::string_view name);

struct BlockConfig {
  std::size_t hidden = 512;  ///< width of the entity/context linear layers
  std::size_t blocks = 8;
  std::size_t rank1 = 64;
  std::size_t rank2 = 64;
  std::size_t rank3 = 32;
  std::size_t output = 256;  ///< fusion output size K
  double dropout = 0.1;
  /// Per-block signed square root followed by L2 normalization.
  bool normalize = false;
  bool attention = false;
  std::size_t slots = 8;
  std::size_t attention_dim = 64;

  void validate() const;
};

void to_json(nlohmann::json& j, const BlockConfig& c);
void from_json(const nlohmann::json& j, BlockConfig& c);

/// Trainable tensors. Also used as the gradient container.
struct Parameters {
  Eigen::MatrixXd entity_weight;   ///< entity_dim x hidden
  Eigen::VectorXd entity_bias;     ///< hidden
  Eigen::MatrixXd context_weight;  ///< context_in x hidden
  Eigen::VectorXd context_bias;    ///< hidden
  Eigen::MatrixXd proj1;           ///< hidden x (blocks * rank1)
  Eigen::MatrixXd proj2;           ///< hidden x (blocks * rank2)
  /// One (rank1 * rank2) x rank3 matrix per block; row a * rank2 + c holds
  /// core(a, c, :).
  std::vector<Eigen::MatrixXd> cores;
  Eigen::MatrixXd out_proj;     ///< (blocks * rank3) x output
  Eigen::MatrixXd head_weight;  ///< output x 4
  Eigen::VectorXd head_bias;    ///< 4
  Eigen::MatrixXd attn_query;   ///< entity_dim x attention_dim (attention only)
  Eigen::MatrixXd attn_key;     ///< slot_dim x attention_dim
  Eigen::MatrixXd attn_value;   ///< slot_dim x attention_dim

  /// Visits every non-empty tensor in a fixed order. Data is column-major.
  struct TensorView {
    std::string name;
    double* data;
    Eigen::Index rows;
    Eigen::Index cols;

    Eigen::Map<Eigen::VectorXd> flat() const { return {data, rows * cols}; }
  };
  void for_each(const std::function<void(const TensorView&)>& fn);
  void for_each(const std::function<void(const TensorView&)>& fn) const;

  Parameters zeros_like() const;
  void axpy(double alpha, Parameters& other);  // this += alpha * other
  bool all_finite() const;
};

class BlockFusionModel {
 public:
  /// Random Xavier-uniform initialization; head weights and all biases start
  /// at zero so the initial prediction is uniform.
  static BlockFusionModel create(const BlockConfig& config, std::size_t entity_dim,
                                 std::size_t context_dim, std::uint64_t seed);

  const BlockConfig& config() const { return config_; }
  std::size_t entity_dim() const { return entity_dim_; }
  std::size_t context_dim() const { return context_dim_; }

  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }

  std::optional<AttentionParams> attention() const;

  /// Element (a, c, e) of core `block`.
  double core(std::size_t block, std::size_t a, std::size_t c, std::size_t e) const;

 private:
  BlockConfig config_;
  std::size_t entity_dim_ = 0;
  std::size_t context_dim_ = 0;
  Parameters params_;
};

/// Materializes the decomposed interaction tensor (hidden x hidden x output).
/// Meant for small models.
BilinearTensor assemble_full_tensor(const BlockFusionModel& model);

/// Fusion sub-network only: hidden-space entity and context vectors to the
/// K-dimensional fused vector.
Eigen::VectorXd fuse(const BlockFusionModel& model, const Eigen::VectorXd& entity_hidden,
                     const Eigen::VectorXd& context_hidden);

/// Inference forward pass (dropout off). Returns role probabilities.
std::array<double, kNumRoles> block_fusion_forward(const BlockFusionModel& model,
                                                   const Eigen::VectorXd& entity,
                                                   const Eigen::VectorXd& context);

/// Argmax with ties going to the earlier role.
Role argmax_role(const std::array<double, kNumRoles>& probabilities);

/// Mean cross-entropy of a batch and its gradient. `dropout_seed` selects the
/// dropout mask; pass std::nullopt for inference mode.
struct LossAndGrad {
  double loss = 0.0;
  Parameters grad;
};

LossAndGrad loss_and_gradient(const BlockFusionModel& model, const Eigen::MatrixXd& entities,
                              const Eigen::MatrixXd& contexts, const std::vector<Role>& labels,
                              std::optional<std::uint64_t> dropout_seed);

double mean_loss(const BlockFusionModel& model, const Eigen::MatrixXd& entities,
                 const Eigen::MatrixXd& contexts, const std::vector<Role>& labels);

struct TrainConfig {
  double learning_rate = 1e-6;
  std::size_t batch_size = 8;
  std::size_t max_text_length = 512;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  Setting setting = Setting::kEntityText;
  BlockConfig block;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Embedding tables consulted per setting; unused ones may be null.
struct FusionTables {
  const EmbeddingTable* entity = nullptr;
  const EmbeddingTable* text = nullptr;
  const EmbeddingTable* image = nullptr;
};

/// Entity matrix (n x entity_dim) and context matrix (n x context_dim). Text
/// is looked up by meme id, images by source meme id, entities by name.
struct InputBatch {
  Eigen::MatrixXd entities;
  Eigen::MatrixXd contexts;
  std::vector<Role> labels;
};

InputBatch resolve_inputs(const std::vector<EntityInstance>& instances, const FusionTables& tables,
                          Setting setting);

struct TrainResult {
  BlockFusionModel model;
  /// Entry 0 is the mean loss at initialization; entry e the mean training
  /// loss of epoch e.
  std::vector<double> loss_trace;
};

/// Optional per-epoch hook: returning false stops training early.
using EpochCallback = std::function<bool(std::size_t epoch, const BlockFusionModel&)>;

TrainResult train_fusion(const TrainConfig& cfg, const InputBatch& data,
                         const EpochCallback& on_epoch = {});

TrainResult train_fusion(const TrainConfig& cfg, const std::vector<EntityInstance>& instances,
                         const FusionTables& tables, const EpochCallback& on_epoch = {});

Role predict(const BlockFusionModel& model, const EntityInstance& instance,
             const FusionTables& tables, Setting setting);

std::vector<Role> predict_batch(const BlockFusionModel& model, const InputBatch& inputs);

double accuracy(const BlockFusionModel& model, const InputBatch& inputs);

/// Binary checkpoint plus `<path>.json` metadata. `metadata` is merged into
/// the sidecar (config, loss trace, ...).
void save_checkpoint(const std::filesystem::path& path, const BlockFusionModel& model,
                     const nlohmann::json& metadata);
BlockFusionModel load_checkpoint(const std::filesystem::path& path,
                                 nlohmann::json* metadata = nullptr);

}  // namespace rolefuse::fusion
