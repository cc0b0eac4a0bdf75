#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fsdg/featurespace.hpp"
#include "fsdg/hierarchy.hpp"
#include "fsdg/layers.hpp"
#include "fsdg/objectives.hpp"
#include "fsdg/tensor.hpp"

namespace fsdg {

struct BackboneSpec {
  std::string name;
  int output_channels = 0;
  int output_height = 0;
  int output_width = 0;
  std::size_t parameter_count = 0;
};

/// Feature extractor interface. Implementations cache activations during a
/// training forward so that `backward` can run; inference forwards leave the
/// cache untouched.
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual BackboneSpec spec(int input_height, int input_width) = 0;
  virtual Tensor forward(const Tensor& images, bool train) = 0;
  /// Accumulates parameter gradients from dL/d(output).
  virtual void backward(const Tensor& grad_output) = 0;
  virtual void init(Rng& rng) = 0;
  virtual void collect(StateList& out, const std::string& prefix) = 0;
  virtual std::unique_ptr<Backbone> clone() const = 0;
};

/// Stack of conv3x3 + BN + ReLU stages; the first stage keeps resolution and
/// the rest halve it.
class SmallConvNet final : public Backbone {
 public:
  SmallConvNet(int in_channels, std::vector<int> widths);

  BackboneSpec spec(int input_height, int input_width) override;
  Tensor forward(const Tensor& images, bool train) override;
  void backward(const Tensor& grad_output) override;
  void init(Rng& rng) override;
  void collect(StateList& out, const std::string& prefix) override;
  std::unique_ptr<Backbone> clone() const override;

 private:
  struct Stage {
    Conv2d conv;
    BatchNorm2d bn;
    Relu relu;
  };
  int in_channels_;
  std::vector<int> widths_;
  std::vector<Stage> stages_;
};

/// Conv1x1 (C_out -> d) + BN + ReLU.
class TransitionLayer {
 public:
  TransitionLayer() = default;
  TransitionLayer(int in_channels, int out_channels);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& grad_out);
  void collect(StateList& out, const std::string& prefix);
  int out_channels() const { return d_; }

 private:
  int d_ = 0;
  Conv2d conv_;
  BatchNorm2d bn_;
  Relu relu_;
};

/// GAP followed by a linear classifier d -> K_g.
class BranchHead {
 public:
  BranchHead() = default;
  BranchHead(int in_features, int classes);

  void init(Rng& rng);
  Matrix forward(const Tensor& features, bool train);
  Tensor backward(const Matrix& grad_logits);
  void collect(StateList& out, const std::string& prefix);
  const Linear& classifier() const { return fc_; }
  /// Logits from already pooled features; no caching.
  Matrix classify_pooled(const Matrix& pooled);

 private:
  Linear fc_;
  int h_ = 0, w_ = 0;
};

enum class BackboneMode { Dual, Single };

std::string_view backbone_mode_name(BackboneMode m);
BackboneMode parse_backbone_mode(std::string_view name);

struct ModelConfig {
  std::vector<int> classes_per_level;          // K_0 first
  std::vector<int> widths{32, 64, 128, 256};   // backbone stage widths
  int feature_channels = 256;                  // d, transition output
  int in_channels = 3;
  int image_size = 32;
  BackboneMode mode = BackboneMode::Dual;

  int levels() const { return static_cast<int>(classes_per_level.size()); }
};

struct ForwardResult {
  std::vector<FeatureMap> features;  // F_g, level g
  BranchOutputs outputs;             // logits per level
};

class InferenceModel;

/// Full training model: backbone(s), G transition layers, G heads.
class Model {
 public:
  explicit Model(ModelConfig cfg);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  void init(std::uint64_t seed);
  const ModelConfig& config() const { return cfg_; }

  ForwardResult forward(const Tensor& images, bool train);
  /// Backpropagates from the last training forward. Either list may hold
  /// empty entries for levels without a gradient.
  void backward(const std::vector<FeatureMap>& grad_features, const std::vector<Matrix>& grad_logits);

  Matrix fine_logits(const Tensor& images);

  StateList state();
  void zero_grad();
  std::size_t parameter_count();
  std::uint64_t weights_hash();

  /// Fine backbone, T_0 and head 0 only.
  InferenceModel prune_to_fine() const;

 private:
  Backbone& backbone_for(int level);

  ModelConfig cfg_;
  std::unique_ptr<Backbone> fine_;
  std::unique_ptr<Backbone> coarse_;  // null in single mode
  std::vector<TransitionLayer> transitions_;
  std::vector<BranchHead> heads_;
  int feature_h_ = 0, feature_w_ = 0;
};

/// Deployed fine branch. Read-only: forward calls never touch caches, so it
/// is safe to share between threads.
class InferenceModel {
 public:
  InferenceModel(ModelConfig cfg, std::unique_ptr<Backbone> backbone, TransitionLayer transition, BranchHead head);
  InferenceModel(const InferenceModel& other);
  InferenceModel(InferenceModel&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }

  Matrix fine_logits(const Tensor& images) const;
  /// Fine logits and GAP of the T_0 output.
  std::pair<Matrix, Matrix> fine_logits_and_pooled(const Tensor& images) const;
  /// Only level 0 exists after pruning; other levels throw UnavailableBranch.
  Matrix logits(int level, const Tensor& images) const;

  const Linear& fine_classifier() const { return head_.classifier(); }
  StateList state();
  std::size_t parameter_count();

 private:
  ModelConfig cfg_;
  // Eval-mode forwards do not write layer caches; mutable only because the
  // layer interface is shared with training.
  mutable std::unique_ptr<Backbone> backbone_;
  mutable TransitionLayer transition_;
  mutable BranchHead head_;
};

FeatureMap to_feature_map(Tensor t, int level);
Tensor to_tensor(const FeatureMap& f, int h, int w);

struct CheckpointMeta {
  PartitionSpec partition;
  ObjectiveConfig objective;
  GranularityHierarchy hierarchy;
  std::uint64_t seed = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, Model& model, const CheckpointMeta& meta);
void save_checkpoint(const std::filesystem::path& path, InferenceModel& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::optional<Model> model;           // full checkpoints
  std::optional<InferenceModel> pruned; // always present after load

  InferenceModel& inference() { return *pruned; }
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fsdg
