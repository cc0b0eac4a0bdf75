#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fsdg/dataset.hpp"
#include "fsdg/featurespace.hpp"
#include "fsdg/hierarchy.hpp"
#include "fsdg/network.hpp"
#include "fsdg/objectives.hpp"

namespace fsdg {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double lr = 0.003;
  double momentum = 0.9;
  double head_lr_multiplier = 10.0;  // non-backbone parameter groups
  double lr_start = 1.0;
  double lr_end = 0.1;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool balanced_batches = false;
  PartitionSpec partition;
  ObjectiveConfig objective;  // carries the training mode
  ModelConfig model;          // classes_per_level is filled from the hierarchy

  Mode mode() const { return objective.mode; }
  /// Throws ConfigError.
  void validate() const;
};

/// Linear interpolation from 1 to 0.1 over training progress in [0, 1].
double lr_coefficient(double progress, double start = 1.0, double end = 0.1);

/// Scalars of one training step. Skipped terms hold 0 and set their flag.
struct StepLog {
  int step = 0;
  int epoch = 0;
  double l_c = 0, l_lf = 0, l_fine = 0, l_dec = 0, s_cs = 0, s_cd = 0, s_p = 0, l_fs = 0, total = 0;
  double epsilon = 0, lr_coef = 0;
  bool skipped_cd = false, skipped_p = false;
};

/// One JSON object per line with a key set fixed per mode. The FS similarity
/// columns appear for fsdg and fgdg_lf (monitoring only there), never for the
/// baseline.
void write_step_log(std::ostream& out, const std::vector<StepLog>& log, Mode mode);
std::string step_log_line(const StepLog& s, Mode mode);

/// L_dec, S_cs, S_cd, S_p (level averages) and L_FS weighted by `cfg`.
/// `grad`, when given, is resized and receives dL_FS/dF_g.
StepLog fs_objective_terms(const std::vector<FeatureMap>& features, const std::vector<std::vector<int>>& labels,
                           const GranularityHierarchy& h, const PartitionSpec& partition, const ObjectiveConfig& cfg,
                           std::vector<FeatureMap>* grad = nullptr);

struct LossGradients {
  std::vector<FeatureMap> features;  // dL/dF_g
  std::vector<Matrix> logits;        // dL/d logits_g
};

/// Every objective term of one batch, with gradients of the mode's total
/// when `grads` is given. FS terms are evaluated whenever the mode is not
/// the baseline; they enter the total only in fsdg mode.
StepLog compute_objective(const std::vector<FeatureMap>& features, const BranchOutputs& outputs,
                          const std::vector<std::vector<int>>& labels, const GranularityHierarchy& h,
                          const PartitionSpec& partition, const ObjectiveConfig& cfg, double epsilon,
                          LossGradients* grads = nullptr);

struct TrainResult {
  Model model;
  std::vector<StepLog> log;
};

using StepCallback = std::function<void(const StepLog&)>;

/// Algorithm-1 training with one combined backward pass per batch.
/// Throws EmptyDataset, NonFiniteLoss, ConfigError.
TrainResult train(const TrainConfig& config, const Dataset& data, const GranularityHierarchy& h,
                  const StepCallback& on_step = {});

/// Mini-batch order for one epoch.
std::vector<std::vector<int>> epoch_batches(const Dataset& data, const GranularityHierarchy& h, int batch_size,
                                            bool balanced, Rng& rng);

struct EvalResult {
  int samples = 0;
  double fine_accuracy = 0.0;
  std::vector<double> level_accuracy;  // only when coarse branches exist
  std::vector<int> predictions;
};

/// Throws ClassCountMismatch if the data has labels the fine head cannot emit.
EvalResult evaluate(const InferenceModel& model, const Dataset& data, int batch_size = 64);
EvalResult evaluate(Model& model, const Dataset& data, int batch_size = 64);

enum class Coefficient { Cs, Cd, P };

std::string_view coefficient_name(Coefficient c);
Coefficient parse_coefficient(std::string_view name);

struct GridRun {
  int index = 0;
  Coefficient stage = Coefficient::Cs;
  double lambda_cs = 0, lambda_cd = 0, lambda_p = 0;
  double score = 0;
};

struct GridSearchResult {
  ObjectiveConfig best;
  std::vector<GridRun> table;
};

/// Score of one configuration, e.g. validation accuracy after training.
using GridRunner = std::function<double(const ObjectiveConfig&)>;

/// Sweeps each coefficient in `order` with the later ones held at 0, fixing
/// the best value (ties go to the smaller value) before the next stage.
/// Throws EmptySearchSpace.
GridSearchResult progressive_grid_search(const ObjectiveConfig& base, std::span<const double> space,
                                         const GridRunner& runner,
                                         std::vector<Coefficient> order = {Coefficient::Cs, Coefficient::Cd,
                                                                           Coefficient::P});

void write_grid_table(std::ostream& out, const std::vector<GridRun>& table);
/// Throws DataError.
std::vector<GridRun> read_grid_table(std::istream& in);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Returns the loss and writes dL/dx into `grad` when non-null.
using LossFunction = std::function<double(std::span<const double> x, std::vector<double>* grad)>;

/// Central differences per coordinate, relative error with denominator
/// max(|a|, |n|, 1e-8). Throws NonFiniteGradient.
GradCheckResult gradient_check(const LossFunction& fn, std::vector<double> x, double step = 1e-4);

}  // namespace fsdg
