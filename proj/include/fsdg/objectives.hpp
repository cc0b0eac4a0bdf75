#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsdg/featurespace.hpp"
#include "fsdg/hierarchy.hpp"

namespace fsdg {

/// Probabilities below this are clamped before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

struct EpsilonSchedule {
  enum class Kind { Constant, LinearRamp };
  Kind kind = Kind::LinearRamp;
  double value = 1.0;  // Constant
  double start = 0.0;  // LinearRamp
  double end = 1.0;
  double ramp_fraction = 0.5;

  static EpsilonSchedule constant(double c);
  static EpsilonSchedule linear_ramp(double start, double end, double ramp_fraction);

  /// "const:<c>" or "ramp:<start>,<end>,<fraction>".
  static EpsilonSchedule parse(std::string_view text);
  std::string to_string() const;
};

/// Mixture coefficient at a training progress in [0, 1], clamped to [0, 1].
double epsilon_at(const EpsilonSchedule& schedule, double progress);

enum class Mode { Fsdg, FgdgBaseline, FgdgLf };

Mode parse_mode(std::string_view name);
std::string_view mode_name(Mode m);

struct ObjectiveConfig {
  double lambda_cs = 0.05;
  double lambda_cd = 0.5;
  double lambda_p = 1.0;
  /// Weight on L_dec inside L_FS.
  double lambda_dec = 1.0;
  Metric metric = Metric::Cosine;
  EpsilonSchedule epsilon = EpsilonSchedule::linear_ramp(0.0, 1.0, 0.5);
  Mode mode = Mode::Fsdg;

  void validate() const;
};

/// Per-level branch outputs, level 0 (fine) first. Rows are logits unless
/// `post_softmax` is set.
struct BranchOutputs {
  std::vector<Matrix> logits;
  bool post_softmax = false;

  int levels() const { return static_cast<int>(logits.size()); }
  Matrix probabilities(int level) const;
};

Matrix softmax_rows(const Matrix& logits);

/// KL(eps * y_f + (1 - eps) * mean_g expand(p_g) || p_f), batch mean. The
/// coarse mixture is a fixed target; `grad_fine_logits` receives the
/// gradient w.r.t. fine logits.
double prediction_calibration(const BranchOutputs& outputs, std::span<const int> fine_labels,
                              const GranularityHierarchy& h, double epsilon,
                              Matrix* grad_fine_logits = nullptr);

/// Sum over coarse levels of batch-mean cross-entropy. `labels[g]` holds level-g
/// labels; level 0 is ignored. `grads` (if given) gets one matrix per level with
/// an empty entry at level 0.
double coarse_objective(const BranchOutputs& outputs, const std::vector<std::vector<int>>& labels,
                        std::vector<Matrix>* grads = nullptr);

/// eps * CE(p_f, y_f), batch mean: the finite reading of KL(eps y_f || p_f).
double scaled_fine_cross_entropy(const Matrix& fine_logits, std::span<const int> fine_labels, double epsilon,
                                 Matrix* grad_fine_logits = nullptr, bool post_softmax = false);

/// L_FS = lambda_dec * dec - lambda_cs * s_cs - lambda_cd * s_cd + lambda_p * s_p.
double fs_objective(double dec, double s_cs, double s_cd, double s_p, const ObjectiveConfig& cfg);

struct ObjectiveTerms {
  std::optional<double> coarse;       // L_c
  std::optional<double> calibration;  // L_lf
  std::optional<double> fs;           // L_FS
  std::optional<double> fine_scaled;  // eps * CE, baseline only
};

/// fsdg: L_c + L_lf + L_FS; fgdg_lf: L_c + L_lf; fgdg_baseline: L_c + eps CE.
double total_objective(Mode mode, const ObjectiveTerms& terms);

}  // namespace fsdg
