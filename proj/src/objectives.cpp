#include "fsdg/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "fsdg/error.hpp"

namespace fsdg {

EpsilonSchedule EpsilonSchedule::constant(double c) {
  EpsilonSchedule s;
  s.kind = Kind::Constant;
  s.value = c;
  return s;
}

EpsilonSchedule EpsilonSchedule::linear_ramp(double start, double end, double ramp_fraction) {
  if (!(ramp_fraction > 0.0 && ramp_fraction <= 1.0)) {
    fail(ErrorCode::ConfigError, "epsilon ramp fraction must lie in (0, 1]");
  }
  EpsilonSchedule s;
  s.kind = Kind::LinearRamp;
  s.start = start;
  s.end = end;
  s.ramp_fraction = ramp_fraction;
  return s;
}

EpsilonSchedule EpsilonSchedule::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) fail(ErrorCode::ConfigError, "epsilon schedule must be const:<c> or ramp:<a>,<b>,<f>");
  const std::string kind(text.substr(0, colon));
  std::string rest(text.substr(colon + 1));
  std::replace(rest.begin(), rest.end(), ',', ' ');
  std::istringstream ss(rest);
  std::vector<double> v;
  double x;
  while (ss >> x) v.push_back(x);
  if (!ss.eof()) fail(ErrorCode::ConfigError, "bad epsilon schedule '" + std::string(text) + "'");
  if (kind == "const" && v.size() == 1) return constant(v[0]);
  if (kind == "ramp" && v.size() == 3) return linear_ramp(v[0], v[1], v[2]);
  fail(ErrorCode::ConfigError, "bad epsilon schedule '" + std::string(text) + "'");
}

std::string EpsilonSchedule::to_string() const {
  std::ostringstream ss;
  ss.precision(17);
  if (kind == Kind::Constant) ss << "const:" << value;
  else ss << "ramp:" << start << "," << end << "," << ramp_fraction;
  return ss.str();
}

double epsilon_at(const EpsilonSchedule& schedule, double progress) {
  progress = std::clamp(progress, 0.0, 1.0);
  double eps = schedule.value;
  if (schedule.kind == EpsilonSchedule::Kind::LinearRamp) {
    eps = schedule.start + (schedule.end - schedule.start) * std::min(1.0, progress / schedule.ramp_fraction);
  }
  return std::clamp(eps, 0.0, 1.0);
}

Mode parse_mode(std::string_view name) {
  if (name == "fsdg") return Mode::Fsdg;
  if (name == "fgdg_baseline") return Mode::FgdgBaseline;
  if (name == "fgdg_lf") return Mode::FgdgLf;
  fail(ErrorCode::ConfigError, "unknown mode '" + std::string(name) + "'");
}

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::Fsdg: return "fsdg";
    case Mode::FgdgBaseline: return "fgdg_baseline";
    case Mode::FgdgLf: return "fgdg_lf";
  }
  return "?";
}

void ObjectiveConfig::validate() const {
  for (double l : {lambda_cs, lambda_cd, lambda_p, lambda_dec}) {
    if (!(l >= 0.0) || !std::isfinite(l)) fail(ErrorCode::ConfigError, "loss coefficients must be non-negative");
  }
  if (epsilon.kind == EpsilonSchedule::Kind::LinearRamp &&
      !(epsilon.ramp_fraction > 0.0 && epsilon.ramp_fraction <= 1.0)) {
    fail(ErrorCode::ConfigError, "epsilon ramp fraction must lie in (0, 1]");
  }
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      p(i, k) = std::exp(logits(i, k) - mx);
      sum += p(i, k);
    }
    p.row(i) /= sum;
  }
  return p;
}

Matrix BranchOutputs::probabilities(int level) const {
  if (level < 0 || level >= levels()) fail(ErrorCode::InvalidLevel, "no branch output at level " + std::to_string(level));
  if (!post_softmax) return softmax_rows(logits[level]);
  const Matrix& p = logits[level];
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (std::abs(p.row(i).sum() - 1.0) > 1e-6 || p.row(i).minCoeff() < 0.0) {
      fail(ErrorCode::NotADistribution, "post-softmax branch row is not a distribution");
    }
  }
  return p;
}

namespace {

void check_labels(std::span<const int> labels, Eigen::Index rows, Eigen::Index classes) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    fail(ErrorCode::BatchMismatch, "one label per batch row required");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) fail(ErrorCode::LabelOutOfRange, "label " + std::to_string(y) + " out of range");
  }
}

}  // namespace

double prediction_calibration(const BranchOutputs& outputs, std::span<const int> fine_labels,
                              const GranularityHierarchy& h, double epsilon, Matrix* grad_fine_logits) {
  if (h.levels() < 2 || outputs.levels() < 2) {
    fail(ErrorCode::SingleLevelHierarchy, "prediction calibration needs at least one coarse level");
  }
  if (outputs.levels() != h.levels()) fail(ErrorCode::DimensionMismatch, "one branch output per hierarchy level");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) fail(ErrorCode::ConfigError, "epsilon must lie in [0, 1]");
  if (grad_fine_logits && outputs.post_softmax) {
    fail(ErrorCode::MissingComponent, "logit gradient requested for post-softmax outputs");
  }
  const Matrix p_fine = outputs.probabilities(0);
  const Eigen::Index B = p_fine.rows();
  const Eigen::Index K = p_fine.cols();
  if (K != h.num_fine()) fail(ErrorCode::DimensionMismatch, "fine branch width differs from K_0");
  check_labels(fine_labels, B, K);

  // Target: eps * onehot + (1 - eps) * mean of expanded coarse distributions.
  Matrix target = Matrix::Zero(B, K);
  const int coarse_levels = h.levels() - 1;
  for (int g = 1; g < h.levels(); ++g) {
    const Matrix p = outputs.probabilities(g);
    if (p.cols() != h.num_classes(g)) fail(ErrorCode::DimensionMismatch, "coarse branch width differs from K_g");
    if (p.rows() != B) fail(ErrorCode::BatchMismatch, "branch batch sizes differ");
    for (Eigen::Index b = 0; b < B; ++b) {
      std::vector<double> row(p.row(b).data(), p.row(b).data() + p.cols());
      const auto fine = expand_coarse_distribution(h, row, g);
      for (Eigen::Index k = 0; k < K; ++k) target(b, k) += (1.0 - epsilon) * fine[k] / coarse_levels;
    }
  }
  for (Eigen::Index b = 0; b < B; ++b) target(b, fine_labels[b]) += epsilon;

  if (grad_fine_logits) grad_fine_logits->setZero(B, K);
  double total = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    double kl = 0.0;
    double unfloored_mass = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double t = target(b, k);
      const double q = p_fine(b, k);
      const bool floored = q < kProbabilityFloor;
      if (t > 0.0) kl += t * (std::log(t) - std::log(floored ? kProbabilityFloor : q));
      if (!floored) unfloored_mass += t;
    }
    total += kl;
    if (grad_fine_logits) {
      // d/dz_j of -sum_k t_k log p_k over unclamped k.
      for (Eigen::Index j = 0; j < K; ++j) {
        const bool floored = p_fine(b, j) < kProbabilityFloor;
        (*grad_fine_logits)(b, j) = (p_fine(b, j) * unfloored_mass - (floored ? 0.0 : target(b, j))) / B;
      }
    }
  }
  return total / B;
}

double coarse_objective(const BranchOutputs& outputs, const std::vector<std::vector<int>>& labels,
                        std::vector<Matrix>* grads) {
  if (outputs.levels() < 2) fail(ErrorCode::SingleLevelHierarchy, "coarse objective needs G >= 2");
  if (static_cast<int>(labels.size()) < outputs.levels()) {
    fail(ErrorCode::MissingComponent, "coarse labels missing for some level");
  }
  if (grads) {
    grads->assign(outputs.levels(), Matrix());
  }
  double total = 0.0;
  for (int g = 1; g < outputs.levels(); ++g) {
    Matrix grad;
    total += scaled_fine_cross_entropy(outputs.logits[g], labels[g], 1.0, grads ? &grad : nullptr,
                                       outputs.post_softmax);
    if (grads) (*grads)[g] = std::move(grad);
  }
  return total;
}

double scaled_fine_cross_entropy(const Matrix& logits, std::span<const int> labels, double epsilon,
                                 Matrix* grad_logits, bool post_softmax) {
  if (grad_logits && post_softmax) fail(ErrorCode::MissingComponent, "logit gradient requested for probabilities");
  const Matrix p = post_softmax ? logits : softmax_rows(logits);
  const Eigen::Index B = p.rows();
  check_labels(labels, B, p.cols());
  if (B == 0) fail(ErrorCode::EmptyDataset, "cross-entropy over an empty batch");
  double total = 0.0;
  if (grad_logits) grad_logits->setZero(B, p.cols());
  for (Eigen::Index b = 0; b < B; ++b) {
    const double q = p(b, labels[b]);
    const bool floored = q < kProbabilityFloor;
    total -= std::log(floored ? kProbabilityFloor : q);
    if (grad_logits && !floored) {
      grad_logits->row(b) = p.row(b) * (epsilon / B);
      (*grad_logits)(b, labels[b]) -= epsilon / B;
    }
  }
  return epsilon * total / B;
}

double fs_objective(double dec, double s_cs, double s_cd, double s_p, const ObjectiveConfig& cfg) {
  for (double v : {dec, s_cs, s_cd, s_p}) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFiniteLoss, "non-finite structuralization term");
  }
  return cfg.lambda_dec * dec - cfg.lambda_cs * s_cs - cfg.lambda_cd * s_cd + cfg.lambda_p * s_p;
}

double total_objective(Mode mode, const ObjectiveTerms& t) {
  auto need = [](const std::optional<double>& v, const char* name) {
    if (!v) fail(ErrorCode::MissingComponent, std::string("objective term missing: ") + name);
    return *v;
  };
  switch (mode) {
    case Mode::Fsdg:
      return need(t.coarse, "L_c") + need(t.calibration, "L_lf") + need(t.fs, "L_FS");
    case Mode::FgdgLf:
      return need(t.coarse, "L_c") + need(t.calibration, "L_lf");
    case Mode::FgdgBaseline:
      return need(t.coarse, "L_c") + need(t.fine_scaled, "eps * CE");
  }
  return 0.0;
}

}  // namespace fsdg
