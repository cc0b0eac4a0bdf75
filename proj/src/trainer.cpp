#include "fsdg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include "fsdg/error.hpp"
#include "fsdg/format.hpp"
#include "fsdg/fs_losses.hpp"
#include "fsdg/serialization.hpp"

namespace fsdg {

namespace {

constexpr std::uint64_t kEpochStream = 3;

void add_scaled(FeatureMap& dst, const FeatureMap& src, double scale) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

struct FsWeights {
  double dec = 0, cs = 0, cd = 0, p = 0;
  bool any() const { return dec != 0.0 || cs != 0.0 || cd != 0.0 || p != 0.0; }
};

/// L_dec, S_cs, S_cd, S_p averaged over levels; weighted gradients of L_FS
/// are accumulated into `grad` when it is non-null.
void fs_terms(const std::vector<FeatureMap>& F, const std::vector<std::vector<int>>& labels,
              const GranularityHierarchy& h, const PartitionSpec& spec, Metric metric, const FsWeights& w,
              StepLog& log, std::vector<FeatureMap>* grad) {
  const int G = static_cast<int>(F.size());
  const int B = F[0].batch();

  // Decorrelation over every branch.
  log.l_dec = 0.0;
  for (int g = 0; g < G; ++g) {
    const FeatureMap protos = segment_prototypes(F[g], spec);
    FeatureMap gp(protos.batch(), protos.channels(), protos.spatial());
    log.l_dec += decorrelation_loss(protos, metric, grad && w.dec != 0.0 ? &gp : nullptr) / G;
    if (grad && w.dec != 0.0) {
      for (double& v : gp.values()) v *= w.dec / G;
      segment_prototypes_backward(gp, spec, (*grad)[g]);
    }
  }

  // Cross-granularity commonality over adjacent pairs.
  log.s_cs = 0.0;
  for (int g = 0; g + 1 < G; ++g) {
    const PartitionedFeatures a = partition(F[g], spec);
    const PartitionedFeatures b = partition(F[g + 1], spec);
    if (grad && w.cs != 0.0) {
      FeatureMap ga(B, spec.d, F[g].spatial()), gb(B, spec.d, F[g].spatial());
      log.s_cs += commonality_scale_similarity(a.common, b.common, &ga, &gb) / (G - 1);
      add_scaled((*grad)[g], ga, -w.cs / (G - 1));
      add_scaled((*grad)[g + 1], gb, -w.cs / (G - 1));
    } else {
      log.s_cs += commonality_scale_similarity(a.common, b.common) / (G - 1);
    }
  }

  // Sibling sub-centroids: mean over parents with two or more sampled
  // sub-classes, then over levels that have at least one such parent.
  struct Pending {
    int level;
    CentroidSet set;
    Matrix grad;
  };
  std::vector<Pending> pending;
  std::vector<int> parents_per_level(G, 0);
  std::vector<double> level_sum(G, 0.0);
  for (int g = 0; g + 1 < G; ++g) {
    const PartitionedFeatures pf = partition(F[g], spec);
    const Grouping grouping = group_by_parent(h, labels[0], g);
    for (auto& [parent, set] : common_subcentroids(pf.common, grouping)) {
      if (set.centroids.rows() < 2) continue;
      Matrix gc;
      level_sum[g] += commonality_sibling_similarity(set, metric, grad && w.cd != 0.0 ? &gc : nullptr);
      ++parents_per_level[g];
      pending.push_back({g, std::move(set), std::move(gc)});
    }
  }
  int cd_levels = 0;
  for (int g = 0; g + 1 < G; ++g) cd_levels += parents_per_level[g] > 0;
  log.s_cd = 0.0;
  log.skipped_cd = cd_levels == 0;
  for (int g = 0; g + 1 < G; ++g) {
    if (parents_per_level[g] > 0) log.s_cd += level_sum[g] / parents_per_level[g] / cd_levels;
  }
  if (grad && w.cd != 0.0) {
    for (Pending& p : pending) {
      p.grad *= -w.cd / (static_cast<double>(parents_per_level[p.level]) * cd_levels);
      centroids_backward(p.set, partition(F[p.level], spec).common, p.grad, (*grad)[p.level]);
    }
  }

  // Specificity separation per level with two or more sampled classes.
  log.s_p = 0.0;
  std::vector<std::pair<int, CentroidSet>> sets;
  std::vector<Matrix> sgrads;
  for (int g = 0; g < G; ++g) {
    const PartitionedFeatures pf = partition(F[g], spec);
    CentroidSet cs = specificity_centroids(pf.specific, labels[g], g);
    if (cs.centroids.rows() < 2) continue;
    Matrix gc;
    log.s_p += specificity_separation(cs, metric, grad && w.p != 0.0 ? &gc : nullptr);
    sets.emplace_back(g, std::move(cs));
    sgrads.push_back(std::move(gc));
  }
  const int p_levels = static_cast<int>(sets.size());
  log.skipped_p = p_levels == 0;
  if (p_levels > 0) log.s_p /= p_levels;
  if (grad && w.p != 0.0) {
    for (int i = 0; i < p_levels; ++i) {
      sgrads[i] *= w.p / p_levels;
      const int g = sets[i].first;
      centroids_backward(sets[i].second, partition(F[g], spec).specific, sgrads[i], (*grad)[g]);
    }
  }
}

std::vector<int> gather_labels(const std::vector<int>& labels, std::span<const int> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(labels[i]);
  return out;
}

int argmax_row(const Matrix& m, Eigen::Index r) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c) {
    if (m(r, c) > m(r, best)) best = c;
  }
  return static_cast<int>(best);
}

void check_fine_labels(const Dataset& data, int classes) {
  if (data.levels() < 1) fail(ErrorCode::ClassCountMismatch, "dataset carries no labels");
  for (int y : data.fine_labels()) {
    if (y < 0 || y >= classes) {
      fail(ErrorCode::ClassCountMismatch, "label " + std::to_string(y) + " outside the fine head's " +
                                              std::to_string(classes) + " classes");
    }
  }
}

std::vector<int> range_batch(int begin, int end) {
  std::vector<int> idx;
  for (int i = begin; i < end; ++i) idx.push_back(i);
  return idx;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorCode::ConfigError, "epochs must be at least 1");
  if (batch_size < 2) fail(ErrorCode::ConfigError, "batch size must be at least 2");
  if (!(lr > 0.0)) fail(ErrorCode::ConfigError, "learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) fail(ErrorCode::ConfigError, "momentum must lie in [0, 1)");
  if (!(head_lr_multiplier > 0.0)) fail(ErrorCode::ConfigError, "lr multiplier must be positive");
  if (!(lr_start > 0.0) || !(lr_end > 0.0)) fail(ErrorCode::ConfigError, "lr coefficients must be positive");
  if (weight_decay < 0.0) fail(ErrorCode::ConfigError, "weight decay must be non-negative");
  if (partition.d != model.feature_channels) {
    fail(ErrorCode::ConfigError, "partition width " + std::to_string(partition.d) +
                                     " differs from feature channels " + std::to_string(model.feature_channels));
  }
  objective.validate();
}

double lr_coefficient(double progress, double start, double end) {
  const double p = std::clamp(progress, 0.0, 1.0);
  return start + (end - start) * p;
}

std::string step_log_line(const StepLog& s, Mode mode) {
  Json j;
  j["step"] = s.step;
  j["epoch"] = s.epoch;
  j["L_c"] = s.l_c;
  if (mode == Mode::FgdgBaseline) {
    j["L_fine"] = s.l_fine;
  } else {
    j["L_lf"] = s.l_lf;
    j["L_dec"] = s.l_dec;
    j["S_cs"] = s.s_cs;
    j["S_cd"] = s.s_cd;
    j["S_p"] = s.s_p;
    if (mode == Mode::Fsdg) j["L_FS"] = s.l_fs;
  }
  j["total"] = s.total;
  j["epsilon"] = s.epsilon;
  j["lr_coef"] = s.lr_coef;
  if (mode != Mode::FgdgBaseline) {
    j["skipped_S_cd"] = s.skipped_cd;
    j["skipped_S_p"] = s.skipped_p;
  }
  return j.dump();
}

void write_step_log(std::ostream& out, const std::vector<StepLog>& log, Mode mode) {
  for (const StepLog& s : log) out << step_log_line(s, mode) << '\n';
}

StepLog fs_objective_terms(const std::vector<FeatureMap>& features, const std::vector<std::vector<int>>& labels,
                           const GranularityHierarchy& h, const PartitionSpec& partition_spec,
                           const ObjectiveConfig& cfg, std::vector<FeatureMap>* grad) {
  if (features.empty() || static_cast<int>(features.size()) != h.levels() ||
      static_cast<int>(labels.size()) != h.levels()) {
    fail(ErrorCode::ShapeMismatch, "FS inputs must cover all " + std::to_string(h.levels()) + " levels");
  }
  StepLog log;
  if (grad) {
    grad->clear();
    for (const FeatureMap& f : features) grad->emplace_back(f.batch(), f.channels(), f.spatial(), f.level());
  }
  fs_terms(features, labels, h, partition_spec, cfg.metric, {cfg.lambda_dec, cfg.lambda_cs, cfg.lambda_cd, cfg.lambda_p},
           log, grad);
  log.l_fs = fs_objective(log.l_dec, log.s_cs, log.s_cd, log.s_p, cfg);
  return log;
}

StepLog compute_objective(const std::vector<FeatureMap>& features, const BranchOutputs& outputs,
                          const std::vector<std::vector<int>>& labels, const GranularityHierarchy& h,
                          const PartitionSpec& partition_spec, const ObjectiveConfig& cfg, double epsilon,
                          LossGradients* grads) {
  const int G = h.levels();
  if (static_cast<int>(features.size()) != G || outputs.levels() != G || static_cast<int>(labels.size()) != G) {
    fail(ErrorCode::ShapeMismatch, "objective inputs must cover all " + std::to_string(G) + " levels");
  }
  StepLog log;
  log.epsilon = epsilon;
  if (grads) {
    grads->logits.assign(G, Matrix());
    grads->features.assign(G, FeatureMap());
  }

  ObjectiveTerms terms;
  std::vector<Matrix> coarse_grads;
  log.l_c = coarse_objective(outputs, labels, grads ? &coarse_grads : nullptr);
  terms.coarse = log.l_c;
  if (grads) {
    for (int g = 1; g < G; ++g) grads->logits[g] = std::move(coarse_grads[g]);
  }

  Matrix fine_grad;
  if (cfg.mode == Mode::FgdgBaseline) {
    log.l_fine = scaled_fine_cross_entropy(outputs.logits[0], labels[0], epsilon, grads ? &fine_grad : nullptr,
                                           outputs.post_softmax);
    terms.fine_scaled = log.l_fine;
  } else {
    log.l_lf = prediction_calibration(outputs, labels[0], h, epsilon, grads ? &fine_grad : nullptr);
    terms.calibration = log.l_lf;

    FsWeights w;
    if (cfg.mode == Mode::Fsdg) w = {cfg.lambda_dec, cfg.lambda_cs, cfg.lambda_cd, cfg.lambda_p};
    std::vector<FeatureMap>* fgrad = nullptr;
    if (grads && w.any()) {
      for (int g = 0; g < G; ++g) {
        grads->features[g] = FeatureMap(features[g].batch(), features[g].channels(), features[g].spatial(), g);
      }
      fgrad = &grads->features;
    }
    fs_terms(features, labels, h, partition_spec, cfg.metric, w, log, fgrad);
    if (cfg.mode == Mode::Fsdg) {
      log.l_fs = fs_objective(log.l_dec, log.s_cs, log.s_cd, log.s_p, cfg);
      terms.fs = log.l_fs;
    }
  }
  if (grads) grads->logits[0] = std::move(fine_grad);
  log.total = total_objective(cfg.mode, terms);
  return log;
}

std::vector<std::vector<int>> epoch_batches(const Dataset& data, const GranularityHierarchy& h, int batch_size,
                                            bool balanced, Rng& rng) {
  const int N = data.size();
  std::vector<int> order;
  if (!balanced) {
    order = range_batch(0, N);
    rng.shuffle(order);
  } else {
    // Round-robin over fine classes, siblings adjacent, so every batch
    // spans whole sibling groups.
    const int K0 = h.num_fine();
    std::vector<std::vector<int>> per_class(K0);
    for (int i = 0; i < N; ++i) per_class[data.fine_labels()[i]].push_back(i);
    for (auto& q : per_class) rng.shuffle(q);
    std::map<int, std::vector<int>> by_parent;
    for (int f = 0; f < K0; ++f) by_parent[h.levels() > 1 ? h.parent(0, f) : 0].push_back(f);
    std::vector<std::vector<int>> groups;
    for (auto& [p, kids] : by_parent) {
      rng.shuffle(kids);
      groups.push_back(kids);
    }
    rng.shuffle(groups);
    std::vector<int> classes;
    for (const auto& grp : groups) classes.insert(classes.end(), grp.begin(), grp.end());
    std::vector<std::size_t> pos(K0, 0);
    bool any = true;
    while (any) {
      any = false;
      for (int f : classes) {
        if (pos[f] < per_class[f].size()) {
          order.push_back(per_class[f][pos[f]++]);
          any = true;
        }
      }
    }
  }
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < N; start += batch_size) {
    const int end = std::min(N, start + batch_size);
    if (end - start < 2) break;
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

TrainResult train(const TrainConfig& config_in, const Dataset& data, const GranularityHierarchy& h,
                  const StepCallback& on_step) {
  TrainConfig config = config_in;
  config.model.classes_per_level = h.classes_per_level();
  config.validate();
  if (data.size() == 0) fail(ErrorCode::EmptyDataset, "training set is empty");
  if (data.size() < 2) fail(ErrorCode::EmptyDataset, "training needs at least two samples");
  data.validate(h);
  if (data.images.c != config.model.in_channels || data.images.h != config.model.image_size ||
      data.images.w != config.model.image_size) {
    fail(ErrorCode::ConfigError, "image shape does not match the model configuration");
  }
  if (h.levels() < 2 && config.mode() != Mode::FgdgBaseline) {
    fail(ErrorCode::SingleLevelHierarchy, "calibrated modes need at least two levels");
  }

  TrainResult result{Model(config.model), {}};
  Model& model = result.model;
  model.init(config.seed);
  StateList state = model.state();

  const int N = data.size();
  const int per_epoch = N / config.batch_size + (N % config.batch_size >= 2 ? 1 : 0);
  const int total_steps = per_epoch * config.epochs;
  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, kEpochStream, static_cast<std::uint64_t>(epoch)));
    for (const std::vector<int>& idx : epoch_batches(data, h, config.batch_size, config.balanced_batches, rng)) {
      const double progress = static_cast<double>(step) / total_steps;
      const double eps = epsilon_at(config.objective.epsilon, progress);
      const double coef = lr_coefficient(progress, config.lr_start, config.lr_end);

      const Tensor images = data.images.gather(idx);
      std::vector<std::vector<int>> labels;
      for (int g = 0; g < h.levels(); ++g) labels.push_back(gather_labels(data.labels[g], idx));

      model.zero_grad();
      ForwardResult fr = model.forward(images, true);
      LossGradients grads;
      StepLog log;
      try {
        log = compute_objective(fr.features, fr.outputs, labels, h, config.partition, config.objective, eps, &grads);
      } catch (const Error& e) {
        // Collapsed features make the similarity terms 0/0; report it as a
        // non-finite loss of this step.
        if (e.code() != ErrorCode::ZeroVector && e.code() != ErrorCode::DegenerateBandwidth) throw;
        std::ostringstream msg;
        msg << "loss undefined at step " << step << " (epoch " << epoch << "), " << error_name(e.code()) << ": "
            << e.what() << "; last finite step: "
            << (result.log.empty() ? std::string("none") : step_log_line(result.log.back(), config.mode()));
        fail(ErrorCode::NonFiniteLoss, msg.str());
      }
      log.step = step;
      log.epoch = epoch;
      log.lr_coef = coef;
      if (!std::isfinite(log.total)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << step << " (epoch " << epoch << "): "
            << step_log_line(log, config.mode());
        fail(ErrorCode::NonFiniteLoss, msg.str());
      }
      model.backward(grads.features, grads.logits);

      for (StateEntry& e : state) {
        if (!e.parameter) continue;
        Parameter& p = *e.parameter;
        const double lr = config.lr * coef * (e.backbone ? 1.0 : config.head_lr_multiplier);
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double g = p.grad[i] + config.weight_decay * p.value[i];
          p.velocity[i] = config.momentum * p.velocity[i] + g;
          p.value[i] -= lr * p.velocity[i];
        }
      }
      result.log.push_back(log);
      if (on_step) on_step(log);
      ++step;
    }
  }
  return result;
}

EvalResult evaluate(const InferenceModel& model, const Dataset& data, int batch_size) {
  check_fine_labels(data, model.config().classes_per_level.at(0));
  EvalResult r;
  r.samples = data.size();
  int correct = 0;
  for (int start = 0; start < data.size(); start += batch_size) {
    const std::vector<int> idx = range_batch(start, std::min(data.size(), start + batch_size));
    const Matrix logits = model.fine_logits(data.images.gather(idx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const int pred = argmax_row(logits, static_cast<Eigen::Index>(i));
      r.predictions.push_back(pred);
      correct += pred == data.fine_labels()[idx[i]];
    }
  }
  r.fine_accuracy = r.samples ? static_cast<double>(correct) / r.samples : 0.0;
  return r;
}

EvalResult evaluate(Model& model, const Dataset& data, int batch_size) {
  const ModelConfig& cfg = model.config();
  check_fine_labels(data, cfg.classes_per_level.at(0));
  const bool levels = data.levels() == cfg.levels() && cfg.levels() > 1;
  EvalResult r;
  r.samples = data.size();
  std::vector<int> correct(cfg.levels(), 0);
  for (int start = 0; start < data.size(); start += batch_size) {
    const std::vector<int> idx = range_batch(start, std::min(data.size(), start + batch_size));
    const ForwardResult fr = model.forward(data.images.gather(idx), false);
    for (int g = 0; g < (levels ? cfg.levels() : 1); ++g) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const int pred = argmax_row(fr.outputs.logits[g], static_cast<Eigen::Index>(i));
        if (g == 0) r.predictions.push_back(pred);
        correct[g] += pred == data.labels[g][idx[i]];
      }
    }
  }
  const double n = r.samples ? r.samples : 1;
  r.fine_accuracy = correct[0] / n;
  if (levels) {
    for (int g = 0; g < cfg.levels(); ++g) r.level_accuracy.push_back(correct[g] / n);
  }
  return r;
}

std::string_view coefficient_name(Coefficient c) {
  switch (c) {
    case Coefficient::Cs: return "lambda_cs";
    case Coefficient::Cd: return "lambda_cd";
    case Coefficient::P: return "lambda_p";
  }
  return "";
}

Coefficient parse_coefficient(std::string_view name) {
  if (name == "lambda_cs" || name == "cs") return Coefficient::Cs;
  if (name == "lambda_cd" || name == "cd") return Coefficient::Cd;
  if (name == "lambda_p" || name == "p") return Coefficient::P;
  fail(ErrorCode::ConfigError, "unknown coefficient '" + std::string(name) + "'");
}

GridSearchResult progressive_grid_search(const ObjectiveConfig& base, std::span<const double> space,
                                         const GridRunner& runner, std::vector<Coefficient> order) {
  if (space.empty()) fail(ErrorCode::EmptySearchSpace, "search space is empty");
  for (double v : space) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorCode::ConfigError, "search values must be finite and >= 0");
  }
  std::vector<Coefficient> seen = order;
  std::sort(seen.begin(), seen.end());
  if (seen.size() != 3 || std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    fail(ErrorCode::ConfigError, "search order must name each coefficient exactly once");
  }
  auto slot = [](ObjectiveConfig& c, Coefficient k) -> double& {
    switch (k) {
      case Coefficient::Cs: return c.lambda_cs;
      case Coefficient::Cd: return c.lambda_cd;
      default: return c.lambda_p;
    }
  };

  GridSearchResult result;
  result.best = base;
  for (Coefficient k : order) slot(result.best, k) = 0.0;
  for (Coefficient k : order) {
    double best_value = 0.0, best_score = 0.0;
    bool have = false;
    for (double v : space) {
      ObjectiveConfig trial = result.best;
      slot(trial, k) = v;
      const double score = runner(trial);
      result.table.push_back({static_cast<int>(result.table.size()), k, trial.lambda_cs, trial.lambda_cd,
                              trial.lambda_p, score});
      if (!have || score > best_score || (score == best_score && v < best_value)) {
        best_value = v;
        best_score = score;
        have = true;
      }
    }
    slot(result.best, k) = best_value;
  }
  return result;
}

void write_grid_table(std::ostream& out, const std::vector<GridRun>& table) {
  out << "run,stage,lambda_cs,lambda_cd,lambda_p,score\n";
  for (const GridRun& r : table) {
    out << r.index << ',' << coefficient_name(r.stage) << ',' << format_double(r.lambda_cs) << ','
        << format_double(r.lambda_cd) << ',' << format_double(r.lambda_p) << ',' << format_double(r.score) << '\n';
  }
}

std::vector<GridRun> read_grid_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "run,stage,lambda_cs,lambda_cd,lambda_p,score") {
    fail(ErrorCode::DataError, "unexpected grid table header");
  }
  std::vector<GridRun> table;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) fail(ErrorCode::DataError, "grid table row needs 6 fields");
    GridRun r;
    r.index = static_cast<int>(parse_double(cells[0]));
    r.stage = parse_coefficient(cells[1]);
    r.lambda_cs = parse_double(cells[2]);
    r.lambda_cd = parse_double(cells[3]);
    r.lambda_p = parse_double(cells[4]);
    r.score = parse_double(cells[5]);
    table.push_back(r);
  }
  return table;
}

GradCheckResult gradient_check(const LossFunction& fn, std::vector<double> x, double step) {
  std::vector<double> analytic;
  const double f0 = fn(x, &analytic);
  if (!std::isfinite(f0)) fail(ErrorCode::NonFiniteGradient, "loss is not finite at the check point");
  if (analytic.size() != x.size()) fail(ErrorCode::ShapeMismatch, "gradient size differs from input size");
  GradCheckResult r;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double fp = fn(x, nullptr);
    x[i] = saved - step;
    const double fm = fn(x, nullptr);
    x[i] = saved;
    const double numeric = (fp - fm) / (2.0 * step);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
      fail(ErrorCode::NonFiniteGradient, "non-finite gradient at coordinate " + std::to_string(i));
    }
    const double err =
        std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    if (i == 0 || err > r.max_relative_error) {
      r.max_relative_error = err;
      r.worst_index = i;
      r.analytic = analytic[i];
      r.numeric = numeric;
    }
  }
  return r;
}

}  // namespace fsdg
