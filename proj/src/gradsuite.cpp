#include "fsdg/gradsuite.hpp"

#include <algorithm>
#include <functional>

#include "fsdg/fs_losses.hpp"
#include "fsdg/hierarchy.hpp"
#include "fsdg/objectives.hpp"
#include "fsdg/tensor.hpp"
#include "fsdg/trainer.hpp"

namespace fsdg {

namespace {

struct Instance {
  int B, d, S, G;
  GranularityHierarchy h;
  PartitionSpec spec;
  std::vector<std::vector<int>> labels;  // [level][b]
  double epsilon;
};

GranularityHierarchy tree_8_4_2() {
  std::vector<std::vector<int>> rows;
  for (int f = 0; f < 8; ++f) rows.push_back({f, f / 2, f / 4});
  return GranularityHierarchy::from_rows(rows);
}

Instance make_instance(Rng& rng, Metric metric) {
  Instance in;
  in.B = 3 + rng.below(3);
  in.d = 6 + rng.below(7);
  // HSIC needs two paired samples per prototype row.
  in.S = metric == Metric::Hsic ? 2 + rng.below(8) : 1 + rng.below(9);
  in.h = tree_8_4_2();
  in.G = in.h.levels();
  in.spec = PartitionSpec::make(0.5, 0.3, 0.2, in.d);
  in.labels.assign(in.G, std::vector<int>(in.B));
  for (int b = 0; b < in.B; ++b) {
    // Pair samples into sibling groups so S_cd has parents with two sub-classes.
    const int f = (b % 2 == 0) ? rng.below(8) : (in.labels[0][b - 1] ^ 1);
    for (int g = 0; g < in.G; ++g) in.labels[g][b] = in.h.ancestor(f, g);
  }
  in.epsilon = rng.uniform();
  return in;
}

std::vector<double> normal_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

std::vector<FeatureMap> split_features(std::span<const double> x, const Instance& in) {
  const std::size_t per = static_cast<std::size_t>(in.B) * in.d * in.S;
  std::vector<FeatureMap> out;
  for (int g = 0; g < in.G; ++g) {
    out.emplace_back(in.B, in.d, in.S, std::vector<double>(x.begin() + g * per, x.begin() + (g + 1) * per), g);
  }
  return out;
}

BranchOutputs split_logits(std::span<const double> x, const Instance& in) {
  BranchOutputs o;
  std::size_t pos = 0;
  for (int g = 0; g < in.G; ++g) {
    const int K = in.h.num_classes(g);
    Matrix m(in.B, K);
    for (int b = 0; b < in.B; ++b) {
      for (int k = 0; k < K; ++k) m(b, k) = x[pos++];
    }
    o.logits.push_back(std::move(m));
  }
  return o;
}

std::size_t logit_count(const Instance& in) {
  std::size_t n = 0;
  for (int g = 0; g < in.G; ++g) n += static_cast<std::size_t>(in.B) * in.h.num_classes(g);
  return n;
}

void append(std::vector<double>& dst, std::span<const double> src) { dst.insert(dst.end(), src.begin(), src.end()); }

void append(std::vector<double>& dst, const Matrix& m, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) dst.push_back(m.size() ? m(r, c) : 0.0);
  }
}

using Builder = std::function<std::pair<LossFunction, std::vector<double>>(const Instance&, Rng&, Metric)>;

std::pair<LossFunction, std::vector<double>> dec_case(const Instance& in, Rng& rng, Metric metric) {
  const int B = in.B, S = in.S;
  LossFunction fn = [=](std::span<const double> x, std::vector<double>* grad) {
    FeatureMap p(B, 3, S, std::vector<double>(x.begin(), x.end()));
    FeatureMap gp(B, 3, S);
    const double v = decorrelation_loss(p, metric, grad ? &gp : nullptr);
    if (grad) grad->assign(gp.values().begin(), gp.values().end());
    return v;
  };
  return {fn, normal_vector(rng, static_cast<std::size_t>(B) * 3 * S)};
}

std::pair<LossFunction, std::vector<double>> scs_case(const Instance& in, Rng& rng, Metric) {
  LossFunction fn = [in](std::span<const double> x, std::vector<double>* grad) {
    const std::vector<FeatureMap> F = split_features(x, in);
    std::vector<FeatureMap> g;
    for (const FeatureMap& f : F) g.emplace_back(f.batch(), f.channels(), f.spatial());
    const double v = commonality_scale_similarity(partition(F[0], in.spec).common, partition(F[1], in.spec).common,
                                                  grad ? &g[0] : nullptr, grad ? &g[1] : nullptr);
    if (grad) {
      grad->clear();
      for (int l = 0; l < in.G; ++l) append(*grad, g[l].values());
    }
    return v;
  };
  return {fn, normal_vector(rng, static_cast<std::size_t>(in.G) * in.B * in.d * in.S)};
}

std::pair<LossFunction, std::vector<double>> scd_case(const Instance& in, Rng& rng, Metric metric) {
  LossFunction fn = [in, metric](std::span<const double> x, std::vector<double>* grad) {
    const FeatureMap F(in.B, in.d, in.S, std::vector<double>(x.begin(), x.end()));
    FeatureMap gF(in.B, in.d, in.S);
    const SegmentView common = partition(F, in.spec).common;
    const auto sets = common_subcentroids(common, group_by_parent(in.h, in.labels[0], 0));
    int valid = 0;
    for (const auto& [q, set] : sets) valid += set.centroids.rows() >= 2;
    double total = 0.0;
    for (const auto& [q, set] : sets) {
      if (set.centroids.rows() < 2) continue;
      Matrix gc;
      total += commonality_sibling_similarity(set, metric, grad ? &gc : nullptr) / valid;
      if (grad) {
        gc /= valid;
        centroids_backward(set, common, gc, gF);
      }
    }
    if (grad) grad->assign(gF.values().begin(), gF.values().end());
    return total;
  };
  return {fn, normal_vector(rng, static_cast<std::size_t>(in.B) * in.d * in.S)};
}

std::pair<LossFunction, std::vector<double>> sp_case(const Instance& in, Rng& rng, Metric metric) {
  LossFunction fn = [in, metric](std::span<const double> x, std::vector<double>* grad) {
    const FeatureMap F(in.B, in.d, in.S, std::vector<double>(x.begin(), x.end()));
    FeatureMap gF(in.B, in.d, in.S);
    const SegmentView specific = partition(F, in.spec).specific;
    const CentroidSet set = specificity_centroids(specific, in.labels[0], 0);
    Matrix gc;
    const double v = specificity_separation(set, metric, grad ? &gc : nullptr);
    if (grad) {
      centroids_backward(set, specific, gc, gF);
      grad->assign(gF.values().begin(), gF.values().end());
    }
    return v;
  };
  return {fn, normal_vector(rng, static_cast<std::size_t>(in.B) * in.d * in.S)};
}

std::pair<LossFunction, std::vector<double>> lf_case(const Instance& in, Rng& rng, Metric) {
  const BranchOutputs fixed = split_logits(normal_vector(rng, logit_count(in)), in);
  const int K0 = in.h.num_fine();
  LossFunction fn = [in, fixed, K0](std::span<const double> x, std::vector<double>* grad) {
    BranchOutputs o = fixed;
    for (int b = 0; b < in.B; ++b) {
      for (int k = 0; k < K0; ++k) o.logits[0](b, k) = x[b * K0 + k];
    }
    Matrix g;
    const double v = prediction_calibration(o, in.labels[0], in.h, in.epsilon, grad ? &g : nullptr);
    if (grad) {
      grad->clear();
      append(*grad, g, in.B, K0);
    }
    return v;
  };
  return {fn, normal_vector(rng, static_cast<std::size_t>(in.B) * K0)};
}

std::pair<LossFunction, std::vector<double>> lc_case(const Instance& in, Rng& rng, Metric) {
  LossFunction fn = [in](std::span<const double> x, std::vector<double>* grad) {
    const BranchOutputs o = split_logits(x, in);
    std::vector<Matrix> g;
    const double v = coarse_objective(o, in.labels, grad ? &g : nullptr);
    if (grad) {
      grad->clear();
      for (int l = 0; l < in.G; ++l) append(*grad, g[l], in.B, in.h.num_classes(l));
    }
    return v;
  };
  return {fn, normal_vector(rng, logit_count(in))};
}

ObjectiveConfig random_weights(Rng& rng, Metric metric, Mode mode) {
  ObjectiveConfig cfg;
  cfg.lambda_cs = rng.uniform(0.1, 1.0);
  cfg.lambda_cd = rng.uniform(0.1, 1.0);
  cfg.lambda_p = rng.uniform(0.1, 1.0);
  cfg.lambda_dec = rng.uniform(0.1, 1.0);
  cfg.metric = metric;
  cfg.mode = mode;
  return cfg;
}

std::pair<LossFunction, std::vector<double>> lfs_case(const Instance& in, Rng& rng, Metric metric) {
  const ObjectiveConfig cfg = random_weights(rng, metric, Mode::Fsdg);
  LossFunction fn = [in, cfg](std::span<const double> x, std::vector<double>* grad) {
    std::vector<FeatureMap> g;
    const StepLog s = fs_objective_terms(split_features(x, in), in.labels, in.h, in.spec, cfg, grad ? &g : nullptr);
    if (grad) {
      grad->clear();
      for (const FeatureMap& f : g) append(*grad, f.values());
    }
    return s.l_fs;
  };
  return {fn, normal_vector(rng, static_cast<std::size_t>(in.G) * in.B * in.d * in.S)};
}

std::pair<LossFunction, std::vector<double>> lfsdg_case(const Instance& in, Rng& rng, Metric metric) {
  const ObjectiveConfig cfg = random_weights(rng, metric, Mode::Fsdg);
  const std::size_t nf = static_cast<std::size_t>(in.G) * in.B * in.d * in.S;
  std::vector<double> x0 = normal_vector(rng, nf + logit_count(in));
  // The calibration target is a constant of the step: coarse logits enter
  // L_lf only through their values at the check point.
  const BranchOutputs target_source = split_logits(std::span<const double>(x0).subspan(nf), in);
  LossFunction fn = [in, cfg, nf, target_source](std::span<const double> x, std::vector<double>* grad) {
    const std::vector<FeatureMap> F = split_features(x.first(nf), in);
    const BranchOutputs o = split_logits(x.subspan(nf), in);
    if (!grad) {
      BranchOutputs mixed = target_source;
      mixed.logits[0] = o.logits[0];
      return coarse_objective(o, in.labels) + prediction_calibration(mixed, in.labels[0], in.h, in.epsilon) +
             fs_objective_terms(F, in.labels, in.h, in.spec, cfg).l_fs;
    }
    LossGradients g;
    const StepLog s = compute_objective(F, o, in.labels, in.h, in.spec, cfg, in.epsilon, &g);
    grad->clear();
    for (int l = 0; l < in.G; ++l) {
      if (g.features[l].batch() > 0) {
        append(*grad, g.features[l].values());
      } else {
        grad->insert(grad->end(), static_cast<std::size_t>(in.B) * in.d * in.S, 0.0);
      }
    }
    for (int l = 0; l < in.G; ++l) append(*grad, g.logits[l], in.B, in.h.num_classes(l));
    return s.total;
  };
  return {fn, std::move(x0)};
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(int instances, std::uint64_t seed, Metric metric) {
  const std::vector<std::pair<std::string, Builder>> cases = {
      {"L_dec", dec_case}, {"S_cs", scs_case}, {"S_cd", scd_case},  {"S_p", sp_case},
      {"L_lf", lf_case},   {"L_c", lc_case},   {"L_FS", lfs_case}, {"L_FSDG", lfsdg_case},
  };
  std::vector<GradSuiteEntry> out;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    GradSuiteEntry e;
    e.name = cases[c].first;
    for (int i = 0; i < instances; ++i) {
      Rng rng(derive_seed(seed, 1000 + c, static_cast<std::uint64_t>(i)));
      const Instance in = make_instance(rng, metric);
      auto [fn, x] = cases[c].second(in, rng, metric);
      e.max_relative_error = std::max(e.max_relative_error, gradient_check(fn, x).max_relative_error);
      ++e.instances;
    }
    e.passed = e.max_relative_error <= kGradTolerance;
    out.push_back(e);
  }
  return out;
}

}  // namespace fsdg
