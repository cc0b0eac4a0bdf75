#include "fsdg/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include "fsdg/config.hpp"
#include "fsdg/error.hpp"
#include "fsdg/explain.hpp"
#include "fsdg/format.hpp"
#include "fsdg/gradsuite.hpp"
#include "fsdg/hash.hpp"
#include "fsdg/manifest.hpp"
#include "fsdg/network.hpp"
#include "fsdg/serialization.hpp"
#include "fsdg/synthdata.hpp"
#include "fsdg/trainer.hpp"

namespace fs = std::filesystem;

namespace fsdg {

namespace {

/// `--ratios r_c:r_p:r_n`, normalised to sum to 1.
void set_ratios(Config& c, std::string text) {
  std::replace(text.begin(), text.end(), ':', ' ');
  std::stringstream ss(text);
  double a = 0, b = 0, n = 0;
  if (!(ss >> a >> b >> n) || a < 0 || b < 0 || n < 0 || a + b + n <= 0) {
    fail(ErrorCode::ConfigError, "--ratios expects r_c:r_p:r_n");
  }
  const double sum = a + b + n;
  c.set("partition.r_c", format_double(a / sum));
  c.set("partition.r_p", format_double(b / sum));
  c.set("partition.r_n", format_double(n / sum));
}

/// Options shared by every subcommand plus flag -> config-key bindings.
struct Invocation {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::vector<std::string> assignments;
  std::vector<std::pair<std::string, std::string>> flags;  // key, value
  std::vector<std::unique_ptr<std::string>> slots;
  std::vector<std::pair<std::string, CLI::Option*>> bound;

  void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    slots.push_back(std::make_unique<std::string>());
    bound.emplace_back(key, app->add_option(flag, *slots.back(), help));
  }

  Config resolve() {
    Config c = Config::defaults();
    if (!config_path.empty()) c.merge(Config::load(config_path));
    for (const std::string& a : assignments) c.set_assignment(a);
    for (std::size_t i = 0; i < bound.size(); ++i) {
      if (bound[i].second->count() == 0) continue;
      if (bound[i].first == "partition.ratios") {
        set_ratios(c, *slots[i]);
      } else {
        c.set(bound[i].first, *slots[i]);
      }
    }
    if (seed) c.set("seed", std::to_string(*seed));
    return c;
  }
};

void add_common(CLI::App* app, Invocation& inv) {
  app->add_option("--config", inv.config_path, "key = value config file, or a run.json to replay");
  app->add_option("--seed", inv.seed, "random seed");
  app->add_option("--out-dir", inv.out_dir, "output directory");
  app->add_option("--set", inv.assignments, "override a config key (key=value), repeatable");
}

std::string require(const Config& c, const std::string& key) {
  const std::string v = c.get(key);
  if (v.empty()) fail(ErrorCode::ConfigError, key + " is required");
  return v;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + p.string());
  return out;
}

std::uint64_t dataset_digest(const Dataset& d) {
  Fnv1a h;
  h.update_span(std::span<const double>(d.images.data));
  for (const auto& level : d.labels) h.update_span(std::span<const int>(level));
  for (const std::string& s : d.domains) h.update(s);
  return h.digest();
}

/// run.json: resolved config, seed, input digests and the artifacts written.
class RunRecord {
 public:
  RunRecord(std::string command, const Config& c) : command_(std::move(command)), config_(c) {}

  void input(const std::string& name, const fs::path& path) {
    inputs_[name] = {{"path", path.string()}, {"fnv1a", hex_digest(hash_file(path))}};
  }
  void digest(const std::string& name, std::uint64_t value) { inputs_[name] = {{"fnv1a", hex_digest(value)}}; }
  void output(const std::string& name) { outputs_.push_back(name); }
  void result(const std::string& key, Json v) { results_[key] = std::move(v); }

  void write(const fs::path& dir) const {
    Json j;
    j["command"] = command_;
    j["seed"] = config_.get_u64("seed");
    Json cfg = Json::object();
    for (const auto& [k, v] : config_.entries()) cfg[k] = v;
    j["config"] = cfg;
    j["inputs"] = inputs_.empty() ? Json::object() : inputs_;
    j["outputs"] = outputs_;
    if (!results_.empty()) j["results"] = results_;
    open_out(dir / "run.json") << j.dump(2) << '\n';
  }

 private:
  std::string command_;
  Config config_;
  Json inputs_ = Json::object();
  std::vector<std::string> outputs_;
  Json results_ = Json::object();
};

Dataset select_domains(const LoadedDataset& data, const std::vector<std::string>& domains) {
  if (domains.empty()) return data.data;
  std::vector<int> keep;
  for (int i = 0; i < data.data.size(); ++i) {
    if (std::find(domains.begin(), domains.end(), data.data.domains[i]) != domains.end()) keep.push_back(i);
  }
  for (const std::string& d : domains) {
    if (std::find(data.domains.begin(), data.domains.end(), d) == data.domains.end()) {
      fail(ErrorCode::DataError, "manifest has no domain '" + d + "'");
    }
  }
  return data.data.subset(keep);
}

std::vector<std::string> train_domains(const Config& c, const LoadedDataset& data) {
  std::vector<std::string> d = c.get_list("data.train_domains");
  if (d.empty() && !data.domains.empty()) d.push_back(data.domains.front());
  return d;
}

CheckpointMeta meta_for(const TrainConfig& t, const GranularityHierarchy& h) {
  return {t.partition, t.objective, h, t.seed};
}

// ---------------------------------------------------------------- commands

int cmd_gen_synth(const Config& c, const fs::path& dir, std::ostream& out) {
  const SynthSpec spec = synth_spec_from(c);
  const SynthData data = generate(spec);
  fs::create_directories(dir);
  save_hierarchy(dir / "hierarchy.txt", data.hierarchy);
  DatasetManifest m;
  m.hierarchy_path = "hierarchy.txt";
  for (std::size_t d = 0; d < data.domains.size(); ++d) {
    const Dataset& ds = data.domains[d];
    const fs::path sub = fs::path("images") / spec.domains[d].name;
    fs::create_directories(dir / sub);
    for (int i = 0; i < ds.size(); ++i) {
      const int f = ds.labels[0][i];
      const std::string name = "c" + std::to_string(f) + "_" + std::to_string(i % spec.samples_per_class) + ".ppm";
      write_ppm((dir / sub / name).string(), ds.images, i);
      ManifestRecord r{(sub / name).generic_string(), spec.domains[d].name, {}};
      for (int g = 0; g < data.hierarchy.levels(); ++g) r.labels.push_back(ds.labels[g][i]);
      m.records.push_back(std::move(r));
    }
  }
  save_manifest(dir / "manifest.csv", m, data.hierarchy.levels());
  RunRecord rec("gen-synth", c);
  rec.output("hierarchy.txt");
  rec.output("manifest.csv");
  rec.output("images/");
  rec.result("images", m.records.size());
  rec.write(dir);
  out << "wrote " << m.records.size() << " images in " << spec.domains.size() << " domains to " << dir.string()
      << '\n';
  return 0;
}

int cmd_train(const Config& c, const fs::path& dir, std::ostream& out) {
  const fs::path manifest = require(c, "data.manifest");
  const LoadedDataset data = load_dataset(manifest);
  const Dataset train_set = select_domains(data, train_domains(c, data));
  TrainConfig t = train_config_from(c);
  t.model.image_size = train_set.images.h;
  t.model.in_channels = train_set.images.c;
  fs::create_directories(dir);

  std::ofstream log = open_out(dir / "steplog.jsonl");
  const int per_epoch = std::max(1, train_set.size() / t.batch_size);
  double epoch_total = 0.0;
  int epoch_steps = 0;
  TrainResult r = train(t, train_set, data.hierarchy, [&](const StepLog& s) {
    log << step_log_line(s, t.mode()) << '\n';
    epoch_total += s.total;
    ++epoch_steps;
    if (epoch_steps >= per_epoch) {
      out << "epoch " << s.epoch << " mean_loss " << format_double(epoch_total / epoch_steps) << '\n';
      epoch_total = 0.0;
      epoch_steps = 0;
    }
  });
  log.close();

  save_checkpoint(dir / "model.ckpt", r.model, meta_for(t, data.hierarchy));
  InferenceModel fine = r.model.prune_to_fine();
  save_checkpoint(dir / "model_fine.ckpt", fine, meta_for(t, data.hierarchy));

  RunRecord rec("train", c);
  rec.input("data.manifest", manifest);
  rec.digest("dataset", dataset_digest(train_set));
  rec.output("model.ckpt");
  rec.output("model_fine.ckpt");
  rec.output("steplog.jsonl");
  rec.result("steps", r.log.size());
  rec.result("weights_fnv1a", hex_digest(r.model.weights_hash()));
  rec.write(dir);
  out << "trained " << r.log.size() << " steps, weights " << hex_digest(r.model.weights_hash()) << '\n';
  return 0;
}

int cmd_eval(const Config& c, const fs::path& dir, std::ostream& out) {
  const fs::path ckpt = require(c, "eval.checkpoint");
  const fs::path manifest = require(c, "data.manifest");
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const LoadedDataset data = load_dataset(manifest);
  if (!(data.hierarchy == loaded.meta.hierarchy)) {
    fail(ErrorCode::ClassCountMismatch, "dataset hierarchy differs from the checkpoint's");
  }
  std::vector<std::string> domains = c.get_list("data.eval_domains");
  if (domains.empty()) domains = data.domains;
  const int levels = loaded.model ? data.hierarchy.levels() : 1;
  std::vector<EvalRow> rows;
  for (const std::string& d : domains) {
    const Dataset subset = select_domains(data, {d});
    const EvalResult e = loaded.model ? evaluate(*loaded.model, subset) : evaluate(loaded.inference(), subset);
    EvalRow row{d, e.samples, e.fine_accuracy, {}};
    for (std::size_t g = 1; g < e.level_accuracy.size(); ++g) row.level_accuracy.push_back(e.level_accuracy[g]);
    out << d << ": fine accuracy " << format_double(e.fine_accuracy) << " (" << e.samples << " samples)\n";
    rows.push_back(std::move(row));
  }
  fs::create_directories(dir);
  {
    std::ofstream csv = open_out(dir / "eval.csv");
    write_eval_csv(csv, rows, levels);
  }
  RunRecord rec("eval", c);
  rec.input("eval.checkpoint", ckpt);
  rec.input("data.manifest", manifest);
  rec.output("eval.csv");
  rec.write(dir);
  return 0;
}

int cmd_gridsearch(const Config& c, const fs::path& dir, std::ostream& out) {
  const fs::path manifest = require(c, "data.manifest");
  const LoadedDataset data = load_dataset(manifest);
  const Dataset train_set = select_domains(data, train_domains(c, data));
  const Dataset val_set = select_domains(data, {require(c, "data.val_domain")});
  TrainConfig t = train_config_from(c);
  t.model.image_size = train_set.images.h;
  t.model.in_channels = train_set.images.c;
  if (t.mode() != Mode::Fsdg) fail(ErrorCode::ConfigError, "grid search tunes fsdg coefficients; set objective.mode = fsdg");
  std::vector<Coefficient> order;
  for (const std::string& s : c.get_list("grid.order")) order.push_back(parse_coefficient(s));
  const std::vector<double> space = c.get_double_list("grid.space");

  int run = 0;
  const GridSearchResult res = progressive_grid_search(
      t.objective, space,
      [&](const ObjectiveConfig& obj) {
        TrainConfig trial = t;
        trial.objective = obj;
        TrainResult r = train(trial, train_set, data.hierarchy);
        const double acc = evaluate(r.model, val_set).fine_accuracy;
        out << "run " << run++ << " lambda_cs=" << format_double(obj.lambda_cs)
            << " lambda_cd=" << format_double(obj.lambda_cd) << " lambda_p=" << format_double(obj.lambda_p)
            << " val_acc=" << format_double(acc) << '\n';
        return acc;
      },
      order);

  fs::create_directories(dir);
  {
    std::ofstream csv = open_out(dir / "grid.csv");
    write_grid_table(csv, res.table);
  }
  {
    std::ofstream best = open_out(dir / "best.cfg");
    best << "objective.lambda_cs = " << format_double(res.best.lambda_cs) << '\n'
         << "objective.lambda_cd = " << format_double(res.best.lambda_cd) << '\n'
         << "objective.lambda_p = " << format_double(res.best.lambda_p) << '\n';
  }
  RunRecord rec("gridsearch", c);
  rec.input("data.manifest", manifest);
  rec.output("grid.csv");
  rec.output("best.cfg");
  rec.result("runs", res.table.size());
  rec.write(dir);
  out << "best lambda_cs=" << format_double(res.best.lambda_cs) << " lambda_cd=" << format_double(res.best.lambda_cd)
      << " lambda_p=" << format_double(res.best.lambda_p) << '\n';
  return 0;
}

std::vector<int> class_list(const Config& c, const std::string& key, int num_fine) {
  std::vector<int> classes = c.get_int_list(key);
  if (classes.empty()) {
    classes.resize(num_fine);
    std::iota(classes.begin(), classes.end(), 0);
  }
  return classes;
}

int cmd_explain(const Config& c, const fs::path& dir, std::ostream& out) {
  const fs::path ckpt = require(c, "explain.checkpoint");
  const fs::path manifest = require(c, "data.manifest");
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const LoadedDataset data = load_dataset(manifest);
  if (!(data.hierarchy == loaded.meta.hierarchy)) {
    fail(ErrorCode::ClassCountMismatch, "dataset hierarchy differs from the checkpoint's");
  }
  const Dataset subset = select_domains(data, c.get_list("data.eval_domains"));
  const int top_k = c.get_int("explain.top_k");
  const PartitionSpec& spec = loaded.meta.partition;
  const ConceptRelevanceTable table = compute_relevance(loaded.inference(), subset, c.get_int("explain.records"));
  const std::vector<int> classes = class_list(c, "explain.classes", data.hierarchy.num_fine());

  fs::create_directories(dir);
  {
    std::ofstream rel = open_out(dir / "relevance.jsonl");
    write_relevance_jsonl(rel, table);
  }
  const std::pair<const char*, std::optional<Segment>> views[] = {{"overlap_all.csv", std::nullopt},
                                                                  {"overlap_common.csv", Segment::Common},
                                                                  {"overlap_specific.csv", Segment::Specific},
                                                                  {"overlap_confounding.csv", Segment::Confounding}};
  OverlapMatrix all;
  for (const auto& [name, seg] : views) {
    const OverlapMatrix m = overlap_matrix(table, classes, top_k, seg, spec);
    if (!seg) all = m;
    std::ofstream csv = open_out(dir / name);
    write_matrix_csv(csv, classes, m.values);
  }
  const auto gt = ground_truth_matrix(data.hierarchy, classes);
  {
    std::ofstream csv = open_out(dir / "ground_truth.csv");
    write_matrix_csv(csv, classes, gt);
  }
  const std::vector<OverlapStats> stats = segment_overlap_stats(table, classes, top_k, spec);
  {
    std::ofstream csv = open_out(dir / "stats.csv");
    write_stats_csv(csv, stats);
  }
  double mean_all = 0, mean_com = 0, mean_ratio = 0;
  for (const OverlapStats& s : stats) {
    mean_all += s.all;
    mean_com += s.com;
    mean_ratio += s.ratio_com;
  }
  mean_all /= stats.size();
  mean_com /= stats.size();
  mean_ratio /= stats.size();
  const double rho = classes.size() >= 3 ? spearman(all.values, gt) : 0.0;
  Json summary = {{"classes", classes.size()}, {"top_k", top_k},           {"spearman", rho},
                  {"mean_all", mean_all},      {"mean_com", mean_com},     {"mean_ratio_com", mean_ratio}};
  open_out(dir / "summary.json") << summary.dump(2) << '\n';

  RunRecord rec("explain", c);
  rec.input("explain.checkpoint", ckpt);
  rec.input("data.manifest", manifest);
  for (const auto& [name, seg] : views) rec.output(name);
  rec.output("relevance.jsonl");
  rec.output("ground_truth.csv");
  rec.output("stats.csv");
  rec.output("summary.json");
  rec.write(dir);
  out << "spearman " << format_double(rho) << " mean_all " << format_double(mean_all) << " mean_com "
      << format_double(mean_com) << " mean_ratio_com " << format_double(mean_ratio) << '\n';
  return 0;
}

int cmd_sclass(const Config& c, const fs::path& dir, std::ostream& out) {
  const fs::path hpath = require(c, "sclass.hierarchy");
  const GranularityHierarchy h = load_hierarchy(hpath);
  const std::vector<int> classes = class_list(c, "sclass.classes", h.num_fine());
  const auto m = ground_truth_matrix(h, classes);
  fs::create_directories(dir);
  {
    std::ofstream csv = open_out(dir / "sclass.csv");
    write_matrix_csv(csv, classes, m);
  }
  write_matrix_csv(out, classes, m);
  RunRecord rec("sclass", c);
  rec.input("sclass.hierarchy", hpath);
  rec.output("sclass.csv");
  rec.write(dir);
  return 0;
}

int cmd_gradcheck(const Config& c, const fs::path& dir, std::ostream& out, std::ostream& err) {
  const int instances = c.get_int("gradcheck.instances");
  if (instances < 1) fail(ErrorCode::ConfigError, "gradcheck.instances must be positive");
  fs::create_directories(dir);
  std::ofstream csv = open_out(dir / "gradcheck.csv");
  csv << "metric,term,instances,max_relative_error,passed\n";
  bool ok = true;
  std::string first_failure;
  for (const std::string& name : c.get_list("gradcheck.metrics")) {
    const Metric metric = parse_metric(name);
    for (const GradSuiteEntry& e : run_gradient_suite(instances, c.get_u64("seed"), metric)) {
      csv << name << ',' << e.name << ',' << e.instances << ',' << format_double(e.max_relative_error) << ','
          << (e.passed ? "true" : "false") << '\n';
      out << (e.passed ? "PASS " : "FAIL ") << name << ' ' << e.name << " max_rel_err "
          << format_double(e.max_relative_error) << '\n';
      if (!e.passed && ok) first_failure = name + " " + e.name;
      ok = ok && e.passed;
    }
  }
  csv.close();
  RunRecord rec("gradcheck", c);
  rec.output("gradcheck.csv");
  rec.result("passed", ok);
  rec.write(dir);
  if (!ok) {
    err << "error: GradientCheckFailed: " << first_failure << " exceeds relative error " << kGradTolerance << '\n';
    return 4;
  }
  return 0;
}

std::string one_line(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

}  // namespace

void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows, int levels) {
  out << "domain,samples,fine_accuracy";
  for (int g = 1; g < levels; ++g) out << ",y" << g << "_accuracy";
  out << '\n';
  for (const EvalRow& r : rows) {
    out << r.domain << ',' << r.samples << ',' << format_double(r.fine_accuracy);
    for (double a : r.level_accuracy) out << ',' << format_double(a);
    out << '\n';
  }
}

std::vector<EvalRow> read_eval_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("domain,samples,fine_accuracy", 0) != 0) {
    fail(ErrorCode::DataError, "unexpected eval CSV header");
  }
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<EvalRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns) fail(ErrorCode::DataError, "eval CSV row has the wrong number of fields");
    EvalRow r;
    r.domain = cells[0];
    r.samples = static_cast<int>(parse_double(cells[1]));
    r.fine_accuracy = parse_double(cells[2]);
    for (std::size_t i = 3; i < cells.size(); ++i) r.level_accuracy.push_back(parse_double(cells[i]));
    rows.push_back(std::move(r));
  }
  return rows;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fine-grained domain generalization with feature structuralization"};
  app.require_subcommand(1);
  Invocation inv;

  CLI::App* gen = app.add_subcommand("gen-synth", "generate the synthetic hierarchical dataset");
  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  CLI::App* eval = app.add_subcommand("eval", "fine-grained accuracy per domain");
  CLI::App* grid = app.add_subcommand("gridsearch", "progressive coefficient search");
  CLI::App* explain = app.add_subcommand("explain", "concept relevance and overlap analysis");
  CLI::App* sclass = app.add_subcommand("sclass", "hierarchy similarity matrix for a class list");
  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  for (CLI::App* sub : {gen, train_cmd, eval, grid, explain, sclass, grad}) add_common(sub, inv);

  inv.bind(gen, "--classes", "synth.classes", "class counts per level, fine first (e.g. 16,8,4,2)");
  inv.bind(gen, "--samples-per-class", "synth.samples_per_class", "images per fine class and domain");
  inv.bind(gen, "--noise", "synth.noise", "pixel noise standard deviation");
  inv.bind(gen, "--domains", "synth.domains", "comma-separated domain names");

  for (CLI::App* sub : {train_cmd, grid}) {
    inv.bind(sub, "--epochs", "train.epochs", "training epochs");
    inv.bind(sub, "--lr", "train.lr", "base learning rate");
    inv.bind(sub, "--batch-size", "train.batch_size", "mini-batch size");
    inv.bind(sub, "--train-domains", "data.train_domains", "source domains (default: first in manifest)");
    inv.bind(sub, "--metric", "objective.metric", "cosine, euclidean or hsic");
    inv.bind(sub, "--ratios", "partition.ratios", "segment ratios r_c:r_p:r_n");
  }
  inv.bind(train_cmd, "--mode", "objective.mode", "fsdg, fgdg_lf or fgdg_baseline");
  inv.bind(train_cmd, "--lambda-cs", "objective.lambda_cs", "weight of S_cs");
  inv.bind(train_cmd, "--lambda-cd", "objective.lambda_cd", "weight of S_cd");
  inv.bind(train_cmd, "--lambda-p", "objective.lambda_p", "weight of S_p");
  inv.bind(grid, "--val-domain", "data.val_domain", "domain used to score each run");
  inv.bind(grid, "--space", "grid.space", "comma-separated coefficient values");
  for (CLI::App* sub : {train_cmd, eval, grid, explain}) inv.bind(sub, "--manifest", "data.manifest", "dataset manifest");
  inv.bind(eval, "--checkpoint", "eval.checkpoint", "checkpoint file");
  inv.bind(eval, "--domains", "data.eval_domains", "domains to evaluate (default: all)");
  inv.bind(explain, "--checkpoint", "explain.checkpoint", "checkpoint file");
  inv.bind(explain, "--domains", "data.eval_domains", "domains to analyse (default: all)");
  inv.bind(explain, "--classes", "explain.classes", "fine class ids (default: all)");
  inv.bind(explain, "--top-k", "explain.top_k", "channels per class");
  inv.bind(sclass, "--hierarchy", "sclass.hierarchy", "hierarchy file");
  inv.bind(sclass, "--classes", "sclass.classes", "fine class ids (default: all)");
  inv.bind(grad, "--instances", "gradcheck.instances", "random instances per term");
  inv.bind(grad, "--metrics", "gradcheck.metrics", "metrics to check");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  if (!argv_rev.empty()) argv_rev.pop_back();  // program name
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: ConfigError: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    const Config cfg = inv.resolve();
    const fs::path dir = inv.out_dir;
    if (*gen) return cmd_gen_synth(cfg, dir, out);
    if (*train_cmd) return cmd_train(cfg, dir, out);
    if (*eval) return cmd_eval(cfg, dir, out);
    if (*grid) return cmd_gridsearch(cfg, dir, out);
    if (*explain) return cmd_explain(cfg, dir, out);
    if (*sclass) return cmd_sclass(cfg, dir, out);
    if (*grad) return cmd_gradcheck(cfg, dir, out, err);
  } catch (const Error& e) {
    err << "error: " << error_name(e.code()) << ": " << one_line(e.what()) << '\n';
    return exit_status(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: IoError: " << one_line(e.what()) << '\n';
    return 3;
  } catch (const nlohmann::json::exception& e) {
    err << "error: DataError: " << one_line(e.what()) << '\n';
    return 3;
  }
  return 2;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace fsdg
