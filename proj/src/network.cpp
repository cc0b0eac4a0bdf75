#include "fsdg/network.hpp"

#include <cstring>
#include <fstream>

#include "fsdg/error.hpp"
#include "fsdg/hash.hpp"
#include "fsdg/serialization.hpp"

namespace fsdg {

// ---------------------------------------------------------------------------
// Backbone

SmallConvNet::SmallConvNet(int in_channels, std::vector<int> widths)
    : in_channels_(in_channels), widths_(std::move(widths)) {
  if (widths_.empty()) fail(ErrorCode::ConfigError, "backbone needs at least one stage");
  int in = in_channels_;
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    const int stride = i == 0 ? 1 : 2;
    stages_.push_back({Conv2d(in, widths_[i], 3, stride, 1), BatchNorm2d(widths_[i]), Relu()});
    in = widths_[i];
  }
}

BackboneSpec SmallConvNet::spec(int input_height, int input_width) {
  BackboneSpec s;
  s.name = "small_cnn";
  s.output_channels = widths_.back();
  int h = input_height, w = input_width;
  for (auto& st : stages_) {
    h = st.conv.output_extent(h);
    w = st.conv.output_extent(w);
  }
  s.output_height = h;
  s.output_width = w;
  StateList state;
  collect(state, "");
  s.parameter_count = fsdg::parameter_count(state);
  return s;
}

Tensor SmallConvNet::forward(const Tensor& images, bool train) {
  Tensor x = images;
  for (auto& st : stages_) {
    x = st.conv.forward(x, train);
    x = st.bn.forward(x, train);
    x = st.relu.forward(x, train);
  }
  return x;
}

void SmallConvNet::backward(const Tensor& grad_output) {
  Tensor g = grad_output;
  for (std::size_t i = stages_.size(); i-- > 0;) {
    auto& st = stages_[i];
    g = st.relu.backward(g);
    g = st.bn.backward(g);
    g = st.conv.backward(g, /*need_input_grad=*/i > 0);
  }
}

void SmallConvNet::init(Rng& rng) {
  for (auto& st : stages_) st.conv.init(rng);
}

void SmallConvNet::collect(StateList& out, const std::string& prefix) {
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string p = prefix + ".stage" + std::to_string(i);
    stages_[i].conv.collect(out, p + ".conv", true);
    stages_[i].bn.collect(out, p + ".bn", true);
  }
}

std::unique_ptr<Backbone> SmallConvNet::clone() const { return std::make_unique<SmallConvNet>(*this); }

// ---------------------------------------------------------------------------
// Transition layer and head

TransitionLayer::TransitionLayer(int in_channels, int out_channels)
    : d_(out_channels), conv_(in_channels, out_channels, 1, 1, 0), bn_(out_channels) {}

void TransitionLayer::init(Rng& rng) { conv_.init(rng); }

Tensor TransitionLayer::forward(const Tensor& x, bool train) {
  return relu_.forward(bn_.forward(conv_.forward(x, train), train), train);
}

Tensor TransitionLayer::backward(const Tensor& grad_out) {
  return conv_.backward(bn_.backward(relu_.backward(grad_out)));
}

void TransitionLayer::collect(StateList& out, const std::string& prefix) {
  conv_.collect(out, prefix + ".conv", false);
  bn_.collect(out, prefix + ".bn", false);
}

BranchHead::BranchHead(int in_features, int classes) : fc_(in_features, classes) {}

void BranchHead::init(Rng& rng) { fc_.init(rng); }

Matrix BranchHead::forward(const Tensor& features, bool train) {
  if (train) {
    h_ = features.h;
    w_ = features.w;
  }
  return fc_.forward(global_average_pool(features), train);
}

Matrix BranchHead::classify_pooled(const Matrix& pooled) { return fc_.forward(pooled, false); }

Tensor BranchHead::backward(const Matrix& grad_logits) {
  return global_average_pool_backward(fc_.backward(grad_logits), h_, w_);
}

void BranchHead::collect(StateList& out, const std::string& prefix) { fc_.collect(out, prefix + ".fc", false); }

// ---------------------------------------------------------------------------
// Model

std::string_view backbone_mode_name(BackboneMode m) { return m == BackboneMode::Dual ? "dual" : "single"; }

BackboneMode parse_backbone_mode(std::string_view name) {
  if (name == "dual") return BackboneMode::Dual;
  if (name == "single") return BackboneMode::Single;
  fail(ErrorCode::ConfigError, "unknown backbone mode '" + std::string(name) + "'");
}

FeatureMap to_feature_map(Tensor t, int level) {
  return FeatureMap(t.n, t.c, t.h * t.w, std::move(t.data), level);
}

Tensor to_tensor(const FeatureMap& f, int h, int w) {
  if (h * w != f.spatial()) fail(ErrorCode::ShapeMismatch, "spatial extent mismatch");
  Tensor t(f.batch(), f.channels(), h, w);
  std::copy(f.values().begin(), f.values().end(), t.data.begin());
  return t;
}

namespace {

std::string fine_prefix(BackboneMode m) { return m == BackboneMode::Dual ? "fine_backbone" : "backbone"; }

void add_into(Tensor& acc, const Tensor& g) {
  if (acc.size() == 0) {
    acc = g;
    return;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += g.data[i];
}

}  // namespace

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.levels() < 2) fail(ErrorCode::SingleLevelHierarchy, "model needs at least two granularity levels");
  fine_ = std::make_unique<SmallConvNet>(cfg_.in_channels, cfg_.widths);
  if (cfg_.mode == BackboneMode::Dual) coarse_ = std::make_unique<SmallConvNet>(cfg_.in_channels, cfg_.widths);
  const int c_out = cfg_.widths.back();
  for (int g = 0; g < cfg_.levels(); ++g) {
    transitions_.emplace_back(c_out, cfg_.feature_channels);
    heads_.emplace_back(cfg_.feature_channels, cfg_.classes_per_level[g]);
  }
}

Model::Model(const Model& other)
    : cfg_(other.cfg_),
      fine_(other.fine_->clone()),
      coarse_(other.coarse_ ? other.coarse_->clone() : nullptr),
      transitions_(other.transitions_),
      heads_(other.heads_),
      feature_h_(other.feature_h_),
      feature_w_(other.feature_w_) {}

Model& Model::operator=(const Model& other) {
  if (this != &other) *this = Model(other);
  return *this;
}

void Model::init(std::uint64_t seed) {
  Rng fine_rng(derive_seed(seed, 1));
  fine_->init(fine_rng);
  if (coarse_) {
    Rng coarse_rng(derive_seed(seed, 2));
    coarse_->init(coarse_rng);
  }
  for (int g = 0; g < cfg_.levels(); ++g) {
    Rng rng(derive_seed(seed, 100 + g));
    transitions_[g].init(rng);
    heads_[g].init(rng);
  }
}

Backbone& Model::backbone_for(int level) { return (level == 0 || !coarse_) ? *fine_ : *coarse_; }

ForwardResult Model::forward(const Tensor& images, bool train) {
  if (images.c != cfg_.in_channels) {
    fail(ErrorCode::ShapeMismatch, "model expects " + std::to_string(cfg_.in_channels) + "-channel images");
  }
  if (images.n < 1) fail(ErrorCode::ShapeMismatch, "empty image batch");
  const Tensor fine_out = fine_->forward(images, train);
  Tensor coarse_out;
  if (coarse_) coarse_out = coarse_->forward(images, train);
  ForwardResult r;
  for (int g = 0; g < cfg_.levels(); ++g) {
    const Tensor& base = (g == 0 || !coarse_) ? fine_out : coarse_out;
    Tensor t = transitions_[g].forward(base, train);
    if (train) {
      feature_h_ = t.h;
      feature_w_ = t.w;
    }
    r.outputs.logits.push_back(heads_[g].forward(t, train));
    r.features.push_back(to_feature_map(std::move(t), g));
  }
  return r;
}

void Model::backward(const std::vector<FeatureMap>& grad_features, const std::vector<Matrix>& grad_logits) {
  Tensor grad_fine, grad_coarse;
  for (int g = 0; g < cfg_.levels(); ++g) {
    const bool has_logit = g < static_cast<int>(grad_logits.size()) && grad_logits[g].size() > 0;
    const bool has_feature = g < static_cast<int>(grad_features.size()) && grad_features[g].batch() > 0;
    if (!has_logit && !has_feature) continue;
    Tensor grad_t;
    if (has_logit) grad_t = heads_[g].backward(grad_logits[g]);
    if (has_feature) {
      const FeatureMap& gf = grad_features[g];
      if (grad_t.size() == 0) grad_t = Tensor(gf.batch(), gf.channels(), feature_h_, feature_w_);
      if (grad_t.size() != gf.values().size()) fail(ErrorCode::ShapeMismatch, "feature gradient shape mismatch");
      for (std::size_t i = 0; i < grad_t.size(); ++i) grad_t.data[i] += gf.values()[i];
    }
    Tensor grad_base = transitions_[g].backward(grad_t);
    add_into((g == 0 || !coarse_) ? grad_fine : grad_coarse, grad_base);
  }
  if (grad_fine.size() > 0) fine_->backward(grad_fine);
  if (coarse_ && grad_coarse.size() > 0) coarse_->backward(grad_coarse);
}

Matrix Model::fine_logits(const Tensor& images) {
  const Tensor base = fine_->forward(images, false);
  return heads_[0].forward(transitions_[0].forward(base, false), false);
}

StateList Model::state() {
  StateList s;
  fine_->collect(s, fine_prefix(cfg_.mode));
  if (coarse_) coarse_->collect(s, "coarse_backbone");
  for (int g = 0; g < cfg_.levels(); ++g) {
    transitions_[g].collect(s, "transition." + std::to_string(g));
    heads_[g].collect(s, "head." + std::to_string(g));
  }
  return s;
}

void Model::zero_grad() {
  for (auto& e : state()) {
    if (e.parameter) std::fill(e.parameter->grad.begin(), e.parameter->grad.end(), 0.0);
  }
}

std::size_t Model::parameter_count() { return fsdg::parameter_count(state()); }

std::uint64_t Model::weights_hash() {
  Fnv1a h;
  for (const auto& e : state()) {
    h.update(e.name);
    h.update_span(std::span<const double>(*e.values));
  }
  return h.digest();
}

InferenceModel Model::prune_to_fine() const {
  return InferenceModel(cfg_, fine_->clone(), transitions_[0], heads_[0]);
}

// ---------------------------------------------------------------------------
// Inference model

InferenceModel::InferenceModel(ModelConfig cfg, std::unique_ptr<Backbone> backbone, TransitionLayer transition,
                               BranchHead head)
    : cfg_(std::move(cfg)), backbone_(std::move(backbone)), transition_(std::move(transition)), head_(std::move(head)) {}

InferenceModel::InferenceModel(const InferenceModel& other)
    : cfg_(other.cfg_), backbone_(other.backbone_->clone()), transition_(other.transition_), head_(other.head_) {}

Matrix InferenceModel::fine_logits(const Tensor& images) const { return fine_logits_and_pooled(images).first; }

std::pair<Matrix, Matrix> InferenceModel::fine_logits_and_pooled(const Tensor& images) const {
  if (images.c != cfg_.in_channels) fail(ErrorCode::ShapeMismatch, "image channel mismatch");
  const Tensor base = backbone_->forward(images, false);
  Matrix pooled = global_average_pool(transition_.forward(base, false));
  Matrix logits = head_.classify_pooled(pooled);
  return {std::move(logits), std::move(pooled)};
}

Matrix InferenceModel::logits(int level, const Tensor& images) const {
  if (level != 0) {
    fail(ErrorCode::UnavailableBranch, "level " + std::to_string(level) + " branch was pruned for inference");
  }
  return fine_logits(images);
}

StateList InferenceModel::state() {
  StateList s;
  backbone_->collect(s, fine_prefix(cfg_.mode));
  transition_.collect(s, "transition.0");
  head_.collect(s, "head.0");
  return s;
}

std::size_t InferenceModel::parameter_count() { return fsdg::parameter_count(state()); }

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'F', 'S', 'D', 'G', 'C', 'K', 'P', 'T'};

void write_checkpoint(const std::filesystem::path& path, StateList state, const ModelConfig& cfg,
                      const CheckpointMeta& meta, const char* kind) {
  Json header;
  header["format_version"] = kCheckpointVersion;
  header["kind"] = kind;
  header["model"] = to_json(cfg);
  header["partition"] = to_json(meta.partition);
  header["objective"] = to_json(meta.objective);
  header["hierarchy_hash"] = hex_digest(meta.hierarchy.hash());
  header["hierarchy"] = to_json(meta.hierarchy);
  header["seed"] = meta.seed;
  Json tensors = Json::array();
  for (const auto& e : state) tensors.push_back({{"name", e.name}, {"size", e.values->size()}});
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : state) {
    out.write(reinterpret_cast<const char*>(e.values->data()),
              static_cast<std::streamsize>(e.values->size() * sizeof(double)));
  }
  if (!out) fail(ErrorCode::IoError, "short write on " + path.string());
}

void fill_state(StateList state, const Json& tensors, std::ifstream& in, const std::string& path) {
  std::map<std::string, std::vector<double>*> by_name;
  for (auto& e : state) by_name[e.name] = e.values;
  if (tensors.size() != state.size()) fail(ErrorCode::DataError, "checkpoint tensor list does not match model: " + path);
  for (const auto& t : tensors) {
    const auto name = t.at("name").get<std::string>();
    const auto size = t.at("size").get<std::size_t>();
    auto it = by_name.find(name);
    if (it == by_name.end() || it->second->size() != size) {
      fail(ErrorCode::DataError, "checkpoint tensor '" + name + "' does not match the model");
    }
    in.read(reinterpret_cast<char*>(it->second->data()), static_cast<std::streamsize>(size * sizeof(double)));
  }
  if (!in) fail(ErrorCode::DataError, "truncated checkpoint " + path);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model& model, const CheckpointMeta& meta) {
  write_checkpoint(path, model.state(), model.config(), meta, "full");
}

void save_checkpoint(const std::filesystem::path& path, InferenceModel& model, const CheckpointMeta& meta) {
  write_checkpoint(path, model.state(), model.config(), meta, "pruned");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    fail(ErrorCode::DataError, path.string() + " is not a checkpoint");
  }
  if (version != kCheckpointVersion) {
    fail(ErrorCode::DataError, "unsupported checkpoint version " + std::to_string(version));
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  Json header;
  try {
    header = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::DataError, std::string("bad checkpoint header: ") + e.what());
  }

  LoadedCheckpoint out;
  out.meta.partition = partition_from_json(header.at("partition"));
  out.meta.objective = objective_from_json(header.at("objective"));
  out.meta.hierarchy = hierarchy_from_json(header.at("hierarchy"));
  out.meta.seed = header.at("seed").get<std::uint64_t>();
  if (hex_digest(out.meta.hierarchy.hash()) != header.at("hierarchy_hash").get<std::string>()) {
    fail(ErrorCode::DataError, "checkpoint hierarchy hash mismatch");
  }
  const ModelConfig cfg = model_config_from_json(header.at("model"));
  const auto kind = header.at("kind").get<std::string>();
  if (kind == "full") {
    Model model(cfg);
    fill_state(model.state(), header.at("tensors"), in, path.string());
    out.pruned.emplace(model.prune_to_fine());
    out.model.emplace(std::move(model));
  } else if (kind == "pruned") {
    InferenceModel pruned = Model(cfg).prune_to_fine();
    fill_state(pruned.state(), header.at("tensors"), in, path.string());
    out.pruned.emplace(std::move(pruned));
  } else {
    fail(ErrorCode::DataError, "unknown checkpoint kind '" + kind + "'");
  }
  return out;
}

}  // namespace fsdg
