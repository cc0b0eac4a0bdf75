#include "fsdg/synthdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <set>

#include "fsdg/error.hpp"
#include "fsdg/tensor.hpp"

namespace fsdg {

namespace {

using Rgb = std::array<double, 3>;

constexpr int kShapes = 4;    // disk, square, diamond, triangle
constexpr int kPatterns = 4;  // horizontal, vertical, dots, checker
constexpr std::uint64_t kFactorStream = 11;
constexpr std::uint64_t kSampleStream = 12;
constexpr std::uint64_t kNoiseStream = 13;

Rgb hsv(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  const int i = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

const std::vector<std::vector<Rgb>>& palettes() {
  static const std::vector<std::vector<Rgb>> p = {
      {{0.55, 0.52, 0.48}, {0.62, 0.60, 0.55}, {0.45, 0.47, 0.50}, {0.58, 0.55, 0.60}},
      {{0.95, 0.85, 0.30}, {0.30, 0.80, 0.90}, {0.90, 0.40, 0.70}, {0.50, 0.90, 0.45}},
      {{0.12, 0.10, 0.15}, {0.20, 0.18, 0.12}, {0.10, 0.15, 0.20}, {0.18, 0.12, 0.12}},
  };
  return p;
}

/// Class-defining factors, fixed per (spec seed, class).
struct ClassFactors {
  int shape = 0;
  double hue = 0.0;
  int pattern = -1;  // -1: plain body
  std::vector<int> accents;  // extra coarse-level marks for deep trees
  unsigned glyph = 0;        // 3x3 bitmask
};

/// Distinct 3x3 glyph masks with 3..6 cells set, order shuffled by seed.
std::vector<unsigned> glyph_masks(std::uint64_t seed) {
  std::vector<unsigned> masks;
  for (unsigned m = 0; m < 512; ++m) {
    const int bits = std::popcount(m);
    if (bits >= 3 && bits <= 6) masks.push_back(m);
  }
  Rng rng(derive_seed(seed, kFactorStream, 0));
  rng.shuffle(masks);
  return masks;
}

std::vector<ClassFactors> class_factors(const SynthSpec& spec, const GranularityHierarchy& h) {
  const int G = h.levels();
  const int K0 = h.num_fine();
  Rng rng(derive_seed(spec.seed, kFactorStream, 1));
  const double hue_offset = rng.uniform(0.0, 360.0);
  const std::vector<unsigned> masks = glyph_masks(spec.seed);

  std::vector<ClassFactors> out(K0);
  for (int f = 0; f < K0; ++f) {
    ClassFactors& cf = out[f];
    cf.hue = hue_offset;
    // Coarsest level carries the shape, the next the hue, then the body
    // pattern; any further levels add accent marks.
    for (int g = G - 1; g >= 1; --g) {
      const int t = G - 1 - g;
      const int cls = h.ancestor(f, g);
      const int K = h.num_classes(g);
      if (t == 0) {
        cf.shape = cls % kShapes;
      } else if (t == 1) {
        cf.hue = hue_offset + 360.0 * cls / K;
      } else if (t == 2) {
        cf.pattern = cls % kPatterns;
      } else {
        cf.accents.push_back(cls);
      }
    }
    cf.glyph = masks[static_cast<std::size_t>(f) % masks.size()];
  }
  return out;
}

bool inside_shape(int shape, double dx, double dy, double r) {
  switch (shape) {
    case 0: return dx * dx + dy * dy <= r * r;
    case 1: return std::abs(dx) <= 0.85 * r && std::abs(dy) <= 0.85 * r;
    case 2: return std::abs(dx) + std::abs(dy) <= 1.15 * r;
    default: return dy <= 0.8 * r && dy >= -r + 2.0 * std::abs(dx) * 0.9;
  }
}

bool pattern_on(int pattern, double dx, double dy, double period, double phase) {
  auto band = [&](double v) { return std::fmod(std::abs(v + phase), period) < 0.5 * period; };
  switch (pattern) {
    case 0: return band(dy);
    case 1: return band(dx);
    case 2: {
      const double u = std::fmod(std::abs(dx + phase), period) - 0.5 * period;
      const double v = std::fmod(std::abs(dy + phase), period) - 0.5 * period;
      return u * u + v * v <= 0.09 * period * period;
    }
    default: return band(dx) != band(dy);
  }
}

/// Draws that must be consumed identically in every domain.
struct SampleDraws {
  double cx, cy, scale, hue_jitter, value_jitter, phase;
  int glyph_dx, glyph_dy;
  int bg_index;
  double bg_angle, bg_slope, tex_freq, tex_angle, tex_phase;
};

SampleDraws draw_sample(Rng& rng, int size) {
  SampleDraws d{};
  const double j = 0.1 * size;
  d.cx = 0.5 * size + rng.uniform(-j, j);
  d.cy = 0.5 * size + rng.uniform(-j, j);
  d.scale = rng.uniform(0.85, 1.15);
  d.hue_jitter = rng.uniform(-8.0, 8.0);
  d.value_jitter = rng.uniform(-0.08, 0.08);
  d.phase = rng.uniform(0.0, 4.0);
  d.glyph_dx = rng.below(3) - 1;
  d.glyph_dy = rng.below(3) - 1;
  d.bg_index = rng.below(4);
  d.bg_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  d.bg_slope = rng.uniform(0.0, 0.15);
  d.tex_freq = rng.uniform(0.3, 0.9);
  d.tex_angle = rng.uniform(0.0, std::numbers::pi);
  d.tex_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return d;
}

void render(const SynthSpec& spec, const DomainStyle& style, const ClassFactors& cf, const SampleDraws& d,
            Rng& noise_rng, Tensor& out, int index) {
  const int S = spec.image_size;
  const double radius = 0.3 * S * d.scale;
  const Rgb body = hsv(cf.hue + d.hue_jitter, 0.75, std::clamp(0.85 + d.value_jitter, 0.0, 1.0));
  const Rgb stripe{0.45 * body[0], 0.45 * body[1], 0.45 * body[2]};
  const double lum = 0.299 * body[0] + 0.587 * body[1] + 0.114 * body[2];
  const Rgb ink = lum > 0.45 ? Rgb{0.05, 0.05, 0.05} : Rgb{0.97, 0.97, 0.97};
  const Rgb bg = palettes()[style.palette][d.bg_index];
  const int cell = std::max(1, S / 16);
  const int gx0 = static_cast<int>(std::lround(d.cx)) - (3 * cell) / 2 + d.glyph_dx;
  const int gy0 = static_cast<int>(std::lround(d.cy)) - (3 * cell) / 2 + d.glyph_dy;
  const double period = std::max(2.0, 0.18 * S);

  std::vector<double> img(static_cast<std::size_t>(3) * S * S);
  auto px = [&](int c, int y, int x) -> double& { return img[(static_cast<std::size_t>(c) * S + y) * S + x]; };

  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const double u = (x - 0.5 * S) / S, v = (y - 0.5 * S) / S;
      const double grad = d.bg_slope * (u * std::cos(d.bg_angle) + v * std::sin(d.bg_angle));
      const double tex = style.texture * 0.25 *
                         std::sin(d.tex_freq * (x * std::cos(d.tex_angle) + y * std::sin(d.tex_angle)) + d.tex_phase);
      Rgb c{bg[0] + grad + tex, bg[1] + grad - tex, bg[2] + grad + 0.5 * tex};

      const double dx = x + 0.5 - d.cx, dy = y + 0.5 - d.cy;
      if (inside_shape(cf.shape, dx, dy, radius)) {
        c = body;
        if (cf.pattern >= 0 && pattern_on(cf.pattern, dx, dy, period, d.phase)) c = stripe;
      }
      for (std::size_t a = 0; a < cf.accents.size(); ++a) {
        // Accent: a small square in a class-determined corner band.
        const int slot = cf.accents[a] % 4;
        const int ax = (slot % 2) ? S - 3 * cell - 1 : 1, ay = (slot / 2) ? S - 3 * cell - 1 : 1;
        const int off = static_cast<int>(a) * 3 * cell;
        if (x >= ax && x < ax + 2 * cell && y >= ay + off && y < ay + off + 2 * cell) c = hsv(cf.accents[a] * 97.0, 0.9, 0.9);
      }
      const int cx = (x - gx0), cy = (y - gy0);
      if (cx >= 0 && cy >= 0 && cx < 3 * cell && cy < 3 * cell) {
        const int bit = (cy / cell) * 3 + (cx / cell);
        if (cf.glyph & (1u << bit)) c = ink;
      }
      for (int ch = 0; ch < 3; ++ch) px(ch, y, x) = c[ch];
    }
  }

  if (style.blur > 0) {
    const int r = style.blur;
    std::vector<double> tmp(img.size());
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
          double sum = 0.0;
          int cnt = 0;
          for (int yy = std::max(0, y - r); yy <= std::min(S - 1, y + r); ++yy) {
            for (int xx = std::max(0, x - r); xx <= std::min(S - 1, x + r); ++xx) {
              sum += px(ch, yy, xx);
              ++cnt;
            }
          }
          tmp[(static_cast<std::size_t>(ch) * S + y) * S + x] = sum / cnt;
        }
      }
    }
    img.swap(tmp);
  }

  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        double v = 0.5 + (px(ch, y, x) - 0.5) * style.contrast + style.cast[ch];
        if (spec.noise > 0.0) v += spec.noise * noise_rng.normal();
        out.at(index, ch, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
}

}  // namespace

std::vector<DomainStyle> default_domains() {
  DomainStyle photo;
  photo.name = "photo";
  DomainStyle painting;
  painting.name = "painting";
  painting.texture = 0.6;
  painting.blur = 1;
  painting.contrast = 0.9;
  painting.cast = {0.04, 0.0, -0.04};
  return {photo, painting};
}

void SynthSpec::validate() const {
  const int G = static_cast<int>(classes_per_level.size());
  if (G < 2) fail(ErrorCode::InconsistentBranching, "need at least two levels");
  for (int c : classes_per_level) {
    if (c < 1) fail(ErrorCode::InconsistentBranching, "class counts must be positive");
  }
  for (int g = 0; g < G; ++g) {
    if (g + 1 < G && classes_per_level[g] % classes_per_level[g + 1] != 0) {
      fail(ErrorCode::InconsistentBranching, "level " + std::to_string(g) + " count " +
                                                 std::to_string(classes_per_level[g]) + " is not divisible by level " +
                                                 std::to_string(g + 1) + " count " +
                                                 std::to_string(classes_per_level[g + 1]));
    }
  }
  if (classes_per_level[0] / classes_per_level[1] < 2) {
    fail(ErrorCode::InconsistentBranching, "every parent needs at least two fine classes");
  }
  if (samples_per_class < 1) fail(ErrorCode::ConfigError, "samples_per_class must be positive");
  if (image_size < 8) fail(ErrorCode::ConfigError, "image_size must be at least 8");
  if (noise < 0.0) fail(ErrorCode::ConfigError, "noise must be non-negative");
  if (domains.empty()) fail(ErrorCode::ConfigError, "need at least one domain");
  std::set<std::string> names;
  for (const DomainStyle& d : domains) {
    if (d.name.empty() || !names.insert(d.name).second) fail(ErrorCode::ConfigError, "domain names must be unique");
    if (d.palette < 0 || d.palette >= static_cast<int>(palettes().size())) {
      fail(ErrorCode::ConfigError, "unknown palette " + std::to_string(d.palette));
    }
    if (d.blur < 0 || d.texture < 0.0 || d.contrast <= 0.0) fail(ErrorCode::ConfigError, "bad style for " + d.name);
  }
}

GranularityHierarchy SynthSpec::hierarchy() const {
  validate();
  const int G = static_cast<int>(classes_per_level.size());
  std::vector<std::vector<int>> rows;
  for (int f = 0; f < classes_per_level[0]; ++f) {
    std::vector<int> row{f};
    for (int g = 1; g < G; ++g) row.push_back(row.back() / (classes_per_level[g - 1] / classes_per_level[g]));
    rows.push_back(std::move(row));
  }
  return GranularityHierarchy::from_rows(std::move(rows));
}

SynthData generate(const SynthSpec& spec) {
  SynthData out;
  out.hierarchy = spec.hierarchy();
  const GranularityHierarchy& h = out.hierarchy;
  const std::vector<ClassFactors> factors = class_factors(spec, h);
  const int K0 = h.num_fine(), N = K0 * spec.samples_per_class, S = spec.image_size;

  for (std::size_t di = 0; di < spec.domains.size(); ++di) {
    const DomainStyle& style = spec.domains[di];
    Dataset ds;
    ds.images = Tensor(N, 3, S, S);
    ds.labels.assign(h.levels(), std::vector<int>(N));
    ds.domains.assign(N, style.name);
    ds.ids.resize(N);
    for (int f = 0; f < K0; ++f) {
      for (int i = 0; i < spec.samples_per_class; ++i) {
        const int idx = f * spec.samples_per_class + i;
        const std::uint64_t item = static_cast<std::uint64_t>(f) << 32 | static_cast<std::uint64_t>(i);
        Rng sample_rng(derive_seed(spec.seed, kSampleStream, item));
        Rng noise_rng(derive_seed(spec.seed, kNoiseStream + di, item));
        render(spec, style, factors[f], draw_sample(sample_rng, S), noise_rng, ds.images, idx);
        for (int g = 0; g < h.levels(); ++g) ds.labels[g][idx] = h.ancestor(f, g);
        ds.ids[idx] = style.name + "/c" + std::to_string(f) + "_" + std::to_string(i);
      }
    }
    out.domains.push_back(std::move(ds));
  }
  return out;
}

}  // namespace fsdg
