#include "mafn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mafn/pnm.hpp"
#include "mafn/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mafn::synth {

const int kGeneratorVersion = 1;

namespace {

const std::vector<std::string> kWords = {
    "<pad>",  "circle", "square", "triangle", "red",    "green",
    "blue",   "yellow", "left",   "right",    "top",    "bottom"};

constexpr int kShape0 = 1, kShapeCount = 3;
constexpr int kColor0 = 4, kColorCount = 4;
constexpr int kPos0 = 8;

// RGB per color word, before per-entity brightness jitter
const double kColorRgb[kColorCount][3] = {
    {0.85, 0.15, 0.12}, {0.15, 0.75, 0.20}, {0.15, 0.25, 0.85}, {0.85, 0.80, 0.15}};

enum PosWord { kLeft = 0, kRight = 1, kTop = 2, kBottom = 3 };

bool entity_matches_position(const Entity& e, int pos_word, int image_size) {
  const double half = image_size / 2.0;
  switch (pos_word) {
    case kLeft: return e.cx < half;
    case kRight: return e.cx > half;
    case kTop: return e.cy < half;
    case kBottom: return e.cy > half;
  }
  return false;
}

}  // namespace

Vocabulary Vocabulary::standard() {
  Vocabulary v;
  v.words_ = kWords;
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open vocabulary");
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) v.words_.push_back(line);
  }
  if (v.words_.empty()) throw std::runtime_error(path + ": empty vocabulary");
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot write vocabulary");
  for (const auto& w : words_) out << w << "\n";
}

int Vocabulary::id(const std::string& word) const {
  for (size_t i = 0; i < words_.size(); ++i)
    if (words_[i] == word) return int(i);
  std::string list;
  for (const auto& w : words_) list += (list.empty() ? "" : " ") + w;
  throw std::runtime_error("unknown token '" + word + "'; vocabulary: " + list);
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= int(words_.size()))
    throw std::runtime_error("token id " + std::to_string(id) + " out of range");
  return words_[size_t(id)];
}

bool Entity::contains(double x, double y) const {
  const double dx = x - cx, dy = y - cy;
  switch (shape) {
    case 0:  // circle
      return dx * dx + dy * dy <= radius * radius;
    case 1:  // square
      return std::abs(dx) <= radius && std::abs(dy) <= radius;
    case 2: {  // upward triangle inscribed in the radius box
      if (dy < -radius || dy > radius) return false;
      const double t = (dy + radius) / (2 * radius);  // 0 at apex row, 1 at base
      return std::abs(dx) <= t * radius;
    }
  }
  return false;
}

std::vector<uint8_t> entity_mask(const Entity& e, int image_size) {
  std::vector<uint8_t> m(size_t(image_size) * image_size, 0);
  for (int y = 0; y < image_size; ++y)
    for (int x = 0; x < image_size; ++x)
      if (e.contains(x + 0.5, y + 0.5)) m[size_t(y) * image_size + x] = 1;
  return m;
}

std::vector<int> resolve_expression(const Scene& scene, const std::vector<int>& tokens,
                                    const Vocabulary& vocab, int image_size) {
  std::vector<int> out;
  for (size_t i = 0; i < scene.entities.size(); ++i) {
    const Entity& e = scene.entities[i];
    bool ok = true;
    for (int tok : tokens) {
      if (tok >= kShape0 && tok < kShape0 + kShapeCount) {
        ok = ok && e.shape == tok - kShape0;
      } else if (tok >= kColor0 && tok < kColor0 + kColorCount) {
        ok = ok && e.color == tok - kColor0;
      } else if (tok >= kPos0 && tok < vocab.size()) {
        ok = ok && entity_matches_position(e, tok - kPos0, image_size);
      } else if (tok != 0) {  // <pad> matches anything
        throw std::runtime_error("resolver: unexpected token id " + std::to_string(tok));
      }
    }
    if (ok) out.push_back(int(i));
  }
  return out;
}

namespace {

struct SceneDraw {
  Scene scene;
  bool ok = false;
};

// every entity must share color or shape with some other entity, so no entity
// is the visual odd-one-out
bool confusable(const std::vector<Entity>& es) {
  if (es.size() < 2) return true;
  for (size_t i = 0; i < es.size(); ++i) {
    bool shares = false;
    for (size_t j = 0; j < es.size() && !shares; ++j)
      if (j != i && (es[i].color == es[j].color || es[i].shape == es[j].shape))
        shares = true;
    if (!shares) return false;
  }
  return true;
}

// candidate expressions for an entity, shortest first
std::vector<std::vector<int>> candidate_expressions(const Entity& e, int image_size) {
  const int shape_tok = kShape0 + e.shape;
  const int color_tok = kColor0 + e.color;
  const int h_tok = kPos0 + (e.cx < image_size / 2.0 ? kLeft : kRight);
  const int v_tok = kPos0 + (e.cy < image_size / 2.0 ? kTop : kBottom);
  return {
      {shape_tok},
      {color_tok, shape_tok},
      {shape_tok, h_tok},
      {shape_tok, v_tok},
      {color_tok, shape_tok, h_tok},
      {color_tok, shape_tok, v_tok},
  };
}

SceneDraw draw_scene(Rng& rng, const SceneConfig& cfg, const Vocabulary& vocab) {
  SceneDraw out;
  const int n = rng.uniform_int(cfg.min_entities, cfg.max_entities);
  const double half = cfg.image_size / 2.0;
  std::vector<Entity> es;
  for (int i = 0; i < n; ++i) {
    Entity e;
    e.shape = rng.uniform_int(0, kShapeCount - 1);
    e.color = rng.uniform_int(0, kColorCount - 1);
    e.size_class = rng.uniform_int(0, 1);
    const double scale = cfg.image_size / 48.0;
    e.radius = (e.size_class == 0 ? rng.uniform(3.5, 5.0) : rng.uniform(6.0, 8.5)) * scale;
    bool placed = false;
    for (int attempt = 0; attempt < 24 && !placed; ++attempt) {
      e.cx = rng.uniform(e.radius + 1, cfg.image_size - e.radius - 1);
      e.cy = rng.uniform(e.radius + 1, cfg.image_size - e.radius - 1);
      if (std::abs(e.cx - half) < 2.5 || std::abs(e.cy - half) < 2.5) continue;
      placed = true;
      for (const Entity& other : es) {
        const double dx = e.cx - other.cx, dy = e.cy - other.cy;
        const double min_dist = e.radius + other.radius + 1.5;
        if (dx * dx + dy * dy < min_dist * min_dist) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) return out;
    es.push_back(e);
  }
  if (!confusable(es)) return out;

  // validity: every entity is uniquely describable by one of its candidate
  // expressions, so the target can be drawn uniformly afterwards
  Scene probe;
  probe.entities = es;
  for (size_t i = 0; i < es.size(); ++i) {
    bool unique = false;
    for (const auto& expr : candidate_expressions(es[i], cfg.image_size)) {
      auto matches = resolve_expression(probe, expr, vocab, cfg.image_size);
      if (matches.size() == 1 && matches[0] == int(i)) {
        unique = true;
        break;
      }
    }
    if (!unique) return out;
  }
  out.scene = std::move(probe);
  out.ok = true;
  return out;
}

}  // namespace

Sample generate_sample(uint64_t seed, const SceneConfig& cfg, const Vocabulary& vocab) {
  if (cfg.min_entities < 1 || cfg.max_entities < cfg.min_entities)
    throw std::invalid_argument("generate_sample: bad entity count range");
  if (cfg.image_size < 16) throw std::invalid_argument("generate_sample: image too small");

  Rng rng(seed * 0x9e3779b97f4a7c15ull + 0x51ull);
  SceneDraw draw;
  for (int attempt = 0; attempt < 1000 && !draw.ok; ++attempt) draw = draw_scene(rng, cfg, vocab);
  if (!draw.ok) throw std::runtime_error("generate_sample: scene sampling failed");

  Scene& scene = draw.scene;
  scene.target = rng.uniform_int(0, int(scene.entities.size()) - 1);

  // shortest uniquely-resolving expression for the chosen target
  std::vector<int> tokens;
  for (const auto& expr : candidate_expressions(scene.entities[size_t(scene.target)],
                                                cfg.image_size)) {
    auto matches = resolve_expression(scene, expr, vocab, cfg.image_size);
    if (matches.size() == 1 && matches[0] == scene.target) {
      tokens = expr;
      break;
    }
  }
  if (tokens.empty()) throw std::runtime_error("generate_sample: no unique expression");

  Sample s;
  s.width = s.height = cfg.image_size;
  s.seed = seed;
  s.scene = scene;
  s.tokens = tokens;
  for (size_t i = 0; i < tokens.size(); ++i)
    s.expression += (i ? " " : "") + vocab.word(tokens[size_t(i)]);

  // render: dark background, per-entity brightness jitter, mild pixel noise,
  // then quantize to the 1/255 grid so the PPM round trip is lossless
  const int sz = cfg.image_size;
  std::vector<double> img(size_t(3) * sz * sz);
  std::vector<double> jitter(scene.entities.size());
  for (auto& j : jitter) j = rng.uniform(-0.05, 0.05);
  for (int y = 0; y < sz; ++y)
    for (int x = 0; x < sz; ++x) {
      double rgb[3] = {0.10, 0.11, 0.10};
      for (size_t i = 0; i < scene.entities.size(); ++i) {
        const Entity& e = scene.entities[i];
        if (e.contains(x + 0.5, y + 0.5)) {
          for (int c = 0; c < 3; ++c) rgb[c] = kColorRgb[e.color][c] + jitter[i];
          break;
        }
      }
      for (int c = 0; c < 3; ++c) {
        double v = rgb[c] + rng.normal(0.0, 0.008);
        v = std::min(std::max(v, 0.0), 1.0);
        img[(size_t(c) * sz + y) * sz + x] = std::round(v * 255.0) / 255.0;
      }
    }
  s.image.assign(img.begin(), img.end());
  s.mask = entity_mask(scene.entities[size_t(scene.target)], sz);
  return s;
}

namespace {

std::string sample_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

json entity_to_json(const Entity& e) {
  return json{{"shape", e.shape}, {"color", e.color},   {"size", e.size_class},
              {"cx", e.cx},       {"cy", e.cy},         {"radius", e.radius}};
}

Entity entity_from_json(const json& j) {
  Entity e;
  e.shape = j.at("shape").get<int>();
  e.color = j.at("color").get<int>();
  e.size_class = j.at("size").get<int>();
  e.cx = j.at("cx").get<double>();
  e.cy = j.at("cy").get<double>();
  e.radius = j.at("radius").get<double>();
  return e;
}

}  // namespace

void write_dataset(const std::vector<Sample>& samples, const std::string& dir,
                   const std::string& split, uint64_t seed) {
  const fs::path root(dir);
  fs::create_directories(root / split / "images");
  fs::create_directories(root / split / "masks");

  std::ofstream manifest(root / (split + ".jsonl"));
  if (!manifest) throw std::runtime_error(dir + ": cannot write manifest");
  manifest << json{{"split", split},
                   {"seed", seed},
                   {"generator_version", kGeneratorVersion},
                   {"count", samples.size()}}
                  .dump()
           << "\n";

  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const std::string stem = sample_stem(int(i));
    const std::string img_rel = split + "/images/" + stem + ".ppm";
    const std::string mask_rel = split + "/masks/" + stem + ".pgm";

    std::vector<uint8_t> rgb(size_t(3) * s.width * s.height);
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x)
        for (int c = 0; c < 3; ++c)
          rgb[(size_t(y) * s.width + x) * 3 + c] = uint8_t(
              std::lround(s.image[(size_t(c) * s.height + y) * s.width + x] * 255.0));
    write_ppm((root / img_rel).string(), s.width, s.height, rgb);

    std::vector<uint8_t> mask(s.mask.size());
    for (size_t p = 0; p < mask.size(); ++p) mask[p] = s.mask[p] ? 255 : 0;
    write_pgm((root / mask_rel).string(), s.width, s.height, mask);

    json entities = json::array();
    for (const auto& e : s.scene.entities) entities.push_back(entity_to_json(e));
    manifest << json{{"image", img_rel},
                     {"mask", mask_rel},
                     {"tokens", s.tokens},
                     {"expression", s.expression},
                     {"seed", s.seed},
                     {"target", s.scene.target},
                     {"entities", entities}}
                    .dump()
             << "\n";
  }
}

Dataset read_dataset(const std::string& dir, const std::string& split) {
  const fs::path root(dir);
  const fs::path manifest_path = root / (split + ".jsonl");
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error(manifest_path.string() + ": cannot open manifest");

  Dataset ds;
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(manifest_path.string() + ": empty manifest");
  {
    json header = json::parse(line);
    ds.split = header.at("split").get<std::string>();
    ds.seed = header.at("seed").get<uint64_t>();
    ds.generator_version = header.at("generator_version").get<int>();
  }

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    Sample s;
    // paths resolve relative to the manifest location
    const fs::path img_path = root / rec.at("image").get<std::string>();
    const fs::path mask_path = root / rec.at("mask").get<std::string>();
    PnmImage img = read_pnm(img_path.string());
    if (img.channels != 3) throw std::runtime_error(img_path.string() + ": expected a PPM");
    PnmImage mask = read_pnm(mask_path.string());
    if (mask.channels != 1) throw std::runtime_error(mask_path.string() + ": expected a PGM");
    if (mask.width != img.width || mask.height != img.height)
      throw std::runtime_error(mask_path.string() + ": image/mask shape mismatch");

    s.width = img.width;
    s.height = img.height;
    s.image.resize(size_t(3) * img.width * img.height);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c)
          s.image[(size_t(c) * img.height + y) * img.width + x] =
              float(img.pixels[(size_t(y) * img.width + x) * 3 + c] / 255.0);
    s.mask.resize(mask.pixels.size());
    for (size_t p = 0; p < mask.pixels.size(); ++p) s.mask[p] = mask.pixels[p] ? 1 : 0;

    s.tokens = rec.at("tokens").get<std::vector<int>>();
    s.expression = rec.at("expression").get<std::string>();
    s.seed = rec.at("seed").get<uint64_t>();
    s.scene.target = rec.at("target").get<int>();
    for (const auto& ej : rec.at("entities")) s.scene.entities.push_back(entity_from_json(ej));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

double ambiguity_ceiling(const std::vector<Sample>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0;
  for (const Sample& s : samples) {
    const int n = int(s.scene.entities.size());
    std::vector<std::vector<uint8_t>> masks;
    for (const auto& e : s.scene.entities) masks.push_back(entity_mask(e, s.width));
    double best = 0;
    for (int subset = 1; subset < (1 << n); ++subset) {
      std::vector<uint8_t> u(masks[0].size(), 0);
      for (int e = 0; e < n; ++e)
        if (subset & (1 << e))
          for (size_t p = 0; p < u.size(); ++p) u[p] |= masks[size_t(e)][p];
      double expected = 0;
      for (int e = 0; e < n; ++e) {
        int64_t inter = 0, uni = 0;
        for (size_t p = 0; p < u.size(); ++p) {
          inter += (u[p] && masks[size_t(e)][p]);
          uni += (u[p] || masks[size_t(e)][p]);
        }
        expected += uni == 0 ? 1.0 : double(inter) / double(uni);
      }
      best = std::max(best, expected / n);
    }
    total += best;
  }
  return total / double(samples.size());
}

}  // namespace mafn::synth
