#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Synthetic referring-segmentation corpus: scenes of colored shapes where the
// target entity is identifiable only through the expression. Every scene is
// built so any entity could have been the referent (uniform target choice and
// pairwise attribute sharing), which keeps image-only predictors at the
// brute-force ambiguity ceiling.

namespace mafn::synth {

extern const int kGeneratorVersion;

class Vocabulary {
 public:
  static Vocabulary standard();
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int id(const std::string& word) const;  // throws with the full word list
  const std::string& word(int id) const;
  int size() const { return int(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
};

struct Entity {
  int shape = 0;       // index into shape words
  int color = 0;       // index into color words
  int size_class = 0;  // 0 small, 1 large
  double cx = 0, cy = 0, radius = 0;

  bool contains(double x, double y) const;
};

struct Scene {
  std::vector<Entity> entities;
  int target = 0;
};

struct Sample {
  int width = 0, height = 0;
  std::vector<float> image;   // [3,H,W], values on the 1/255 grid
  std::vector<uint8_t> mask;  // [H,W], 0/1
  std::vector<int> tokens;
  std::string expression;
  Scene scene;
  uint64_t seed = 0;
};

struct SceneConfig {
  int image_size = 48;
  int min_entities = 2;
  int max_entities = 4;
};

Sample generate_sample(uint64_t seed, const SceneConfig& cfg, const Vocabulary& vocab);

// geometric oracle: indices of entities satisfying the expression
std::vector<int> resolve_expression(const Scene& scene, const std::vector<int>& tokens,
                                    const Vocabulary& vocab, int image_size);

// entity mask rendered alone, for the resolver oracle and the ceiling
std::vector<uint8_t> entity_mask(const Entity& e, int image_size);

struct Dataset {
  std::string split;
  uint64_t seed = 0;
  int generator_version = 0;
  std::vector<Sample> samples;
};

void write_dataset(const std::vector<Sample>& samples, const std::string& dir,
                   const std::string& split, uint64_t seed);
Dataset read_dataset(const std::string& dir, const std::string& split);

// best mean-IoU any language-blind predictor can reach, brute-forced over
// unions of entity masks per scene with the target uniform over entities
double ambiguity_ceiling(const std::vector<Sample>& samples);

}  // namespace mafn::synth
