#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modify/tensor.hpp"

namespace modify::data {

// In-memory dataset; images are [3,R,R] floats in [-1,1].
struct ImageDataset {
  int resolution = 0;
  std::vector<Tensor<float>> images;
  std::vector<std::string> ids;

  std::size_t size() const { return images.size(); }
};

enum class StyleProfile { Photo, Painterly, Sketch };

StyleProfile profile_from_string(const std::string& s);
const char* to_string(StyleProfile p);

// Procedural face-ish compositions (ellipse features over a profile palette,
// per-sample jitter). Fully reproducible from the spec.
struct SyntheticSpec {
  std::uint64_t seed = 0;
  int count = 8;
  int resolution = 64;
  StyleProfile profile = StyleProfile::Photo;
};

ImageDataset synth_generate(const SyntheticSpec& spec);

// Flat folder of PNG/JPEG images, sorted lexicographically; undecodable files
// are skipped with a warning, and it is an error if nothing decodes. Images
// are center-cropped to square and bilinearly resized.
ImageDataset load_folder(const std::string& root, int resolution);

Tensor<float> stack_batch(const ImageDataset& ds, const std::vector<int>& idx);

// Deterministic shuffled batch stream: a fresh seeded permutation per epoch,
// final partial batch dropped. Batches are a pure function of the iteration
// index, which is what makes resume and online/offline equivalence exact.
class BatchStream {
 public:
  BatchStream(const ImageDataset& ds, int batch_size, std::uint64_t seed);

  std::int64_t batches_per_epoch() const { return static_cast<std::int64_t>(ds_->size()) / batch_; }
  std::vector<int> indices_at(std::int64_t iteration) const;
  Tensor<float> batch_at(std::int64_t iteration) const;
  int batch_size() const { return batch_; }

 private:
  const ImageDataset* ds_;
  int batch_;
  std::uint64_t seed_;
};

}  // namespace modify::data
