#include "modify/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>

#include "modify/errors.hpp"
#include "modify/imageio.hpp"
#include "modify/rng.hpp"

namespace fs = std::filesystem;

namespace modify::data {

StyleProfile profile_from_string(const std::string& s) {
  if (s == "photo") return StyleProfile::Photo;
  if (s == "painterly") return StyleProfile::Painterly;
  if (s == "sketch") return StyleProfile::Sketch;
  throw ConfigError("unknown style profile: " + s);
}

const char* to_string(StyleProfile p) {
  switch (p) {
    case StyleProfile::Photo: return "photo";
    case StyleProfile::Painterly: return "painterly";
    case StyleProfile::Sketch: return "sketch";
  }
  return "?";
}

namespace {

struct Rgb {
  float r, g, b;
};

struct Canvas {
  int res;
  std::vector<float> px;  // [3,R,R] in [0,1]
  explicit Canvas(int r) : res(r), px(3ull * r * r) {}
  void fill(Rgb c) {
    for (int i = 0; i < res * res; ++i) {
      px[0ull * res * res + i] = c.r;
      px[1ull * res * res + i] = c.g;
      px[2ull * res * res + i] = c.b;
    }
  }
  void blend(int y, int x, Rgb c, float cov) {
    if (cov <= 0.f) return;
    if (cov > 1.f) cov = 1.f;
    const std::size_t hw = static_cast<std::size_t>(res) * res;
    const std::size_t i = static_cast<std::size_t>(y) * res + x;
    px[i] += cov * (c.r - px[i]);
    px[hw + i] += cov * (c.g - px[hw + i]);
    px[2 * hw + i] += cov * (c.b - px[2 * hw + i]);
  }
};

float ellipse_f(float nx, float ny, float cx, float cy, float rx, float ry) {
  const float dx = (nx - cx) / rx;
  const float dy = (ny - cy) / ry;
  return dx * dx + dy * dy;
}

void fill_ellipse(Canvas& c, float cx, float cy, float rx, float ry, Rgb col) {
  for (int y = 0; y < c.res; ++y)
    for (int x = 0; x < c.res; ++x) {
      const float nx = (x + 0.5f) / c.res, ny = (y + 0.5f) / c.res;
      const float f = ellipse_f(nx, ny, cx, cy, rx, ry);
      c.blend(y, x, col, (1.f - f) / 0.12f);
    }
}

void outline_ellipse(Canvas& c, float cx, float cy, float rx, float ry, Rgb col, float thick) {
  for (int y = 0; y < c.res; ++y)
    for (int x = 0; x < c.res; ++x) {
      const float nx = (x + 0.5f) / c.res, ny = (y + 0.5f) / c.res;
      const float f = ellipse_f(nx, ny, cx, cy, rx, ry);
      const float d = std::fabs(std::sqrt(f) - 1.f);
      c.blend(y, x, col, (thick - d) / 0.04f);
    }
}

Rgb jitter(rng::Rng& r, Rgb c, float amp) {
  auto clamp01 = [](float v) { return v < 0.f ? 0.f : (v > 1.f ? 1.f : v); };
  return {clamp01(c.r + static_cast<float>(r.uniform(-amp, amp))),
          clamp01(c.g + static_cast<float>(r.uniform(-amp, amp))),
          clamp01(c.b + static_cast<float>(r.uniform(-amp, amp)))};
}

Tensor<float> render_face(std::uint64_t seed, std::uint64_t index, int res, StyleProfile profile) {
  rng::Rng r(rng::derive(seed, rng::stream::kSynth, index));
  Canvas canvas(res);

  const float cx = 0.5f + static_cast<float>(r.uniform(-0.04, 0.04));
  const float cy = 0.54f + static_cast<float>(r.uniform(-0.04, 0.04));
  const float frx = 0.29f * (1.f + static_cast<float>(r.uniform(-0.12, 0.12)));
  const float fry = 0.36f * (1.f + static_cast<float>(r.uniform(-0.12, 0.12)));
  const float eye_dx = 0.115f * (1.f + static_cast<float>(r.uniform(-0.15, 0.15)));
  const float eye_y = cy - 0.085f + static_cast<float>(r.uniform(-0.015, 0.015));
  const float mouth_y = cy + 0.16f + static_cast<float>(r.uniform(-0.02, 0.02));
  const float mouth_rx = 0.085f * (1.f + static_cast<float>(r.uniform(-0.2, 0.2)));

  switch (profile) {
    case StyleProfile::Photo: {
      canvas.fill(jitter(r, {0.40f, 0.45f, 0.54f}, 0.04f));
      fill_ellipse(canvas, cx, cy - 0.22f, frx * 1.12f, fry * 0.55f, jitter(r, {0.20f, 0.15f, 0.11f}, 0.05f));
      fill_ellipse(canvas, cx, cy, frx, fry, jitter(r, {0.80f, 0.62f, 0.50f}, 0.05f));
      fill_ellipse(canvas, cx - eye_dx, eye_y, 0.045f, 0.028f, {0.97f, 0.97f, 0.97f});
      fill_ellipse(canvas, cx + eye_dx, eye_y, 0.045f, 0.028f, {0.97f, 0.97f, 0.97f});
      fill_ellipse(canvas, cx - eye_dx, eye_y, 0.020f, 0.020f, {0.10f, 0.08f, 0.07f});
      fill_ellipse(canvas, cx + eye_dx, eye_y, 0.020f, 0.020f, {0.10f, 0.08f, 0.07f});
      fill_ellipse(canvas, cx, mouth_y, mouth_rx, 0.030f, jitter(r, {0.62f, 0.32f, 0.32f}, 0.04f));
      // soft vignette
      for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
          const float nx = (x + 0.5f) / res - 0.5f, ny = (y + 0.5f) / res - 0.5f;
          const float v = 1.f - 0.25f * (nx * nx + ny * ny);
          const std::size_t hw = static_cast<std::size_t>(res) * res;
          const std::size_t i = static_cast<std::size_t>(y) * res + x;
          canvas.px[i] *= v;
          canvas.px[hw + i] *= v;
          canvas.px[2 * hw + i] *= v;
        }
      break;
    }
    case StyleProfile::Painterly: {
      canvas.fill(jitter(r, {0.79f, 0.55f, 0.30f}, 0.06f));
      fill_ellipse(canvas, cx, cy - 0.22f, frx * 1.15f, fry * 0.58f, jitter(r, {0.46f, 0.20f, 0.16f}, 0.06f));
      fill_ellipse(canvas, cx, cy, frx, fry, jitter(r, {0.93f, 0.72f, 0.46f}, 0.06f));
      fill_ellipse(canvas, cx - eye_dx, eye_y, 0.042f, 0.030f, jitter(r, {0.16f, 0.12f, 0.28f}, 0.05f));
      fill_ellipse(canvas, cx + eye_dx, eye_y, 0.042f, 0.030f, jitter(r, {0.16f, 0.12f, 0.28f}, 0.05f));
      fill_ellipse(canvas, cx, mouth_y, mouth_rx, 0.034f, jitter(r, {0.82f, 0.26f, 0.20f}, 0.05f));
      // brush-stroke luminance stripes
      const float freq = 7.f + static_cast<float>(r.uniform(0.0, 4.0));
      const float ang = static_cast<float>(r.uniform(0.0, 3.14159));
      const float phase = static_cast<float>(r.uniform(0.0, 6.28318));
      const float fx = std::cos(ang) * freq, fy = std::sin(ang) * freq;
      for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
          const float nx = (x + 0.5f) / res, ny = (y + 0.5f) / res;
          const float v = 1.f + 0.10f * std::sin(6.28318f * (fx * nx + fy * ny) + phase);
          const std::size_t hw = static_cast<std::size_t>(res) * res;
          const std::size_t i = static_cast<std::size_t>(y) * res + x;
          canvas.px[i] = std::min(1.f, canvas.px[i] * v);
          canvas.px[hw + i] = std::min(1.f, canvas.px[hw + i] * v);
          canvas.px[2 * hw + i] = std::min(1.f, canvas.px[2 * hw + i] * v);
        }
      break;
    }
    case StyleProfile::Sketch: {
      canvas.fill(jitter(r, {0.96f, 0.96f, 0.93f}, 0.02f));
      const Rgb line{0.15f, 0.15f, 0.18f};
      outline_ellipse(canvas, cx, cy, frx, fry, line, 0.05f);
      outline_ellipse(canvas, cx, cy - 0.22f, frx * 1.1f, fry * 0.55f, line, 0.06f);
      fill_ellipse(canvas, cx - eye_dx, eye_y, 0.022f, 0.020f, line);
      fill_ellipse(canvas, cx + eye_dx, eye_y, 0.022f, 0.020f, line);
      outline_ellipse(canvas, cx, mouth_y, mouth_rx, 0.028f, line, 0.10f);
      break;
    }
  }

  Tensor<float> out({3, res, res});
  for (std::size_t i = 0; i < canvas.px.size(); ++i) {
    float v = canvas.px[i] * 2.f - 1.f;
    out[static_cast<std::int64_t>(i)] = v < -1.f ? -1.f : (v > 1.f ? 1.f : v);
  }
  return out;
}

}  // namespace

ImageDataset synth_generate(const SyntheticSpec& spec) {
  if (spec.count < 1) throw ConfigError("synth_generate: count must be >= 1");
  ImageDataset ds;
  ds.resolution = spec.resolution;
  for (int i = 0; i < spec.count; ++i) {
    ds.images.push_back(render_face(spec.seed, static_cast<std::uint64_t>(i), spec.resolution, spec.profile));
    ds.ids.push_back(std::string("synth:") + to_string(spec.profile) + ":" + std::to_string(i));
  }
  return ds;
}

ImageDataset load_folder(const std::string& root, int resolution) {
  if (!fs::is_directory(root)) throw DataError("not a directory: " + root);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no images in folder: " + root);

  ImageDataset ds;
  ds.resolution = resolution;
  for (const auto& f : files) {
    try {
      ds.images.push_back(load_image(f, resolution));
      ds.ids.push_back(f);
    } catch (const DataError& e) {
      std::cerr << "warning: skipping " << f << ": " << e.what() << "\n";
    }
  }
  if (ds.images.empty()) throw DataError("no decodable images in folder: " + root);
  return ds;
}

Tensor<float> stack_batch(const ImageDataset& ds, const std::vector<int>& idx) {
  if (idx.empty()) throw DataError("stack_batch: empty index list");
  const int r = ds.resolution;
  Tensor<float> out({static_cast<int>(idx.size()), 3, r, r});
  const std::int64_t stride = 3ll * r * r;
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::memcpy(out.data() + static_cast<std::int64_t>(i) * stride,
                ds.images.at(static_cast<std::size_t>(idx[i])).data(),
                sizeof(float) * static_cast<std::size_t>(stride));
  return out;
}

BatchStream::BatchStream(const ImageDataset& ds, int batch_size, std::uint64_t seed)
    : ds_(&ds), batch_(batch_size), seed_(seed) {
  if (batch_size < 1) throw DataError("batch_size must be >= 1");
  if (static_cast<std::size_t>(batch_size) > ds.size())
    throw DataError("batch_size " + std::to_string(batch_size) + " exceeds dataset size " +
                    std::to_string(ds.size()));
}

std::vector<int> BatchStream::indices_at(std::int64_t iteration) const {
  const std::int64_t bpe = batches_per_epoch();
  const std::int64_t epoch = iteration / bpe;
  const std::int64_t slot = iteration % bpe;
  std::vector<int> perm(ds_->size());
  std::iota(perm.begin(), perm.end(), 0);
  rng::Rng r(rng::derive(seed_, rng::stream::kData, static_cast<std::uint64_t>(epoch)));
  r.shuffle(perm.begin(), perm.end());
  return {perm.begin() + slot * batch_, perm.begin() + (slot + 1) * batch_};
}

Tensor<float> BatchStream::batch_at(std::int64_t iteration) const {
  return stack_batch(*ds_, indices_at(iteration));
}

}  // namespace modify::data
