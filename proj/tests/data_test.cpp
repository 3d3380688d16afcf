#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "modify/data.hpp"
#include "modify/imageio.hpp"

namespace fs = std::filesystem;
using namespace modify;

namespace {

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("modify_data_test_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("synthetic generator: reproducible, bounded, correctly shaped") {
  data::SyntheticSpec spec{0, 8, 64, data::StyleProfile::Photo};
  auto a = data::synth_generate(spec);
  auto b = data::synth_generate(spec);
  CHECK(a.size() == 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.images[i].shape() == Shape{3, 64, 64});
    CHECK(a.images[i].bitwise_equal(b.images[i]));
    for (std::int64_t j = 0; j < a.images[i].numel(); ++j) {
      CHECK(a.images[i][j] >= -1.f);
      CHECK(a.images[i][j] <= 1.f);
    }
  }
  auto c = data::synth_generate({1, 8, 64, data::StyleProfile::Photo});
  CHECK(!a.images[0].bitwise_equal(c.images[0]));
}

TEST_CASE("photo vs painterly profiles differ in mean channel statistics") {
  auto photo = data::synth_generate({3, 16, 32, data::StyleProfile::Photo});
  auto paint = data::synth_generate({3, 16, 32, data::StyleProfile::Painterly});
  double margin = 0;
  for (int c = 0; c < 3; ++c) {
    double mp = 0, mq = 0;
    for (std::size_t i = 0; i < photo.size(); ++i) {
      const auto& a = photo.images[i];
      const auto& b = paint.images[i];
      const std::int64_t hw = static_cast<std::int64_t>(a.dim(1)) * a.dim(2);
      for (std::int64_t j = 0; j < hw; ++j) {
        mp += a[c * hw + j];
        mq += b[c * hw + j];
      }
    }
    margin += std::fabs(mp - mq) / (static_cast<double>(photo.size()) * 32 * 32);
  }
  margin /= 3;
  CHECK(margin > 0.05);
}

TEST_CASE("folder loading: sorted, deterministic, corrupt files skipped") {
  auto dir = temp_dir("folder");
  auto ds = data::synth_generate({7, 3, 32, data::StyleProfile::Sketch});
  data::save_png((dir / "b.png").string(), ds.images[0]);
  data::save_png((dir / "a.png").string(), ds.images[1]);
  data::save_png((dir / "c.png").string(), ds.images[2]);
  {
    std::ofstream bad(dir / "broken.png");
    bad << "not an image";
  }

  auto loaded = data::load_folder(dir.string(), 32);
  CHECK(loaded.size() == 3);  // broken.png skipped with a warning
  CHECK(loaded.ids[0] < loaded.ids[1]);
  CHECK(loaded.ids[1] < loaded.ids[2]);

  auto again = data::load_folder(dir.string(), 32);
  for (std::size_t i = 0; i < loaded.size(); ++i)
    CHECK(loaded.images[i].bitwise_equal(again.images[i]));
}

TEST_CASE("folder loading error cases") {
  CHECK_THROWS_AS((void)data::load_folder("/nonexistent/path", 32), DataError);
  auto dir = temp_dir("empty");
  CHECK_THROWS_AS((void)data::load_folder(dir.string(), 32), DataError);
  {
    std::ofstream bad(dir / "only_broken.png");
    bad << "garbage";
  }
  CHECK_THROWS_AS((void)data::load_folder(dir.string(), 32), DataError);
}

TEST_CASE("png round trip preserves pixels to quantization accuracy") {
  auto dir = temp_dir("roundtrip");
  auto ds = data::synth_generate({9, 1, 32, data::StyleProfile::Painterly});
  data::save_png((dir / "x.png").string(), ds.images[0]);
  auto back = data::load_image((dir / "x.png").string(), 32);
  for (std::int64_t i = 0; i < back.numel(); ++i)
    CHECK(std::fabs(back[i] - ds.images[0][i]) <= 1.5f / 127.5f);
}

TEST_CASE("batch stream: deterministic, drop-last, permutation per epoch") {
  auto ds = data::synth_generate({11, 8, 16, data::StyleProfile::Photo});

  data::BatchStream s1(ds, 3, 7);
  data::BatchStream s2(ds, 3, 7);
  CHECK(s1.batches_per_epoch() == 2);  // 8 items, batch 3 -> 2 batches, 2 dropped
  for (std::int64_t it = 0; it < 6; ++it) {
    CHECK(s1.indices_at(it) == s2.indices_at(it));
    CHECK(s1.batch_at(it).bitwise_equal(s2.batch_at(it)));
  }

  // epoch permutation covers each selected index at most once per epoch
  auto e0 = s1.indices_at(0);
  auto e1 = s1.indices_at(1);
  for (int i : e0)
    for (int j : e1) CHECK(i != j);

  data::BatchStream other(ds, 3, 8);
  bool different = false;
  for (std::int64_t it = 0; it < 4 && !different; ++it)
    different = other.indices_at(it) != s1.indices_at(it);
  CHECK(different);
}

TEST_CASE("batch size 1 arrival order is the shuffled order") {
  auto ds = data::synth_generate({13, 5, 16, data::StyleProfile::Photo});
  data::BatchStream s(ds, 1, 3);
  std::vector<int> epoch;
  for (std::int64_t it = 0; it < 5; ++it) epoch.push_back(s.indices_at(it)[0]);
  std::vector<int> sorted = epoch;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4});
}

TEST_CASE("batch stream rejects oversized batches") {
  auto ds = data::synth_generate({17, 4, 16, data::StyleProfile::Photo});
  CHECK_THROWS_AS(data::BatchStream(ds, 5, 0), DataError);
}

TEST_CASE("grid layout") {
  auto ds = data::synth_generate({19, 2, 16, data::StyleProfile::Photo});
  auto grid = data::make_grid({{ds.images[0], ds.images[1]}, {ds.images[1]}}, 2);
  CHECK(grid.shape() == Shape{3, 2 * (16 + 2) + 2, 2 * (16 + 2) + 2});
}
