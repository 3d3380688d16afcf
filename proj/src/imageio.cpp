#include "modify/imageio.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "modify/errors.hpp"

namespace modify::data {

Tensor<float> load_image(const std::string& path, int resolution) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
  if (img.empty()) throw DataError("cannot decode image: " + path);
  const int side = std::min(img.rows, img.cols);
  cv::Rect roi((img.cols - side) / 2, (img.rows - side) / 2, side, side);
  cv::Mat square = img(roi);
  cv::Mat resized;
  cv::resize(square, resized, cv::Size(resolution, resolution), 0, 0, cv::INTER_LINEAR);

  Tensor<float> out({3, resolution, resolution});
  for (int y = 0; y < resolution; ++y)
    for (int x = 0; x < resolution; ++x) {
      const cv::Vec3b px = resized.at<cv::Vec3b>(y, x);  // BGR
      out[(0 * resolution + y) * resolution + x] = px[2] / 127.5f - 1.f;
      out[(1 * resolution + y) * resolution + x] = px[1] / 127.5f - 1.f;
      out[(2 * resolution + y) * resolution + x] = px[0] / 127.5f - 1.f;
    }
  return out;
}

static unsigned char to_u8(float v) {
  float scaled = (v + 1.f) * 127.5f;
  if (scaled < 0.f) scaled = 0.f;
  if (scaled > 255.f) scaled = 255.f;
  return static_cast<unsigned char>(std::lround(scaled));
}

void save_png(const std::string& path, const Tensor<float>& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw DataError("save_png expects [3,H,W]");
  const int h = img.dim(1), w = img.dim(2);
  cv::Mat out(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      cv::Vec3b& px = out.at<cv::Vec3b>(y, x);
      px[2] = to_u8(img[(0 * h + y) * w + x]);
      px[1] = to_u8(img[(1 * h + y) * w + x]);
      px[0] = to_u8(img[(2 * h + y) * w + x]);
    }
  if (!cv::imwrite(path, out)) throw DataError("cannot write PNG: " + path);
}

Tensor<float> make_grid(const std::vector<std::vector<Tensor<float>>>& rows, int pad) {
  if (rows.empty() || rows[0].empty()) throw DataError("make_grid: empty grid");
  const int r = rows[0][0].dim(1);
  std::size_t cols = 0;
  for (const auto& row : rows) cols = std::max(cols, row.size());
  const int gh = static_cast<int>(rows.size()) * (r + pad) + pad;
  const int gw = static_cast<int>(cols) * (r + pad) + pad;
  Tensor<float> grid = Tensor<float>::full({3, gh, gw}, 1.f);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      const Tensor<float>& im = rows[i][j];
      if (im.rank() != 3 || im.dim(0) != 3 || im.dim(1) != r || im.dim(2) != r)
        throw DataError("make_grid: image shape mismatch");
      const int oy = pad + static_cast<int>(i) * (r + pad);
      const int ox = pad + static_cast<int>(j) * (r + pad);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < r; ++y)
          for (int x = 0; x < r; ++x)
            grid[(c * gh + oy + y) * gw + ox + x] = im[(c * r + y) * r + x];
    }
  return grid;
}

}  // namespace modify::data
