#pragma once

// Image decoding/encoding and dataset directory ingestion. This is the only
// header that depends on OpenCV.

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <string>
#include <vector>

#include "ssdr/image.hpp"

namespace ssdr {

inline GrayImage read_gray_image(const std::filesystem::path& path) {
  cv::Mat m;
  try {
    m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  } catch (const cv::Exception&) {
  }
  if (m.empty() || m.depth() != CV_8U) throw DataError(path.string() + ": cannot decode image");
  GrayImage img(static_cast<std::size_t>(m.rows), static_cast<std::size_t>(m.cols));
  for (int y = 0; y < m.rows; ++y) {
    std::copy_n(m.ptr<std::uint8_t>(y), m.cols, img.pixels.begin() + static_cast<std::ptrdiff_t>(y) * m.cols);
  }
  return img;
}

inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
  cv::Mat m(static_cast<int>(img.height), static_cast<int>(img.width), CV_8UC1,
            const_cast<std::uint8_t*>(img.pixels.data()));
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m);
  } catch (const cv::Exception&) {
  }
  if (!ok) throw DataError(path.string() + ": cannot write PNG");
}

namespace detail {
inline std::string normalize_class_name(std::string s) {
  std::string out;
  for (char ch : s) {
    if (ch == '-' || ch == '_' || ch == ' ') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

inline bool is_image_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".bmp" || ext == ".jpg" || ext == ".jpeg";
}
}  // namespace detail

/// Reads <root>/<class>/*.{png,bmp,jpg}. Class directories are matched to the
/// canonical names ignoring case and '-', '_' or ' '. Images are ordered by
/// (class, filename) and must be 200x200.
inline Dataset load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError(root.string() + ": not a directory");
  std::vector<fs::path> class_dirs(kClassNames.size());
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const auto key = detail::normalize_class_name(entry.path().filename().string());
    for (std::size_t c = 0; c < kClassNames.size(); ++c) {
      if (key == detail::normalize_class_name(std::string(kClassNames[c]))) class_dirs[c] = entry.path();
    }
  }
  std::string missing;
  for (std::size_t c = 0; c < kClassNames.size(); ++c) {
    if (class_dirs[c].empty()) missing += (missing.empty() ? "" : ", ") + std::string(kClassNames[c]);
  }
  if (!missing.empty()) throw DataError(root.string() + ": missing class directories: " + missing);

  Dataset ds{{}, fs::absolute(root).string()};
  for (std::size_t c = 0; c < kClassNames.size(); ++c) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[c])) {
      if (entry.is_regular_file() && detail::is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    for (const auto& f : files) {
      LabeledImage im{read_gray_image(f), static_cast<int>(c), f.string()};
      check_labeled_image(im);
      ds.images.push_back(std::move(im));
    }
  }
  return ds;
}

/// Writes <root>/<class>/<index>.png for every image.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::array<std::size_t, kClassNames.size()> next{};
  for (const auto& name : kClassNames) fs::create_directories(root / std::string(name));
  for (const auto& im : ds.images) {
    const auto c = static_cast<std::size_t>(im.label);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu.png", next[c]++);
    write_png(root / std::string(kClassNames[c]) / buf, im.image);
  }
}

}  // namespace ssdr
