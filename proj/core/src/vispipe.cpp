#include "msb/vispipe.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "msb/common.hpp"

namespace msb::vispipe {

namespace fs = std::filesystem;
using nlohmann::json;

void GridConfig::validate() const {
  if (columns <= 0 || rows <= 0) throw DomainError("grid: columns and rows must be > 0");
  if (page_width <= 0 || page_height <= 0) throw DomainError("grid: page size must be > 0");
  if (output_side <= 0) throw DomainError("grid: output_side must be > 0");
}

std::string GridConfig::grid_tag() const {
  return std::to_string(columns) + "x" + std::to_string(rows);
}

cv::Mat build_mosaic(const std::vector<cv::Mat>& page_images, const GridConfig& cfg,
                     int* pages_used, int* pages_truncated) {
  cfg.validate();
  if (page_images.empty()) throw InputError("build_grid: page list is empty");

  const int used = std::min<int>(static_cast<int>(page_images.size()), cfg.capacity());
  if (pages_used) *pages_used = used;
  if (pages_truncated) *pages_truncated = static_cast<int>(page_images.size()) - used;

  const cv::Scalar fill(cfg.fill[2], cfg.fill[1], cfg.fill[0]);  // BGR
  cv::Mat mosaic(cfg.rows * cfg.page_height, cfg.columns * cfg.page_width, CV_8UC3, fill);

  for (int i = 0; i < used; ++i) {
    const cv::Mat& page = page_images[static_cast<std::size_t>(i)];
    if (page.empty()) throw InputError("build_grid: page " + std::to_string(i) + " is not decodable");
    cv::Mat page3;
    if (page.channels() == 3) {
      page3 = page;
    } else if (page.channels() == 1) {
      cv::cvtColor(page, page3, cv::COLOR_GRAY2BGR);
    } else {
      cv::cvtColor(page, page3, cv::COLOR_BGRA2BGR);
    }
    cv::Mat scaled;
    cv::resize(page3, scaled, cv::Size(cfg.page_width, cfg.page_height), 0, 0, cv::INTER_CUBIC);
    const int r = i / cfg.columns;  // row-major reading order
    const int c = i % cfg.columns;
    scaled.copyTo(mosaic(cv::Rect(c * cfg.page_width, r * cfg.page_height, cfg.page_width,
                                  cfg.page_height)));
  }
  return mosaic;
}

PageGrid build_grid(const std::vector<cv::Mat>& page_images, const GridConfig& cfg,
                    const std::string& doc_id) {
  PageGrid grid;
  grid.doc_id = doc_id;
  cv::Mat mosaic = build_mosaic(page_images, cfg, &grid.pages_used, &grid.pages_truncated);
  cv::resize(mosaic, grid.pixels, cv::Size(cfg.output_side, cfg.output_side), 0, 0,
             cv::INTER_CUBIC);
  return grid;
}

PageGrid build_grid_from_files(const std::vector<std::string>& page_paths, const GridConfig& cfg,
                               const std::string& doc_id) {
  std::vector<cv::Mat> pages;
  pages.reserve(page_paths.size());
  for (std::size_t i = 0; i < page_paths.size(); ++i) {
    cv::Mat img = cv::imread(page_paths[i], cv::IMREAD_COLOR);
    if (img.empty()) {
      throw InputError("cannot decode page " + std::to_string(i) + " (" + page_paths[i] +
                       ") of doc " + doc_id);
    }
    pages.push_back(std::move(img));
  }
  return build_grid(pages, cfg, doc_id);
}

std::vector<cv::Mat> rasterize_pdf(const std::string& path) {
  if (!fs::exists(path)) throw InputError("PDF not found: " + path);
  if (std::system("command -v pdftoppm > /dev/null 2>&1") != 0) {
    throw EnvironmentError("no PDF rasterizer available (pdftoppm not on PATH)");
  }
  fs::path tmp = fs::temp_directory_path() / ("msb_pdf_" + std::to_string(::getpid()));
  fs::create_directories(tmp);
  std::string cmd = "pdftoppm -png -r 150 '" + path + "' '" + (tmp / "page").string() + "'";
  if (std::system(cmd.c_str()) != 0) {
    fs::remove_all(tmp);
    throw InputError("rasterizer failed to read PDF: " + path);
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(tmp)) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<cv::Mat> pages;
  for (const auto& f : files) {
    cv::Mat img = cv::imread(f.string(), cv::IMREAD_COLOR);
    if (img.empty()) continue;
    cv::Mat resized;
    cv::resize(img, resized, cv::Size(1700, 2200), 0, 0, cv::INTER_CUBIC);
    pages.push_back(std::move(resized));
  }
  fs::remove_all(tmp);
  if (pages.empty()) throw InputError("PDF produced no pages: " + path);
  return pages;
}

void save_grid(const PageGrid& grid, const GridConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path png = fs::path(out_dir) / (grid.doc_id + ".grid.png");
  if (!cv::imwrite(png.string(), grid.pixels)) {
    throw InputError("cannot write grid image: " + png.string());
  }
  json sidecar;
  sidecar["doc_id"] = grid.doc_id;
  sidecar["pages_used"] = grid.pages_used;
  sidecar["pages_truncated"] = grid.pages_truncated;
  sidecar["grid"] = cfg.grid_tag();
  std::ofstream out(fs::path(out_dir) / (grid.doc_id + ".grid.json"));
  out << sidecar.dump(2) << '\n';
}

cv::Mat load_grid_image(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
  if (img.empty()) throw InputError("cannot decode grid image: " + path);
  return img;
}

std::uint64_t grid_pixel_hash(const PageGrid& grid) {
  cv::Mat contiguous = grid.pixels.isContinuous() ? grid.pixels : grid.pixels.clone();
  return fnv1a64({contiguous.data, contiguous.total() * contiguous.elemSize()});
}

}  // namespace msb::vispipe
