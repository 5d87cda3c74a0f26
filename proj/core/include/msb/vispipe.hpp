#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

namespace msb::vispipe {

struct GridConfig {
  int page_width = 275;
  int page_height = 425;
  int columns = 3;
  int rows = 4;
  int output_side = 512;
  std::array<std::uint8_t, 3> fill = {255, 255, 255};  // white, like blank pages

  int capacity() const { return columns * rows; }
  void validate() const;
  std::string grid_tag() const;  // e.g. "3x4"
};

struct PageGrid {
  std::string doc_id;
  cv::Mat pixels;  // output_side x output_side, CV_8UC3 (BGR)
  int pages_used = 0;
  int pages_truncated = 0;
};

// Scales pages to page_width x page_height, tiles them row-major into a
// (columns*page_width) x (rows*page_height) mosaic, pads missing cells with
// the fill color, truncates excess pages, then resizes to output_side with
// bicubic interpolation.
PageGrid build_grid(const std::vector<cv::Mat>& page_images, const GridConfig& cfg,
                    const std::string& doc_id = "");

// Intermediate mosaic before the final resize; exposed for geometry checks.
cv::Mat build_mosaic(const std::vector<cv::Mat>& page_images, const GridConfig& cfg,
                     int* pages_used = nullptr, int* pages_truncated = nullptr);

PageGrid build_grid_from_files(const std::vector<std::string>& page_paths, const GridConfig& cfg,
                               const std::string& doc_id);

// Renders a PDF through an external rasterizer (pdftoppm) and resizes every
// page to 1700x2200. Raises EnvironmentError when no rasterizer is present.
std::vector<cv::Mat> rasterize_pdf(const std::string& path);

// <doc_id>.grid.png plus a JSON sidecar with pages_used/pages_truncated.
void save_grid(const PageGrid& grid, const GridConfig& cfg, const std::string& out_dir);
cv::Mat load_grid_image(const std::string& path);

std::uint64_t grid_pixel_hash(const PageGrid& grid);

}  // namespace msb::vispipe
