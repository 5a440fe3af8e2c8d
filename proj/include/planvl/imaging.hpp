#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "planvl/errors.hpp"

namespace planvl {

struct ImageInfo {
  int width = 0;
  int height = 0;
  std::string format;  // "png" | "jpeg"
};

// Reads dimensions from PNG (IHDR) or JPEG (SOF marker) headers.
ImageInfo read_image_info_bytes(std::string_view bytes, const std::string& what);
ImageInfo read_image_info(const std::string& path);

bool looks_like_png(std::string_view bytes);
bool looks_like_jpeg(std::string_view bytes);

// Encodes 8-bit RGB pixels (row-major, 3 bytes per pixel) as a PNG.
std::string encode_png_rgb(int width, int height, const std::vector<unsigned char>& rgb);
void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<unsigned char>& rgb);

struct PdfImage {
  int page = 0;         // 0-based page index
  std::string bytes;    // encoded image file contents
  std::string format;   // "png" | "jpeg"
  int width = 0;
  int height = 0;
};

struct PdfExtraction {
  std::vector<PdfImage> images;
  int skipped_unsupported = 0;
  std::vector<std::string> warnings;
};

// Minimal raster extractor for PDF files: DCTDecode streams pass through as
// JPEG; FlateDecode streams (no predictor) are re-encoded as PNG. Anything
// else is counted and skipped. Encrypted documents are rejected.
PdfExtraction extract_pdf_images(const std::string& pdf_path);
PdfExtraction extract_pdf_images_bytes(const std::string& data, const std::string& what = "pdf");

}  // namespace planvl
