#include "qvlm/mask_io.hpp"

#include "qvlm/error.hpp"

#include <png.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace qvlm {

BinaryMask read_mask_png(const std::filesystem::path& path, std::string label) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    fail(ErrorCode::Io, "cannot read PNG '" + path.string() + "': " + image.message);
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(ErrorCode::Io, "cannot decode PNG '" + path.string() + "': " + image.message);
  }
  BinaryMask mask(int(image.width), int(image.height), std::move(label));
  const auto gray = Eigen::Map<const Raster<png_byte>>(buffer.data(), image.height, image.width);
  mask.bits = (gray > png_byte(127)).cast<std::uint8_t>();
  return mask;
}

void write_mask_png(const BinaryMask& mask, const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = png_uint_32(mask.width());
  image.height = png_uint_32(mask.height());
  image.format = PNG_FORMAT_GRAY;
  Raster<png_byte> gray = (mask.bits != 0).cast<png_byte>() * png_byte(255);
  if (!png_image_write_to_file(&image, path.c_str(), 0, gray.data(), 0, nullptr))
    fail(ErrorCode::Io, "cannot write PNG '" + path.string() + "': " + image.message);
}

std::vector<Raster<float>> read_float_planes(const std::filesystem::path& path, int width,
                                             int height, int planes) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open logit file '" + path.string() + "'");
  const auto plane_size = std::size_t(width) * height;
  in.seekg(0, std::ios::end);
  const auto bytes = std::size_t(in.tellg());
  if (bytes != plane_size * planes * sizeof(float))
    fail(ErrorCode::Structural, "logit file '" + path.string() + "' has " + std::to_string(bytes) +
                                    " bytes, expected " +
                                    std::to_string(plane_size * planes * sizeof(float)));
  in.seekg(0);
  std::vector<Raster<float>> out;
  for (int p = 0; p < planes; ++p) {
    Raster<float> plane(height, width);
    in.read(reinterpret_cast<char*>(plane.data()), std::streamsize(plane_size * sizeof(float)));
    out.push_back(std::move(plane));
  }
  return out;
}

void write_float_planes(const std::vector<Raster<float>>& planes,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write logit file '" + path.string() + "'");
  for (const auto& p : planes)
    out.write(reinterpret_cast<const char*>(p.data()), std::streamsize(p.size() * sizeof(float)));
}

}  // namespace qvlm
