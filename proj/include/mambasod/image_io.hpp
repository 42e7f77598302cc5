#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mambasod/tensor.hpp"

namespace mambasod {

enum class ImageErrorCode { open_failed, bad_magic, malformed_header, unsupported_maxval, truncated, write_failed };

inline const char* to_string(ImageErrorCode code) {
  switch (code) {
    case ImageErrorCode::open_failed: return "open_failed";
    case ImageErrorCode::bad_magic: return "bad_magic";
    case ImageErrorCode::malformed_header: return "malformed_header";
    case ImageErrorCode::unsupported_maxval: return "unsupported_maxval";
    case ImageErrorCode::truncated: return "truncated";
    case ImageErrorCode::write_failed: return "write_failed";
  }
  return "unknown";
}

class ImageError : public std::runtime_error {
 public:
  ImageError(ImageErrorCode code, const std::string& path, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + path + ": " + detail), code_(code) {}

  ImageErrorCode code() const noexcept { return code_; }

 private:
  ImageErrorCode code_;
};

enum class ImageKind { rgb, gray };

/// 8-bit interleaved raster as stored in a binary PNM file.
struct Raster {
  std::size_t width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> bytes;
};

namespace detail {

// Header tokens are separated by whitespace; '#' starts a comment running to end of line.
inline bool next_header_token(const std::vector<std::uint8_t>& buf, std::size_t& pos, std::string& token) {
  token.clear();
  while (pos < buf.size()) {
    const auto ch = static_cast<char>(buf[pos]);
    if (ch == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      ++pos;
    } else {
      break;
    }
  }
  while (pos < buf.size() && !std::isspace(buf[pos]) && buf[pos] != '#') token.push_back(static_cast<char>(buf[pos++]));
  return !token.empty();
}

inline std::size_t parse_header_number(const std::string& token, const std::string& path, const char* field) {
  if (token.empty() || !std::all_of(token.begin(), token.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    throw ImageError(ImageErrorCode::malformed_header, path, std::string("invalid ") + field + " '" + token + "'");
  }
  if (token.size() > 9) throw ImageError(ImageErrorCode::malformed_header, path, std::string(field) + " too large");
  return static_cast<std::size_t>(std::stoul(token));
}

}  // namespace detail

inline Raster read_pnm(const std::string& path, ImageKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError(ImageErrorCode::open_failed, path, "cannot open for reading");
  const std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const char* expected = kind == ImageKind::rgb ? "P6" : "P5";
  if (buf.size() < 2 || buf[0] != expected[0] || buf[1] != expected[1]) {
    throw ImageError(ImageErrorCode::bad_magic, path, std::string("expected magic ") + expected);
  }
  std::size_t pos = 2;
  if (pos < buf.size() && !std::isspace(buf[pos]) && buf[pos] != '#') {
    throw ImageError(ImageErrorCode::bad_magic, path, std::string("expected magic ") + expected);
  }
  std::string token;
  std::size_t fields[3];
  const char* names[3] = {"width", "height", "maxval"};
  for (int f = 0; f < 3; ++f) {
    if (!detail::next_header_token(buf, pos, token)) {
      throw ImageError(ImageErrorCode::malformed_header, path, std::string("missing ") + names[f]);
    }
    fields[f] = detail::parse_header_number(token, path, names[f]);
  }
  if (fields[0] == 0 || fields[1] == 0) throw ImageError(ImageErrorCode::malformed_header, path, "zero extent");
  if (fields[2] != 255) {
    throw ImageError(ImageErrorCode::unsupported_maxval, path, "maxval " + std::to_string(fields[2]) + " (only 255)");
  }
  if (pos >= buf.size() || !std::isspace(buf[pos])) {
    throw ImageError(ImageErrorCode::malformed_header, path, "missing whitespace before raster");
  }
  ++pos;
  Raster r;
  r.width = fields[0];
  r.height = fields[1];
  r.channels = kind == ImageKind::rgb ? 3 : 1;
  const std::size_t need = r.width * r.height * r.channels;
  if (buf.size() - pos < need) {
    throw ImageError(ImageErrorCode::truncated, path,
                     "raster has " + std::to_string(buf.size() - pos) + " of " + std::to_string(need) + " bytes");
  }
  r.bytes.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos), buf.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return r;
}

inline void write_pnm(const std::string& path, const Raster& r) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError(ImageErrorCode::write_failed, path, "cannot open for writing");
  out << (r.channels == 3 ? "P6" : "P5") << '\n' << r.width << ' ' << r.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(r.bytes.data()), static_cast<std::streamsize>(r.bytes.size()));
  if (!out) throw ImageError(ImageErrorCode::write_failed, path, "write failed");
}

/// Raster to a [C,H,W] tensor with values v/255.
inline Tensor raster_to_tensor(const Raster& r) {
  Tensor t({r.channels, r.height, r.width});
  for (std::size_t i = 0; i < r.height; ++i) {
    for (std::size_t j = 0; j < r.width; ++j) {
      for (std::size_t c = 0; c < r.channels; ++c) {
        t(c, i, j) = static_cast<Real>(r.bytes[(i * r.width + j) * r.channels + c]) / Real(255);
      }
    }
  }
  return t;
}

/// Quantizes [0,1] values to bytes as round-half-up of 255*v (clamped).
inline std::uint8_t quantize_unit(Real v) {
  const Real scaled = std::floor(Real(255) * std::clamp(v, Real(0), Real(1)) + Real(0.5));
  return static_cast<std::uint8_t>(std::clamp(scaled, Real(0), Real(255)));
}

inline Raster tensor_to_raster(const Tensor& t) {
  Raster r;
  if (t.rank() == 2) {
    r.channels = 1;
    r.height = t.dim(0);
    r.width = t.dim(1);
  } else if (t.rank() == 3 && (t.dim(0) == 1 || t.dim(0) == 3)) {
    r.channels = t.dim(0);
    r.height = t.dim(1);
    r.width = t.dim(2);
  } else {
    throw DimensionError("tensor_to_raster: expected [H,W], [1,H,W] or [3,H,W], got " + shape_str(t.shape()));
  }
  const std::size_t plane = r.height * r.width;
  r.bytes.resize(plane * r.channels);
  for (std::size_t c = 0; c < r.channels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) r.bytes[p * r.channels + c] = quantize_unit(t[c * plane + p]);
  }
  return r;
}

/// Nearest-neighbour resize of a [C,H,W] map: source index floor(dst * in / out).
inline Tensor resize_nearest(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "resize_nearest input");
  const std::size_t channels = x.dim(0), in_h = x.dim(1), in_w = x.dim(2);
  Tensor y({channels, out_h, out_w});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < out_h; ++i) {
      const std::size_t si = i * in_h / out_h;
      for (std::size_t j = 0; j < out_w; ++j) y(c, i, j) = x(c, si, j * in_w / out_w);
    }
  }
  return y;
}

/// Loads a binary P6 (rgb) or P5 (gray) file as [C,H,W] in [0,1], optionally resized.
inline Tensor load_image(const std::string& path, ImageKind kind,
                         std::optional<std::pair<std::size_t, std::size_t>> size = std::nullopt) {
  Tensor t = raster_to_tensor(read_pnm(path, kind));
  if (size && (t.dim(1) != size->first || t.dim(2) != size->second)) t = resize_nearest(t, size->first, size->second);
  return t;
}

/// Writes a [1,H,W] (or [H,W]) map as P5, or a [3,H,W] map as P6.
inline void save_image(const Tensor& t, const std::string& path) { write_pnm(path, tensor_to_raster(t)); }

inline void save_saliency(const Tensor& pred, const std::string& path) {
  if (!(pred.rank() == 2 || (pred.rank() == 3 && pred.dim(0) == 1))) {
    throw DimensionError("save_saliency: expected a single-plane map, got " + shape_str(pred.shape()));
  }
  save_image(pred, path);
}

}  // namespace mambasod
