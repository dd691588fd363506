#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <locale>
#include <sstream>
#include <string>
#include <vector>

#include "pnp/image.hpp"

namespace pnp {

enum class PgmEncoding { binary, plain };  // P5 / P2

namespace detail {

// Skips whitespace and '#' comments in a PNM header.
inline void skip_pnm_space(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_pnm_int(std::istream& in, const std::string& what) {
  skip_pnm_space(in);
  int v = -1;
  if (!(in >> v) || v < 0) throw IoError("malformed PGM header field: " + what);
  return v;
}

inline std::uint8_t quantize_u8(double v) {
  if (!std::isfinite(v)) v = 0.0;
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

}  // namespace detail

inline Image read_pgm(std::istream& in) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '2'))
    throw IoError("not a P5/P2 PGM stream");
  const int width = detail::read_pnm_int(in, "width");
  const int height = detail::read_pnm_int(in, "height");
  const int maxval = detail::read_pnm_int(in, "maxval");
  if (width == 0 || height == 0) throw IoError("PGM has zero size");
  if (maxval == 0 || maxval > 255) throw IoError("only 8-bit PGM is supported");
  Image img(height, width);
  if (magic[1] == '5') {
    in.get();  // single whitespace byte after maxval
    std::vector<unsigned char> buf(img.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
      throw IoError("truncated PGM pixel data");
    for (std::size_t i = 0; i < buf.size(); ++i) img[i] = buf[i];
  } else {
    for (std::size_t i = 0; i < img.size(); ++i)
      img[i] = detail::read_pnm_int(in, "pixel");
  }
  return img;
}

inline Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_pgm(in);
}

/// Values are rounded and clamped to [0, 255].
inline void write_pgm(std::ostream& out, const Image& img,
                      PgmEncoding enc = PgmEncoding::binary) {
  out << (enc == PgmEncoding::binary ? "P5\n" : "P2\n") << img.width() << ' ' << img.height()
      << "\n255\n";
  if (enc == PgmEncoding::binary) {
    std::vector<unsigned char> buf(img.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = detail::quantize_u8(img[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  } else {
    for (int r = 0; r < img.height(); ++r) {
      for (int c = 0; c < img.width(); ++c)
        out << (c ? " " : "") << static_cast<int>(detail::quantize_u8(img(r, c)));
      out << '\n';
    }
  }
}

/// Writes through a temporary sibling file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::function<void(std::ostream&)>& body) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.imbue(std::locale::classic());
    body(out);
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

inline void write_pgm(const std::filesystem::path& path, const Image& img,
                      PgmEncoding enc = PgmEncoding::binary) {
  write_file_atomic(path, [&](std::ostream& out) { write_pgm(out, img, enc); });
}

/// Binary mask as a PGM: 255 where observed. Reading maps nonzero to 1.
inline void write_mask_pgm(const std::filesystem::path& path, const Image& mask) {
  write_pgm(path, mask * 255.0);
}

inline Image read_mask_pgm(const std::filesystem::path& path) {
  Image m = read_pgm(path);
  for (double& v : m.pixels()) v = v > 0.0 ? 1.0 : 0.0;
  return m;
}

/// Kernel text format: "kh kw" on the first line, then kh*kw reals.
inline BlurKernel read_kernel(std::istream& in, bool allow_signed = false) {
  in.imbue(std::locale::classic());
  int kh = 0, kw = 0;
  if (!(in >> kh >> kw) || kh <= 0 || kw <= 0) throw IoError("malformed kernel header");
  std::vector<double> w(static_cast<std::size_t>(kh) * kw);
  for (double& v : w)
    if (!(in >> v)) throw IoError("kernel file has fewer than kh*kw weights");
  return allow_signed ? BlurKernel::signed_kernel(kh, kw, std::move(w))
                      : BlurKernel::normalized(kh, kw, std::move(w));
}

inline BlurKernel read_kernel(const std::filesystem::path& path, bool allow_signed = false) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_kernel(in, allow_signed);
}

inline void write_kernel(std::ostream& out, const BlurKernel& k) {
  out << k.height() << ' ' << k.width() << '\n' << std::setprecision(17);
  for (int r = 0; r < k.height(); ++r) {
    for (int c = 0; c < k.width(); ++c) out << (c ? " " : "") << k(r, c);
    out << '\n';
  }
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, [&](std::ostream& out) { out << text; });
}

}  // namespace pnp
