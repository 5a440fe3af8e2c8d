#include "planvl/imaging.hpp"

#include <zlib.h>

#include <cctype>
#include <cstring>
#include <map>
#include <optional>

#include "planvl/store.hpp"

namespace planvl {

namespace {

std::uint32_t be32(std::string_view b, std::size_t pos) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 3]));
}

std::uint16_t be16(std::string_view b, std::size_t pos) {
  return static_cast<std::uint16_t>((static_cast<unsigned char>(b[pos]) << 8) |
                                    static_cast<unsigned char>(b[pos + 1]));
}

void put_be32(std::string& out, std::uint32_t v) {
  out += static_cast<char>((v >> 24) & 0xFF);
  out += static_cast<char>((v >> 16) & 0xFF);
  out += static_cast<char>((v >> 8) & 0xFF);
  out += static_cast<char>(v & 0xFF);
}

ImageInfo png_info(std::string_view bytes, const std::string& what) {
  // signature(8) + length(4) + "IHDR"(4) + width(4) + height(4)
  if (bytes.size() < 24 || bytes.substr(12, 4) != "IHDR") {
    throw ParseError(what + ": truncated PNG header");
  }
  ImageInfo info;
  info.width = static_cast<int>(be32(bytes, 16));
  info.height = static_cast<int>(be32(bytes, 20));
  info.format = "png";
  if (info.width < 1 || info.height < 1) {
    throw ParseError(what + ": invalid PNG dimensions");
  }
  return info;
}

ImageInfo jpeg_info(std::string_view bytes, const std::string& what) {
  std::size_t pos = 2;  // past FFD8
  while (pos + 4 <= bytes.size()) {
    if (static_cast<unsigned char>(bytes[pos]) != 0xFF) {
      throw ParseError(what + ": bad JPEG marker alignment");
    }
    unsigned char marker = static_cast<unsigned char>(bytes[pos + 1]);
    while (marker == 0xFF && pos + 2 < bytes.size()) {
      ++pos;
      marker = static_cast<unsigned char>(bytes[pos + 1]);
    }
    if (marker == 0xD8 || (marker >= 0xD0 && marker <= 0xD7)) {  // no payload
      pos += 2;
      continue;
    }
    if (pos + 4 > bytes.size()) break;
    const std::size_t seg_len = be16(bytes, pos + 2);
    const bool is_sof = (marker >= 0xC0 && marker <= 0xCF) && marker != 0xC4 && marker != 0xC8 &&
                        marker != 0xCC;
    if (is_sof) {
      if (pos + 9 > bytes.size()) throw ParseError(what + ": truncated JPEG SOF");
      ImageInfo info;
      info.height = be16(bytes, pos + 5);
      info.width = be16(bytes, pos + 7);
      info.format = "jpeg";
      if (info.width < 1 || info.height < 1) throw ParseError(what + ": invalid JPEG dimensions");
      return info;
    }
    if (seg_len < 2) throw ParseError(what + ": invalid JPEG segment length");
    pos += 2 + seg_len;
  }
  throw ParseError(what + ": no JPEG SOF marker found");
}

std::string zlib_deflate(const std::string& raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::string out(bound, '\0');
  if (compress2(reinterpret_cast<Bytef*>(out.data()), &bound,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                Z_BEST_SPEED) != Z_OK) {
    throw IoError("zlib compression failed");
  }
  out.resize(bound);
  return out;
}

std::optional<std::string> zlib_inflate(std::string_view raw, std::size_t max_out) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) return std::nullopt;
  std::string out;
  out.resize(std::min<std::size_t>(max_out, std::max<std::size_t>(raw.size() * 4, 4096)));
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(raw.data()));
  zs.avail_in = static_cast<uInt>(raw.size());
  std::size_t written = 0;
  int rc = Z_OK;
  while (rc == Z_OK) {
    if (written == out.size()) {
      if (out.size() >= max_out) {
        inflateEnd(&zs);
        return std::nullopt;
      }
      out.resize(std::min(max_out, out.size() * 2));
    }
    zs.next_out = reinterpret_cast<Bytef*>(out.data() + written);
    zs.avail_out = static_cast<uInt>(out.size() - written);
    rc = inflate(&zs, Z_NO_FLUSH);
    written = out.size() - zs.avail_out;
  }
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) return std::nullopt;
  out.resize(written);
  return out;
}

}  // namespace

bool looks_like_png(std::string_view bytes) {
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), sig, 8) == 0;
}

bool looks_like_jpeg(std::string_view bytes) {
  return bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
         static_cast<unsigned char>(bytes[1]) == 0xD8 &&
         static_cast<unsigned char>(bytes[2]) == 0xFF;
}

ImageInfo read_image_info_bytes(std::string_view bytes, const std::string& what) {
  if (looks_like_png(bytes)) return png_info(bytes, what);
  if (looks_like_jpeg(bytes)) return jpeg_info(bytes, what);
  throw ParseError(what + ": unsupported image format (expected PNG or JPEG)");
}

ImageInfo read_image_info(const std::string& path) {
  return read_image_info_bytes(read_file(path), path);
}

std::string encode_png_rgb(int width, int height, const std::vector<unsigned char>& rgb) {
  if (width < 1 || height < 1) throw PreconditionError("encode_png_rgb: dimensions must be >= 1");
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw PreconditionError("encode_png_rgb: pixel buffer size mismatch");
  }
  std::string raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + static_cast<std::size_t>(width) * 3));
  for (int y = 0; y < height; ++y) {
    raw += '\0';  // filter type: none
    raw.append(reinterpret_cast<const char*>(rgb.data()) + static_cast<std::size_t>(y) * width * 3,
               static_cast<std::size_t>(width) * 3);
  }
  const std::string idat = zlib_deflate(raw);

  std::string out(reinterpret_cast<const char*>("\x89PNG\r\n\x1a\n"), 8);
  auto chunk = [&out](const char type[4], const std::string& data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t crc_start = out.size();
    out.append(type, 4);
    out += data;
    const uLong crc = crc32(0, reinterpret_cast<const Bytef*>(out.data() + crc_start),
                            static_cast<uInt>(out.size() - crc_start));
    put_be32(out, static_cast<std::uint32_t>(crc));
  };
  std::string ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(width));
  put_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr += static_cast<char>(8);  // bit depth
  ihdr += static_cast<char>(2);  // color type: truecolor
  ihdr += '\0';                  // compression
  ihdr += '\0';                  // filter
  ihdr += '\0';                  // interlace
  chunk("IHDR", ihdr);
  chunk("IDAT", idat);
  chunk("IEND", "");
  return out;
}

void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<unsigned char>& rgb) {
  write_file_atomic(path, encode_png_rgb(width, height, rgb));
}

// ---- PDF mini-extractor ----

namespace {

struct PdfObject {
  int id = 0;
  std::string_view body;    // between "obj" and "endobj" (dict + maybe stream)
  std::size_t offset = 0;   // order in file
};

// `key` like "/Width"; returns the integer right after it.
std::optional<long> dict_int(std::string_view body, const std::string& key) {
  std::size_t pos = body.find(key);
  if (pos == std::string_view::npos) return std::nullopt;
  pos += key.size();
  while (pos < body.size() && (body[pos] == ' ' || body[pos] == '\r' || body[pos] == '\n')) ++pos;
  if (pos >= body.size() || (body[pos] < '0' || body[pos] > '9')) return std::nullopt;
  long v = 0;
  while (pos < body.size() && body[pos] >= '0' && body[pos] <= '9') {
    v = v * 10 + (body[pos] - '0');
    ++pos;
  }
  return v;
}

bool dict_has_name(std::string_view body, const std::string& name) {
  std::size_t pos = body.find(name);
  while (pos != std::string_view::npos) {
    const std::size_t end = pos + name.size();
    // must not be a prefix of a longer name like /Pages vs /Page
    const bool boundary = end >= body.size() ||
                          !(std::isalnum(static_cast<unsigned char>(body[end])) || body[end] == '_');
    if (boundary) return true;
    pos = body.find(name, pos + 1);
  }
  return false;
}

std::optional<std::string_view> stream_bytes(std::string_view body) {
  std::size_t pos = body.find("stream");
  if (pos == std::string_view::npos) return std::nullopt;
  pos += 6;
  if (pos < body.size() && body[pos] == '\r') ++pos;
  if (pos < body.size() && body[pos] == '\n') ++pos;
  const std::size_t end = body.rfind("endstream");
  if (end == std::string_view::npos || end < pos) return std::nullopt;
  std::size_t stop = end;
  // strip the EOL that precedes "endstream"
  if (stop > pos && body[stop - 1] == '\n') --stop;
  if (stop > pos && body[stop - 1] == '\r') --stop;
  return body.substr(pos, stop - pos);
}

}  // namespace

PdfExtraction extract_pdf_images(const std::string& pdf_path) {
  return extract_pdf_images_bytes(read_file(pdf_path), pdf_path);
}

PdfExtraction extract_pdf_images_bytes(const std::string& data, const std::string& what) {
  if (data.size() < 5 || data.compare(0, 5, "%PDF-") != 0) {
    throw IoError(what + ": not a PDF document");
  }
  if (data.find("/Encrypt") != std::string::npos) {
    throw IoError(what + ": encrypted PDF is not supported");
  }
  const std::string_view view(data);

  // collect "N 0 obj ... endobj" spans
  std::vector<PdfObject> objects;
  std::size_t pos = 0;
  while (true) {
    const std::size_t obj_kw = view.find(" obj", pos);
    if (obj_kw == std::string_view::npos) break;
    // walk back over "N 0" (generation then id)
    std::size_t p = obj_kw;
    auto skip_back_int = [&view](std::size_t from) -> std::pair<long, std::size_t> {
      std::size_t e = from;
      while (e > 0 && view[e - 1] == ' ') --e;
      std::size_t s = e;
      while (s > 0 && view[s - 1] >= '0' && view[s - 1] <= '9') --s;
      if (s == e) return {-1, from};
      long v = 0;
      for (std::size_t i = s; i < e; ++i) v = v * 10 + (view[i] - '0');
      return {v, s};
    };
    auto [gen, gen_start] = skip_back_int(p);
    auto [id, id_start] = skip_back_int(gen_start);
    const std::size_t body_start = obj_kw + 4;
    const std::size_t body_end = view.find("endobj", body_start);
    if (body_end == std::string_view::npos) break;
    if (id >= 0 && gen >= 0) {
      objects.push_back({static_cast<int>(id), view.substr(body_start, body_end - body_start),
                         id_start});
    }
    pos = body_end + 6;
  }

  // page objects in document order
  std::vector<const PdfObject*> pages;
  for (const auto& obj : objects) {
    if (dict_has_name(obj.body, "/Page") && !dict_has_name(obj.body, "/Pages") &&
        obj.body.find("/Type") != std::string_view::npos) {
      pages.push_back(&obj);
    }
  }

  auto page_of = [&pages](int image_id) -> int {
    const std::string ref = " " + std::to_string(image_id) + " 0 R";
    for (std::size_t i = 0; i < pages.size(); ++i) {
      if (pages[i]->body.find(ref) != std::string_view::npos) return static_cast<int>(i) + 1;
    }
    return 0;  // unattributed
  };

  PdfExtraction result;
  for (const auto& obj : objects) {
    if (!dict_has_name(obj.body, "/Image") || obj.body.find("/Subtype") == std::string_view::npos) {
      continue;
    }
    const auto stream = stream_bytes(obj.body);
    if (!stream) {
      ++result.skipped_unsupported;
      result.warnings.push_back("image object " + std::to_string(obj.id) + ": no stream data");
      continue;
    }
    PdfImage img;
    img.page = page_of(obj.id);
    if (dict_has_name(obj.body, "/DCTDecode")) {
      img.bytes = std::string(*stream);
      img.format = "jpeg";
      try {
        const ImageInfo info = read_image_info_bytes(img.bytes, "embedded JPEG");
        img.width = info.width;
        img.height = info.height;
      } catch (const ParseError&) {
        img.width = static_cast<int>(dict_int(obj.body, "/Width").value_or(0));
        img.height = static_cast<int>(dict_int(obj.body, "/Height").value_or(0));
      }
    } else if (dict_has_name(obj.body, "/FlateDecode")) {
      if (dict_has_name(obj.body, "/Predictor")) {
        ++result.skipped_unsupported;
        result.warnings.push_back("image object " + std::to_string(obj.id) +
                                  ": FlateDecode predictors unsupported");
        continue;
      }
      const auto w = dict_int(obj.body, "/Width");
      const auto h = dict_int(obj.body, "/Height");
      const long bpc = dict_int(obj.body, "/BitsPerComponent").value_or(8);
      if (!w || !h || *w < 1 || *h < 1 || bpc != 8) {
        ++result.skipped_unsupported;
        result.warnings.push_back("image object " + std::to_string(obj.id) +
                                  ": unsupported Flate image parameters");
        continue;
      }
      const bool gray = dict_has_name(obj.body, "/DeviceGray");
      const std::size_t channels = gray ? 1 : 3;
      const std::size_t expected = static_cast<std::size_t>(*w) * *h * channels;
      const auto rawOpt = zlib_inflate(*stream, expected + 16);
      if (!rawOpt || rawOpt->size() < expected) {
        ++result.skipped_unsupported;
        result.warnings.push_back("image object " + std::to_string(obj.id) +
                                  ": Flate stream did not yield expected samples");
        continue;
      }
      std::vector<unsigned char> rgb(static_cast<std::size_t>(*w) * *h * 3);
      for (std::size_t px = 0; px < static_cast<std::size_t>(*w) * *h; ++px) {
        if (gray) {
          const unsigned char g = static_cast<unsigned char>((*rawOpt)[px]);
          rgb[px * 3] = rgb[px * 3 + 1] = rgb[px * 3 + 2] = g;
        } else {
          rgb[px * 3] = static_cast<unsigned char>((*rawOpt)[px * 3]);
          rgb[px * 3 + 1] = static_cast<unsigned char>((*rawOpt)[px * 3 + 1]);
          rgb[px * 3 + 2] = static_cast<unsigned char>((*rawOpt)[px * 3 + 2]);
        }
      }
      img.bytes = encode_png_rgb(static_cast<int>(*w), static_cast<int>(*h), rgb);
      img.format = "png";
      img.width = static_cast<int>(*w);
      img.height = static_cast<int>(*h);
    } else {
      ++result.skipped_unsupported;
      result.warnings.push_back("image object " + std::to_string(obj.id) +
                                ": unsupported stream filter");
      continue;
    }
    result.images.push_back(std::move(img));
  }
  return result;
}

}  // namespace planvl
