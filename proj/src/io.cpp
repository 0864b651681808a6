#include "altinc/io.hpp"

#include <bit>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>

#include "altinc/error.hpp"
#include "altinc/rng.hpp"

namespace altinc::io {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  Reader(std::string_view bytes, const char* what) : bytes_(bytes), what_(what) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string(what_) + ": truncated at byte " + std::to_string(pos_) + " (needed " +
                        std::to_string(n) + " more)");
    }
  }
  std::string_view bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

void check_magic(Reader& r, std::string_view magic, const char* what) {
  if (r.remaining() < magic.size() || r.take(magic.size()) != magic) {
    throw FormatError(std::string(what) + ": bad magic, expected \"" + std::string(magic) + "\"");
  }
}

// Parses the whitespace/comment separated header fields of a Netpbm file.
struct NetpbmHeader {
  std::size_t width = 0, height = 0, maxval = 0, data_offset = 0;
};

NetpbmHeader parse_netpbm(std::string_view bytes, std::string_view magic, const char* what) {
  if (bytes.substr(0, 2) != magic) throw FormatError(std::string(what) + ": bad magic, expected " + std::string(magic));
  std::size_t pos = 2;
  std::size_t fields[3] = {0, 0, 0};
  for (auto& field : fields) {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      field = field * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      ++pos;
    }
    if (pos == start) throw FormatError(std::string(what) + ": malformed header");
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError(std::string(what) + ": truncated header");
  }
  ++pos;
  if (fields[2] == 0 || fields[2] > 255) throw FormatError(std::string(what) + ": only 8-bit maxval supported");
  return {fields[0], fields[1], fields[2], pos};
}

}  // namespace

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::string encode_param_file(const ParamFile& file) {
  std::string out(kParamMagic);
  put_u64(out, file.config_hash);
  for (const auto& rec : file.records) {
    put_u64(out, rec.name.size());
    out += rec.name;
    put_u64(out, rec.tensor.rank());
    for (auto d : rec.tensor.shape()) put_u64(out, d);
    for (double v : rec.tensor.values()) put_f64(out, v);
  }
  return out;
}

ParamFile decode_param_file(std::string_view bytes) {
  constexpr const char* what = "parameter file";
  Reader r(bytes, what);
  check_magic(r, kParamMagic, what);
  ParamFile file;
  file.config_hash = r.u64();
  while (!r.done()) {
    NamedTensor rec;
    const auto name_len = r.u64();
    if (name_len > r.remaining()) throw FormatError("parameter file: truncated record name");
    rec.name = std::string(r.take(name_len));
    const auto rank = r.u64();
    if (rank > 8) throw FormatError("parameter file: record '" + rec.name + "' has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    const std::size_t n = shape_numel(shape);
    if (n > r.remaining() / 8) throw FormatError("parameter file: record '" + rec.name + "' truncated");
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64();
    rec.tensor = Tensor(std::move(shape), std::move(values));
    file.records.push_back(std::move(rec));
  }
  return file;
}

void write_param_file(const std::filesystem::path& path, const ParamFile& file) {
  write_file(path, encode_param_file(file));
}

ParamFile read_param_file(const std::filesystem::path& path) { return decode_param_file(read_file(path)); }

std::string encode_probmap(const ProbMap& map) {
  std::string out(kProbMapMagic);
  put_u64(out, map.classes());
  put_u64(out, map.height());
  put_u64(out, map.width());
  for (double v : map.tensor().values()) put_f64(out, v);
  return out;
}

ProbMap decode_probmap(std::string_view bytes) {
  constexpr const char* what = "probability map";
  Reader r(bytes, what);
  check_magic(r, kProbMapMagic, what);
  const std::size_t c = r.u64(), h = r.u64(), w = r.u64();
  if (c == 0 || h == 0 || w == 0) throw FormatError("probability map: empty dimensions");
  const std::size_t cap = r.remaining() / 8;
  if (c > cap || h > cap || w > cap || c * h > cap || c * h * w > cap) {
    throw FormatError("probability map: truncated payload");
  }
  if (r.remaining() != c * h * w * 8) throw FormatError("probability map: trailing bytes after payload");
  std::vector<double> values(c * h * w);
  for (auto& v : values) v = r.f64();
  try {
    return ProbMap(Tensor({c, h, w}, std::move(values)), 1e-6);
  } catch (const ValueError& e) {
    throw FormatError(std::string("probability map: ") + e.what());
  }
}

void save_probmap(const std::filesystem::path& path, const ProbMap& map) { write_file(path, encode_probmap(map)); }

ProbMap load_probmap(const std::filesystem::path& path) { return decode_probmap(read_file(path)); }

std::string encode_pgm(const LabelMap& labels) {
  std::string out = "P5\n" + std::to_string(labels.width()) + " " + std::to_string(labels.height()) + "\n255\n";
  out.append(reinterpret_cast<const char*>(labels.labels().data()), labels.size());
  return out;
}

LabelMap decode_pgm(std::string_view bytes) {
  const auto hdr = parse_netpbm(bytes, "P5", "PGM");
  const std::size_t n = hdr.width * hdr.height;
  if (bytes.size() - hdr.data_offset != n) {
    throw FormatError("PGM: expected " + std::to_string(n) + " pixel bytes, found " +
                      std::to_string(bytes.size() - hdr.data_offset));
  }
  std::vector<std::uint8_t> px(bytes.begin() + static_cast<std::ptrdiff_t>(hdr.data_offset), bytes.end());
  return LabelMap(hdr.height, hdr.width, std::move(px));
}

void write_pgm(const std::filesystem::path& path, const LabelMap& labels) { write_file(path, encode_pgm(labels)); }

LabelMap read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

std::string encode_ppm(const RgbImage& image) {
  if (image.pixels.size() != image.width * image.height) throw ShapeError("PPM: pixel count does not match size");
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  for (const auto& px : image.pixels) out.append(reinterpret_cast<const char*>(px.data()), 3);
  return out;
}

RgbImage decode_ppm(std::string_view bytes) {
  const auto hdr = parse_netpbm(bytes, "P6", "PPM");
  const std::size_t n = hdr.width * hdr.height;
  if (bytes.size() - hdr.data_offset != 3 * n) {
    throw FormatError("PPM: expected " + std::to_string(3 * n) + " pixel bytes, found " +
                      std::to_string(bytes.size() - hdr.data_offset));
  }
  RgbImage img{hdr.height, hdr.width, std::vector<Rgb8>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      img.pixels[i][k] = static_cast<std::uint8_t>(bytes[hdr.data_offset + 3 * i + k]);
    }
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) { write_file(path, encode_ppm(image)); }

RgbImage read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string file_digest(const std::filesystem::path& path) { return hex64(fnv1a64(read_file(path))); }

}  // namespace altinc::io
