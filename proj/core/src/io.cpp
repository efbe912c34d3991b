#include "oadn/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "oadn/errors.hpp"

namespace oadn {

namespace {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats assume a little-endian host");

template <typename T>
void put(std::string& buf, T v) {
  const char* p = reinterpret_cast<const char*>(&v);
  buf.append(p, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& off, const std::string& what,
       const std::filesystem::path& path) {
  if (off + sizeof(T) > buf.size())
    throw DataError("truncated file (reading " + what + "): " + path.string());
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  if (!f.good() && !f.eof())
    throw DataError("read failure: " + path.string());
  return ss.str();
}

void write_all(const std::filesystem::path& path, const std::string& buf) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f.good()) throw DataError("write failure: " + path.string());
}

}  // namespace

std::string format_double(double v) {
  char tmp[64];
  auto res = std::to_chars(tmp, tmp + sizeof(tmp), v);
  return std::string(tmp, res.ptr);
}

void write_sinogram(const Sinogram& s, const std::filesystem::path& path) {
  s.validate("write_sinogram");
  std::string buf;
  buf.reserve(26 + 4 * s.size());
  buf.append("OASG", 4);
  put<std::uint16_t>(buf, 1);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(s.n_transducers));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(s.n_samples));
  put<double>(buf, s.sample_rate_hz);
  put<float>(buf, s.wavelength_nm ? static_cast<float>(*s.wavelength_nm)
                                  : std::numeric_limits<float>::quiet_NaN());
  for (double v : s.data) put<float>(buf, static_cast<float>(v));
  write_all(path, buf);
}

Sinogram read_sinogram(const std::filesystem::path& path) {
  const std::string buf = read_all(path);
  if (buf.size() < 4 || buf.compare(0, 4, "OASG") != 0)
    throw DataError("bad magic (expected OASG): " + path.string());
  std::size_t off = 4;
  const auto version = take<std::uint16_t>(buf, off, "version", path);
  if (version != 1)
    throw DataError("unsupported OASG version " + std::to_string(version) + ": " +
                    path.string());
  Sinogram s;
  s.n_transducers = take<std::uint32_t>(buf, off, "n_transducers", path);
  s.n_samples = take<std::uint32_t>(buf, off, "n_samples", path);
  s.sample_rate_hz = take<double>(buf, off, "sample_rate_hz", path);
  const float wl = take<float>(buf, off, "wavelength_nm", path);
  if (!std::isnan(wl)) s.wavelength_nm = wl;
  const std::size_t count = s.n_transducers * s.n_samples;
  const std::size_t expected = off + 4 * count;
  if (buf.size() != expected)
    throw DataError("truncated payload: expected " + std::to_string(expected) +
                    " bytes, got " + std::to_string(buf.size()) + ": " +
                    path.string());
  s.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    float v;
    std::memcpy(&v, buf.data() + off + 4 * i, 4);
    if (!std::isfinite(v))
      throw DataError("non-finite sample at index " + std::to_string(i) + ": " +
                      path.string());
    s.data[i] = v;
  }
  s.validate("read_sinogram");
  return s;
}

void write_image(const ImageGrid& img, const std::filesystem::path& path) {
  img.validate("write_image");
  std::string buf;
  buf.reserve(22 + 4 * img.size());
  buf.append("OAIM", 4);
  put<std::uint16_t>(buf, 1);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(img.n_x));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(img.n_y));
  put<double>(buf, img.extent_m);
  for (double v : img.pixels) put<float>(buf, static_cast<float>(v));
  write_all(path, buf);
}

ImageGrid read_image(const std::filesystem::path& path) {
  const std::string buf = read_all(path);
  if (buf.size() < 4 || buf.compare(0, 4, "OAIM") != 0)
    throw DataError("bad magic (expected OAIM): " + path.string());
  std::size_t off = 4;
  const auto version = take<std::uint16_t>(buf, off, "version", path);
  if (version != 1)
    throw DataError("unsupported OAIM version: " + path.string());
  ImageGrid img;
  img.n_x = take<std::uint32_t>(buf, off, "n_x", path);
  img.n_y = take<std::uint32_t>(buf, off, "n_y", path);
  img.extent_m = take<double>(buf, off, "extent_m", path);
  const std::size_t count = img.n_x * img.n_y;
  if (buf.size() != off + 4 * count)
    throw DataError("truncated payload: expected " +
                    std::to_string(off + 4 * count) + " bytes, got " +
                    std::to_string(buf.size()) + ": " + path.string());
  img.pixels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    float v;
    std::memcpy(&v, buf.data() + off + 4 * i, 4);
    img.pixels[i] = v;
  }
  img.validate("read_image");
  return img;
}

ImageGrid read_pgm(const std::filesystem::path& path, double extent_m) {
  const std::string buf = read_all(path);
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < buf.size()) {
      if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
        ++pos;
      } else if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos])))
      ++pos;
    if (start == pos) throw DataError("malformed PGM header: " + path.string());
    return buf.substr(start, pos - start);
  };
  if (next_token() != "P5")
    throw DataError("not a binary PGM (P5): " + path.string());
  const std::size_t w = std::stoul(next_token());
  const std::size_t h = std::stoul(next_token());
  const std::size_t maxval = std::stoul(next_token());
  if (maxval == 0 || maxval > 65535)
    throw DataError("bad PGM maxval: " + path.string());
  ++pos;  // single whitespace after maxval
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (buf.size() - pos < w * h * bpp)
    throw DataError("truncated PGM payload: " + path.string());
  ImageGrid img(w, h, extent_m);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
  for (std::size_t i = 0; i < w * h; ++i) {
    std::size_t v = bpp == 1 ? p[i]
                             : (static_cast<std::size_t>(p[2 * i]) << 8) | p[2 * i + 1];
    img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

void write_pgm8(const ImageGrid& img, const std::filesystem::path& path,
                double lo, double hi) {
  img.validate("write_pgm8");
  std::string buf = "P5\n" + std::to_string(img.n_x) + " " + std::to_string(img.n_y) +
                    "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (double v : img.pixels) {
    double u = (v - lo) / span;
    u = std::clamp(u, 0.0, 1.0);
    buf.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(u * 255.0))));
  }
  write_all(path, buf);
}

void write_pgm16_preview(const ImageGrid& img, const std::filesystem::path& path) {
  img.validate("write_pgm16_preview");
  const auto [mn_it, mx_it] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const double lo = *mn_it, hi = *mx_it;
  const double span = hi > lo ? hi - lo : 1.0;
  std::string buf = "P5\n" + std::to_string(img.n_x) + " " + std::to_string(img.n_y) +
                    "\n65535\n";
  for (double v : img.pixels) {
    const double u = std::clamp((v - lo) / span, 0.0, 1.0);
    const auto q = static_cast<std::uint16_t>(std::lround(u * 65535.0));
    buf.push_back(static_cast<char>(q >> 8));  // PGM 16-bit is MSB first
    buf.push_back(static_cast<char>(q & 0xFF));
  }
  write_all(path, buf);
  KeyValueFile norm;
  norm.set("min", lo);
  norm.set("max", hi);
  norm.set("mapping", "value = min + (max - min) * pgm / 65535");
  norm.save(path.string() + ".norm.txt");
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
  auto it = index_.find(key);
  if (it != index_.end()) {
    entries_[it->second].second = value;
  } else {
    index_[key] = entries_.size();
    entries_.emplace_back(key, value);
  }
}

void KeyValueFile::set(const std::string& key, double value) {
  set(key, format_double(value));
}

void KeyValueFile::set(const std::string& key, std::uint64_t value) {
  set(key, std::to_string(value));
}

bool KeyValueFile::has(const std::string& key) const { return index_.count(key) > 0; }

const std::string& KeyValueFile::get(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw DataError("missing key: " + key);
  return entries_[it->second].second;
}

std::string KeyValueFile::get_or(const std::string& key,
                                 const std::string& fallback) const {
  auto it = index_.find(key);
  return it == index_.end() ? fallback : entries_[it->second].second;
}

double KeyValueFile::get_double(const std::string& key) const {
  return std::stod(get(key));
}

std::uint64_t KeyValueFile::get_u64(const std::string& key) const {
  return std::stoull(get(key));
}

std::string KeyValueFile::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

void KeyValueFile::save(const std::filesystem::path& path) const {
  write_all(path, serialize());
}

KeyValueFile KeyValueFile::parse(const std::string& text) {
  KeyValueFile kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) kv.set(key, value);
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  return parse(read_all(path));
}

void write_sinogram_stack(const SinogramStack& stack, const std::filesystem::path& dir,
                          const KeyValueFile& geometry_info) {
  stack.validate("write_sinogram_stack");
  std::filesystem::create_directories(dir);
  KeyValueFile manifest;
  manifest.set("kind", "sinogram_stack");
  manifest.set("count", static_cast<std::uint64_t>(stack.scans.size()));
  std::string wl;
  for (std::size_t i = 0; i < stack.wavelengths_nm.size(); ++i) {
    if (i) wl += ",";
    wl += format_double(stack.wavelengths_nm[i]);
  }
  manifest.set("wavelengths_nm", wl);
  for (const auto& [k, v] : geometry_info.entries()) manifest.set("geometry." + k, v);
  for (std::size_t i = 0; i < stack.scans.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "wl_%04d.oasg",
                  static_cast<int>(std::lround(stack.wavelengths_nm[i])));
    manifest.set("file." + std::to_string(i), name);
    Sinogram s = stack.scans[i];
    s.wavelength_nm = stack.wavelengths_nm[i];
    write_sinogram(s, dir / name);
  }
  manifest.save(dir / "stack.manifest");
}

SinogramStack read_sinogram_stack(const std::filesystem::path& dir) {
  const KeyValueFile manifest = KeyValueFile::load(dir / "stack.manifest");
  const std::size_t count = manifest.get_u64("count");
  SinogramStack stack;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = manifest.get("file." + std::to_string(i));
    Sinogram s = read_sinogram(dir / name);
    if (!s.wavelength_nm)
      throw DataError("stack member without wavelength: " + name);
    stack.wavelengths_nm.push_back(*s.wavelength_nm);
    stack.scans.push_back(std::move(s));
  }
  stack.validate("read_sinogram_stack");
  return stack;
}

}  // namespace oadn
