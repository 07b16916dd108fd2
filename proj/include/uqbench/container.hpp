#ifndef UQBENCH_CONTAINER_HPP
#define UQBENCH_CONTAINER_HPP

// Single-file container: fixed binary preamble, JSON header, then
// little-endian float64 sections. Byte layout is documented in
// docs/container-format.md.

#include <Eigen/Dense>
#include <openssl/evp.h>
#include <zlib.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "uqbench/errors.hpp"

namespace uqbench::io {

using json = nlohmann::json;

inline constexpr std::array<char, 8> kMagic = {'U', 'Q', 'B', 'C', 'O', 'N', 'T', '\n'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kPreambleBytes = 8 + 4 + 4 + 4;

inline std::uint32_t crc32_of(const void* data, std::size_t bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (bytes > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes, 1u << 30));
    c = ::crc32(c, p, chunk);
    p += chunk;
    bytes -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

namespace detail {
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}
inline void put_f64(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}
inline double get_f64(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}
}  // namespace detail

/// A named float64 array stored row-major.
struct Section {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  friend bool operator==(const Section&, const Section&) = default;
};

class Container {
 public:
  Container() = default;
  explicit Container(std::string kind) : kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }
  json& meta() noexcept { return meta_; }
  const json& meta() const noexcept { return meta_; }
  const std::vector<Section>& sections() const noexcept { return sections_; }

  bool has(const std::string& name) const { return find(name) != nullptr; }

  void add(const std::string& name, const Eigen::Ref<const Eigen::MatrixXd>& m) {
    Section s{name, static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), {}};
    s.data.resize(s.rows * s.cols);
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t c = 0; c < s.cols; ++c)
        s.data[r * s.cols + c] = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    put(std::move(s));
  }

  void add_vector(const std::string& name, const Eigen::Ref<const Eigen::VectorXd>& v) {
    Section s{name, static_cast<std::size_t>(v.size()), 1, std::vector<double>(v.data(), v.data() + v.size())};
    put(std::move(s));
  }

  const Section& section(const std::string& name) const {
    const auto* s = find(name);
    if (s == nullptr) throw CorruptFile("container: missing section '" + name + "'");
    return *s;
  }

  Eigen::MatrixXd matrix(const std::string& name) const {
    const auto& s = section(name);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t c = 0; c < s.cols; ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = s.data[r * s.cols + c];
    return m;
  }

  Eigen::VectorXd vector(const std::string& name) const {
    const auto& s = section(name);
    return Eigen::Map<const Eigen::VectorXd>(s.data.data(), static_cast<Eigen::Index>(s.data.size()));
  }

  /// Serialized bytes; identical inputs give identical bytes.
  std::string serialize() const {
    std::string body;
    json table = json::array();
    for (const auto& s : sections_) {
      const std::size_t offset = body.size();
      for (double d : s.data) detail::put_f64(body, d);
      const std::size_t bytes = body.size() - offset;
      table.push_back({{"name", s.name},
                       {"shape", {s.rows, s.cols}},
                       {"offset", offset},
                       {"bytes", bytes},
                       {"crc32", crc32_of(body.data() + offset, bytes)}});
    }
    json header = {{"kind", kind_}, {"meta", meta_}, {"sections", table}, {"data_bytes", body.size()}};
    const std::string text = header.dump(1);
    std::string out(kMagic.begin(), kMagic.end());
    detail::put_u32(out, kFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
    detail::put_u32(out, crc32_of(text.data(), text.size()));
    out += text;
    out += body;
    return out;
  }

  static Container deserialize(const std::string& bytes) {
    if (bytes.size() < kPreambleBytes || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
      throw CorruptFile("container: bad magic or truncated preamble");
    const std::uint32_t version = detail::get_u32(bytes.data() + 8);
    if (version != kFormatVersion)
      throw FormatVersionMismatch("container: format version " + std::to_string(version) + ", this build reads " +
                                  std::to_string(kFormatVersion));
    const std::uint32_t header_len = detail::get_u32(bytes.data() + 12);
    const std::uint32_t header_crc = detail::get_u32(bytes.data() + 16);
    if (bytes.size() < kPreambleBytes + header_len) throw CorruptFile("container: truncated header");
    const char* htext = bytes.data() + kPreambleBytes;
    if (crc32_of(htext, header_len) != header_crc) throw CorruptFile("container: header checksum mismatch");
    json header;
    try {
      header = json::parse(htext, htext + header_len);
    } catch (const json::exception& e) {
      throw CorruptFile(std::string("container: unreadable header: ") + e.what());
    }
    const char* body = htext + header_len;
    const std::size_t body_len = bytes.size() - kPreambleBytes - header_len;
    try {
      if (header.at("data_bytes").get<std::size_t>() != body_len)
        throw CorruptFile("container: data length mismatch (truncated or padded file)");
      Container c(header.at("kind").get<std::string>());
      c.meta_ = header.at("meta");
      for (const auto& e : header.at("sections")) {
        Section s;
        s.name = e.at("name").get<std::string>();
        s.rows = e.at("shape").at(0).get<std::size_t>();
        s.cols = e.at("shape").at(1).get<std::size_t>();
        const auto offset = e.at("offset").get<std::size_t>();
        const auto nbytes = e.at("bytes").get<std::size_t>();
        if (nbytes != s.rows * s.cols * 8 || offset + nbytes > body_len)
          throw CorruptFile("container: section '" + s.name + "' out of bounds");
        if (crc32_of(body + offset, nbytes) != e.at("crc32").get<std::uint32_t>())
          throw CorruptFile("container: checksum mismatch in section '" + s.name + "'");
        s.data.resize(s.rows * s.cols);
        for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = detail::get_f64(body + offset + 8 * i);
        c.sections_.push_back(std::move(s));
      }
      return c;
    } catch (const json::exception& e) {
      throw CorruptFile(std::string("container: malformed header: ") + e.what());
    }
  }

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw InvalidArgument("cannot open '" + path.string() + "' for writing");
    const auto bytes = serialize();
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("write failed for '" + path.string() + "'");
  }

  static Container load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidArgument("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return deserialize(ss.str());
  }

 private:
  const Section* find(const std::string& name) const {
    for (const auto& s : sections_)
      if (s.name == name) return &s;
    return nullptr;
  }
  void put(Section s) {
    for (auto& existing : sections_)
      if (existing.name == s.name) {
        existing = std::move(s);
        return;
      }
    sections_.push_back(std::move(s));
  }

  std::string kind_;
  json meta_ = json::object();
  std::vector<Section> sections_;
};

/// Lowercase hex SHA-256 of a byte string.
inline std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace uqbench::io

#endif  // UQBENCH_CONTAINER_HPP
