#include "amkt/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace amkt {
namespace {

constexpr uint16_t kWeightsVersion = 1;

void put_u16(std::ostream& os, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint16_t get_u16(std::istream& is, const std::string& path) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  check(is.good(), "truncated weights file '", path, "'");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  check(is.good(), "truncated weights file '", path, "'");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint32_t get_u32_be(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  check(is.good(), "truncated IDX file '", path, "'");
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

}  // namespace

std::string tensor_file_bytes(const std::vector<Tensor>& tensors) {
  std::ostringstream os(std::ios::binary);
  os.write("AMKT", 4);
  put_u16(os, kWeightsVersion);
  check(tensors.size() <= 0xffff, "too many tensors for one weights file: ", tensors.size());
  put_u16(os, static_cast<uint16_t>(tensors.size()));
  for (const Tensor& t : tensors) {
    check(t.rank() >= 1 && t.rank() <= 255, "tensor rank ", t.rank(), " not storable");
    const unsigned char rank = static_cast<unsigned char>(t.rank());
    os.write(reinterpret_cast<const char*>(&rank), 1);
    for (int64_t d : t.shape()) {
      check(d > 0 && d <= 0xffffffffll, "dimension ", d, " not storable");
      put_u32(os, static_cast<uint32_t>(d));
    }
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
  }
  return os.str();
}

void write_tensor_file(const std::string& path, const std::vector<Tensor>& tensors) {
  ensure_parent_dir(path);
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "cannot open '", path, "' for writing");
  const std::string bytes = tensor_file_bytes(tensors);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  check(os.good(), "write to '", path, "' failed");
}

std::vector<Tensor> read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "cannot open weights file '", path, "'");
  char magic[4];
  is.read(magic, 4);
  check(is.good() && std::memcmp(magic, "AMKT", 4) == 0, "'", path, "' is not a weights file");
  const uint16_t version = get_u16(is, path);
  check(version == kWeightsVersion, "weights file '", path, "' has unsupported version ", version);
  const uint16_t count = get_u16(is, path);
  std::vector<Tensor> out;
  out.reserve(count);
  for (uint16_t i = 0; i < count; ++i) {
    unsigned char rank = 0;
    is.read(reinterpret_cast<char*>(&rank), 1);
    check(is.good() && rank >= 1, "truncated weights file '", path, "'");
    Shape s(rank);
    for (auto& d : s) d = static_cast<int64_t>(get_u32(is, path));
    Tensor t(s);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
    check(is.good(), "truncated weights file '", path, "'");
    out.push_back(std::move(t));
  }
  return out;
}

Tensor read_idx_images(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "cannot open IDX file '", path, "'");
  const uint32_t magic = get_u32_be(is, path);
  check(magic == 0x00000803u, "'", path, "' is not an IDX image file (magic ", magic, ")");
  const int64_t n = get_u32_be(is, path);
  const int64_t h = get_u32_be(is, path);
  const int64_t w = get_u32_be(is, path);
  std::vector<unsigned char> raw(static_cast<size_t>(n * h * w));
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  check(is.gcount() == static_cast<std::streamsize>(raw.size()), "truncated IDX file '", path, "'");
  Tensor t({n, 1, h, w});
  for (size_t i = 0; i < raw.size(); ++i) t[static_cast<int64_t>(i)] = static_cast<float>(raw[i]) / 255.0f;
  return t;
}

std::vector<int> read_idx_labels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "cannot open IDX file '", path, "'");
  const uint32_t magic = get_u32_be(is, path);
  check(magic == 0x00000801u, "'", path, "' is not an IDX label file (magic ", magic, ")");
  const int64_t n = get_u32_be(is, path);
  std::vector<unsigned char> raw(static_cast<size_t>(n));
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  check(is.gcount() == static_cast<std::streamsize>(raw.size()), "truncated IDX file '", path, "'");
  return std::vector<int>(raw.begin(), raw.end());
}

// SHA-256, FIPS 180-4. Small and self contained; checked against the
// published test vectors in the unit tests.
namespace {

inline uint32_t rotr(uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

constexpr uint32_t kSha256K[64] = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};

struct Sha256 {
  uint32_t h[8] = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                   0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
  unsigned char buf[64];
  size_t buf_len = 0;
  uint64_t total = 0;

  void block(const unsigned char* p) {
    uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = (static_cast<uint32_t>(p[4 * i]) << 24) | (static_cast<uint32_t>(p[4 * i + 1]) << 16) |
             (static_cast<uint32_t>(p[4 * i + 2]) << 8) | static_cast<uint32_t>(p[4 * i + 3]);
    for (int i = 16; i < 64; ++i) {
      const uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      const uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4], f = h[5], g = h[6], hh = h[7];
    for (int i = 0; i < 64; ++i) {
      const uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const uint32_t ch = (e & f) ^ (~e & g);
      const uint32_t t1 = hh + s1 + ch + kSha256K[i] + w[i];
      const uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const uint32_t t2 = s0 + maj;
      hh = g; g = f; f = e; e = d + t1; d = c; c = b; b = a; a = t1 + t2;
    }
    h[0] += a; h[1] += b; h[2] += c; h[3] += d; h[4] += e; h[5] += f; h[6] += g; h[7] += hh;
  }

  void update(const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    total += len;
    while (len > 0) {
      const size_t take = std::min(len, sizeof(buf) - buf_len);
      std::memcpy(buf + buf_len, p, take);
      buf_len += take;
      p += take;
      len -= take;
      if (buf_len == sizeof(buf)) {
        block(buf);
        buf_len = 0;
      }
    }
  }

  std::string finish() {
    const uint64_t bits = total * 8;
    const unsigned char one = 0x80;
    update(&one, 1);
    const unsigned char zero = 0;
    while (buf_len != 56) update(&zero, 1);
    unsigned char lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = static_cast<unsigned char>((bits >> (56 - 8 * i)) & 0xff);
    update(lenb, 8);
    static const char* hexd = "0123456789abcdef";
    std::string out(64, '0');
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 4; ++j) {
        const unsigned char byte = static_cast<unsigned char>((h[i] >> (24 - 8 * j)) & 0xff);
        out[static_cast<size_t>(8 * i + 2 * j)] = hexd[byte >> 4];
        out[static_cast<size_t>(8 * i + 2 * j + 1)] = hexd[byte & 0xf];
      }
    return out;
  }
};

}  // namespace

std::string sha256_hex(const void* data, size_t len) {
  Sha256 s;
  s.update(data, len);
  return s.finish();
}

std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

std::string sha256_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "cannot open '", path, "' for hashing");
  Sha256 sha;
  char buf[65536];
  while (is.good()) {
    is.read(buf, sizeof(buf));
    sha.update(buf, static_cast<size_t>(is.gcount()));
  }
  return sha.finish();
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "cannot open '", path, "'");
  std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return s;
}

void write_text_file(const std::string& path, const std::string& content) {
  ensure_parent_dir(path);
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "cannot open '", path, "' for writing");
  os << content;
  check(os.good(), "write to '", path, "' failed");
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

void ensure_parent_dir(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

void ensure_dir(const std::string& path) { std::filesystem::create_directories(path); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace amkt
