#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace samint {

// Error taxonomy: configuration/usage mistakes, malformed or degenerate data,
// and solver-level failures map to distinct exit codes in the CLI.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// FNV-1a 64-bit hash, used for archive checksums and data provenance.
inline std::uint64_t fnv1a64(const void* data, std::size_t size,
                             std::uint64_t seed = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= static_cast<std::uint64_t>(p[i]);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

inline std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

// Shortest decimal string that parses back to exactly the same double.
// Keeps report files readable while making re-parses lossless.
inline std::string format_double(double x) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return std::string(buf);
}

// Hexadecimal float encoding: exact, locale-independent round trip for
// archived numeric payloads.
inline std::string double_to_hex(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", x);
  return std::string(buf);
}

inline double hex_to_double(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw DataError("invalid numeric payload: '" + s + "'");
  return v;
}

// Strict full-token parse; returns false instead of throwing so callers can
// attach file/line context to the error message.
inline bool parse_double_strict(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

inline std::string read_text_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot open '" + path + "' for reading");
  std::string out;
  char buf[1 << 16];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof(buf), f)) > 0) out.append(buf, got);
  bool failed = std::ferror(f) != 0;
  std::fclose(f);
  if (failed) throw DataError("read failure on '" + path + "'");
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  std::size_t put = std::fwrite(content.data(), 1, content.size(), f);
  int close_rc = std::fclose(f);
  if (put != content.size() || close_rc != 0)
    throw DataError("write failure on '" + path + "'");
}

// Runs fn(begin, end) over contiguous chunks of [0, n). Results must be
// written to disjoint per-index slots so the outcome is independent of
// scheduling; chunk boundaries are deterministic given (n, threads).
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  int t = std::max(1, threads);
  if (static_cast<std::size_t>(t) > n) t = static_cast<int>(n);
  if (t == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(t) - 1);
  std::size_t chunk = (n + static_cast<std::size_t>(t) - 1) / static_cast<std::size_t>(t);
  for (int i = 1; i < t; ++i) {
    std::size_t b = chunk * static_cast<std::size_t>(i);
    std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back(fn, b, e);
  }
  fn(0, std::min(chunk, n));
  for (auto& th : pool) th.join();
}

}  // namespace samint
