#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

namespace rlqg {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration could not be parsed or is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A stage input artifact is missing or was produced under another config.
class ArtifactError : public Error {
 public:
  ArtifactError(std::filesystem::path path, const std::string& what)
      : Error(what), path_(std::move(path)) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Numeric failure during training (non-finite loss or parameters).
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Hex SHA-256 digest of `data`.
std::string sha256_hex(std::string_view data);

/// First 16 hex chars of the SHA-256 of the canonical (sorted-key) dump.
std::string json_hash(const json& value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Reads a JSON-lines file; blank lines are skipped. Each element is
/// (1-based line number, parsed value).
std::vector<std::pair<std::size_t, json>> read_jsonl(const std::filesystem::path& path);

std::string trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);

/// Uniform double in [0, 1) from a 64-bit engine, independent of the
/// standard library's distribution implementation.
template <typename Engine>
double uniform01(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results are written by
/// index, so output order never depends on completion order.
template <typename T>
std::vector<T> parallel_map(std::size_t n, std::size_t jobs,
                            const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(n);
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(jobs, n); ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace rlqg
