#pragma once

// Small shared vocabulary: the error root, content hashing, the clock seam
// and a handful of text helpers used across modules.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sciloop {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a value violates a documented type invariant.
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// Lower-case hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

/// Instants are recorded as milliseconds since the Unix epoch.
using Millis = std::int64_t;

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Millis now_ms() = 0;
};

class SystemClock final : public Clock {
 public:
  Millis now_ms() override;
};

// Logical clock for reproducible runs: every reading advances by `step_ms`.
class SteppingClock final : public Clock {
 public:
  explicit SteppingClock(Millis start_ms = 1735689600000, Millis step_ms = 1000)
      : next_(start_ms), step_(step_ms) {}
  Millis now_ms() override { return next_.fetch_add(step_); }

 private:
  std::atomic<Millis> next_;
  Millis step_;
};

/// ISO-8601 UTC rendering with millisecond precision.
std::string format_utc(Millis ms);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool contains_icase(std::string_view haystack, std::string_view needle);

/// Splits on '\n'. A trailing newline does not produce an empty last element.
std::vector<std::string> split_lines(std::string_view text);

/// Lower-case ASCII words, used by the keyword index and classifiers.
std::vector<std::string> tokenize_words(std::string_view text);

/// Filesystem-safe identifier: [a-z0-9_], collapsed underscores, no edges.
std::string slugify(std::string_view text);

/// Rough token estimate (chars / 4, rounded up).
std::size_t estimate_tokens(std::string_view text);

/// Reads a whole file; throws Error on failure.
std::string read_file(const std::string& path);

/// Writes a whole file, creating parent directories; throws Error on failure.
void write_file(const std::string& path, std::string_view bytes);

/// Writes to `path.tmp` then renames over `path`.
void write_file_atomic(const std::string& path, std::string_view bytes);

/// Glob match with `*`, `?` and `[...]`, no path semantics.
bool glob_match(std::string_view pattern, std::string_view name);

std::string base64_encode(std::string_view bytes);

}  // namespace sciloop
