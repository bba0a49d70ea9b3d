#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace laser {

using Index = std::uint32_t;

// ---------------------------------------------------------------------------
// Errors. Every failure surfaced by the library derives from laser::Error so
// callers (the CLI in particular) can turn it into a diagnostic and exit code.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t batch)
      : Error(what + " (batch " + std::to_string(batch) + ")"), batch_(batch) {}
  std::size_t batch() const { return batch_; }

 private:
  std::size_t batch_;
};

/// Missing upstream artifact; the message names the command that produces it.
class PrerequisiteError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Dense row-major matrix of doubles.
// ---------------------------------------------------------------------------

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double squared_distance(std::span<const double> a, std::span<const double> b);
inline double distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}
double dot(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Counter-based random numbers.
//
// Rng is a SplitMix64 stream identified by a 64-bit key; its whole state is
// (key, counter), so it serialises into checkpoints and substreams can be
// derived for any (seed, a, b) tuple without sharing state between threads.
// The uniform and normal transforms are fixed here rather than taken from
// <random>, whose distributions are implementation-defined.
// ---------------------------------------------------------------------------

std::uint64_t mix64(std::uint64_t x);

/// Derives a stream key from a seed and up to two coordinates.
std::uint64_t derive_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t key = 0, std::uint64_t counter = 0) : key_(key), counter_(counter) {}

  static Rng substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return Rng(derive_key(seed, a, b));
  }

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller; one draw consumes two uniforms.
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  bool operator==(const Rng&) const = default;

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng.below(i);
    std::swap(v[i - 1], v[j]);
  }
}

/// Index sampled proportionally to an inclusive prefix-sum array.
std::size_t sample_cumulative(std::span<const double> cumulative, Rng& rng);

// ---------------------------------------------------------------------------
// Little-endian binary helpers shared by the checkpoint and embedding dumps.
// ---------------------------------------------------------------------------

namespace binio {

void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_f64s(std::ostream& out, std::span<const double> v);

std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
void read_f64s(std::istream& in, std::span<double> v);

}  // namespace binio

/// FNV-1a 64-bit, used to fingerprint artifacts.
class Fingerprint {
 public:
  Fingerprint& add(std::string_view bytes);
  Fingerprint& add_file(const std::string& path);
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace laser
