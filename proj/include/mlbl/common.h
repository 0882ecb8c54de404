#ifndef MLBL_COMMON_H
#define MLBL_COMMON_H

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace mlbl {

typedef double Real;
typedef int32_t WordId;
typedef int32_t FactorId;
typedef int32_t ClassId;

// Row-major so that a word or factor vector is a contiguous row.
typedef Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Table;
typedef Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Matrix;
typedef Eigen::Matrix<Real, Eigen::Dynamic, 1> Vector;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or missing input data (corpus, vocabulary, segmentation, partition files).
class DataError : public Error {
 public:
  using Error::Error;
};

// An input does not agree with the vocabulary or model it is paired with.
class MismatchError : public Error {
 public:
  using Error::Error;
};

// A model container that cannot be decoded.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid settings in a configuration file or on the command line.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Seeded generator. Bounded draws use rejection on raw 64-bit output so that
// shuffles are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  uint64_t below(uint64_t n) {
    if (n <= 1) return 0;
    const uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double gaussian(double sigma) {
    std::normal_distribution<double> dist(0.0, sigma);
    return dist(engine_);
  }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Mixes a run seed with a stream index (splitmix64 finalizer).
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace mlbl

#endif
