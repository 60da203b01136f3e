#ifndef NESPPO_NUMERICS_H_
#define NESPPO_NUMERICS_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nesppo/errors.h"

namespace nesppo {

// splitmix64 step. Used to expand seeds into generator state.
std::uint64_t splitmix64(std::uint64_t& state);

// One pair of standard normals from two uniforms, u1 in (0, 1].
//   z0 = sqrt(-2 ln u1) cos(2 pi u2),  z1 = sqrt(-2 ln u1) sin(2 pi u2)
std::pair<double, double> box_muller(double u1, double u2);

// Deterministic xoshiro256++ stream. The seed fully determines the output.
// Single-owner: hand concurrent consumers their own derive()d streams.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform on (0, 1]; safe as a logarithm argument.
  double uniform_open_low();
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  double normal();
  // `count` standard normals. Consumes ceil(count / 2) Box-Muller pairs
  // (two u64 per pair); an odd tail discards the pair's second value.
  std::vector<double> gaussian(std::size_t count);

  // Consumption counters, used to audit noise budgets.
  std::uint64_t u64_drawn() const { return u64_drawn_; }
  std::uint64_t normals_drawn() const { return normals_drawn_; }

  // Sub-stream `index`. Depends only on this stream's seed, never on how
  // much of it has been consumed.
  RngStream derive(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  std::uint64_t u64_drawn_ = 0;
  std::uint64_t normals_drawn_ = 0;
};

inline RngStream rng_new(std::uint64_t seed) { return RngStream(seed); }
inline RngStream derive(const RngStream& stream, std::uint64_t index) {
  return stream.derive(index);
}

// In-place Fisher-Yates shuffle driven by `rng`. std::shuffle is not used
// because its draw pattern differs between standard libraries.
void shuffle_indices(std::span<std::size_t> indices, RngStream& rng);

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Standard product, row-major, summing over k innermost in ascending order.
Matrix matmul(const Matrix& a, const Matrix& b);

// y = W x for a row-major (rows x cols) weight view; same summation order
// as matmul with a single-column right operand.
void matvec(std::span<const double> w, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y);

}  // namespace nesppo

#endif  // NESPPO_NUMERICS_H_
