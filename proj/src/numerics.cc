#include "nesppo/numerics.h"

#include <cmath>
#include <numbers>
#include <sstream>

namespace nesppo {

namespace {

constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
  state += kGoldenGamma;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::pair<double, double> box_muller(double u1, double u2) {
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& word : s_) word = splitmix64(sm);
}

std::uint64_t RngStream::next_u64() {
  // xoshiro256++
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  ++u64_drawn_;
  return result;
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_open_low() {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  // Bias is below 2^-40 for every span used in this project.
  return lo + static_cast<std::int64_t>(next_u64() % span);
}

double RngStream::normal() { return gaussian(1)[0]; }

std::vector<double> RngStream::gaussian(std::size_t count) {
  std::vector<double> out;
  out.reserve(count);
  while (out.size() < count) {
    const double u1 = uniform_open_low();
    const double u2 = uniform();
    const auto [z0, z1] = box_muller(u1, u2);
    out.push_back(z0);
    if (out.size() < count) out.push_back(z1);
  }
  normals_drawn_ += count;
  return out;
}

RngStream RngStream::derive(std::uint64_t index) const {
  std::uint64_t sm = seed_ ^ (kGoldenGamma * (index + 1));
  return RngStream(splitmix64(sm));
}

void shuffle_indices(std::span<std::size_t> indices, RngStream& rng) {
  for (std::size_t i = indices.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(indices[i - 1], indices[j]);
  }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    std::ostringstream msg;
    msg << "matrix data length " << data_.size() << " does not match shape "
        << rows << "x" << cols;
    throw ShapeError(msg.str());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_string() + " times " +
                     b.shape_string());
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) sum += a(i, k) * b(k, j);
      c(i, j) = sum;
    }
  }
  return c;
}

void matvec(std::span<const double> w, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y) {
  if (w.size() != rows * cols || x.size() != cols || y.size() != rows) {
    std::ostringstream msg;
    msg << "matvec shape mismatch: weights " << rows << "x" << cols << " ("
        << w.size() << " values), input " << x.size() << ", output "
        << y.size();
    throw ShapeError(msg.str());
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = w.data() + i * cols;
    double sum = 0.0;
    for (std::size_t k = 0; k < cols; ++k) sum += row[k] * x[k];
    y[i] = sum;
  }
}

}  // namespace nesppo
