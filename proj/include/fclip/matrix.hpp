#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace fclip {

// Dense row-major matrix of doubles with value semantics.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    assert(data_.size() == rows_ * cols_);
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  // Rows gathered in the order given by idx.
  template <typename IndexRange>
  Matrix select_rows(const IndexRange& idx) const {
    Matrix out(std::size(idx), cols_);
    std::size_t r = 0;
    for (auto i : idx) {
      assert(static_cast<std::size_t>(i) < rows_);
      std::copy_n(data_.data() + static_cast<std::size_t>(i) * cols_, cols_, out.data_.data() + r * cols_);
      ++r;
    }
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double max_abs(const Matrix& m) noexcept {
  double best = 0.0;
  for (double v : m.values()) best = std::max(best, v < 0 ? -v : v);
  return best;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) noexcept {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  double best = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a.values()[i] - b.values()[i];
    best = std::max(best, d < 0 ? -d : d);
  }
  return best;
}

}  // namespace fclip
