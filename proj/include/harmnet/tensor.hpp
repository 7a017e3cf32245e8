#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "harmnet/error.hpp"

namespace harmnet {

class Tape;

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major tensor of doubles. Values are shared so tapes can keep
// forward results alive without copying. A tensor is either a free value
// (node < 0) or the output of a recorded tape node.
class Tensor {
 public:
  Tensor() : values_(std::make_shared<std::vector<double>>()) {}

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        values_(std::make_shared<std::vector<double>>(
            static_cast<std::size_t>(shape_size(shape_)), 0.0)) {
    check_shape();
  }

  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)),
        values_(std::make_shared<std::vector<double>>(std::move(values))) {
    check_shape();
    if (shape_size(shape_) != static_cast<std::int64_t>(values_->size()))
      throw DimensionError("autodiff: tensor shape " + shape_str(shape_) +
                           " does not match value count " +
                           std::to_string(values_->size()));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor row(std::initializer_list<double> v) {
    return Tensor({1, static_cast<std::int64_t>(v.size())},
                  std::vector<double>(v));
  }

  static Tensor matrix(std::int64_t rows, std::int64_t cols,
                       std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(values_->size()); }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }

  std::int64_t rows() const {
    require_rank2("rows()");
    return shape_[0];
  }
  std::int64_t cols() const {
    require_rank2("cols()");
    return shape_[1];
  }

  const std::vector<double>& values() const { return *values_; }
  std::vector<double>& values() { return *values_; }
  const std::shared_ptr<std::vector<double>>& storage() const { return values_; }

  double at(std::int64_t i) const { return (*values_)[static_cast<std::size_t>(i)]; }
  double at(std::int64_t r, std::int64_t c) const {
    require_rank2("at(r,c)");
    return (*values_)[static_cast<std::size_t>(r * shape_[1] + c)];
  }
  double& at(std::int64_t i) { return (*values_)[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t r, std::int64_t c) {
    require_rank2("at(r,c)");
    return (*values_)[static_cast<std::size_t>(r * shape_[1] + c)];
  }

  bool is_scalar() const { return size() == 1; }

  bool all_finite() const {
    for (double v : *values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Deep copy with detached storage and no tape binding.
  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.values_ = std::make_shared<std::vector<double>>(*values_);
    return t;
  }

  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  bool recorded() const { return node_ >= 0; }

 private:
  friend class Tape;

  void bind(Tape* tape, int node) {
    tape_ = tape;
    node_ = node;
  }

  void check_shape() const {
    for (auto d : shape_)
      if (d <= 0)
        throw DimensionError("autodiff: non-positive dimension in shape " +
                             shape_str(shape_));
  }

  void require_rank2(const char* what) const {
    if (shape_.size() != 2)
      throw DimensionError(std::string("autodiff: ") + what +
                           " requires rank-2 tensor, got " + shape_str(shape_));
  }

  Shape shape_;
  std::shared_ptr<std::vector<double>> values_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

}  // namespace harmnet
