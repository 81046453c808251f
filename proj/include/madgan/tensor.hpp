#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "madgan/errors.hpp"
#include "madgan/rng.hpp"

namespace madgan {

// Dense float32 tensor, contiguous row-major. Copies are shallow (shared
// buffer); use clone() for a deep copy. All shape arithmetic is validated by
// callers; this type only owns storage.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<float>>(count(shape_), 0.0f)) {}

  Tensor(std::vector<int64_t> shape, std::vector<float> values)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<float>>(std::move(values))) {
    if (static_cast<int64_t>(buf_->size()) != count(shape_))
      throw ShapeError("tensor init: " + std::to_string(buf_->size()) +
                       " values for shape " + shape_str());
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int64_t> shape, float value) {
    Tensor t(std::move(shape));
    for (auto& v : *t.buf_) v = value;
    return t;
  }

  static Tensor scalar(float value) { return Tensor({1}, {value}); }

  static Tensor randn(std::vector<int64_t> shape, Rng& rng, float stddev = 1.0f) {
    Tensor t(std::move(shape));
    for (auto& v : *t.buf_) v = static_cast<float>(rng.gaussian() * stddev);
    return t;
  }

  static Tensor rand_uniform(std::vector<int64_t> shape, Rng& rng, float lo = 0.0f,
                             float hi = 1.0f) {
    Tensor t(std::move(shape));
    for (auto& v : *t.buf_) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.buf_ = std::make_shared<std::vector<float>>(*buf_);
    return t;
  }

  // Same buffer, new shape.
  Tensor reshaped(std::vector<int64_t> shape) const {
    if (count(shape) != numel())
      throw ShapeError("reshape " + shape_str() + " -> " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = buf_;
    return t;
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  size_t ndim() const { return shape_.size(); }
  int64_t numel() const { return count(shape_); }
  bool defined() const { return buf_ != nullptr; }

  float* data() { return buf_->data(); }
  const float* data() const { return buf_->data(); }
  const void* buffer_id() const { return buf_.get(); }

  float& operator[](int64_t i) { return (*buf_)[i]; }
  float operator[](int64_t i) const { return (*buf_)[i]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const { return shape_str(shape_); }

  static std::string shape_str(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
  }

  static int64_t count(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

 private:
  std::vector<int64_t> shape_;
  std::shared_ptr<std::vector<float>> buf_;
};

}  // namespace madgan
