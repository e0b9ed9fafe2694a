#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace einopt {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Row-major dense tensor of doubles. Order 0 holds a single scalar.
class DenseTensor {
 public:
  DenseTensor() : data_(1, 0.0) {}
  explicit DenseTensor(Shape shape)
      : shape_(std::move(shape)), data_(static_cast<size_t>(shape_size(shape_)), 0.0) {
    for (int64_t e : shape_) {
      if (e < 1) throw std::invalid_argument("tensor extent must be >= 1");
    }
  }
  DenseTensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_size(shape_))
      throw std::invalid_argument("tensor data length does not match shape");
  }

  static DenseTensor scalar(double v) {
    DenseTensor t;
    t.data_[0] = v;
    return t;
  }

  const Shape& shape() const { return shape_; }
  int64_t order() const { return static_cast<int64_t>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(const std::vector<int64_t>& idx);
  double at(const std::vector<int64_t>& idx) const;

  double scalar_value() const {
    if (order() != 0) throw std::logic_error("scalar_value on non-scalar tensor");
    return data_[0];
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Counter-based generator: splitmix64 over (seed, counter), mapped to
// uniform(-1, 1). Reproducible from the seed alone, independent of call sites.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : seed_(seed) {}

  double uniform();                       // in (-1, 1)
  DenseTensor tensor(const Shape& shape); // i.i.d. uniform(-1, 1) entries

  uint64_t raw_next();

 private:
  uint64_t seed_;
  uint64_t counter_ = 0;
};

// Binary tensor format: u64 LE order, u64 LE extents, f64 LE row-major payload.
void write_tensor(std::ostream& os, const DenseTensor& t);
DenseTensor read_tensor(std::istream& is);
void write_tensor_file(const std::string& path, const DenseTensor& t);
DenseTensor read_tensor_file(const std::string& path);

// Text format for small tensors: "order e1 ... eN v1 v2 ..." whitespace-separated.
std::string tensor_to_text(const DenseTensor& t);
DenseTensor tensor_from_text(const std::string& text);

}  // namespace einopt
