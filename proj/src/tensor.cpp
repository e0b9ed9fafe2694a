#include "einopt/tensor.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace einopt {

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  s += ")";
  return s;
}

namespace {
int64_t flat_offset(const Shape& shape, const std::vector<int64_t>& idx) {
  if (idx.size() != shape.size()) throw std::invalid_argument("index order mismatch");
  int64_t off = 0;
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= shape[i]) throw std::out_of_range("tensor index");
    off = off * shape[i] + idx[i];
  }
  return off;
}
}  // namespace

double& DenseTensor::at(const std::vector<int64_t>& idx) {
  return data_[static_cast<size_t>(flat_offset(shape_, idx))];
}

double DenseTensor::at(const std::vector<int64_t>& idx) const {
  return data_[static_cast<size_t>(flat_offset(shape_, idx))];
}

static uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t CounterRng::raw_next() {
  return splitmix64(seed_ + splitmix64(counter_++));
}

double CounterRng::uniform() {
  // 53 mantissa bits in [0,1), mapped to (-1,1)
  double u = static_cast<double>(raw_next() >> 11) * (1.0 / 9007199254740992.0);
  return 2.0 * u - 1.0;
}

DenseTensor CounterRng::tensor(const Shape& shape) {
  DenseTensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = uniform();
  return t;
}

static void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

static uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("truncated tensor stream");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_tensor(std::ostream& os, const DenseTensor& t) {
  write_u64(os, static_cast<uint64_t>(t.order()));
  for (int64_t e : t.shape()) write_u64(os, static_cast<uint64_t>(e));
  for (int64_t i = 0; i < t.size(); ++i) {
    double d = t[i];
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(os, bits);
  }
}

DenseTensor read_tensor(std::istream& is) {
  uint64_t order = read_u64(is);
  if (order > 64) throw std::runtime_error("implausible tensor order in stream");
  Shape shape;
  for (uint64_t i = 0; i < order; ++i) shape.push_back(static_cast<int64_t>(read_u64(is)));
  DenseTensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) {
    uint64_t bits = read_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    t[i] = d;
  }
  return t;
}

void write_tensor_file(const std::string& path, const DenseTensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  write_tensor(f, t);
}

DenseTensor read_tensor_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  return read_tensor(f);
}

std::string tensor_to_text(const DenseTensor& t) {
  std::ostringstream os;
  os.precision(17);
  os << t.order();
  for (int64_t e : t.shape()) os << " " << e;
  for (int64_t i = 0; i < t.size(); ++i) os << " " << t[i];
  return os.str();
}

DenseTensor tensor_from_text(const std::string& text) {
  std::istringstream is(text);
  int64_t order;
  if (!(is >> order) || order < 0 || order > 64)
    throw std::runtime_error("malformed tensor text: bad order");
  Shape shape(static_cast<size_t>(order));
  for (auto& e : shape) {
    if (!(is >> e)) throw std::runtime_error("malformed tensor text: missing extent");
  }
  DenseTensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) {
    if (!(is >> t[i])) throw std::runtime_error("malformed tensor text: missing value");
  }
  return t;
}

}  // namespace einopt
