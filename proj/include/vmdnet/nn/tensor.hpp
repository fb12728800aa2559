#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <new>
#include <string>
#include <string_view>
#include <vector>

#include "vmdnet/rng.hpp"

namespace vmdnet::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Cache-line aligned storage, so vectorized reductions round the same way
/// wherever the buffer lands.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

/// Dense row-major tensor of doubles.
struct Tensor {
  Shape shape;
  Buffer data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, const std::vector<double>& values);
  Tensor(Shape s, Buffer values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }
};

/// Throws NonFiniteValue naming `where` if any entry is NaN or infinite.
void check_finite(const Tensor& t, std::string_view where);

Tensor uniform_tensor(Shape shape, double bound, Rng& rng);

struct Parameter {
  Tensor value;
  Tensor grad;
  Tensor m;  // Adam first moment
  Tensor v;  // Adam second moment
};

/// Named parameters in name order, with gradient and optimizer slots.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::map<std::string, Parameter>& entries() { return params_; }
  const std::map<std::string, Parameter>& entries() const { return params_; }

  std::vector<std::string> names() const;
  /// Total number of scalars.
  std::size_t scalar_count() const;
  void zero_grad();

  std::int64_t step = 0;

 private:
  std::map<std::string, Parameter> params_;
};

}  // namespace vmdnet::nn
