#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace faithscan {

struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;

  bool operator==(const ParamTensor&) const = default;
};

// Named tensors over one flat float64 buffer. Gradients and optimizer moments
// reuse the same layout as plain vectors of size().
class ParamStore {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t add(std::string name, std::vector<std::size_t> shape);

  std::size_t size() const { return values_.size(); }
  std::size_t find(std::string_view name) const;
  const std::vector<ParamTensor>& tensors() const { return tensors_; }
  const ParamTensor& tensor(std::size_t index) const { return tensors_[index]; }

  std::span<double> view(std::size_t index);
  std::span<const double> view(std::size_t index) const;
  std::span<double> view(std::string_view name) { return view(find_or_throw(name)); }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  // Name of the tensor containing flat index `flat`.
  const std::string& owner_of(std::size_t flat) const;

  bool operator==(const ParamStore&) const = default;

 private:
  std::size_t find_or_throw(std::string_view name) const;

  std::vector<ParamTensor> tensors_;
  std::vector<double> values_;
};

}  // namespace faithscan
