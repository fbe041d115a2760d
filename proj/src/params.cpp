#include "faithscan/params.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include <fmt/format.h>

#include "faithscan/error.hpp"

namespace faithscan {

std::size_t ParamStore::add(std::string name, std::vector<std::size_t> shape) {
  if (find(name) != npos) fail(ErrorKind::invalid_argument, fmt::format("duplicate parameter '{}'", name));
  const std::size_t count =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  tensors_.push_back({std::move(name), std::move(shape), values_.size(), count});
  values_.resize(values_.size() + count, 0.0);
  return tensors_.size() - 1;
}

std::size_t ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  return npos;
}

std::size_t ParamStore::find_or_throw(std::string_view name) const {
  const std::size_t idx = find(name);
  if (idx == npos) fail(ErrorKind::invalid_argument, fmt::format("no parameter named '{}'", name));
  return idx;
}

std::span<double> ParamStore::view(std::size_t index) {
  const auto& t = tensors_.at(index);
  return {values_.data() + t.offset, t.size};
}

std::span<const double> ParamStore::view(std::size_t index) const {
  const auto& t = tensors_.at(index);
  return {values_.data() + t.offset, t.size};
}

const std::string& ParamStore::owner_of(std::size_t flat) const {
  auto it = std::upper_bound(tensors_.begin(), tensors_.end(), flat,
                             [](std::size_t f, const ParamTensor& t) { return f < t.offset; });
  return std::prev(it)->name;
}

}  // namespace faithscan
