#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

namespace eswm {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct Param {
  Mat<T> value;
  Mat<T> grad;
};

/// Named parameter tensors. Names are stable across runs and are the keys
/// used in checkpoints. Node-based storage keeps Param addresses valid for
/// the lifetime of the set, so layers may hold raw pointers into it.
template <typename T>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Param<T>* add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    auto [it, inserted] = params_.try_emplace(name);
    if (!inserted) throw std::logic_error("duplicate parameter name " + name);
    it->second.value = Mat<T>::Zero(rows, cols);
    it->second.grad = Mat<T>::Zero(rows, cols);
    return &it->second;
  }

  Param<T>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
  }
  const Param<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.grad.setZero();
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

 private:
  std::map<std::string, Param<T>> params_;
};

}  // namespace eswm
