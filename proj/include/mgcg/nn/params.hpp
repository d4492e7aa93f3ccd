#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mgcg/nn/tensor.hpp"

namespace mgcg::nn {

struct ParamId {
  std::size_t index = static_cast<std::size_t>(-1);
  bool valid() const { return index != static_cast<std::size_t>(-1); }
};

struct Init {
  enum class Kind { Zeros, Constant, Uniform, Normal, Xavier };
  Kind kind = Kind::Zeros;
  double scale = 0.0;

  static Init zeros() { return {Kind::Zeros, 0.0}; }
  static Init constant(double c) { return {Kind::Constant, c}; }
  static Init uniform(double r = 0.08) { return {Kind::Uniform, r}; }
  static Init normal(double stddev) { return {Kind::Normal, stddev}; }
  static Init xavier() { return {Kind::Xavier, 0.0}; }
};

/// Named dense parameters. Blocks keep ParamIds into a store; the store
/// itself is a plain value, so a trained model can be copied and shared
/// read-only between threads.
class ParamStore {
 public:
  ParamId add(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init, Rng& rng);

  Mat& value(ParamId id) { return values_.at(id.index); }
  const Mat& value(ParamId id) const { return values_.at(id.index); }
  const std::string& name(ParamId id) const { return names_.at(id.index); }
  std::size_t size() const { return values_.size(); }
  std::size_t scalar_count() const;
  ParamId find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  /// {"version":1,"tensors":[{"name","shape":[r,c],"data":[...]}]}
  std::string to_json() const;
  /// Replaces values from a snapshot. Every parameter of this store must be
  /// present with an identical shape (ShapeError otherwise); extra tensors
  /// in the snapshot are an error too.
  void load_json(const std::string& text);
  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  std::vector<Mat> values_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradient slots shaped like the parameters of a store.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamStore& store);

  Mat& operator[](ParamId id) { return slots_.at(id.index); }
  const Mat& operator[](ParamId id) const { return slots_.at(id.index); }
  std::size_t size() const { return slots_.size(); }
  void zero();
  double global_norm() const;
  void scale(double factor);
  void add(const Gradients& other);

 private:
  std::vector<Mat> slots_;
};

}  // namespace mgcg::nn
