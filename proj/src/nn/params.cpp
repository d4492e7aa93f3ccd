#include "mgcg/nn/params.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mgcg/errors.hpp"

namespace mgcg::nn {

ParamId ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init,
                        Rng& rng) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  if (rows <= 0 || cols <= 0) throw ShapeError("parameter " + name + " has an empty shape");
  Mat m(rows, cols);
  switch (init.kind) {
    case Init::Kind::Zeros: m.setZero(); break;
    case Init::Kind::Constant: m.setConstant(init.scale); break;
    case Init::Kind::Uniform:
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-init.scale, init.scale);
      break;
    case Init::Kind::Normal:
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = init.scale * rng.normal();
      break;
    case Init::Kind::Xavier: {
      const double r = std::sqrt(6.0 / static_cast<double>(rows + cols));
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-r, r);
      break;
    }
  }
  index_[name] = values_.size();
  values_.push_back(std::move(m));
  names_.push_back(name);
  return {values_.size() - 1};
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

ParamId ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no parameter named " + name);
  return {it->second};
}

std::string ParamStore::to_json() const {
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const auto& v = values_[i];
    tensors.push_back({{"name", names_[i]},
                       {"shape", {v.rows(), v.cols()}},
                       {"data", std::vector<double>(v.data(), v.data() + v.size())}});
  }
  return nlohmann::json{{"version", 1}, {"tensors", tensors}}.dump();
}

void ParamStore::load_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("snapshot: ") + e.what());
  }
  if (j.value("version", 0) != 1) throw SchemaError("snapshot: unsupported version");
  std::vector<bool> seen(values_.size(), false);
  std::vector<Mat> loaded = values_;
  for (const auto& t : j.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    auto it = index_.find(name);
    if (it == index_.end()) throw ShapeError("snapshot tensor not in model: " + name);
    auto& dst = loaded[it->second];
    const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != dst.rows() || shape[1] != dst.cols()) {
      throw ShapeError("snapshot tensor " + name + " has a mismatched shape");
    }
    const auto data = t.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != dst.size()) {
      throw ShapeError("snapshot tensor " + name + " has the wrong element count");
    }
    std::copy(data.begin(), data.end(), dst.data());
    seen[it->second] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw ShapeError("snapshot is missing tensor " + names_[i]);
  }
  values_ = std::move(loaded);
}

void ParamStore::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << to_json();
}

void ParamStore::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  load_json(ss.str());
}

Gradients::Gradients(const ParamStore& store) {
  slots_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& v = store.value(ParamId{i});
    slots_.push_back(Mat::Zero(v.rows(), v.cols()));
  }
}

void Gradients::zero() {
  for (auto& s : slots_) s.setZero();
}

double Gradients::global_norm() const {
  double sq = 0.0;
  for (const auto& s : slots_) sq += s.squaredNorm();
  return std::sqrt(sq);
}

void Gradients::scale(double factor) {
  for (auto& s : slots_) s *= factor;
}

void Gradients::add(const Gradients& other) {
  if (other.slots_.size() != slots_.size()) throw ShapeError("gradient sets differ in size");
  for (std::size_t i = 0; i < slots_.size(); ++i) slots_[i] += other.slots_[i];
}

}  // namespace mgcg::nn
