#include "kkl/config.hpp"

#include <fstream>

#include "kkl/error.hpp"

namespace kkl {

namespace {

template <class T>
T require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorKind::ConfigError, std::string("missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("bad field '") + key + "': " + e.what());
  }
}

}  // namespace

Vec vec_from_json(const Json& j) {
  if (!j.is_array()) throw Error(ErrorKind::ConfigError, "expected a numeric array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorKind::ConfigError, "expected a numeric array");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Json vec_to_json(const Vec& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

ContractionMap sigma_from_json(const Json& j) {
  const auto kind = require<std::string>(j, "kind");
  if (kind == "linear") return builtin_linear(require<double>(j, "a"));
  if (kind == "tanh_blend") return builtin_tanh_blend(require<double>(j, "a_fast"), require<double>(j, "a_slow"));
  throw Error(ErrorKind::ConfigError, "unknown contraction kind '" + kind + "'");
}

Json sigma_to_json(const ContractionMap& cm) {
  if (cm.kind == "linear") return {{"kind", "linear"}, {"a", cm.params.at(0)}};
  if (cm.kind == "tanh_blend") {
    return {{"kind", "tanh_blend"}, {"a_fast", cm.params.at(0)}, {"a_slow", cm.params.at(1)}};
  }
  return {{"kind", cm.kind}};
}

FilterBank bank_from_json(const Json& j) {
  const auto kind = require<std::string>(j, "kind");
  if (!j.contains("lambdas")) throw Error(ErrorKind::ConfigError, "missing field 'lambdas'");
  const Vec lambdas = vec_from_json(j.at("lambdas"));
  if (kind == "linear") return linear_bank_from(require<double>(j, "a"), lambdas);
  if (kind == "nonlinear") {
    if (!j.contains("sigma")) throw Error(ErrorKind::ConfigError, "missing field 'sigma'");
    const double k = j.contains("k") ? require<double>(j, "k") : 1.0;
    return nonlinear_bank(sigma_from_json(j.at("sigma")), lambdas, k);
  }
  throw Error(ErrorKind::ConfigError, "unknown bank kind '" + kind + "'");
}

Json bank_to_json(const FilterBank& bank) {
  if (bank.is_linear()) {
    const auto& lin = bank.linear();
    return {{"kind", "linear"}, {"a", lin.a}, {"lambdas", vec_to_json(lin.lambdas)}};
  }
  const auto& nl = bank.nonlinear();
  return {{"kind", "nonlinear"},
          {"sigma", sigma_to_json(nl.sigmas.front())},
          {"lambdas", vec_to_json(nl.lambdas)},
          {"k", nl.k}};
}

Box box_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("lo") || !j.contains("hi")) {
    throw Error(ErrorKind::ConfigError, "box needs 'lo' and 'hi'");
  }
  return Box::make(vec_from_json(j.at("lo")), vec_from_json(j.at("hi")));
}

Json box_to_json(const Box& box) { return {{"lo", vec_to_json(box.lo)}, {"hi", vec_to_json(box.hi)}}; }

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path);
}

}  // namespace kkl
