#pragma once

#include <json.hpp>

#include <string>

#include "kkl/contraction.hpp"
#include "kkl/dynsys.hpp"
#include "kkl/filterbank.hpp"

namespace kkl {

using Json = nlohmann::json;

// {"kind":"linear","a":-5} or {"kind":"tanh_blend","a_fast":-5,"a_slow":-0.5}
ContractionMap sigma_from_json(const Json& j);
Json sigma_to_json(const ContractionMap& cm);

// {"kind":"linear","a":-5,"lambdas":[2,4,6]} or
// {"kind":"nonlinear","sigma":{...},"lambdas":[2,4,6],"k":1}
FilterBank bank_from_json(const Json& j);
Json bank_to_json(const FilterBank& bank);

// {"lo":[...],"hi":[...]}
Box box_from_json(const Json& j);
Json box_to_json(const Box& box);

Vec vec_from_json(const Json& j);
Json vec_to_json(const Vec& v);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

}  // namespace kkl
