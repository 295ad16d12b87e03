#pragma once

#include <map>
#include <string>

#include "clcsca/tensor.hpp"

namespace clcsca {

// Every learnable tensor keyed by a stable hierarchical name. std::map keeps
// iteration (and thus checkpoint and optimizer traversal) deterministic.
using ParamMap = std::map<std::string, Tensor>;

const Tensor& param(const ParamMap& params, const std::string& name);

}  // namespace clcsca
