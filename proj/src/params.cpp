#include "clcsca/params.hpp"

#include "clcsca/common.hpp"

namespace clcsca {

const Tensor& param(const ParamMap& params, const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("params: missing \"" + name + "\"");
    return it->second;
}

}  // namespace clcsca
