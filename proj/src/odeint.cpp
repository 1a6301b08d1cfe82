#include "ncf/odeint.hpp"

namespace ncf {

Method method_from_name(const std::string& name) {
    if (name == "euler") return Method::euler;
    if (name == "rk4") return Method::rk4;
    if (name == "dopri5") return Method::dopri5;
    throw ValidationError("unknown integrator method '" + name + "'");
}

std::string method_name(Method m) {
    switch (m) {
        case Method::euler: return "euler";
        case Method::rk4: return "rk4";
        case Method::dopri5: return "dopri5";
    }
    return "?";
}

}  // namespace ncf
