#include "fgvi/core/tensor.hpp"

#include <sstream>

namespace fgvi::core {

std::string Tensor::shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

}  // namespace fgvi::core
