#include "sslnet/tensor.hpp"

namespace sslnet {

std::string Shape4::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
}

void check_dim(int got, int want, const char* axis, const char* where) {
    if (got != want) {
        throw ShapeError(std::string(where) + ": axis '" + axis + "' has size " +
                         std::to_string(got) + ", expected " + std::to_string(want));
    }
}

}  // namespace sslnet
