#include "agedep/errors.hpp"

namespace agedep {

namespace {
std::string join(const std::vector<std::string>& issues) {
    std::string out = "validation failed";
    for (const auto& s : issues) {
        out += "; ";
        out += s;
    }
    return out;
}
}  // namespace

ValidationError::ValidationError(std::vector<std::string> issues)
    : std::invalid_argument(join(issues)), issues_(std::move(issues)) {}

}  // namespace agedep
