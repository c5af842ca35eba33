#include "exerclass/errors.hpp"

#include <utility>

namespace exerclass {

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

ModelFormatError::ModelFormatError(std::string field, const std::string& what)
    : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

}  // namespace exerclass
