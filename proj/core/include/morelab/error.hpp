#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace morelab {

// Error with a machine-readable category; the CLI prints one
// "error:<category>: <message>" line on stderr and exits nonzero.
// Categories in use: config, io, data, numeric, usage.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

}  // namespace morelab
