#pragma once

#include <stdexcept>
#include <string>

namespace swtte {

/// Error raised by any library module. The module name prefixes the message
/// so the CLI can surface "design: duplicate cluster id 'OH'" style output.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

}  // namespace swtte
