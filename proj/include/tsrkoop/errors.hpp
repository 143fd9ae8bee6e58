#pragma once

#include <stdexcept>
#include <string>

namespace tsrkoop {

/// Base class for every error raised by the library. `module()` names the
/// component that failed so the CLI can report it.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(what), module_(std::move(module)) {}
  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

#define TSRKOOP_DEFINE_ERROR(Name, Module)                              \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(Module, what) {}    \
    Name(const std::string& module, const std::string& what)           \
        : Error(module, what) {}                                       \
  }

TSRKOOP_DEFINE_ERROR(DomainError, "dynamics");
TSRKOOP_DEFINE_ERROR(IntegrationError, "dynamics");
TSRKOOP_DEFINE_ERROR(RejectionLimit, "sampler");
TSRKOOP_DEFINE_ERROR(FormatError, "io");
TSRKOOP_DEFINE_ERROR(IoError, "io");
TSRKOOP_DEFINE_ERROR(ShapeError, "nn");
TSRKOOP_DEFINE_ERROR(ConfigError, "config");
TSRKOOP_DEFINE_ERROR(GateError, "koopman");
TSRKOOP_DEFINE_ERROR(DivergenceError, "koopman");
TSRKOOP_DEFINE_ERROR(RankDeficiencyError, "edmd");
TSRKOOP_DEFINE_ERROR(NoConvergenceError, "control");
TSRKOOP_DEFINE_ERROR(ConditioningError, "control");

#undef TSRKOOP_DEFINE_ERROR

}  // namespace tsrkoop
