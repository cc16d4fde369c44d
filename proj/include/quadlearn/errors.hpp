#pragma once

#include <stdexcept>
#include <string>

namespace quadlearn {

// All library errors derive from Error and carry a stable machine-readable
// code alongside the human message.  The CLI maps codes to exit statuses.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(code + ": " + msg), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

inline Error invalid_argument_error(const std::string& msg) {
  return Error("invalid-argument", msg);
}

inline Error shape_error(const std::string& msg) { return Error("shape-error", msg); }

inline Error invalid_config_error(const std::string& msg) {
  return Error("invalid-config", msg);
}

inline Error io_error(const std::string& msg) { return Error("io-error", msg); }

inline Error infeasible_params_error(const std::string& msg) {
  return Error("infeasible-params", msg);
}

inline Error integration_diverged_error(const std::string& msg) {
  return Error("integration-diverged", msg);
}

inline Error flight_failed_error(const std::string& msg) {
  return Error("flight-failed", msg);
}

inline Error training_diverged_error(const std::string& msg) {
  return Error("training-diverged", msg);
}

inline Error rollout_diverged_error(const std::string& msg) {
  return Error("rollout-diverged", msg);
}

inline Error checkpoint_error(const std::string& msg) {
  return Error("checkpoint-error", msg);
}

}  // namespace quadlearn
