#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hscd {

// Thrown when an operation's precondition or a data invariant is violated.
// The message always names the failing check.
class InvariantError : public std::invalid_argument {
 public:
  explicit InvariantError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Thrown on container / file problems (missing, malformed, unwritable).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvariantError(msg);
}

// Acquisition phase of a spectral cube.
enum class Phase : uint8_t { T1 = 0, T2 = 1 };

// Condition tag fed to the noise predictor. `None` is the unconditional
// ablation switch.
enum class Cond : uint8_t { T1 = 0, T2 = 1, None = 2 };

inline Cond to_cond(Phase p) { return p == Phase::T1 ? Cond::T1 : Cond::T2; }

inline const char* phase_name(Phase p) { return p == Phase::T1 ? "t1" : "t2"; }

}  // namespace hscd
