#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace neo {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

// Status categories shared by the C++ core and the C API.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kIo = 2,
  kFormat = 3,
  kVocabulary = 4,
  kNumeric = 5,
  kInvariant = 6,
  kInternal = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

inline constexpr const char* kToolVersion = "0.3.1";

}  // namespace neo
