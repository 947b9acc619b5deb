#include "udfforge/error.hpp"

namespace udf {

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace udf
