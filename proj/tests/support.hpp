#pragma once

#include <doctest.h>

#include "numeric.hpp"

namespace testing {

template <typename Fn>
dpmine::ErrorCode error_code_of(Fn &&fn) {
  try {
    fn();
  } catch (const dpmine::Error &e) {
    return e.code();
  }
  FAIL("expected a dpmine::Error");
  return dpmine::ErrorCode::InvalidArgument;
}

} // namespace testing
