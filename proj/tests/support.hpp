#pragma once

#include "qpvi/matcore.hpp"

#include <doctest.h>

namespace qpvi::test {

inline bool close(cplx a, cplx b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

#define CHECK_CLOSE(a, b, tol) CHECK_MESSAGE(::qpvi::test::close((a), (b), (tol)), (a), " vs ", (b))

}  // namespace qpvi::test
