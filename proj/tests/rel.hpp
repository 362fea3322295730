#pragma once

#include <doctest.h>

// doctest::Approx scales its epsilon by (1 + magnitude), which accepts any
// pair of values far below 1. This one is purely relative.
inline doctest::Approx rel(double v) { return doctest::Approx(v).scale(0.0); }
