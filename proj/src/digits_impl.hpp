#pragma once

#include <cstdint>

#include "nccr/tensor.hpp"

namespace nccr {

// Jittered 8x8 bitmap glyph for `digit` (library-internal).
Tensor render_mini_digit(int digit, uint64_t item_seed);

// Jittered 28x28 stroke glyph for `digit` (library-internal).
Tensor render_digit28(int digit, uint64_t item_seed);

}  // namespace nccr
