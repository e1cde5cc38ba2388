#pragma once

#include "tensor.hpp"

#include <string>

namespace fedsim {

// Checkpoint file layout, in order:
//   1. one line of UTF-8 JSON: arch fields plus, per tensor in model order,
//      {name, shape, block_id (or null), offset, count}
//   2. one line holding the decimal byte length of the value blob
//   3. the blob: little-endian IEEE-754 doubles concatenated in manifest order
// Round-trips are bit exact.
void save_checkpoint(const ModelState & model, const std::string & path);

ModelState load_checkpoint(const std::string & path);

} // namespace fedsim
