// SPDX-License-Identifier: Apache-2.0
//
// Text motion files:
//   stpotr-motion v1 <frame_rate_hz> <num_frames>
//   <51 floats: joints 0..16, x y z, meters>   (one line per frame)
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "stpotr/skeleton.hpp"

namespace stpotr {

MotionSequence parse_motion(std::istream& in, const std::string& source = "<stream>");
MotionSequence read_motion_file(const std::filesystem::path& path);

/// Values are written with 17 significant digits so reads round-trip exactly.
void write_motion(std::ostream& out, const MotionSequence& seq);
void write_motion_file(const std::filesystem::path& path, const MotionSequence& seq);

}  // namespace stpotr
