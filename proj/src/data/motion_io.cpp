// SPDX-License-Identifier: Apache-2.0
#include "stpotr/motion_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>
#include <vector>

#include "stpotr/error.hpp"

namespace stpotr {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

bool parse_double(std::string_view token, double& value) {
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  return ec == std::errc() && ptr == end && std::isfinite(value);
}

bool is_blank(std::string_view line) { return split_ws(line).empty(); }

}  // namespace

MotionSequence parse_motion(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty motion file");
  const auto header = split_ws(line);
  if (header.size() != 4 || header[0] != "stpotr-motion" || header[1] != "v1") {
    throw DataError(source + ": bad header, expected 'stpotr-motion v1 <frame_rate_hz> <num_frames>'");
  }
  double rate = 0.0;
  if (!parse_double(header[2], rate) || rate <= 0.0) throw DataError(source + ": invalid frame rate");
  std::size_t n_frames = 0;
  {
    const char* end = header[3].data() + header[3].size();
    auto [ptr, ec] = std::from_chars(header[3].data(), end, n_frames);
    if (ec != std::errc() || ptr != end) throw DataError(source + ": invalid frame count");
  }
  if (n_frames == 0) throw DataError(source + ": motion must contain at least one frame");

  MotionSequence seq;
  seq.frame_rate_hz = rate;
  seq.frames.reserve(n_frames);
  std::vector<double> values(kFrameDim);
  for (std::size_t f = 0; f < n_frames; ++f) {
    if (!std::getline(in, line)) {
      throw DataError(source + ": header declares " + std::to_string(n_frames) + " frames but file ends at frame " +
                      std::to_string(f));
    }
    const auto tokens = split_ws(line);
    if (tokens.size() != kFrameDim) {
      throw DataError(source + ": frame " + std::to_string(f) + " has " + std::to_string(tokens.size()) +
                      " values, expected " + std::to_string(kFrameDim) + " (17 joints x 3)");
    }
    for (std::size_t k = 0; k < kFrameDim; ++k) {
      if (!parse_double(tokens[k], values[k])) {
        throw DataError(source + ": frame " + std::to_string(f) + " value " + std::to_string(k) +
                        " is not a finite number: '" + std::string(tokens[k]) + "'");
      }
    }
    seq.frames.push_back(Skeleton::from_flat(values));
  }
  while (std::getline(in, line)) {
    if (!is_blank(line)) throw DataError(source + ": unexpected content after frame " + std::to_string(n_frames - 1));
  }
  return seq;
}

MotionSequence read_motion_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open motion file " + path.string());
  return parse_motion(in, path.string());
}

void write_motion(std::ostream& out, const MotionSequence& seq) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", seq.frame_rate_hz);
  out << "stpotr-motion v1 " << buf << ' ' << seq.frames.size() << '\n';
  for (const auto& frame : seq.frames) {
    const auto flat = frame.flatten();
    for (std::size_t k = 0; k < flat.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", flat[k]);
      if (k) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

void write_motion_file(const std::filesystem::path& path, const MotionSequence& seq) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write motion file " + path.string());
  write_motion(out, seq);
  if (!out) throw DataError("failed writing motion file " + path.string());
}

}  // namespace stpotr
