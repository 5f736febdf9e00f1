// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

namespace stpotr {

using KeyValues = std::map<std::string, std::string>;

/// `key = value` lines; blank lines and `#` comments ignored. Throws
/// UsageError on malformed lines or repeated keys.
KeyValues parse_key_values(std::istream& in, const std::string& source = "<stream>");
KeyValues read_key_values(const std::filesystem::path& path);

double kv_double(const std::string& key, const std::string& value);
std::size_t kv_size(const std::string& key, const std::string& value);
bool kv_bool(const std::string& key, const std::string& value);

}  // namespace stpotr
