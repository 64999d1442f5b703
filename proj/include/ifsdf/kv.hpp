#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ifsdf::kv {

// Ordered key=value pairs; '#' starts a comment, blank lines ignored.
using Map = std::vector<std::pair<std::string, std::string>>;

Map read_file(const std::string& path);
void write_file(const std::string& path, const Map& map);

const std::string* find(const Map& map, const std::string& key);

// Parsers that name the key in error messages.
double to_double(const std::string& value, const std::string& key);
long long to_int(const std::string& value, const std::string& key);
std::uint64_t to_u64(const std::string& value, const std::string& key);
bool to_bool(const std::string& value, const std::string& key);

std::string format_double(double v);

}  // namespace ifsdf::kv
