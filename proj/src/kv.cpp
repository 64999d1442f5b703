#include "ifsdf/kv.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ifsdf/errors.hpp"

namespace ifsdf::kv {

namespace {
std::string trim(const std::string& s) {
  const std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

Map read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path);
  Map map;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw InputError(path + ":" + std::to_string(lineno) + ": expected key=value");
    map.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return map;
}

void write_file(const std::string& path, const Map& map) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write file: " + path);
  for (const auto& [k, v] : map) out << k << '=' << v << '\n';
  if (!out) throw InputError("failed writing file: " + path);
}

const std::string* find(const Map& map, const std::string& key) {
  for (const auto& [k, v] : map)
    if (k == key) return &v;
  return nullptr;
}

double to_double(const std::string& value, const std::string& key) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(value.c_str(), &end);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    throw InputError("invalid number for " + key + ": '" + value + "'");
  return v;
}

long long to_int(const std::string& value, const std::string& key) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    throw InputError("invalid integer for " + key + ": '" + value + "'");
  return v;
}

std::uint64_t to_u64(const std::string& value, const std::string& key) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    throw InputError("invalid integer for " + key + ": '" + value + "'");
  return v;
}

bool to_bool(const std::string& value, const std::string& key) {
  if (value == "1" || value == "true" || value == "on") return true;
  if (value == "0" || value == "false" || value == "off") return false;
  throw InputError("invalid boolean for " + key + ": '" + value + "'");
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace ifsdf::kv
