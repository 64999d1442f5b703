#include "ifsdf/manifest.hpp"

#include <cstdio>
#include <fstream>

#include "ifsdf/errors.hpp"

namespace ifsdf {

void RunManifest::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries)
    if (k == key) {
      v = value;
      return;
    }
  entries.emplace_back(key, value);
}

void RunManifest::set_f(const std::string& key, double value) { set(key, kv::format_double(value)); }
void RunManifest::set_i(const std::string& key, long long value) { set(key, std::to_string(value)); }
void RunManifest::set_u(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }

void RunManifest::write(const std::string& path) const { kv::write_file(path, entries); }

RunManifest RunManifest::load(const std::string& path) {
  RunManifest m;
  m.entries = kv::read_file(path);
  return m;
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot hash file: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace ifsdf
