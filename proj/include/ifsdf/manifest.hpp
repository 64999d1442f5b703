#pragma once

#include <cstdint>
#include <string>

#include "ifsdf/kv.hpp"

namespace ifsdf {

inline constexpr const char* kToolVersion = "0.1.0";

// Fully resolved run description written alongside every output. Re-running a
// command from its manifest in deterministic mode reproduces the outputs.
struct RunManifest {
  kv::Map entries;

  void set(const std::string& key, const std::string& value);
  void set_f(const std::string& key, double value);
  void set_i(const std::string& key, long long value);
  void set_u(const std::string& key, std::uint64_t value);
  const std::string* get(const std::string& key) const { return kv::find(entries, key); }

  void write(const std::string& path) const;
  static RunManifest load(const std::string& path);
};

// FNV-1a 64-bit content hash, hex encoded.
std::string file_hash_hex(const std::string& path);

}  // namespace ifsdf
