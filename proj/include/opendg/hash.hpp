#pragma once

#include <cstdint>
#include <string>

namespace opendg {

// FNV-1a, used for content-hashing inputs and outputs in run manifests and
// for idempotence checks.
class Fnv1a64 {
 public:
  void update(const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      hash_ ^= bytes[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return hash_; }
  std::string hex() const;

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

std::uint64_t fnv1a64(const std::string& s);

// Hash of a file's bytes; throws DataError when unreadable.
std::string hash_file(const std::string& path);

}  // namespace opendg
