#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace branchforge {

// 64-bit FNV-1a. Used for branch identities, config fingerprints and the
// node-feature token hash.
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t fnv1a64(const std::string& s, uint64_t seed = 0xcbf29ce484222325ull);

std::string read_file(const std::string& path);
// Writes to `<path>.tmp` then renames, so consumers never see partial files.
void write_file_atomic(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);

// Bit-exact double round-trip via hexadecimal float literals ("%a").
std::string double_to_hex(double v);
double hex_to_double(const std::string& s);

// Escaping for line-delimited record files: tab, newline, CR and backslash.
std::string escape_field(const std::string& s);
std::string unescape_field(const std::string& s);

std::vector<std::string> split(const std::string& s, char sep);
std::string join(const std::vector<std::string>& parts, const std::string& sep);

// Flat `key: value` text files (manifests, reports).
std::string render_kv(const std::vector<std::pair<std::string, std::string>>& kvs);
std::map<std::string, std::string> parse_kv(const std::string& text);

}  // namespace branchforge
