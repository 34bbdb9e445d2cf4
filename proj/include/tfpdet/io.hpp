#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

namespace tfpdet::io {

std::string read_file(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_file(const std::filesystem::path& path, const std::string& bytes);

/// JSON parse that rejects duplicate object keys; errors name `what`.
nlohmann::json parse_strict(const std::string& text, const std::string& what);

void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f64(std::string& out, double v);
std::uint32_t get_u32(const std::string& in, std::size_t at);
std::uint64_t get_u64(const std::string& in, std::size_t at);
double get_f64(const std::string& in, std::size_t at);

}  // namespace tfpdet::io
