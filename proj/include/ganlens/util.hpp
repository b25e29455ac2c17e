#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace ganlens {

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file(const std::filesystem::path& p);

std::string read_text_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, const std::string& body);

nlohmann::json load_json(const std::filesystem::path& p);
void save_json(const std::filesystem::path& p, const nlohmann::json& j);

std::string iso8601_now();

// log verbosity from GANLENS_LOG: quiet|info|debug (default info)
int log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace ganlens
