#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace activead::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;  // bad flags or configuration
inline constexpr int kExitData = 3;   // malformed or inconsistent inputs
inline constexpr int kExitIo = 4;

// Environment variable naming a default config file.
inline constexpr const char* kConfigEnv = "ACTIVEAD_CONFIG";

// Every recognized configuration key with its default value. null marks keys
// resolved later (n0 and n_itr default to 10% of the pool).
nlohmann::ordered_json default_settings();

// Applies `overrides` on top of `base`. Unknown keys raise ConfigError.
void merge_settings(nlohmann::ordered_json& base, const nlohmann::json& overrides);

// Parses "key=value". The value is read as JSON when possible, else as a
// plain string.
std::pair<std::string, nlohmann::json> parse_assignment(const std::string& text);

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace activead::cli
