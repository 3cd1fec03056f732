#pragma once

// memvi command-line front end, split from main() so tests can drive it
// in-process.

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace memvi::cli {

using Json = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kUsage = 1, kNumeric = 2 };

/// Every recognised key with its default value.
Json default_config();

/// Overlays `user` onto `defaults`. Throws ConfigError on a key that is not in
/// `defaults`, or when an object is replaced by a non-object (or vice versa).
Json merge_config(const Json& defaults, const Json& user, const std::string& where = "");

/// Runs one command. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace memvi::cli
