#pragma once

#include <filesystem>
#include <optional>
#include <ostream>

namespace csearch::cli {

/// Runs the embedded oracle checks and prints "PASS name" or
/// "FAIL name: reason" per check. With `model`, first checks that the file
/// loads. Returns true when every check passed.
bool run_selftest(std::ostream& out, const std::optional<std::filesystem::path>& model);

}  // namespace csearch::cli
