// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <ostream>

namespace dos::cli {

inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kFailure = 2;

/// Entry point of the dos-sid tool. Returns 0 on success, 1 on usage errors
/// and 2 when a command fails at runtime.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// File names inside a gen-data output directory.
std::filesystem::path table_file(const std::filesystem::path& dir);
std::filesystem::path samples_file(const std::filesystem::path& dir);
std::filesystem::path hierarchy_file(const std::filesystem::path& dir);

}  // namespace dos::cli
