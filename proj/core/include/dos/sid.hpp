// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace dos {

/// One codebook index per quantization level, coarse to fine.
using SemanticId = std::vector<std::size_t>;

struct SidEntry {
  std::string item_id;
  SemanticId codes;
};
using SidTable = std::vector<SidEntry>;

/// "itm42\t7,130,955" per line, in table order.
void write_sids_tsv(const SidTable& sids, const std::filesystem::path& path);
SidTable read_sids_tsv(const std::filesystem::path& path);

std::string format_sid(const SemanticId& sid);

}  // namespace dos
