// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "dos/sid.hpp"

#include <charconv>
#include <fstream>

#include "dos/error.hpp"

namespace dos {

std::string format_sid(const SemanticId& sid) {
  std::string out;
  for (std::size_t i = 0; i < sid.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(sid[i]);
  }
  return out;
}

void write_sids_tsv(const SidTable& sids, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& e : sids) out << e.item_id << '\t' << format_sid(e.codes) << '\n';
}

SidTable read_sids_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  SidTable out;
  std::string line;
  std::size_t line_no = 0, depth = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected item_id<TAB>codes");
    SidEntry e{line.substr(0, tab), {}};
    const char* p = line.data() + tab + 1;
    const char* end = line.data() + line.size();
    while (p < end) {
      std::size_t v = 0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{}) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad code index");
      e.codes.push_back(v);
      p = next;
      if (p < end) {
        if (*p != ',') throw FormatError(path.string() + ":" + std::to_string(line_no) + ": codes must be comma-separated");
        ++p;
      }
    }
    if (e.codes.empty()) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": empty SID");
    if (depth == 0) depth = e.codes.size();
    if (e.codes.size() != depth) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": inconsistent SID depth");
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace dos
