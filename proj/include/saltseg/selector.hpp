#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "saltseg/inference.hpp"

namespace saltseg {

enum class SelectorKey { round, fold, snapshot, arch };

/// One `key=value`, `key=*` or `key in {a,b}` clause. An empty value set
/// means the wildcard.
struct SelectorClause {
  SelectorKey key;
  std::set<std::string> values;
};

/// Conjunction of clauses; absent keys match everything.
struct Selector {
  std::vector<SelectorClause> clauses;
  bool matches(const MemberRef& member) const;
};

/// Grammar: clause (',' clause)*, with keys round(s), fold(s), snapshot(s),
/// arch. Throws FormatError with the 1-based character position on bad syntax.
Selector parse_selector(std::string_view text);

/// Members passing the selector, in inventory order. Throws ConfigError when
/// nothing matches.
std::vector<MemberRef> select_members(const std::vector<MemberRef>& inventory, const Selector& selector);

/// Every `rounds/<k>/checkpoints/*.ckpt` below `root`, tagged from the
/// checkpoint manifests and sorted by (round, arch, fold, snapshot).
std::vector<MemberRef> scan_inventory(const std::filesystem::path& root);

}  // namespace saltseg
