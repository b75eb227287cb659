#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace saltseg {

struct FoldAssignment {
  int n_folds = 5;
  std::map<std::string, int> assignment;

  std::vector<std::string> fold_ids(int fold) const;
  std::vector<std::string> train_ids(int fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

/// Seeded shuffle followed by round-robin dealing, so fold sizes differ by at
/// most one. Throws ConfigError when n_folds exceeds the id count or ids
/// repeat.
FoldAssignment make_folds(const std::vector<std::string>& ids, int n_folds = 5, std::uint64_t seed = 0);

/// CSV `id,fold`, rows sorted by id.
void write_fold_csv(const std::filesystem::path& path, const FoldAssignment& folds);
FoldAssignment read_fold_csv(const std::filesystem::path& path);

}  // namespace saltseg
