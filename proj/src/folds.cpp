#include "saltseg/folds.hpp"

#include <algorithm>
#include <set>

#include "saltseg/csv.hpp"
#include "saltseg/errors.hpp"
#include "saltseg/rng.hpp"

namespace saltseg {

std::vector<std::string> FoldAssignment::fold_ids(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment)
    if (f == fold) out.push_back(id);
  return out;
}

std::vector<std::string> FoldAssignment::train_ids(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment)
    if (f != fold) out.push_back(id);
  return out;
}

std::vector<std::size_t> FoldAssignment::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(std::max(n_folds, 0)), 0);
  for (const auto& [id, f] : assignment) ++sizes.at(static_cast<std::size_t>(f));
  return sizes;
}

FoldAssignment make_folds(const std::vector<std::string>& ids, int n_folds, std::uint64_t seed) {
  if (ids.empty()) throw ConfigError("cannot make folds from an empty id list");
  if (n_folds <= 0) throw ConfigError("n_folds must be positive");
  if (static_cast<std::size_t>(n_folds) > ids.size())
    throw ConfigError("n_folds (" + std::to_string(n_folds) + ") exceeds the number of ids (" +
                      std::to_string(ids.size()) + ")");
  std::vector<std::string> order = ids;
  std::sort(order.begin(), order.end());
  if (std::adjacent_find(order.begin(), order.end()) != order.end())
    throw ConfigError("duplicate ids passed to make_folds");

  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

  FoldAssignment folds;
  folds.n_folds = n_folds;
  for (std::size_t i = 0; i < order.size(); ++i) folds.assignment[order[i]] = static_cast<int>(i % n_folds);
  return folds;
}

void write_fold_csv(const std::filesystem::path& path, const FoldAssignment& folds) {
  CsvTable table{{"id", "fold"}, {}};
  for (const auto& [id, f] : folds.assignment) table.rows.push_back({id, std::to_string(f)});
  write_csv(path, table);
}

FoldAssignment read_fold_csv(const std::filesystem::path& path) {
  auto table = read_csv(path, {"id", "fold"});
  FoldAssignment folds;
  int max_fold = -1;
  for (const auto& row : table.rows) {
    int fold = 0;
    try {
      fold = std::stoi(row[1]);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": bad fold index '" + row[1] + "'");
    }
    if (fold < 0) throw FormatError(path.string() + ": negative fold index for '" + row[0] + "'");
    if (!folds.assignment.emplace(row[0], fold).second)
      throw FormatError(path.string() + ": id '" + row[0] + "' listed twice");
    max_fold = std::max(max_fold, fold);
  }
  folds.n_folds = max_fold + 1;
  return folds;
}

}  // namespace saltseg
