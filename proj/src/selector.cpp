#include "saltseg/selector.hpp"

#include <algorithm>
#include <cctype>
#include <tuple>

#include "saltseg/errors.hpp"

namespace fs = std::filesystem;

namespace saltseg {

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Selector parse() {
    Selector out;
    skip_space();
    if (at_end()) fail("empty selector");
    while (true) {
      out.clauses.push_back(clause());
      skip_space();
      if (at_end()) break;
      expect(',');
    }
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("selector: " + what + " at position " + std::to_string(pos_ + 1) + " in '" +
                      std::string(text_) + "'");
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  void skip_space() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  void expect(char c) {
    skip_space();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string word() {
    skip_space();
    const auto start = pos_;
    while (!at_end()) {
      const char c = text_[pos_];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ++pos_;
      else break;
    }
    if (start == pos_) fail("expected a name or value");
    return std::string(text_.substr(start, pos_ - start));
  }

  SelectorKey key() {
    skip_space();
    const auto start = pos_;
    const auto name = word();
    if (name == "round" || name == "rounds") return SelectorKey::round;
    if (name == "fold" || name == "folds") return SelectorKey::fold;
    if (name == "snapshot" || name == "snapshots") return SelectorKey::snapshot;
    if (name == "arch" || name == "archs") return SelectorKey::arch;
    pos_ = start;
    fail("unknown key '" + name + "'");
  }

  std::string value(SelectorKey k) {
    skip_space();
    const auto start = pos_;
    auto v = word();
    if (k != SelectorKey::arch && !std::all_of(v.begin(), v.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      pos_ = start;
      fail("expected an integer, got '" + v + "'");
    }
    if (k != SelectorKey::arch) v = std::to_string(std::stoi(v));
    return v;
  }

  SelectorClause clause() {
    SelectorClause c{key(), {}};
    skip_space();
    if (peek() == '=') {
      ++pos_;
      skip_space();
      if (peek() == '*') {
        ++pos_;
        return c;
      }
      c.values.insert(value(c.key));
      return c;
    }
    const auto start = pos_;
    if (text_.substr(pos_, 2) != "in" ||
        (pos_ + 2 < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_ + 2])) && text_[pos_ + 2] != '{')) {
      pos_ = start;
      fail("expected '=' or 'in'");
    }
    pos_ += 2;
    expect('{');
    skip_space();
    if (peek() == '*') {
      ++pos_;
      expect('}');
      return c;
    }
    c.values.insert(value(c.key));
    skip_space();
    while (peek() == ',') {
      ++pos_;
      c.values.insert(value(c.key));
      skip_space();
    }
    expect('}');
    return c;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::string field(const MemberRef& m, SelectorKey key) {
  switch (key) {
    case SelectorKey::round: return std::to_string(m.round);
    case SelectorKey::fold: return std::to_string(m.fold);
    case SelectorKey::snapshot: return std::to_string(m.snapshot);
    case SelectorKey::arch: return m.arch;
  }
  return {};
}

}  // namespace

bool Selector::matches(const MemberRef& member) const {
  return std::all_of(clauses.begin(), clauses.end(), [&](const SelectorClause& c) {
    return c.values.empty() || c.values.count(field(member, c.key)) != 0;
  });
}

Selector parse_selector(std::string_view text) { return Parser(text).parse(); }

std::vector<MemberRef> select_members(const std::vector<MemberRef>& inventory, const Selector& selector) {
  std::vector<MemberRef> out;
  std::copy_if(inventory.begin(), inventory.end(), std::back_inserter(out),
               [&](const MemberRef& m) { return selector.matches(m); });
  if (out.empty())
    throw ConfigError("selector matches none of the " + std::to_string(inventory.size()) + " available checkpoints");
  return out;
}

std::vector<MemberRef> scan_inventory(const fs::path& root) {
  const auto rounds = root / "rounds";
  if (!fs::is_directory(rounds)) throw IoError("no rounds directory under " + root.string());
  std::vector<MemberRef> out;
  for (const auto& round_dir : fs::directory_iterator(rounds)) {
    const auto ckpts = round_dir.path() / "checkpoints";
    if (!fs::is_directory(ckpts)) continue;
    for (const auto& entry : fs::directory_iterator(ckpts)) {
      if (entry.path().extension() != ".ckpt") continue;
      const auto manifest = read_checkpoint_manifest(entry.path());
      MemberRef m;
      m.checkpoint = entry.path();
      m.round = manifest.at("round_tag").get<int>();
      m.fold = manifest.at("fold_tag").get<int>();
      m.snapshot = manifest.at("snapshot_tag").get<int>();
      const auto& extra = manifest.at("extra");
      m.arch = extra.contains("arch") ? extra.at("arch").get<std::string>()
                                      : manifest.at("spec").at("backbone").get<std::string>();
      out.push_back(std::move(m));
    }
  }
  std::sort(out.begin(), out.end(), [](const MemberRef& a, const MemberRef& b) {
    return std::tie(a.round, a.arch, a.fold, a.snapshot, a.checkpoint) <
           std::tie(b.round, b.arch, b.fold, b.snapshot, b.checkpoint);
  });
  return out;
}

}  // namespace saltseg
