#pragma once

#include <filesystem>

namespace saltseg {

/// Exclusive `.lock` file inside a directory, removed on destruction.
/// Throws OrchestrationError when another process holds the lock.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& directory);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace saltseg
