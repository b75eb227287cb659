#include "saltseg/lock.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <string>

#include "saltseg/errors.hpp"

namespace saltseg {

DirectoryLock::DirectoryLock(const std::filesystem::path& directory) : path_(directory / ".lock") {
  std::filesystem::create_directories(directory);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw OrchestrationError(directory.string() + " is locked by another invocation (remove " + path_.string() +
                               " if that process is gone)");
    throw IoError("cannot create lock " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

}  // namespace saltseg
