#pragma once

// Subprocess execution with wall-clock timing and a hard timeout. The child
// runs in its own process group so that a timeout kills everything it
// spawned, not just the direct child.

#include <fcntl.h>
#include <poll.h>
#include <sys/syscall.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mctree/errors.hpp"

namespace mctree {

struct ProcessResult {
  enum class Kind { Exited, Signaled, TimedOut };

  Kind kind = Kind::Exited;
  int exit_code = 0;  // valid for Exited
  int signal = 0;     // valid for Signaled
  double seconds = 0.0;
  pid_t pid = 0;  // also the process group id
  std::string output_tail;  // last bytes of combined stdout/stderr

  bool succeeded() const { return kind == Kind::Exited && exit_code == 0; }
};

namespace detail {

inline std::string read_tail(const std::filesystem::path& file, std::size_t max_bytes) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return {};
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  const std::size_t start = size > max_bytes ? size - max_bytes : 0;
  in.seekg(static_cast<std::streamoff>(start));
  std::string out(size - start, '\0');
  in.read(out.data(), static_cast<std::streamsize>(out.size()));
  return out;
}

}  // namespace detail

/// Runs `argv` (PATH lookup for argv[0]) with stdin from /dev/null and
/// stdout+stderr appended to `capture`. Throws InfrastructureError if the
/// program cannot be started at all.
inline ProcessResult run_process(const std::vector<std::string>& argv,
                                 std::optional<std::chrono::duration<double>> timeout,
                                 const std::filesystem::path& capture, std::size_t tail_bytes = 4096) {
  if (argv.empty()) throw InfrastructureError("empty command line");

  int out_fd = ::open(capture.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (out_fd < 0)
    throw InfrastructureError("cannot open " + capture.string() + ": " + std::strerror(errno));
  int err_pipe[2];
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    ::close(out_fd);
    throw InfrastructureError(std::string("pipe: ") + std::strerror(errno));
  }

  std::vector<char*> cargv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);

  const auto start = std::chrono::steady_clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(out_fd);
    ::close(err_pipe[0]);
    ::close(err_pipe[1]);
    throw InfrastructureError(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    // Only async-signal-safe calls from here on.
    ::setpgid(0, 0);
    int null_fd = ::open("/dev/null", O_RDONLY);
    if (null_fd >= 0) ::dup2(null_fd, STDIN_FILENO);
    ::dup2(out_fd, STDOUT_FILENO);
    ::dup2(out_fd, STDERR_FILENO);
    ::execvp(cargv[0], cargv.data());
    int err = errno;
    [[maybe_unused]] auto n = ::write(err_pipe[1], &err, sizeof err);
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(out_fd);
  ::close(err_pipe[1]);

  int exec_errno = 0;
  ssize_t got;
  do {
    got = ::read(err_pipe[0], &exec_errno, sizeof exec_errno);
  } while (got < 0 && errno == EINTR);
  ::close(err_pipe[0]);
  if (got == static_cast<ssize_t>(sizeof exec_errno)) {
    int status;
    ::waitpid(pid, &status, 0);
    throw InfrastructureError("cannot execute '" + argv[0] + "': " + std::strerror(exec_errno));
  }

  ProcessResult result;
  result.pid = pid;
  int status = 0;
  // Wait on a pidfd when the kernel offers one; otherwise poll waitpid.
  const int pidfd = static_cast<int>(::syscall(SYS_pidfd_open, pid, 0));
  auto nap = std::chrono::microseconds(50);
  while (true) {
    pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0 && errno != EINTR) throw InfrastructureError(std::string("waitpid: ") + std::strerror(errno));
    const auto elapsed = std::chrono::steady_clock::now() - start;
    if (timeout && elapsed >= *timeout) {
      ::kill(-pid, SIGKILL);
      while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
      }
      result.kind = ProcessResult::Kind::TimedOut;
      break;
    }
    if (pidfd >= 0) {
      int wait_ms = 1000;
      if (timeout) {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*timeout - elapsed).count() + 1;
        wait_ms = static_cast<int>(std::min<long long>(left, wait_ms));
      }
      pollfd pfd{pidfd, POLLIN, 0};
      ::poll(&pfd, 1, wait_ms);
    } else {
      std::this_thread::sleep_for(nap);
      nap = std::min<std::chrono::microseconds>(nap * 2, std::chrono::microseconds(2000));
    }
  }
  if (pidfd >= 0) ::close(pidfd);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  // Reap anything the child left behind in its group.
  ::kill(-pid, SIGKILL);

  if (result.kind != ProcessResult::Kind::TimedOut) {
    if (WIFEXITED(status)) {
      result.kind = ProcessResult::Kind::Exited;
      result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
      result.kind = ProcessResult::Kind::Signaled;
      result.signal = WTERMSIG(status);
    }
  }
  result.output_tail = detail::read_tail(capture, tail_bytes);
  return result;
}

}  // namespace mctree
