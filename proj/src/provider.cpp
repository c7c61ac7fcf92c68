#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <nlohmann/json.hpp>

#include "rolefuse/augment.hpp"

namespace rolefuse::augment {

namespace {

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

}  // namespace

ProcessProvider::ProcessProvider(const std::string& command) {
  // A provider that dies mid-write must surface as an error, not kill us.
  struct sigaction current {};
  if (::sigaction(SIGPIPE, nullptr, &current) == 0 && current.sa_handler == SIG_DFL) {
    ::signal(SIGPIPE, SIG_IGN);
  }
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe(in_pipe) != 0) throw ProviderError("pipe() failed: " + std::string(std::strerror(errno)));
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw ProviderError("pipe() failed: " + std::string(std::strerror(errno)));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw ProviderError("fork() failed: " + std::string(std::strerror(errno)));
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::fcntl(in_pipe[1], F_SETFD, FD_CLOEXEC);
  ::fcntl(out_pipe[0], F_SETFD, FD_CLOEXEC);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

ProcessProvider::~ProcessProvider() {
  close_fd(to_child_);
  close_fd(from_child_);
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

std::string ProcessProvider::read_line() {
  while (true) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[4096];
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw ProviderError("substitution provider unavailable: closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string ProcessProvider::request(std::string_view text,
                                     std::optional<std::pair<std::size_t, std::size_t>> span,
                                     double p, std::uint64_t seed) {
  nlohmann::json req{{"text", text}, {"p", p}, {"seed", seed}};
  req["protected_span"] =
      span ? nlohmann::json::array({span->first, span->second}) : nlohmann::json(nullptr);
  const std::string line = req.dump() + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(to_child_, line.data() + written, line.size() - written);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw ProviderError("substitution provider unavailable: cannot write request");
    written += static_cast<std::size_t>(n);
  }
  const std::string reply = read_line();
  nlohmann::json resp;
  try {
    resp = nlohmann::json::parse(reply);
  } catch (const nlohmann::json::parse_error&) {
    throw ProviderError("malformed provider response: " + reply.substr(0, 200));
  }
  if (resp.is_object() && resp.contains("error")) {
    throw ProviderError("provider error: " + resp["error"].dump());
  }
  if (!resp.is_object() || !resp.contains("text") || !resp["text"].is_string()) {
    throw ProviderError("malformed provider response: missing string 'text'");
  }
  return resp["text"].get<std::string>();
}

}  // namespace rolefuse::augment
