#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rope/blackbox.hpp"
#include "rope/log.hpp"
#include "rope/vec.hpp"

namespace rope {

// Errors from the external black-box protocol. Each failure mode is a
// distinct kind and carries the offending message (when there is one).
class ExternalError : public std::runtime_error {
 public:
  enum class Kind { spawn, handshake, malformed, id_mismatch, child_exit, timeout };

  ExternalError(Kind kind, const std::string& what, std::string offending = "")
      : std::runtime_error(what + (offending.empty() ? "" : " [message: " +
                                                               offending + "]")),
        kind_(kind),
        offending_(std::move(offending)) {}

  Kind kind() const { return kind_; }
  const std::string& offending_message() const { return offending_; }

 private:
  Kind kind_;
  std::string offending_;
};

struct ExternalOptions {
  int timeout_ms = 30000;  // per request
};

namespace detail {

// Writing to a dead child's pipe must surface as an error, not a SIGPIPE
// kill; the handler is set once, before the first spawn.
inline void ignore_sigpipe_once() {
  static const bool done = [] {
    struct sigaction sa;
    std::memset(&sa, 0, sizeof(sa));
    sa.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &sa, nullptr);
    return true;
  }();
  (void)done;
}

// Child process speaking line-delimited JSON over stdin/stdout.
// Requests are serialized under a mutex, so concurrent callers queue up and
// complete FIFO per the handle contract.
class ExternalProcess {
 public:
  ExternalProcess(const std::vector<std::string>& command,
                  const ExternalOptions& options)
      : options_(options) {
    if (command.empty())
      throw ExternalError(ExternalError::Kind::spawn, "empty external command");
    ignore_sigpipe_once();

    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0)
      throw ExternalError(ExternalError::Kind::spawn,
                          std::string("pipe failed: ") + std::strerror(errno));
    if (pipe(from_child) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw ExternalError(ExternalError::Kind::spawn,
                          std::string("pipe failed: ") + std::strerror(errno));
    }

    pid_ = fork();
    if (pid_ < 0)
      throw ExternalError(ExternalError::Kind::spawn,
                          std::string("fork failed: ") + std::strerror(errno));
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      std::vector<char*> argv;
      for (const std::string& arg : command)
        argv.push_back(const_cast<char*>(arg.c_str()));
      argv.push_back(nullptr);
      execvp(argv[0], argv.data());
      std::fprintf(stderr, "exec failed: %s: %s\n", argv[0],
                   std::strerror(errno));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];

    // Handshake. A failure here must release the pipes and reap the child
    // itself, since the destructor does not run for a failed constructor.
    try {
      send_line(nlohmann::json{{"type", "hello"}, {"protocol", 1}}.dump());
      const nlohmann::json ready = read_message();
      if (ready.value("type", "") != "ready")
        throw ExternalError(ExternalError::Kind::handshake,
                            "expected a ready message", ready.dump());
      if (!ready.contains("n_features") || !ready.contains("labels"))
        throw ExternalError(ExternalError::Kind::handshake,
                            "ready message missing n_features or labels",
                            ready.dump());
      n_features_ = ready.at("n_features").get<int>();
      labels_ = ready.at("labels").get<std::vector<int>>();
      if (n_features_ < 1)
        throw ExternalError(ExternalError::Kind::handshake,
                            "child declared n_features < 1", ready.dump());
    } catch (...) {
      shutdown();
      throw;
    }
  }

  ~ExternalProcess() { shutdown(); }

  ExternalProcess(const ExternalProcess&) = delete;
  ExternalProcess& operator=(const ExternalProcess&) = delete;

  int n_features() const { return n_features_; }

  int predict(const Vec& x) {
    std::lock_guard<std::mutex> lock(mutex_);
    const std::uint64_t id = next_id_++;
    send_line(nlohmann::json{{"type", "predict"}, {"id", id}, {"x", x}}.dump());
    const nlohmann::json reply = read_message();
    check_reply(reply, "prediction", id);
    if (!reply.contains("y"))
      throw ExternalError(ExternalError::Kind::malformed,
                          "prediction missing y", reply.dump());
    return reply.at("y").get<int>();
  }

  std::vector<int> predict_batch(const Matrix& xs) {
    std::lock_guard<std::mutex> lock(mutex_);
    const std::uint64_t id = next_id_++;
    send_line(nlohmann::json{{"type", "predict_batch"}, {"id", id}, {"xs", xs}}
                  .dump());
    const nlohmann::json reply = read_message();
    check_reply(reply, "predictions", id);
    if (!reply.contains("ys"))
      throw ExternalError(ExternalError::Kind::malformed,
                          "predictions missing ys", reply.dump());
    auto ys = reply.at("ys").get<std::vector<int>>();
    if (ys.size() != xs.size())
      throw ExternalError(ExternalError::Kind::malformed,
                          "predictions length mismatch", reply.dump());
    return ys;
  }

 private:
  void shutdown() {
    if (write_fd_ >= 0) {
      // Best-effort goodbye; the child may already be gone.
      const std::string bye = "{\"type\":\"bye\"}\n";
      ssize_t ignored = write(write_fd_, bye.data(), bye.size());
      (void)ignored;
      close(write_fd_);
      write_fd_ = -1;
    }
    if (read_fd_ >= 0) {
      close(read_fd_);
      read_fd_ = -1;
    }
    if (pid_ > 0) {
      int status = 0;
      // Give the child a moment to exit, then make sure.
      for (int i = 0; i < 50; ++i) {
        if (waitpid(pid_, &status, WNOHANG) != 0) {
          pid_ = -1;
          return;
        }
        usleep(10000);
      }
      kill(pid_, SIGKILL);
      waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

  void check_reply(const nlohmann::json& reply, const std::string& type,
                   std::uint64_t id) const {
    if (reply.value("type", "") != type)
      throw ExternalError(ExternalError::Kind::malformed,
                          "expected a " + type + " message", reply.dump());
    if (!reply.contains("id") || reply.at("id").get<std::uint64_t>() != id)
      throw ExternalError(ExternalError::Kind::id_mismatch,
                          "reply id does not match request id " +
                              std::to_string(id),
                          reply.dump());
  }

  void send_line(const std::string& payload) {
    std::string line = payload;
    line += '\n';
    std::size_t written = 0;
    while (written < line.size()) {
      const ssize_t n =
          write(write_fd_, line.data() + written, line.size() - written);
      if (n < 0) {
        if (errno == EINTR) continue;
        reap_if_dead();
        throw ExternalError(ExternalError::Kind::child_exit,
                            std::string("write to child failed: ") +
                                std::strerror(errno));
      }
      written += static_cast<std::size_t>(n);
    }
  }

  // Reads one newline-terminated JSON message, enforcing the per-request
  // timeout and detecting child death without hanging.
  nlohmann::json read_message() {
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(options_.timeout_ms);
    for (;;) {
      const std::size_t pos = buffer_.find('\n');
      if (pos != std::string::npos) {
        const std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        if (line.empty()) continue;
        try {
          return nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
          throw ExternalError(ExternalError::Kind::malformed,
                              "reply is not valid JSON", line);
        }
      }
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline)
        throw ExternalError(ExternalError::Kind::timeout,
                            "timed out waiting for child reply after " +
                                std::to_string(options_.timeout_ms) + " ms");
      struct pollfd pfd;
      pfd.fd = read_fd_;
      pfd.events = POLLIN;
      const int wait_ms = static_cast<int>(
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now)
              .count());
      const int rc = poll(&pfd, 1, std::max(1, wait_ms));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw ExternalError(ExternalError::Kind::child_exit,
                            std::string("poll failed: ") + std::strerror(errno));
      }
      if (rc == 0) continue;  // deadline re-checked above
      char chunk[4096];
      const ssize_t n = read(read_fd_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ExternalError(ExternalError::Kind::child_exit,
                            std::string("read from child failed: ") +
                                std::strerror(errno));
      }
      if (n == 0) {
        reap_if_dead();
        throw ExternalError(ExternalError::Kind::child_exit,
                            "child closed its output stream");
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void reap_if_dead() {
    if (pid_ > 0 && waitpid(pid_, nullptr, WNOHANG) == pid_) pid_ = -1;
  }

  ExternalOptions options_;
  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  std::string buffer_;
  std::uint64_t next_id_ = 1;
  std::mutex mutex_;
  int n_features_ = 0;
  std::vector<int> labels_;
};

class ExternalBlackBox final : public BlackBoxHandle::Impl {
 public:
  ExternalBlackBox(const std::vector<std::string>& command,
                   const ExternalOptions& options)
      : process_(std::make_shared<ExternalProcess>(command, options)) {}

  int query(const Vec& x) const override { return process_->predict(x); }
  std::vector<int> query_batch(const Matrix& xs) const override {
    return process_->predict_batch(xs);
  }
  int dim() const override { return process_->n_features(); }
  std::string kind() const override { return "external"; }

 private:
  std::shared_ptr<ExternalProcess> process_;  // mutable pipe state
};

}  // namespace detail

// Spawns a child classifier speaking the line-delimited JSON protocol:
//   -> {"type":"hello","protocol":1}
//   <- {"type":"ready","n_features":n,"labels":[...]}
//   -> {"type":"predict","id":k,"x":[...]}
//   <- {"type":"prediction","id":k,"y":label}
//   -> {"type":"predict_batch","id":k,"xs":[[...],...]}
//   <- {"type":"predictions","id":k,"ys":[...]}
//   -> {"type":"bye"}                (on shutdown)
inline BlackBoxHandle connect_external(const std::vector<std::string>& command,
                                       const ExternalOptions& options = {}) {
  return BlackBoxHandle(
      std::make_shared<detail::ExternalBlackBox>(command, options));
}

}  // namespace rope
