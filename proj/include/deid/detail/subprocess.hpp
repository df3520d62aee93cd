#ifndef DEID_DETAIL_SUBPROCESS_HPP
#define DEID_DETAIL_SUBPROCESS_HPP

#include "deid/errors.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace deid::detail {

inline void ignore_sigpipe_once() {
    static std::once_flag flag;
    std::call_once(flag, [] { std::signal(SIGPIPE, SIG_IGN); });
}

/// Child process running `/bin/sh -c command` with piped stdin and stdout.
/// stderr is inherited. Single owner; not safe for concurrent use.
class Subprocess {
public:
    explicit Subprocess(const std::string& command) : command_(command) {
        ignore_sigpipe_once();
        int in_pipe[2];
        int out_pipe[2];
        if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw TransportError("pipe: " + std::string(std::strerror(errno)));
        if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
            ::close(in_pipe[0]);
            ::close(in_pipe[1]);
            throw TransportError("pipe: " + std::string(std::strerror(errno)));
        }
        posix_spawn_file_actions_t actions;
        posix_spawn_file_actions_init(&actions);
        posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
        posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
        const char* argv[] = {"/bin/sh", "-c", command_.c_str(), nullptr};
        const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, nullptr, const_cast<char* const*>(argv), environ);
        posix_spawn_file_actions_destroy(&actions);
        ::close(in_pipe[0]);
        ::close(out_pipe[1]);
        if (rc != 0) {
            ::close(in_pipe[1]);
            ::close(out_pipe[0]);
            throw TransportError("spawn '" + command_ + "': " + std::strerror(rc));
        }
        stdin_fd_ = in_pipe[1];
        stdout_fd_ = out_pipe[0];
    }

    Subprocess(const Subprocess&) = delete;
    Subprocess& operator=(const Subprocess&) = delete;

    ~Subprocess() {
        close_stdin();
        if (stdout_fd_ >= 0) ::close(stdout_fd_);
        if (pid_ > 0 && !exit_status_) {
            ::kill(pid_, SIGTERM);
            int status = 0;
            ::waitpid(pid_, &status, 0);
        }
    }

    const std::string& command() const noexcept { return command_; }

    void write_all(std::string_view data, std::chrono::milliseconds timeout) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        while (!data.empty()) {
            wait_ready(stdin_fd_, POLLOUT, deadline);
            const ssize_t n = ::write(stdin_fd_, data.data(), data.size());
            if (n < 0) {
                if (errno == EINTR || errno == EAGAIN) continue;
                throw TransportError("write to '" + command_ + "': " + std::strerror(errno));
            }
            data.remove_prefix(static_cast<std::size_t>(n));
        }
    }

    void close_stdin() {
        if (stdin_fd_ >= 0) {
            ::close(stdin_fd_);
            stdin_fd_ = -1;
        }
    }

    /// Next '\n'-terminated line without the terminator; nullopt at EOF.
    std::optional<std::string> read_line(std::chrono::milliseconds timeout) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        for (;;) {
            const auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                return line;
            }
            if (eof_) {
                if (buffer_.empty()) return std::nullopt;
                return std::exchange(buffer_, std::string());
            }
            fill(deadline);
        }
    }

    std::string read_all(std::chrono::milliseconds timeout) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        while (!eof_) fill(deadline);
        return std::exchange(buffer_, std::string());
    }

    /// Writes all of `input`, closes stdin and reads stdout to EOF, servicing
    /// both pipes together so large payloads cannot deadlock.
    std::string communicate(std::string_view input, std::chrono::milliseconds timeout) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        if (input.empty()) close_stdin();
        while (stdin_fd_ >= 0 || !eof_) {
            pollfd fds[2];
            nfds_t count = 0;
            if (stdin_fd_ >= 0) fds[count++] = {stdin_fd_, POLLOUT, 0};
            if (!eof_) fds[count++] = {stdout_fd_, POLLIN, 0};
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) throw TransportError("timeout talking to '" + command_ + "'");
            const int rc = ::poll(fds, count, static_cast<int>(left.count()));
            if (rc < 0) {
                if (errno == EINTR) continue;
                throw TransportError("poll: " + std::string(std::strerror(errno)));
            }
            for (nfds_t i = 0; i < count; ++i) {
                if (fds[i].revents == 0) continue;
                if (fds[i].fd == stdin_fd_) {
                    const std::size_t step = std::min<std::size_t>(input.size(), 4096);
                    const ssize_t n = ::write(stdin_fd_, input.data(), step);
                    if (n < 0 && errno != EINTR && errno != EAGAIN) {
                        // Child closed its stdin early; keep reading what it wrote.
                        close_stdin();
                        continue;
                    }
                    if (n > 0) input.remove_prefix(static_cast<std::size_t>(n));
                    if (input.empty()) close_stdin();
                } else {
                    char chunk[4096];
                    const ssize_t n = ::read(stdout_fd_, chunk, sizeof chunk);
                    if (n == 0) {
                        eof_ = true;
                    } else if (n > 0) {
                        buffer_.append(chunk, static_cast<std::size_t>(n));
                    } else if (errno != EINTR && errno != EAGAIN) {
                        throw TransportError("read from '" + command_ + "': " + std::strerror(errno));
                    }
                }
            }
        }
        return std::exchange(buffer_, std::string());
    }

    int wait() {
        if (!exit_status_) {
            int status = 0;
            while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
            }
            exit_status_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
        }
        return *exit_status_;
    }

private:
    void wait_ready(int fd, short events, std::chrono::steady_clock::time_point deadline) {
        for (;;) {
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) throw TransportError("timeout talking to '" + command_ + "'");
            pollfd p{fd, events, 0};
            const int rc = ::poll(&p, 1, static_cast<int>(left.count()));
            if (rc > 0) return;
            if (rc < 0 && errno != EINTR) throw TransportError("poll: " + std::string(std::strerror(errno)));
        }
    }

    void fill(std::chrono::steady_clock::time_point deadline) {
        wait_ready(stdout_fd_, POLLIN, deadline);
        char chunk[4096];
        const ssize_t n = ::read(stdout_fd_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) return;
            throw TransportError("read from '" + command_ + "': " + std::strerror(errno));
        }
        if (n == 0) {
            eof_ = true;
            return;
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }

    std::string command_;
    pid_t pid_ = -1;
    int stdin_fd_ = -1;
    int stdout_fd_ = -1;
    std::string buffer_;
    bool eof_ = false;
    std::optional<int> exit_status_;
};

struct FilterResult {
    std::string output;
    int exit_code = 0;
};

/// Runs `command` once with `input` on stdin and collects all of stdout.
inline FilterResult run_filter(const std::string& command, std::string_view input,
                               std::chrono::milliseconds timeout) {
    Subprocess child(command);
    std::string output = child.communicate(input, timeout);
    return {std::move(output), child.wait()};
}

}  // namespace deid::detail

#endif  // DEID_DETAIL_SUBPROCESS_HPP
