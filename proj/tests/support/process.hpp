#pragma once

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace avqoe::testing {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr interleaved
};

inline RunResult run_command(const std::string& cmd) {
    RunResult r;
    FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
    if (pipe == nullptr) {
        return r;
    }
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) {
        r.output += buf.data();
    }
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// A child `avqoe serve` process. The constructor blocks until the server
/// prints its "listening on host:port" line.
class ServerProcess {
public:
    ServerProcess(const std::string& binary, const std::string& data_dir) {
        int fds[2];
        if (::pipe(fds) != 0) {
            throw std::runtime_error("pipe failed");
        }
        pid_ = ::fork();
        if (pid_ == 0) {
            ::dup2(fds[1], STDOUT_FILENO);
            ::close(fds[0]);
            ::close(fds[1]);
            std::vector<std::string> args{binary, "serve", "--port", "0", "--data-dir", data_dir};
            std::vector<char*> argv;
            for (auto& a : args) argv.push_back(a.data());
            argv.push_back(nullptr);
            ::execv(binary.c_str(), argv.data());
            ::_exit(127);
        }
        ::close(fds[1]);
        out_ = ::fdopen(fds[0], "r");
        std::array<char, 256> line{};
        while (std::fgets(line.data(), line.size(), out_) != nullptr) {
            const std::string text(line.data());
            if (text.rfind("listening on ", 0) == 0) {
                port_ = std::stoi(text.substr(text.rfind(':') + 1));
                return;
            }
        }
        kill();
        throw std::runtime_error("server exited before listening");
    }
    ~ServerProcess() { kill(); }
    ServerProcess(const ServerProcess&) = delete;
    ServerProcess& operator=(const ServerProcess&) = delete;

    int port() const { return port_; }

    void kill(int sig = SIGKILL) {
        if (pid_ > 0) {
            ::kill(pid_, sig);
            ::waitpid(pid_, nullptr, 0);
            pid_ = -1;
        }
        if (out_ != nullptr) {
            std::fclose(out_);
            out_ = nullptr;
        }
    }

private:
    pid_t pid_ = -1;
    FILE* out_ = nullptr;
    int port_ = 0;
};

inline std::string quote(const std::string& s) { return "'" + s + "'"; }

}  // namespace avqoe::testing
