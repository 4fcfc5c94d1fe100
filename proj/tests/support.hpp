#pragma once

#include <symreview/symreview.hpp>

#include <httplib.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef SYMREVIEW_TEST_FIXTURES
#define SYMREVIEW_TEST_FIXTURES "tests/fixtures"
#endif

namespace symreview::testing {

inline std::string fixture(const std::string& name) { return std::string(SYMREVIEW_TEST_FIXTURES) + "/" + name; }
inline std::string data_file(const std::string& name) { return std::string(SYMREVIEW_DATA_DIR) + "/" + name; }

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("symreview-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// One request as the stub saw it.
struct SeenRequest {
  std::string body;
  std::string authorization;
  bool has_authorization = false;
  std::string content_type;
};

/// Local HTTP server answering POST /v1/classify through a handler.
class StubServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&, int call)>;

  explicit StubServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/classify", [this](const httplib::Request& req, httplib::Response& res) {
      int call;
      {
        std::lock_guard lock(mutex_);
        SeenRequest seen;
        seen.body = req.body;
        seen.has_authorization = req.has_header("Authorization");
        seen.authorization = req.get_header_value("Authorization");
        seen.content_type = req.get_header_value("Content-Type");
        requests_.push_back(std::move(seen));
        call = static_cast<int>(requests_.size());
      }
      handler_(req, res, call);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::vector<SeenRequest> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }

  static Handler completion(std::string text) {
    return [text](const httplib::Request&, httplib::Response& res, int) {
      res.set_content(nlohmann::json{{"completion", text}}.dump(), "application/json");
    };
  }

 private:
  httplib::Server server_;
  Handler handler_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mutex_;
  std::vector<SeenRequest> requests_;
};

/// Sets an environment variable for the lifetime of the guard.
class EnvGuard {
 public:
  EnvGuard(std::string name, const char* value) : name_(std::move(name)) {
    if (const char* old = std::getenv(name_.c_str())) previous_ = old;
    if (value) ::setenv(name_.c_str(), value, 1);
    else ::unsetenv(name_.c_str());
  }
  ~EnvGuard() {
    if (previous_) ::setenv(name_.c_str(), previous_->c_str(), 1);
    else ::unsetenv(name_.c_str());
  }

 private:
  std::string name_;
  std::optional<std::string> previous_;
};

/// A loopback port with nothing listening on it (bound, queried, closed).
inline int closed_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  socklen_t len = sizeof(addr);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

inline CodeSample sample(std::int64_t id, Label label, std::string source) {
  CodeSample s;
  s.id = id;
  s.label = label;
  s.source = std::move(source);
  return s;
}

/// Runs the CLI in-process and captures its streams.
struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

}  // namespace symreview::testing
