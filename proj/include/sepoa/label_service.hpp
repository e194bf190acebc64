#pragma once

#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "sepoa/teacher.hpp"

namespace sepoa {

inline constexpr int kDefaultPort = 8321;

struct HttpReply {
  int status = 200;
  std::string body;
};

/// Request handlers, independent of the transport.
HttpReply handle_get_pending(const LabelMailbox& mailbox);
HttpReply handle_post_label(LabelMailbox& mailbox, const std::string& body);
HttpReply handle_get_status(const LabelMailbox& mailbox);

/// Serves the mailbox over HTTP on a background thread.
class LabelService {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    int port = kDefaultPort;  // 0 picks a free port
    std::string static_dir;   // optional UI bundle mounted at /
  };

  LabelService(LabelMailbox& mailbox, Options options);
  ~LabelService();
  LabelService(const LabelService&) = delete;
  LabelService& operator=(const LabelService&) = delete;

  /// Binds and starts serving; throws ServiceUnavailable if the port is taken.
  void start();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  LabelMailbox& mailbox_;
  Options options_;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace sepoa
