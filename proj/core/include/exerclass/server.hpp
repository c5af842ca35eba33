#pragma once

#include <memory>
#include <string>

#include "exerclass/model.hpp"
#include "exerclass/session.hpp"

namespace exerclass {

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks an ephemeral port
  int window_size = kDefaultWindowSize;
  std::string log_path;  // append-only classification log; empty disables
};

/// WebSocket classification service: one ProtocolSession per connection,
/// one text message per StreamMessage, replies in arrival order.
class Server {
 public:
  /// Binds the listening socket. Throws on bind failure or an invalid window.
  Server(std::shared_ptr<const LoadedModel> model, ServerOptions options);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;

  /// Accepts connections until stop(); blocks the caller.
  void run();
  /// Runs the accept loop on a background thread.
  void start();
  /// Closes the listener and every open connection, then joins all threads.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace exerclass
