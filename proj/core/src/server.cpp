#include "exerclass/server.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <list>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "exerclass/errors.hpp"

namespace exerclass {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto millis =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(millis));
  return buf;
}

}  // namespace

struct Server::Impl {
  struct Connection {
    std::shared_ptr<websocket::stream<tcp::socket>> ws;
    std::thread worker;
    std::shared_ptr<std::atomic<bool>> done;
  };

  Impl(std::shared_ptr<const LoadedModel> m, ServerOptions o)
      : model(std::move(m)), options(std::move(o)), acceptor(ioc) {}

  std::shared_ptr<const LoadedModel> model;
  ServerOptions options;
  net::io_context ioc;
  tcp::acceptor acceptor;
  std::atomic<bool> stopping{false};
  std::atomic<std::uint64_t> next_session{1};
  unsigned short bound_port = 0;

  std::mutex connections_mu;
  std::list<Connection> connections;
  std::thread accept_thread;

  std::mutex log_mu;
  std::ofstream log;

  void reap_finished() {
    std::lock_guard lock(connections_mu);
    for (auto it = connections.begin(); it != connections.end();) {
      if (it->done->load()) {
        it->worker.join();
        it = connections.erase(it);
      } else {
        ++it;
      }
    }
  }

  void do_accept() {
    acceptor.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (stopping) return;
      if (!ec) spawn(std::move(socket));
      reap_finished();
      do_accept();
    });
  }

  void spawn(tcp::socket socket) {
    auto ws = std::make_shared<websocket::stream<tcp::socket>>(std::move(socket));
    auto done = std::make_shared<std::atomic<bool>>(false);
    const auto id = next_session++;
    std::lock_guard lock(connections_mu);
    connections.push_back({ws, std::thread([this, ws, done, id] {
                             serve_connection(*ws, id);
                             done->store(true);
                           }),
                           done});
  }

  void write_log(std::uint64_t session, std::uint64_t seq_no, const ClassificationResult& r) {
    if (!log.is_open()) return;
    std::string line = "{\"time\":\"" + utc_timestamp() + "\",\"session\":" + std::to_string(session) +
                       ",\"classification\":" + format_classification(r, seq_no, model->registry) + "}\n";
    std::lock_guard lock(log_mu);
    log << line << std::flush;
  }

  void serve_connection(websocket::stream<tcp::socket>& ws, std::uint64_t id) {
    try {
      ws.accept();
      ProtocolSession protocol(model, options.window_size);
      protocol.set_log_sink(
          [this, id](const ClassificationResult& r, std::uint64_t seq) { write_log(id, seq, r); });
      beast::flat_buffer buffer;
      for (;;) {
        buffer.clear();
        ws.read(buffer);
        const auto text = beast::buffers_to_string(buffer.data());
        if (auto reply = protocol.handle(text)) {
          ws.text(true);
          ws.write(net::buffer(*reply));
        }
      }
    } catch (const boost::system::system_error& e) {
      if (e.code() != websocket::error::closed && !stopping) {
        std::cerr << "session " << id << ": " << e.code().message() << "\n";
      }
    } catch (const std::exception& e) {
      std::cerr << "session " << id << ": " << e.what() << "\n";
    }
  }
};

Server::Server(std::shared_ptr<const LoadedModel> model, ServerOptions options)
    : impl_(std::make_unique<Impl>(std::move(model), std::move(options))) {
  // Fail early on a bad window instead of on the first connection.
  Session probe(impl_->model, impl_->options.window_size);

  if (!impl_->options.log_path.empty()) {
    impl_->log.open(impl_->options.log_path, std::ios::app);
    if (!impl_->log) throw ConfigError("cannot open session log '" + impl_->options.log_path + "'");
  }
  const tcp::endpoint endpoint(net::ip::make_address(impl_->options.address), impl_->options.port);
  impl_->acceptor.open(endpoint.protocol());
  impl_->acceptor.set_option(net::socket_base::reuse_address(true));
  impl_->acceptor.bind(endpoint);
  impl_->acceptor.listen();
  impl_->bound_port = impl_->acceptor.local_endpoint().port();
}

Server::~Server() { stop(); }

unsigned short Server::port() const { return impl_->bound_port; }

void Server::run() {
  impl_->do_accept();
  impl_->ioc.run();
}

void Server::start() {
  impl_->accept_thread = std::thread([this] { run(); });
}

void Server::stop() {
  if (impl_->stopping.exchange(true)) return;
  net::post(impl_->ioc, [impl = impl_.get()] {
    boost::system::error_code ignored;
    impl->acceptor.close(ignored);
  });
  impl_->ioc.stop();
  if (impl_->accept_thread.joinable()) impl_->accept_thread.join();

  std::lock_guard lock(impl_->connections_mu);
  for (auto& c : impl_->connections) {
    boost::system::error_code ignored;
    c.ws->next_layer().shutdown(tcp::socket::shutdown_both, ignored);
  }
  for (auto& c : impl_->connections) {
    if (c.worker.joinable()) c.worker.join();
  }
  impl_->connections.clear();
}

}  // namespace exerclass
