#include "hrc/session_server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <condition_variable>
#include <deque>
#include <iostream>
#include <mutex>
#include <thread>

#include "hrc/error.hpp"

namespace hrc {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

class Connection;

struct WebSocketLink::Impl : std::enable_shared_from_this<WebSocketLink::Impl> {
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::thread thread;
  msg::Hello hello;
  SessionRecorder* recorder = nullptr;
  Diagnostic diagnostic;
  ActionMailbox mailbox;

  // Touched only on the network thread.
  std::shared_ptr<Connection> current;

  mutable std::mutex mutex;
  std::condition_variable changed;
  bool operator_connected = false;
  std::uint64_t rejected = 0;

  void accept();
  void opened(const std::shared_ptr<Connection>& c);
  void closed(const Connection* c);
  void incoming(Connection& c, const std::string& text);
  void diagnose(const std::string& what) {
    if (diagnostic) diagnostic(what);
  }
  void record(std::string_view dir, const SessionMessage& m) {
    if (!recorder) return;
    try {
      recorder->message(dir, m);
    } catch (const IoError& e) {
      // The simulation loop sees this through SessionRecorder::check().
      diagnose(e.what());
    }
  }
};

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, std::shared_ptr<WebSocketLink::Impl> link)
      : ws_(std::move(socket)), link_(std::move(link)) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return self->link_->diagnose("handshake failed: " + ec.message());
      self->open_ = true;
      self->link_->opened(self);
    });
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->finish();
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->link_->incoming(*self, text);
      if (self->open_) self->read();
    });
  }

  void send(std::string line) {
    if (!open_) return;
    queue_.push_back(std::move(line));
    if (!writing_) write();
  }

  /// Sends `bye` (if given) after anything already queued, then closes.
  void shut(const std::string& reason) {
    if (!open_) return;
    if (!reason.empty()) send(encode(msg::Bye{reason}));
    closing_ = true;
    if (!writing_) close();
  }

  bool is_open() const { return open_; }

 private:
  void write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->finish();
      self->queue_.pop_front();
      if (!self->queue_.empty()) return self->write();
      self->writing_ = false;
      if (self->closing_) self->close();
    });
  }

  void close() {
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) { self->finish(); });
  }

  void finish() {
    if (finished_) return;
    finished_ = true;
    open_ = false;
    queue_.clear();
    link_->closed(this);
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::shared_ptr<WebSocketLink::Impl> link_;
  std::deque<std::string> queue_;
  bool writing_ = false;
  bool open_ = false;
  bool closing_ = false;
  bool finished_ = false;
};

void WebSocketLink::Impl::accept() {
  acceptor.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec != net::error::operation_aborted) self->diagnose("accept failed: " + ec.message());
      if (!self->acceptor.is_open()) return;
    } else {
      std::make_shared<Connection>(std::move(socket), self)->start();
    }
    self->accept();
  });
}

void WebSocketLink::Impl::opened(const std::shared_ptr<Connection>& c) {
  if (current && current->is_open()) {
    // Single operator per session.
    c->read();
    c->shut("busy");
    return;
  }
  current = c;
  mailbox.reset();
  c->send(encode(hello));
  record("out", hello);
  c->read();
  {
    std::lock_guard lock(mutex);
    operator_connected = true;
  }
  changed.notify_all();
}

void WebSocketLink::Impl::closed(const Connection* c) {
  if (current.get() != c) return;
  current.reset();
  {
    std::lock_guard lock(mutex);
    operator_connected = false;
  }
  changed.notify_all();
}

void WebSocketLink::Impl::incoming(Connection& c, const std::string& text) {
  if (current.get() != &c) return;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(begin, end - begin);
    begin = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const SessionMessage m = decode(line);
      if (const auto* a = std::get_if<msg::Action>(&m)) {
        mailbox.post(a->axis_value);
        record("in", m);
      } else if (const auto* h = std::get_if<msg::Hello>(&m)) {
        record("in", m);
        if (h->version != kProtocolVersion) {
          diagnose("operator speaks protocol version " + std::to_string(h->version));
          c.shut("protocol version mismatch");
        }
      } else if (std::holds_alternative<msg::Bye>(m)) {
        record("in", m);
        c.shut("");
      } else {
        throw FormatError("operator may not send '" + message_type(m) + "'");
      }
    } catch (const FormatError& e) {
      {
        std::lock_guard lock(mutex);
        ++rejected;
      }
      diagnose(std::string("dropped message: ") + e.what());
      if (recorder) {
        try {
          recorder->rejected(line, e.what());
        } catch (const IoError& io) {
          diagnose(io.what());
        }
      }
    }
  }
}

WebSocketLink::WebSocketLink(std::uint16_t port, msg::Hello hello, SessionRecorder* recorder, Diagnostic diagnostic)
    : impl_(std::make_shared<Impl>()) {
  impl_->hello = std::move(hello);
  impl_->recorder = recorder;
  impl_->diagnostic = diagnostic ? std::move(diagnostic)
                                 : Diagnostic([](const std::string& s) { std::cerr << "session: " << s << '\n'; });
  try {
    const tcp::endpoint endpoint(net::ip::make_address("0.0.0.0"), port);
    impl_->acceptor.open(endpoint.protocol());
    impl_->acceptor.set_option(net::socket_base::reuse_address(true));
    impl_->acceptor.bind(endpoint);
    impl_->acceptor.listen();
  } catch (const boost::system::system_error& e) {
    throw IoError("cannot listen on port " + std::to_string(port) + ": " + e.what());
  }
  impl_->accept();
  impl_->thread = std::thread([impl = impl_] { impl->ioc.run(); });
}

WebSocketLink::~WebSocketLink() {
  net::post(impl_->ioc, [impl = impl_] {
    beast::error_code ignored;
    impl->acceptor.close(ignored);
    if (impl->current) impl->current->shut("");
  });
  // Give the close handshake a moment, then stop regardless.
  auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(500);
  {
    std::unique_lock lock(impl_->mutex);
    impl_->changed.wait_until(lock, deadline, [&] { return !impl_->operator_connected; });
  }
  impl_->ioc.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::uint16_t WebSocketLink::port() const { return impl_->acceptor.local_endpoint().port(); }

bool WebSocketLink::connected() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->operator_connected;
}

bool WebSocketLink::wait_for_operator(const std::atomic<bool>& stop) {
  std::unique_lock lock(impl_->mutex);
  while (!impl_->operator_connected) {
    if (stop) return false;
    impl_->changed.wait_for(lock, std::chrono::milliseconds(50));
  }
  return !stop;
}

void WebSocketLink::send(const SessionMessage& m) {
  net::post(impl_->ioc, [impl = impl_, line = encode(m)]() mutable {
    if (impl->current) impl->current->send(std::move(line));
  });
}

ActionMailbox& WebSocketLink::mailbox() { return impl_->mailbox; }

std::uint64_t WebSocketLink::rejected() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->rejected;
}

}  // namespace hrc
