#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "hrc/session.hpp"

namespace hrc {

/// WebSocket transport for a live session. One text frame carries one
/// protocol line. Only one operator is served at a time; later connections
/// are told "busy" and closed. Runs its own network thread.
class WebSocketLink final : public SessionLink {
 public:
  using Diagnostic = std::function<void(const std::string&)>;

  /// Port 0 binds an ephemeral port (see port()). `hello` is sent to every
  /// operator on connect.
  WebSocketLink(std::uint16_t port, msg::Hello hello, SessionRecorder* recorder = nullptr,
                Diagnostic diagnostic = {});
  ~WebSocketLink() override;

  WebSocketLink(const WebSocketLink&) = delete;
  WebSocketLink& operator=(const WebSocketLink&) = delete;

  std::uint16_t port() const;

  bool connected() const override;
  bool wait_for_operator(const std::atomic<bool>& stop) override;
  void send(const SessionMessage& m) override;
  ActionMailbox& mailbox() override;

  /// Messages dropped as malformed so far.
  std::uint64_t rejected() const;

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

}  // namespace hrc
