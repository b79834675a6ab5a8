#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedgrid::wire {

inline constexpr std::uint8_t kProtocolVersion = 1;

enum class MsgType : std::uint8_t {
  kHello = 1,   // spec_hash + agent_id, sent once after connect
  kParams = 2,  // round + data_size + parameter payload, participant -> server
  kGlobal = 3,  // round + parameter payload, server -> participants
  kDone = 4,    // server -> participants, training finished
  kReject = 5,  // server -> participant, connection refused (reason text)
};

struct Message {
  MsgType type = MsgType::kDone;
  std::uint32_t round = 0;
  std::uint32_t agent_id = 0;
  std::uint64_t spec_hash = 0;
  std::uint64_t data_size = 0;           // transitions backing a kParams upload
  std::vector<double> values;            // parameter payload
  std::string text;                      // kReject reason
};

// Body encoding (the 4-byte little-endian length prefix is added by the
// socket layer): version byte, type byte, then type-specific fields, all
// little-endian fixed width. Doubles travel as their IEEE-754 bit patterns.
std::vector<std::uint8_t> encode(const Message& msg);
Message decode(const std::vector<std::uint8_t>& body);  // throws on malformed input

// Thin blocking TCP wrapper (IPv4). All receive operations honor the
// deadline and throw TimeoutError when it passes.
class TimeoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept;
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  bool valid() const { return fd_ >= 0; }
  void close();

  void send_message(const Message& msg);
  Message recv_message(double timeout_s);

 private:
  void send_all(const std::uint8_t* data, std::size_t len);
  void recv_all(std::uint8_t* data, std::size_t len, double timeout_s);

  int fd_ = -1;
};

class Listener {
 public:
  // address is "host:port"; port 0 binds an ephemeral port.
  explicit Listener(const std::string& address);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  std::uint16_t port() const { return port_; }
  Socket accept(double timeout_s);  // throws TimeoutError when nobody connects

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

Socket connect(const std::string& address, double timeout_s);

}  // namespace fedgrid::wire
