#include "fedgrid/wire.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <stdexcept>

namespace fedgrid::wire {

namespace {

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) throw std::runtime_error("wire: truncated message body");
  }
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

std::pair<std::string, std::uint16_t> split_address(const std::string& address) {
  std::size_t colon = address.rfind(':');
  if (colon == std::string::npos) {
    throw std::invalid_argument("address '" + address + "' must be host:port");
  }
  std::string host = address.substr(0, colon);
  int port = std::stoi(address.substr(colon + 1));
  if (port < 0 || port > 65535) throw std::invalid_argument("bad port in '" + address + "'");
  return {host.empty() ? "127.0.0.1" : host, static_cast<std::uint16_t>(port)};
}

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void wait_readable(int fd, double timeout_s, const char* what) {
  pollfd pfd{fd, POLLIN, 0};
  int ms = timeout_s < 0 ? -1 : static_cast<int>(timeout_s * 1000.0) + 1;
  int rc = ::poll(&pfd, 1, ms);
  if (rc == 0) throw TimeoutError(std::string(what) + ": timed out");
  if (rc < 0) throw std::runtime_error(std::string(what) + ": poll failed");
}

}  // namespace

std::vector<std::uint8_t> encode(const Message& msg) {
  std::vector<std::uint8_t> body;
  body.push_back(kProtocolVersion);
  body.push_back(static_cast<std::uint8_t>(msg.type));
  switch (msg.type) {
    case MsgType::kHello:
      put_u64(body, msg.spec_hash);
      put_u32(body, msg.agent_id);
      break;
    case MsgType::kParams:
      put_u32(body, msg.round);
      put_u64(body, msg.data_size);
      put_u64(body, msg.spec_hash);
      put_u64(body, msg.values.size());
      for (double v : msg.values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64(body, bits);
      }
      break;
    case MsgType::kGlobal:
      put_u32(body, msg.round);
      put_u64(body, msg.spec_hash);
      put_u64(body, msg.values.size());
      for (double v : msg.values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64(body, bits);
      }
      break;
    case MsgType::kDone:
      break;
    case MsgType::kReject:
      put_u32(body, static_cast<std::uint32_t>(msg.text.size()));
      body.insert(body.end(), msg.text.begin(), msg.text.end());
      break;
  }
  return body;
}

Message decode(const std::vector<std::uint8_t>& body) {
  Reader r(body);
  std::uint8_t version = r.u8();
  if (version != kProtocolVersion) {
    throw std::runtime_error("wire: unsupported protocol version " + std::to_string(version));
  }
  Message msg;
  msg.type = static_cast<MsgType>(r.u8());
  switch (msg.type) {
    case MsgType::kHello:
      msg.spec_hash = r.u64();
      msg.agent_id = r.u32();
      break;
    case MsgType::kParams: {
      msg.round = r.u32();
      msg.data_size = r.u64();
      msg.spec_hash = r.u64();
      std::uint64_t n = r.u64();
      msg.values.resize(n);
      for (auto& v : msg.values) v = r.f64();
      break;
    }
    case MsgType::kGlobal: {
      msg.round = r.u32();
      msg.spec_hash = r.u64();
      std::uint64_t n = r.u64();
      msg.values.resize(n);
      for (auto& v : msg.values) v = r.f64();
      break;
    }
    case MsgType::kDone:
      break;
    case MsgType::kReject: {
      std::uint32_t len = r.u32();
      msg.text = r.bytes(len);
      break;
    }
    default:
      throw std::runtime_error("wire: unknown message type");
  }
  return msg;
}

Socket::~Socket() { close(); }

Socket::Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::send_all(const std::uint8_t* data, std::size_t len) {
  std::size_t sent = 0;
  while (sent < len) {
    ssize_t n = ::send(fd_, data + sent, len - sent, MSG_NOSIGNAL);
    if (n <= 0) throw std::runtime_error("wire: send failed (peer closed?)");
    sent += static_cast<std::size_t>(n);
  }
}

void Socket::recv_all(std::uint8_t* data, std::size_t len, double timeout_s) {
  double deadline = now_s() + timeout_s;
  std::size_t got = 0;
  while (got < len) {
    double remaining = deadline - now_s();
    if (remaining <= 0.0) throw TimeoutError("wire: recv timed out");
    wait_readable(fd_, remaining, "wire recv");
    ssize_t n = ::recv(fd_, data + got, len - got, 0);
    if (n == 0) throw std::runtime_error("wire: connection closed by peer");
    if (n < 0) throw std::runtime_error("wire: recv failed");
    got += static_cast<std::size_t>(n);
  }
}

void Socket::send_message(const Message& msg) {
  if (!valid()) throw std::runtime_error("wire: send on closed socket");
  std::vector<std::uint8_t> body = encode(msg);
  std::uint8_t prefix[4];
  std::uint32_t len = static_cast<std::uint32_t>(body.size());
  for (int i = 0; i < 4; ++i) prefix[i] = static_cast<std::uint8_t>((len >> (8 * i)) & 0xff);
  send_all(prefix, 4);
  send_all(body.data(), body.size());
}

Message Socket::recv_message(double timeout_s) {
  if (!valid()) throw std::runtime_error("wire: recv on closed socket");
  std::uint8_t prefix[4];
  recv_all(prefix, 4, timeout_s);
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(prefix[i]) << (8 * i);
  if (len > (1u << 30)) throw std::runtime_error("wire: oversized frame");
  std::vector<std::uint8_t> body(len);
  recv_all(body.data(), len, timeout_s);
  return decode(body);
}

Listener::Listener(const std::string& address) {
  auto [host, port] = split_address(address);
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw std::runtime_error("wire: cannot create socket");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw std::invalid_argument("wire: bad host '" + host + "'");
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    throw std::runtime_error("wire: cannot bind " + address);
  }
  if (::listen(fd_, 16) != 0) {
    ::close(fd_);
    throw std::runtime_error("wire: listen failed");
  }
  socklen_t alen = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &alen);
  port_ = ntohs(addr.sin_port);
}

Listener::~Listener() {
  if (fd_ >= 0) ::close(fd_);
}

Socket Listener::accept(double timeout_s) {
  wait_readable(fd_, timeout_s, "wire accept");
  int client = ::accept(fd_, nullptr, nullptr);
  if (client < 0) throw std::runtime_error("wire: accept failed");
  int one = 1;
  ::setsockopt(client, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return Socket(client);
}

Socket connect(const std::string& address, double timeout_s) {
  auto [host, port] = split_address(address);
  double deadline = now_s() + timeout_s;
  while (true) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw std::runtime_error("wire: cannot create socket");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd);
      throw std::invalid_argument("wire: bad host '" + host + "'");
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return Socket(fd);
    }
    ::close(fd);
    if (now_s() >= deadline) throw TimeoutError("wire: connect to " + address + " timed out");
    ::usleep(20000);  // server may not be listening yet; retry briefly
  }
}

}  // namespace fedgrid::wire
