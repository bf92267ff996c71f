// Core packet and flow types shared by every stage of the pipeline.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vqoe {

// Malformed or inconsistent input data. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Schema violation while parsing a text format; carries the offending line.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class Direction : std::uint8_t { kUp, kDown };  // up = client -> server
enum class Transport : std::uint8_t { kTcp, kUdp };

std::string_view to_string(Direction d);
std::string_view to_string(Transport t);

namespace tcp_flag {
inline constexpr std::uint8_t kAck = 1 << 0;
inline constexpr std::uint8_t kSyn = 1 << 1;
inline constexpr std::uint8_t kRst = 1 << 2;
inline constexpr std::uint8_t kPush = 1 << 3;
inline constexpr std::uint8_t kUrgent = 1 << 4;
}  // namespace tcp_flag

// "ASRPU" letter encoding used by the JSONL format.
std::string flags_to_string(std::uint8_t flags);
std::optional<std::uint8_t> flags_from_string(std::string_view s);

struct FlowKey {
  std::string client_addr;
  std::uint16_t client_port = 0;
  std::string server_addr;
  std::uint16_t server_port = 0;
  Transport transport = Transport::kTcp;

  // Same four-tuple seen from the other side.
  FlowKey reversed() const {
    return {server_addr, server_port, client_addr, client_port, transport};
  }
  std::string str() const;

  friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& k) const noexcept;
};

struct TcpHeader {
  std::uint8_t flags = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack_no = 0;
  std::uint32_t recv_window = 0;

  bool has(std::uint8_t f) const { return (flags & f) != 0; }
  friend bool operator==(const TcpHeader&, const TcpHeader&) = default;
};

struct PacketEvent {
  double ts = 0.0;  // seconds since trace epoch, microsecond resolution
  FlowKey flow;
  Direction dir = Direction::kUp;
  std::uint32_t ip_bytes = 0;
  std::uint32_t payload_bytes = 0;
  std::optional<TcpHeader> tcp;  // present iff flow.transport == kTcp
  std::string sni;               // empty when absent

  Transport transport() const { return flow.transport; }
  bool is_up() const { return dir == Direction::kUp; }
  friend bool operator==(const PacketEvent&, const PacketEvent&) = default;
};

enum class FlowRole : std::uint8_t { kUnlabeled, kVideo, kServiceNonVideo, kOther };
std::string_view to_string(FlowRole r);
FlowRole flow_role_from_string(std::string_view s);

struct FlowRecord {
  FlowKey key;
  std::vector<PacketEvent> packets;  // sorted by ts
  double first_ts = 0.0;
  double last_ts = 0.0;
  std::string server_name;
  FlowRole role = FlowRole::kUnlabeled;
  std::string service;  // set by classify_flows when matched

  std::uint64_t payload_bytes(Direction d) const;
};

// Rounds a time to the microsecond grid the trace format carries.
double quantize_us(double seconds);

}  // namespace vqoe
