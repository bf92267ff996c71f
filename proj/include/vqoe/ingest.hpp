// Normalized packet-event JSONL parsing and per-flow assembly.
#pragma once

#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "vqoe/types.hpp"

namespace vqoe {

inline constexpr double kReorderWindowSeconds = 1.0;
inline constexpr double kFlowIdleTimeoutSeconds = 60.0;

// Parses one JSONL object per line. Events arriving up to one reorder window
// late are put back in order; anything later is a hard error. Blank lines are
// skipped. Direction comes from the "dir" key when present, otherwise from the
// initiator rule (TCP: sender of the first bare SYN; UDP: first sender).
std::vector<PacketEvent> parse_event_stream(std::istream& in);

// Writes events in the same JSONL schema parse_event_stream reads.
void write_event_stream(std::ostream& out, std::span<const PacketEvent> events);
std::string event_to_json_line(const PacketEvent& e);

// Groups time-ordered events by canonical key. A flow that stays silent for
// more than idle_timeout is closed; later packets on the tuple open a new one.
std::vector<FlowRecord> assemble_flows(std::span<const PacketEvent> events,
                                       double idle_timeout = kFlowIdleTimeoutSeconds);

// Flow file: one JSON object per flow with its packets in compact arrays.
void write_flows(std::ostream& out, std::span<const FlowRecord> flows);
std::vector<FlowRecord> read_flows(std::istream& in);

}  // namespace vqoe
