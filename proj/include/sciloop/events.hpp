#pragma once

// Per-session event stream: gapless sequence numbers, optional JSONL
// persistence, blocking waits for live tails.

#include <chrono>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "sciloop/common.hpp"
#include "sciloop/json_io.hpp"

namespace sciloop::events {

/// Kinds emitted by the loop. "terminal" is always last.
const std::vector<std::string>& event_kinds();

struct Event {
  std::string session_id;
  long long seq = 0;  // from 0, gapless
  std::string kind;
  Json payload;
  Millis timestamp_ms = 0;
  Json to_json() const;
  static Event from_json(const Json& j);
  bool operator==(const Event& o) const {
    return session_id == o.session_id && seq == o.seq && kind == o.kind && payload == o.payload &&
           timestamp_ms == o.timestamp_ms;
  }
};

class EventLog {
 public:
  /// `path` empty keeps events in memory only. The clock must outlive the log.
  EventLog(std::string session_id, std::string path, Clock& clock);

  /// Appends and returns the new seq. Throws InvariantError for an unknown
  /// kind or after the terminal event.
  long long append(const std::string& kind, Json payload);

  /// Events with seq >= from.
  std::vector<Event> from(long long from_seq) const;
  long long next_seq() const;
  bool closed() const;

  /// Blocks until an event with seq >= from_seq exists, the log closes, or the
  /// timeout passes. Returns true when such an event exists.
  bool wait(long long from_seq, std::chrono::milliseconds timeout) const;

  const std::string& session_id() const { return session_id_; }
  const std::string& path() const { return path_; }

 private:
  std::string session_id_;
  std::string path_;
  Clock& clock_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<Event> events_;
  std::ofstream out_;
  bool closed_ = false;
};

/// Reads a persisted events file; throws Error naming the bad line.
std::vector<Event> load_events(const std::string& path);

}  // namespace sciloop::events
