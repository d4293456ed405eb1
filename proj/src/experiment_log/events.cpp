#include "sciloop/events.hpp"

#include <algorithm>
#include <filesystem>

namespace sciloop::events {

const std::vector<std::string>& event_kinds() {
  static const std::vector<std::string> kinds{
      "session_started", "step_started", "strategy_proposed", "critique",     "gate_waiting",
      "gate_resolved",   "code_state",   "execution",         "debug_round",  "advisor_report",
      "reward",          "trial_registered", "terminal"};
  return kinds;
}

Json Event::to_json() const {
  return Json{{"session_id", session_id},
              {"seq", seq},
              {"kind", kind},
              {"payload", payload},
              {"timestamp", format_utc(timestamp_ms)},
              {"timestamp_ms", timestamp_ms}};
}

Event Event::from_json(const Json& j) {
  Event e;
  e.session_id = require_string(j, "session_id");
  if (!j.contains("seq") || !j["seq"].is_number_integer()) throw InvariantError("event needs integer seq");
  e.seq = j["seq"].get<long long>();
  e.kind = require_string(j, "kind");
  e.payload = j.contains("payload") ? j["payload"] : Json(nullptr);
  if (!j.contains("timestamp_ms") || !j["timestamp_ms"].is_number_integer()) {
    throw InvariantError("event needs integer timestamp_ms");
  }
  e.timestamp_ms = j["timestamp_ms"].get<Millis>();
  return e;
}

EventLog::EventLog(std::string session_id, std::string path, Clock& clock)
    : session_id_(std::move(session_id)), path_(std::move(path)), clock_(clock) {
  if (!path_.empty()) {
    const auto parent = std::filesystem::path(path_).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    out_.open(path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("cannot open event log " + path_);
  }
}

long long EventLog::append(const std::string& kind, Json payload) {
  const auto& kinds = event_kinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    throw InvariantError("unknown event kind '" + kind + "'");
  }
  std::lock_guard<std::mutex> lock(mu_);
  if (closed_) throw InvariantError("event log is closed");
  Event e;
  e.session_id = session_id_;
  e.seq = static_cast<long long>(events_.size());
  e.kind = kind;
  e.payload = std::move(payload);
  e.timestamp_ms = clock_.now_ms();
  if (out_.is_open()) {
    out_ << e.to_json().dump() << '\n';
    out_.flush();
    if (!out_) throw Error("cannot write event log " + path_);
  }
  events_.push_back(std::move(e));
  if (kind == "terminal") closed_ = true;
  cv_.notify_all();
  return events_.back().seq;
}

std::vector<Event> EventLog::from(long long from_seq) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto start = static_cast<std::size_t>(std::max<long long>(0, from_seq));
  if (start >= events_.size()) return {};
  return {events_.begin() + static_cast<std::ptrdiff_t>(start), events_.end()};
}

long long EventLog::next_seq() const {
  std::lock_guard<std::mutex> lock(mu_);
  return static_cast<long long>(events_.size());
}

bool EventLog::closed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return closed_;
}

bool EventLog::wait(long long from_seq, std::chrono::milliseconds timeout) const {
  std::unique_lock<std::mutex> lock(mu_);
  cv_.wait_for(lock, timeout, [&] {
    return static_cast<long long>(events_.size()) > from_seq || closed_;
  });
  return static_cast<long long>(events_.size()) > from_seq;
}

std::vector<Event> load_events(const std::string& path) {
  std::vector<Event> out;
  const auto lines = split_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      out.push_back(Event::from_json(Json::parse(lines[i])));
    } catch (const std::exception& e) {
      throw Error("event line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace sciloop::events
