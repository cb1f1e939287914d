#pragma once

// Append-only JSON-lines event log. Each line is one record
// {"seq", "ts", "kind", "payload"}; sequence numbers start at 1 and have no
// gaps. A torn final line (crash mid-append) is dropped on open.

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "afm/domain.hpp"
#include "afm/errors.hpp"

namespace afm {

enum class EventKind {
  prime_added,
  job_enqueued,
  job_transition,
  song_added,
  rating_submitted,
  preference_updated,
};

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::prime_added: return "prime_added";
    case EventKind::job_enqueued: return "job_enqueued";
    case EventKind::job_transition: return "job_transition";
    case EventKind::song_added: return "song_added";
    case EventKind::rating_submitted: return "rating_submitted";
    case EventKind::preference_updated: return "preference_updated";
  }
  return "unknown";
}

inline EventKind parse_event_kind(std::string_view s) {
  for (auto k : {EventKind::prime_added, EventKind::job_enqueued, EventKind::job_transition,
                 EventKind::song_added, EventKind::rating_submitted, EventKind::preference_updated})
    if (to_string(k) == s) return k;
  throw PersistenceError("unknown event kind '" + std::string(s) + "'");
}

struct EventRecord {
  std::uint64_t sequence_number = 0;
  TimestampMs timestamp = 0;
  EventKind kind = EventKind::prime_added;
  Json payload;
};

inline void to_json(Json& j, const EventRecord& r) {
  j = Json{{"seq", r.sequence_number}, {"ts", r.timestamp}, {"kind", to_string(r.kind)}, {"payload", r.payload}};
}

inline void from_json(const Json& j, EventRecord& r) {
  j.at("seq").get_to(r.sequence_number);
  j.at("ts").get_to(r.timestamp);
  r.kind = parse_event_kind(j.at("kind").get<std::string>());
  r.payload = j.at("payload");
}

namespace detail {

class FileDescriptor {
 public:
  FileDescriptor() = default;
  explicit FileDescriptor(int fd) : fd_(fd) {}
  FileDescriptor(FileDescriptor&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  FileDescriptor& operator=(FileDescriptor&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  FileDescriptor(const FileDescriptor&) = delete;
  FileDescriptor& operator=(const FileDescriptor&) = delete;
  ~FileDescriptor() { reset(); }

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }

  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw PersistenceError(std::string("event log write failed: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace detail

struct ParsedLog {
  std::vector<EventRecord> records;
  std::uint64_t valid_bytes = 0;  // prefix length holding complete records
};

inline ParsedLog parse_event_log(std::string_view text) {
  ParsedLog out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const bool terminated = nl != std::string_view::npos;
    const std::string_view line = text.substr(pos, terminated ? nl - pos : std::string_view::npos);
    ++line_no;
    const std::size_t next = terminated ? nl + 1 : text.size();
    if (line.empty()) {
      pos = next;
      out.valid_bytes = pos;
      continue;
    }
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      if (!terminated) break;  // torn tail
      throw PersistenceError("event log line " + std::to_string(line_no) + " is not valid JSON");
    }
    EventRecord rec;
    try {
      rec = j.get<EventRecord>();
    } catch (const std::exception& e) {
      throw PersistenceError("event log line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::uint64_t expected = out.records.size() + 1;
    if (rec.sequence_number != expected)
      throw PersistenceError("event log line " + std::to_string(line_no) + ": sequence number " +
                             std::to_string(rec.sequence_number) + ", expected " + std::to_string(expected));
    out.records.push_back(std::move(rec));
    pos = next;
    out.valid_bytes = pos;
  }
  return out;
}

class EventLog {
 public:
  // Memory-only log, for tests and offline tools.
  EventLog() = default;

  // Opens (creating if needed) the log at path and loads existing records.
  static EventLog open(const std::filesystem::path& path, bool fsync_on_append = true) {
    EventLog log;
    log.path_ = path;
    log.fsync_ = fsync_on_append;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::string text;
    if (std::filesystem::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    }
    ParsedLog parsed = parse_event_log(text);
    log.records_ = std::move(parsed.records);
    if (parsed.valid_bytes < text.size()) std::filesystem::resize_file(path, parsed.valid_bytes);
    log.fd_ = detail::FileDescriptor(::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644));
    if (!log.fd_) throw PersistenceError("cannot open event log '" + path.string() + "': " + std::strerror(errno));
    return log;
  }

  const std::vector<EventRecord>& records() const { return records_; }
  std::uint64_t last_sequence() const { return records_.size(); }
  const std::optional<std::filesystem::path>& path() const { return path_; }

  // Durable before it returns when backed by a file with fsync enabled.
  const EventRecord& append(EventKind kind, Json payload, TimestampMs ts) {
    EventRecord rec{records_.size() + 1, ts, kind, std::move(payload)};
    if (fd_) {
      detail::write_all(fd_.get(), Json(rec).dump() + "\n");
      if (fsync_ && ::fsync(fd_.get()) != 0)
        throw PersistenceError(std::string("event log fsync failed: ") + std::strerror(errno));
    }
    records_.push_back(std::move(rec));
    return records_.back();
  }

 private:
  std::optional<std::filesystem::path> path_;
  bool fsync_ = true;
  detail::FileDescriptor fd_;
  std::vector<EventRecord> records_;
};

inline std::vector<EventRecord> read_event_log_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot open event log '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_event_log(ss.str()).records;
}

}  // namespace afm
