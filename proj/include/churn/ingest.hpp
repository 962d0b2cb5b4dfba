#ifndef CHURN_INGEST_HPP
#define CHURN_INGEST_HPP

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace churn::ingest {

// One scraped (user_id, time, event) tuple from a raw-dump line. Only
// events of registered users (all-digit distinct ids) produce records.
struct EventRecord {
    std::uint64_t user_id = 0;
    std::int64_t time = 0; // unix seconds
    std::string event_name;

    auto operator<=>(const EventRecord&) const = default;
};

enum class TimeUnit { seconds, millis };

// True iff distinct_id is non-empty and consists solely of decimal digits.
bool is_registered_user(std::string_view distinct_id);

// Parses one raw-dump line. Returns a record iff the line is a JSON object
// with "event", "properties.distinct_id" and "properties.time", the
// distinct_id is a registered-user id, and the timestamp is positive.
// Anything else (including non-user events without a distinct_id) yields
// nothing; the caller keeps the skip counter.
std::optional<EventRecord> parse_event_line(std::string_view line,
                                            TimeUnit unit = TimeUnit::seconds);

struct FileStats {
    std::string path;
    std::size_t lines_read = 0;
    std::size_t parsed = 0;
    std::size_t skipped = 0;
};

struct ScanResult {
    std::vector<EventRecord> records; // file order, then line order
    std::vector<FileStats> stats;
};

// Sequential scan over raw-dump files. Unreadable path -> DataError naming it.
ScanResult scan_raw_dumps(const std::vector<std::filesystem::path>& paths,
                          TimeUnit unit = TimeUnit::seconds);

// Reads every line of every file (used to feed the dataflow route).
// Unreadable path -> DataError.
std::vector<std::string> read_lines(const std::vector<std::filesystem::path>& paths);

// All *.jsonl files directly under dir, sorted by name.
std::vector<std::filesystem::path> list_raw_dumps(const std::filesystem::path& dir);

} // namespace churn::ingest

#endif
