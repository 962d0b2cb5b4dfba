#include "churn/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "churn/errors.hpp"

namespace churn::ingest {

using nlohmann::json;

bool is_registered_user(std::string_view distinct_id) {
    if (distinct_id.empty()) return false;
    return std::all_of(distinct_id.begin(), distinct_id.end(), [](unsigned char c) {
        return std::isdigit(c) != 0;
    });
}

namespace {

// The id must also fit in 64 bits to survive as a join key; longer digit
// strings are treated as malformed rather than silently truncated.
std::optional<std::uint64_t> parse_user_id(std::string_view digits) {
    if (!is_registered_user(digits)) return std::nullopt;
    std::uint64_t value = 0;
    for (char c : digits) {
        const std::uint64_t d = static_cast<std::uint64_t>(c - '0');
        if (value > (UINT64_MAX - d) / 10) return std::nullopt;
        value = value * 10 + d;
    }
    return value;
}

// Accepts integer or float timestamps; floats truncate toward zero.
std::optional<std::int64_t> extract_time(const json& t, TimeUnit unit) {
    std::int64_t seconds = 0;
    if (t.is_number_integer()) {
        seconds = t.get<std::int64_t>();
    } else if (t.is_number_float()) {
        const double v = t.get<double>();
        if (!std::isfinite(v) || v >= 9.3e18 || v <= -9.3e18) return std::nullopt;
        seconds = static_cast<std::int64_t>(v);
    } else {
        return std::nullopt;
    }
    if (unit == TimeUnit::millis) seconds /= 1000;
    if (seconds <= 0) return std::nullopt; // impossible unix times corrupt period binning
    return seconds;
}

} // namespace

std::optional<EventRecord> parse_event_line(std::string_view line, TimeUnit unit) {
    const json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) return std::nullopt;

    const auto event_it = obj.find("event");
    if (event_it == obj.end() || !event_it->is_string()) return std::nullopt;

    const auto props_it = obj.find("properties");
    if (props_it == obj.end() || !props_it->is_object()) return std::nullopt;

    // No distinct_id means the event was not triggered by a user.
    const auto id_it = props_it->find("distinct_id");
    if (id_it == props_it->end()) return std::nullopt;

    std::optional<std::uint64_t> user_id;
    if (id_it->is_string()) {
        user_id = parse_user_id(id_it->get_ref<const std::string&>());
    } else if (id_it->is_number_unsigned()) {
        user_id = id_it->get<std::uint64_t>();
    } else if (id_it->is_number_integer()) {
        const auto v = id_it->get<std::int64_t>();
        if (v >= 0) user_id = static_cast<std::uint64_t>(v);
    }
    if (!user_id) return std::nullopt;

    const auto time_it = props_it->find("time");
    if (time_it == props_it->end()) return std::nullopt;
    const auto time = extract_time(*time_it, unit);
    if (!time) return std::nullopt;

    return EventRecord{*user_id, *time, event_it->get<std::string>()};
}

ScanResult scan_raw_dumps(const std::vector<std::filesystem::path>& paths, TimeUnit unit) {
    ScanResult result;
    for (const auto& path : paths) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open raw dump: " + path.string());
        FileStats stats;
        stats.path = path.string();
        std::string line;
        while (std::getline(in, line)) {
            ++stats.lines_read;
            if (auto record = parse_event_line(line, unit)) {
                result.records.push_back(std::move(*record));
                ++stats.parsed;
            } else {
                ++stats.skipped;
            }
        }
        result.stats.push_back(std::move(stats));
    }
    return result;
}

std::vector<std::string> read_lines(const std::vector<std::filesystem::path>& paths) {
    std::vector<std::string> lines;
    for (const auto& path : paths) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open raw dump: " + path.string());
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
    }
    return lines;
}

std::vector<std::filesystem::path> list_raw_dumps(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw DataError("raw-dump directory not found: " + dir.string());
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
            paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    return paths;
}

} // namespace churn::ingest
